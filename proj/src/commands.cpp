#include "netbooster/commands.hpp"

#include <filesystem>
#include <iomanip>
#include <iostream>

#include "netbooster/config.hpp"
#include "netbooster/contraction.hpp"
#include "netbooster/dataset.hpp"
#include "netbooster/expansion.hpp"
#include "netbooster/pipeline.hpp"
#include "netbooster/plt.hpp"
#include "netbooster/serialize.hpp"
#include "netbooster/verify.hpp"

namespace netbooster {

namespace {

namespace fs = std::filesystem;

template <class F>
int with_dtype(const RunConfig& cfg, F&& fn) {
  if (cfg.dtype == "f64") return fn(double{});
  return fn(float{});
}

template <class S>
ModelGraph<S> build_or_load(const RunConfig& cfg, std::uint64_t seed) {
  if (!cfg.model_file.empty()) return load_model<S>(cfg.model_file);
  ModelGraph<S> g;
  if (cfg.model == "mlp") {
    g = make_mlp<S>(cfg.data.height * cfg.data.width, cfg.mlp_hidden, cfg.classes);
  } else {
    g = make_desk_tnn<S>(1, cfg.classes);
    g.input_shape = {1, cfg.data.height, cfg.data.width};
  }
  std::mt19937_64 rng(seed);
  init_params(g, rng);
  return g;
}

template <class S>
Dataset<S> from_bytes(const SyntheticBatch& b) {
  Dataset<S> ds;
  ds.images = Tensor<S>({b.n, 1, b.h, b.w});
  for (std::size_t i = 0; i < b.pixels.size(); ++i)
    ds.images.data[i] = static_cast<S>(b.pixels[i]) / S(255);
  ds.labels = b.labels;
  return ds;
}

/// Train and test splits per the config. Synthetic data is also written out
/// as IDX files so a run's inputs can be inspected or reused.
template <class S>
std::pair<Dataset<S>, Dataset<S>> make_data(const RunConfig& cfg, std::uint64_t seed,
                                            const std::string& out_dir) {
  Dataset<S> train, test;
  if (cfg.data.source == "idx") {
    train = load_idx<S>(cfg.data.train_images, cfg.data.train_labels);
    test = load_idx<S>(cfg.data.test_images, cfg.data.test_labels);
  } else {
    std::mt19937_64 train_rng(seed + 10), test_rng(seed + 11);
    const SyntheticBatch tb =
        make_synthetic(cfg.data.train_samples, cfg.classes, cfg.data.height, cfg.data.width,
                       train_rng);
    const SyntheticBatch eb = make_synthetic(cfg.data.test_samples, cfg.classes, cfg.data.height,
                                             cfg.data.width, test_rng);
    if (!out_dir.empty()) {
      const std::string dir = out_dir + "/data";
      fs::create_directories(dir);
      save_idx_images(dir + "/train-images.idx3-ubyte", tb.pixels, tb.n, tb.h, tb.w);
      save_idx_labels(dir + "/train-labels.idx1-ubyte", tb.labels);
      save_idx_images(dir + "/test-images.idx3-ubyte", eb.pixels, eb.n, eb.h, eb.w);
      save_idx_labels(dir + "/test-labels.idx1-ubyte", eb.labels);
    }
    train = from_bytes<S>(tb);
    test = from_bytes<S>(eb);
  }
  if (cfg.data.normalize) {
    const NormStats st = compute_norm_stats(train.images);
    apply_norm(train.images, st);
    apply_norm(test.images, st);
  }
  if (cfg.model == "mlp") {
    train.images.shape = {train.images.shape[0],
                          train.images.numel() / train.images.shape[0]};
    test.images.shape = {test.images.shape[0], test.images.numel() / test.images.shape[0]};
  }
  return {std::move(train), std::move(test)};
}

PLTSchedule resolve_schedule(const RunConfig& cfg) {
  PLTSchedule s;
  if (cfg.plt_tuning_epochs > 0) {
    s.decay_epochs = decay_epochs_from_total(cfg.plt_tuning_epochs);
    s.finetune_epochs = cfg.plt_tuning_epochs - s.decay_epochs;
  } else {
    s.decay_epochs = cfg.plt_decay_epochs > 0 ? cfg.plt_decay_epochs : 1;
    s.finetune_epochs = cfg.plt_finetune_epochs;
  }
  s.validate();
  return s;
}

template <class S>
void print_complexity(const ModelGraph<S>& g) {
  const ComplexityReport r = count_complexity(g);
  for (const NodeCost& n : r.nodes)
    std::cout << std::left << std::setw(14) << n.label << " params " << std::setw(9) << n.params
              << " flops " << n.flops << "\n";
  std::cout << std::left << std::setw(14) << "total" << " params " << std::setw(9)
            << r.total_params << " flops " << r.total_flops << "\n";
}

}  // namespace

int cmd_expand(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    ModelGraph<S> model = build_or_load<S>(cfg, opt.seed);
    std::mt19937_64 rng(opt.seed + 1);
    ModelGraph<S> expanded = expand_model(model, cfg.plan, rng);
    fs::create_directories(opt.out_dir);
    if (cfg.model_file.empty()) save_model(model, opt.out_dir + "/vanilla.nbm");
    save_model(expanded, opt.out_dir + "/expanded.nbm");
    const ComplexityReport before = count_complexity(model);
    const ComplexityReport after = count_complexity(expanded);
    std::cout << "expanded " << opt.out_dir << "/expanded.nbm: params " << before.total_params
              << " -> " << after.total_params << ", flops " << before.total_flops << " -> "
              << after.total_flops << "\n";
    return 0;
  });
}

int cmd_train(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    ModelGraph<S> model = build_or_load<S>(cfg, opt.seed);
    auto [train_data, test_data] = make_data<S>(cfg, opt.seed, opt.out_dir);
    fs::create_directories(opt.out_dir);
    TrainConfig tc = cfg.train;
    tc.seed = opt.seed + 2;
    tc.phase_tag = "train";
    tc.checkpoint_dir = opt.out_dir;
    tc.metrics_path = opt.out_dir + "/metrics.jsonl";
    const TrainResult r = train(model, train_data, tc, {}, opt.resume);
    save_model(model, opt.out_dir + "/model.nbm");
    const EvalResult ev = evaluate(model, test_data, cfg.eval_batch);
    std::cout << "trained " << r.epochs_run << " epochs (" << r.steps << " steps): train loss "
              << r.final_loss << ", train acc " << r.final_acc << ", test acc " << ev.accuracy
              << "\n";
    return 0;
  });
}

int cmd_plt(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    ModelGraph<S> model = build_or_load<S>(cfg, opt.seed);
    auto [train_data, test_data] = make_data<S>(cfg, opt.seed, opt.out_dir);
    fs::create_directories(opt.out_dir);
    TrainConfig tc = cfg.train;
    tc.seed = opt.seed + 3;
    tc.phase_tag = "linearize";
    tc.checkpoint_dir = opt.out_dir;
    tc.metrics_path = opt.out_dir + "/metrics.jsonl";
    const PLTSchedule sched = resolve_schedule(cfg);
    const TrainResult r = plt_phase(model, train_data, tc, sched, opt.resume);
    save_model(model, opt.out_dir + "/linearized.nbm");
    const EvalResult ev = evaluate(model, test_data, cfg.eval_batch);
    std::cout << "linearized over " << sched.decay_epochs << "+" << sched.finetune_epochs
              << " epochs (" << r.steps << " steps): train loss " << r.final_loss
              << ", test acc " << ev.accuracy << "\n";
    return 0;
  });
}

int cmd_contract(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    if (cfg.model_file.empty())
      throw Error("contract: set model_file in the config to the model to collapse");
    const ModelGraph<S> model = load_model<S>(cfg.model_file);
    const ModelGraph<S> contracted = contract_model(model);
    fs::create_directories(opt.out_dir);
    save_model(contracted, opt.out_dir + "/contracted.nbm");
    std::cout << "contracted " << cfg.model_file << " -> " << opt.out_dir << "/contracted.nbm\n";
    print_complexity(contracted);
    return 0;
  });
}

int cmd_pipeline(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    ModelGraph<S> vanilla = build_or_load<S>(cfg, opt.seed);
    auto [train_data, test_data] = make_data<S>(cfg, opt.seed, opt.out_dir);
    PipelineOptions po;
    po.num_classes = cfg.classes;
    po.plan = cfg.plan;
    po.train_cfg = cfg.train;
    po.plt = resolve_schedule(cfg);
    po.seed = opt.seed;
    po.out_dir = opt.out_dir;
    po.run_baseline = cfg.baseline;
    po.eval_batch = cfg.eval_batch;
    po.resume = opt.resume;
    const PipelineReport report = run_pipeline(vanilla, train_data, test_data, po);
    std::cout << to_json(report).dump(2) << "\n";
    return 0;
  });
}

int cmd_verify(const CliOptions& opt) {
  // The checks themselves need no configuration, but a config the user did
  // pass must still be validated rather than silently ignored.
  if (!opt.config_path.empty()) load_config(opt.config_path);
  bool all_pass = true;
  for (const CheckResult& r : verify_all(opt.seed)) {
    std::cout << to_json(r).dump() << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_flops(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    const ModelGraph<S> model = build_or_load<S>(cfg, opt.seed);
    print_complexity(model);
    return 0;
  });
}

int cmd_sweep(const CliOptions& opt) {
  const RunConfig cfg = load_config(opt.config_path);
  return with_dtype(cfg, [&](auto tag) {
    using S = decltype(tag);
    ModelGraph<S> vanilla = build_or_load<S>(cfg, opt.seed);
    auto [train_data, test_data] = make_data<S>(cfg, opt.seed, opt.out_dir);
    fs::create_directories(opt.out_dir);
    std::ofstream out(opt.out_dir + "/sweep.jsonl", std::ios::trunc);
    if (!out) throw Error("cannot open '" + opt.out_dir + "/sweep.jsonl' for writing");
    int ok_cells = 0, cells = 0;
    for (std::int64_t ratio : cfg.sweep.ratios)
      for (double fraction : cfg.sweep.fractions)
        for (const std::string& loc : cfg.sweep.locations) {
          ++cells;
          nlohmann::json line;
          line["ratio"] = ratio;
          line["fraction"] = fraction;
          line["location"] = loc;
          try {
            PipelineOptions po;
            po.num_classes = cfg.classes;
            po.plan = cfg.plan;
            po.plan.ratio = ratio;
            po.plan.fraction = fraction;
            po.plan.explicit_targets.clear();
            if (loc == "uniform") po.plan.location = TargetLocation::uniform;
            else if (loc == "first") po.plan.location = TargetLocation::first;
            else if (loc == "middle") po.plan.location = TargetLocation::middle;
            else po.plan.location = TargetLocation::last;
            po.train_cfg = cfg.train;
            po.train_cfg.epochs = cfg.sweep.epochs;
            po.train_cfg.checkpoint_every_epochs = 0;
            po.plt.decay_epochs = 1;
            po.plt.finetune_epochs = cfg.sweep.plt_epochs - 1;
            po.seed = opt.seed;
            po.out_dir = "";  // cells stay in memory; only the summary lands on disk
            po.run_baseline = false;
            po.eval_batch = cfg.eval_batch;
            const PipelineReport r = run_pipeline(vanilla, train_data, test_data, po);
            line["contracted_acc"] = r.contracted_acc;
            line["agreement"] = r.agreement.agreement;
            line["expanded_params"] = r.expanded_params;
            line["vanilla_params"] = r.vanilla_params;
            ++ok_cells;
          } catch (const Error& e) {
            line["error"] = e.what();
          }
          out << line.dump() << "\n";
          std::cout << line.dump() << "\n";
        }
    out.flush();
    std::cout << ok_cells << "/" << cells << " cells completed\n";
    return ok_cells > 0 ? 0 : 1;
  });
}

}  // namespace netbooster
