#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "netbooster/contraction.hpp"
#include "netbooster/dataset.hpp"
#include "netbooster/expansion.hpp"
#include "netbooster/graph.hpp"
#include "netbooster/plt.hpp"
#include "netbooster/serialize.hpp"
#include "netbooster/trainer.hpp"

namespace netbooster {

// Full expansion-train-linearize-contract run, plus an equal-budget vanilla
// baseline for comparison. Seeds derive from one base seed per sub-phase so
// a run is a pure function of (data, options).

struct PipelineOptions {
  std::int64_t num_classes = 4;
  ExpansionPlan plan;
  TrainConfig train_cfg;   // expanded-model training; epochs = that phase only
  PLTSchedule plt{};       // ramp + finetune epochs
  std::uint64_t seed = 1;
  std::string out_dir;     // metrics/checkpoints/models; empty writes nothing
  bool run_baseline = true;
  std::int64_t eval_batch = 256;
  bool resume = false;
};

struct AgreementReport {
  double agreement = 0.0;         // fraction of matching argmax predictions
  double max_abs_diff = 0.0;      // over all logits
  double max_rel_diff = 0.0;      // max|a-b| / (max|b| + eps), b = contracted
  std::int64_t samples = 0;
};

/// Argmax agreement and logit drift between two models on the same inputs.
template <class S>
AgreementReport compare_outputs(const ModelGraph<S>& a, const ModelGraph<S>& b,
                                const Tensor<S>& images, std::int64_t batch_size = 256) {
  AgreementReport r;
  r.samples = images.shape[0];
  double max_abs = 0.0, max_ref = 0.0;
  std::int64_t agree = 0;
  for (std::int64_t start = 0; start < r.samples; start += batch_size) {
    const std::int64_t count = std::min(batch_size, r.samples - start);
    const Tensor<S> batch = slice_images(images, start, count);
    const Tensor<S> la = forward(a, batch);
    const Tensor<S> lb = forward(b, batch);
    const std::vector<std::int64_t> pa = argmax_rows(la), pb = argmax_rows(lb);
    for (std::size_t i = 0; i < pa.size(); ++i)
      if (pa[i] == pb[i]) ++agree;
    for (std::size_t i = 0; i < la.data.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(static_cast<double>(la.data[i]) -
                                           static_cast<double>(lb.data[i])));
      max_ref = std::max(max_ref, std::abs(static_cast<double>(lb.data[i])));
    }
  }
  r.agreement = static_cast<double>(agree) / static_cast<double>(r.samples);
  r.max_abs_diff = max_abs;
  r.max_rel_diff = max_abs / (max_ref + 1e-30);
  return r;
}

struct PipelineReport {
  std::uint64_t seed = 0;
  std::int64_t expanded_epochs = 0;
  std::int64_t linearize_epochs = 0;
  std::int64_t baseline_epochs = 0;
  double expanded_acc = 0.0;    // after linearization, alpha == 1
  double contracted_acc = 0.0;
  double baseline_acc = 0.0;    // equal-budget vanilla; 0 when skipped
  AgreementReport agreement;    // linearized vs contracted on the test set
  bool arch_hash_match = false; // contracted vs the original vanilla graph
  std::int64_t vanilla_params = 0, vanilla_flops = 0;
  std::int64_t expanded_params = 0, expanded_flops = 0;
};

inline nlohmann::json to_json(const PipelineReport& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["expanded_epochs"] = r.expanded_epochs;
  j["linearize_epochs"] = r.linearize_epochs;
  j["baseline_epochs"] = r.baseline_epochs;
  j["expanded_acc"] = r.expanded_acc;
  j["contracted_acc"] = r.contracted_acc;
  j["baseline_acc"] = r.baseline_acc;
  j["agreement"] = r.agreement.agreement;
  j["logit_max_abs_diff"] = r.agreement.max_abs_diff;
  j["logit_max_rel_diff"] = r.agreement.max_rel_diff;
  j["arch_hash_match"] = r.arch_hash_match;
  j["vanilla_params"] = r.vanilla_params;
  j["vanilla_flops"] = r.vanilla_flops;
  j["expanded_params"] = r.expanded_params;
  j["expanded_flops"] = r.expanded_flops;
  return j;
}

/// The whole treatment for one model and dataset. Phases write checkpoints
/// and metrics under out_dir when it is set; --resume picks each phase up
/// from its latest checkpoint.
template <class S>
PipelineReport run_pipeline(const ModelGraph<S>& vanilla, const Dataset<S>& train_data,
                            const Dataset<S>& test_data, const PipelineOptions& opt) {
  if (vanilla.provenance != Provenance::vanilla)
    throw Error("pipeline: starting model must be vanilla, got " +
                std::string(to_string(vanilla.provenance)));
  PipelineReport report;
  report.seed = opt.seed;

  ModelGraph<S> base = vanilla;
  if (base.params.empty()) {
    std::mt19937_64 init_rng(opt.seed);
    init_params(base, init_rng);
  }

  std::mt19937_64 expand_rng(opt.seed + 1);
  ModelGraph<S> expanded = expand_model(base, opt.plan, expand_rng);

  const ComplexityReport vanilla_cx = count_complexity(base);
  const ComplexityReport expanded_cx = count_complexity(expanded);
  report.vanilla_params = vanilla_cx.total_params;
  report.vanilla_flops = vanilla_cx.total_flops;
  report.expanded_params = expanded_cx.total_params;
  report.expanded_flops = expanded_cx.total_flops;

  const bool persist = !opt.out_dir.empty();
  if (persist) {
    std::filesystem::create_directories(opt.out_dir);
    save_model(base, opt.out_dir + "/vanilla.nbm");
  }

  TrainConfig tc = opt.train_cfg;
  tc.seed = opt.seed + 2;
  tc.phase_tag = "train";
  if (persist) {
    tc.checkpoint_dir = opt.out_dir;
    tc.metrics_path = opt.out_dir + "/metrics.jsonl";
  } else {
    tc.checkpoint_every_epochs = 0;
  }
  train(expanded, train_data, tc, {}, opt.resume && persist && tc.checkpoint_every_epochs > 0);
  report.expanded_epochs = tc.epochs;

  TrainConfig pc = tc;
  pc.seed = opt.seed + 3;
  pc.phase_tag = "linearize";
  plt_phase(expanded, train_data, pc, opt.plt,
            opt.resume && persist && pc.checkpoint_every_epochs > 0);
  report.linearize_epochs = opt.plt.decay_epochs + opt.plt.finetune_epochs;
  if (persist) save_model(expanded, opt.out_dir + "/linearized.nbm");

  ModelGraph<S> contracted = contract_model(expanded);
  if (persist) save_model(contracted, opt.out_dir + "/contracted.nbm");

  report.arch_hash_match = architecture_hash(contracted) == architecture_hash(base);
  report.expanded_acc = evaluate(expanded, test_data, opt.eval_batch).accuracy;
  report.contracted_acc = evaluate(contracted, test_data, opt.eval_batch).accuracy;
  report.agreement = compare_outputs(expanded, contracted, test_data.images, opt.eval_batch);

  if (opt.run_baseline) {
    ModelGraph<S> baseline = base;
    TrainConfig bc = tc;
    bc.seed = opt.seed + 4;
    bc.phase_tag = "baseline";
    bc.epochs = tc.epochs + report.linearize_epochs;  // equal total budget
    train(baseline, train_data, bc, {},
          opt.resume && persist && bc.checkpoint_every_epochs > 0);
    report.baseline_epochs = bc.epochs;
    report.baseline_acc = evaluate(baseline, test_data, opt.eval_batch).accuracy;
    if (persist) save_model(baseline, opt.out_dir + "/baseline.nbm");
  }

  if (persist) {
    std::ofstream rf(opt.out_dir + "/report.json");
    rf << to_json(report).dump(2) << "\n";
  }
  return report;
}

}  // namespace netbooster
