#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netbooster/dataset.hpp"
#include "netbooster/graph.hpp"
#include "netbooster/optim.hpp"
#include "netbooster/serialize.hpp"

namespace netbooster {

struct TrainConfig {
  std::int64_t epochs = 10;
  std::int64_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  bool cosine = true;       // half-cosine decay over the whole phase, else constant
  bool shuffle = true;
  bool augment = false;     // per-sample horizontal flip and +-1px shift
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every_epochs = 0;  // 0 disables checkpoints
  std::string checkpoint_dir;                // run directory; phase subdir is created
  std::string phase_tag = "train";
  std::string metrics_path;                  // line-delimited JSON, appended; empty disables

  void validate() const {
    if (epochs < 1) throw Error("train: epochs must be >= 1");
    if (batch_size < 1) throw Error("train: batch size must be >= 1");
    if (lr < 0) throw Error("train: learning rate must be >= 0");
    if (momentum < 0 || momentum >= 1) throw Error("train: momentum must lie in [0,1)");
    if (weight_decay < 0) throw Error("train: weight decay must be >= 0");
  }
};

struct TrainResult {
  std::int64_t steps = 0;        // optimizer steps taken in total
  std::int64_t epochs_run = 0;   // includes epochs restored from a checkpoint
  double final_loss = 0.0;
  double final_acc = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <class S>
using StepHook = std::function<void(ModelGraph<S>&, std::int64_t step, std::int64_t total_steps)>;

namespace detail {

template <class S>
void gather_batch(const Dataset<S>& data, const std::vector<std::int64_t>& order,
                  std::int64_t start, std::int64_t count, Tensor<S>& images,
                  std::vector<std::int64_t>& labels) {
  Shape s = data.images.shape;
  s[0] = count;
  images = Tensor<S>(s);
  labels.resize(static_cast<std::size_t>(count));
  const std::int64_t row = shape_numel(s) / count;
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t src = order[static_cast<std::size_t>(start + i)];
    std::copy(data.images.data.begin() + src * row, data.images.data.begin() + (src + 1) * row,
              images.data.begin() + i * row);
    labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
  }
}

/// Horizontal flip with probability 1/2 and an independent +-1px shift per
/// axis, zero-filled. Draw order is per sample: flip, dy, dx.
template <class S>
void augment_batch(Tensor<S>& images, std::mt19937_64& rng) {
  if (images.order() != 4) return;
  const std::int64_t N = images.shape[0], C = images.shape[1], H = images.shape[2],
                     W = images.shape[3];
  std::uniform_int_distribution<int> coin(0, 1), shift(-1, 1);
  std::vector<S> buf(static_cast<std::size_t>(H * W));
  for (std::int64_t n = 0; n < N; ++n) {
    const bool flip = coin(rng) == 1;
    const int dy = shift(rng), dx = shift(rng);
    for (std::int64_t c = 0; c < C; ++c) {
      S* img = images.data.data() + (n * C + c) * H * W;
      std::fill(buf.begin(), buf.end(), S(0));
      for (std::int64_t i = 0; i < H; ++i)
        for (std::int64_t j = 0; j < W; ++j) {
          const std::int64_t si = i - dy;
          const std::int64_t sj = (flip ? W - 1 - j : j) - dx;
          if (si >= 0 && si < H && sj >= 0 && sj < W)
            buf[static_cast<std::size_t>(i * W + j)] = img[si * W + sj];
        }
      std::copy(buf.begin(), buf.end(), img);
    }
  }
}

template <class S>
double grad_norm(const GradMap<S>& grads) {
  double sum = 0.0;
  for (const auto& [key, g] : grads)
    for (S v : g.data) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

inline std::optional<std::int64_t> latest_checkpoint_step(const std::string& phase_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(phase_dir)) return std::nullopt;
  std::optional<std::int64_t> best;
  for (const auto& entry : fs::directory_iterator(phase_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step-", 0) != 0 || name.size() < 10) continue;
    if (name.substr(name.size() - 4) != ".nbm") continue;
    const std::string digits = name.substr(5, name.size() - 9);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) continue;
    const std::int64_t step = std::stoll(digits);
    if (!best || step > *best) best = step;
  }
  return best;
}

}  // namespace detail

/// Mean loss and accuracy over a whole dataset, batched, no augmentation.
template <class S>
EvalResult evaluate(const ModelGraph<S>& model, const Dataset<S>& data,
                    std::int64_t batch_size = 256) {
  if (data.size() < 1) throw Error("evaluate: dataset is empty");
  EvalResult r;
  std::int64_t correct = 0;
  double loss_sum = 0.0;
  std::vector<std::int64_t> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    const std::int64_t count = std::min(batch_size, data.size() - start);
    Tensor<S> images;
    std::vector<std::int64_t> labels;
    detail::gather_batch(data, order, start, count, images, labels);
    const Tensor<S> logits = forward(model, images);
    Tensor<S> grad;
    loss_sum += softmax_xent(logits, labels, grad) * static_cast<double>(count);
    const std::vector<std::int64_t> pred = argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == labels[i]) ++correct;
  }
  r.loss = loss_sum / static_cast<double>(data.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return r;
}

/// Class predictions for every sample, batched.
template <class S>
std::vector<std::int64_t> predict(const ModelGraph<S>& model, const Tensor<S>& images,
                                  std::int64_t batch_size = 256) {
  std::vector<std::int64_t> out;
  const std::int64_t N = images.shape[0];
  for (std::int64_t start = 0; start < N; start += batch_size) {
    const std::int64_t count = std::min(batch_size, N - start);
    const std::vector<std::int64_t> pred = argmax_rows(forward(model, slice_images(images, start, count)));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

/// SGD training loop. The hook runs before every optimizer step with the
/// global step index; schedules that mutate the model (activation ramps)
/// plug in there. Checkpoints land at epoch boundaries as
/// <dir>/phase-<tag>/step-<n>.nbm plus a .state sidecar holding optimizer
/// velocity, RNG state and counters, so a resumed run replays bit-equal.
template <class S>
TrainResult train(ModelGraph<S>& model, const Dataset<S>& data, const TrainConfig& cfg,
                  const StepHook<S>& hook = {}, bool resume = false) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (data.size() < 1) throw Error("train: dataset is empty");
  check_params_complete(model);

  const std::int64_t N = data.size();
  const std::int64_t batches_per_epoch = (N + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total_steps = batches_per_epoch * cfg.epochs;

  std::mt19937_64 rng(cfg.seed);
  std::map<std::string, Tensor<S>> velocity;
  std::int64_t start_epoch = 0;
  std::int64_t step = 0;

  std::string phase_dir;
  if (cfg.checkpoint_every_epochs > 0) {
    if (cfg.checkpoint_dir.empty())
      throw Error("train: checkpoints requested but no checkpoint directory set");
    phase_dir = cfg.checkpoint_dir + "/phase-" + cfg.phase_tag;
    fs::create_directories(phase_dir);
  }
  if (resume) {
    if (phase_dir.empty()) throw Error("train: resume requested but checkpoints are disabled");
    if (auto at = detail::latest_checkpoint_step(phase_dir)) {
      const std::string base = phase_dir + "/step-" + std::to_string(*at);
      ModelGraph<S> saved = load_model<S>(base + ".nbm");
      if (architecture_signature(saved) != architecture_signature(model))
        throw Error("resume: checkpoint '" + base + ".nbm" +
                    "' holds a different architecture than the current model");
      model = std::move(saved);
      auto bundle = load_state_bundle<S>(base + ".state");
      velocity = std::move(bundle.first);
      const nlohmann::json& extra = bundle.second;
      std::istringstream rs(extra.at("rng").get<std::string>());
      rs >> rng;
      start_epoch = extra.at("epoch").get<std::int64_t>();
      step = extra.at("step").get<std::int64_t>();
    }
  }

  std::ofstream metrics;
  if (!cfg.metrics_path.empty()) {
    metrics.open(cfg.metrics_path, std::ios::app);
    if (!metrics) throw Error("cannot open '" + cfg.metrics_path + "' for appending");
  }

  std::vector<std::int64_t> order(static_cast<std::size_t>(N));
  TrainResult result;
  result.steps = step;
  result.epochs_run = start_epoch;

  for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::int64_t epoch_correct = 0;
    double last_lr = 0.0;
    for (std::int64_t start = 0; start < N; start += cfg.batch_size) {
      const std::int64_t count = std::min(cfg.batch_size, N - start);
      Tensor<S> images;
      std::vector<std::int64_t> labels;
      detail::gather_batch(data, order, start, count, images, labels);
      if (cfg.augment) detail::augment_batch(images, rng);
      if (hook) hook(model, step, total_steps);
      const double lr = cfg.cosine ? cosine_lr(step, total_steps, cfg.lr) : cfg.lr;
      last_lr = lr;

      GradientTape<S> tape;
      const Tensor<S> logits = forward(model, images, &tape);
      Tensor<S> loss_grad;
      const double loss = softmax_xent(logits, labels, loss_grad);
      GradMap<S> grads = tape.backward(loss_grad);
      if (!std::isfinite(loss))
        throw Error("train: diverged at step " + std::to_string(step) + " (lr=" +
                    std::to_string(lr) + ", grad-norm=" + std::to_string(detail::grad_norm(grads)) +
                    "): loss is not finite");
      sgd_step(model.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay);
      ++step;

      epoch_loss += loss * static_cast<double>(count);
      const std::vector<std::int64_t> pred = argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++epoch_correct;
    }
    result.steps = step;
    result.epochs_run = epoch + 1;
    result.final_loss = epoch_loss / static_cast<double>(N);
    result.final_acc = static_cast<double>(epoch_correct) / static_cast<double>(N);

    if (metrics.is_open()) {
      nlohmann::json line;
      line["phase"] = cfg.phase_tag;
      line["epoch"] = epoch + 1;
      line["step"] = step;
      line["lr"] = last_lr;
      line["train_loss"] = result.final_loss;
      line["train_acc"] = result.final_acc;
      metrics << line.dump() << "\n";
      metrics.flush();
    }

    if (cfg.checkpoint_every_epochs > 0 && ((epoch + 1) % cfg.checkpoint_every_epochs == 0 ||
                                            epoch + 1 == cfg.epochs)) {
      const std::string base = phase_dir + "/step-" + std::to_string(step);
      save_model(model, base + ".nbm");
      std::ostringstream rs;
      rs << rng;
      nlohmann::json extra;
      extra["rng"] = rs.str();
      extra["epoch"] = epoch + 1;
      extra["step"] = step;
      extra["phase"] = cfg.phase_tag;
      save_state_bundle<S>(base + ".state", velocity, extra);
    }
  }
  return result;
}

}  // namespace netbooster
