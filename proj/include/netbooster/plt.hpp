#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "netbooster/graph.hpp"
#include "netbooster/trainer.hpp"

namespace netbooster {

// Progressive linearization: every activation inside an expansion block
// blends toward identity as alpha climbs 0 -> 1, one increment per
// optimizer step, then training continues with the blocks fully linear.
// Activations outside blocks are never touched.

struct ActivationSite {
  std::size_t node = 0;   // block node index
  std::size_t layer = 0;  // activation's position inside the block
  bool operator==(const ActivationSite&) const = default;
};

template <class S>
std::vector<ActivationSite> collect_block_activations(const ModelGraph<S>& g) {
  std::vector<ActivationSite> out;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto* b = std::get_if<BlockSpec>(&g.nodes[i]);
    if (!b) continue;
    for (std::size_t j = 0; j < b->layers.size(); ++j)
      if (b->layers[j].kind == LayerKind::act) out.push_back({i, j});
  }
  return out;
}

/// Linear ramp: 0 at step 0, exactly 1 at step == decay_steps and beyond.
/// Steps before the phase (negative) clamp to 0.
inline double alpha_at(std::int64_t step, std::int64_t decay_steps) {
  if (decay_steps <= 0) throw Error("alpha_at: decay_steps must be > 0");
  if (step <= 0) return 0.0;
  if (step >= decay_steps) return 1.0;
  return static_cast<double>(step) / static_cast<double>(decay_steps);
}

/// The ramp gets one fifth of the tuning budget, never less than one epoch.
inline std::int64_t decay_epochs_from_total(std::int64_t total_tuning_epochs) {
  if (total_tuning_epochs < 1) throw Error("decay_epochs_from_total: budget must be >= 1 epoch");
  return std::max<std::int64_t>(1, std::llround(0.2 * static_cast<double>(total_tuning_epochs)));
}

template <class S>
void set_sites_alpha(ModelGraph<S>& g, const std::vector<ActivationSite>& sites, double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw Error("set_sites_alpha: alpha must lie in [0,1], got " + std::to_string(alpha));
  for (const ActivationSite& s : sites) {
    auto* b = std::get_if<BlockSpec>(&g.nodes.at(s.node));
    if (!b || s.layer >= b->layers.size() || b->layers[s.layer].kind != LayerKind::act)
      throw Error("set_sites_alpha: site n" + std::to_string(s.node) + "." +
                  std::to_string(s.layer) + " is not a block activation");
    b->layers[s.layer].alpha = alpha;
  }
}

/// Sets every block activation in the model to one alpha.
template <class S>
void apply_alpha(ModelGraph<S>& g, double alpha) {
  set_sites_alpha(g, collect_block_activations(g), alpha);
}

struct PLTSchedule {
  std::int64_t decay_epochs = 1;     // alpha ramps 0 -> 1 across these
  std::int64_t finetune_epochs = 0;  // then trains on with alpha pinned at 1

  void validate() const {
    if (decay_epochs < 1) throw Error("linearization: decay_epochs must be >= 1");
    if (finetune_epochs < 0) throw Error("linearization: finetune_epochs must be >= 0");
  }
};

/// Trains an expanded model while ramping its block activations to identity.
/// cfg.epochs is taken from the schedule. On return every block activation
/// holds alpha == 1 exactly, so the model is ready to contract.
template <class S>
TrainResult plt_phase(ModelGraph<S>& model, const Dataset<S>& data, TrainConfig cfg,
                      const PLTSchedule& sched, bool resume = false) {
  sched.validate();
  if (model.provenance != Provenance::expanded)
    throw Error("linearization: model '" + model.name + "' is " + to_string(model.provenance) +
                "; only expanded models carry block activations to ramp");
  const std::vector<ActivationSite> sites = collect_block_activations(model);
  if (sites.empty())
    throw Error("linearization: model '" + model.name + "' has no block activations");
  cfg.epochs = sched.decay_epochs + sched.finetune_epochs;
  const std::int64_t batches_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t decay_steps = sched.decay_epochs * batches_per_epoch;
  StepHook<S> ramp = [&sites, decay_steps](ModelGraph<S>& m, std::int64_t step, std::int64_t) {
    set_sites_alpha(m, sites, alpha_at(step, decay_steps));
  };
  TrainResult r = train(model, data, cfg, ramp, resume);
  set_sites_alpha(model, sites, 1.0);
  return r;
}

}  // namespace netbooster
