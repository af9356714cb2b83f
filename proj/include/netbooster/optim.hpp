#pragma once

#include <cmath>
#include <map>
#include <string>

#include "netbooster/autodiff.hpp"
#include "netbooster/tensor.hpp"

namespace netbooster {

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
// Velocity entries are created lazily (zero) the first time a key appears.
template <class S>
void sgd_step(std::map<std::string, Tensor<S>>& params, const GradMap<S>& grads,
              std::map<std::string, Tensor<S>>& velocity, double lr, double momentum,
              double weight_decay) {
  if (lr < 0) throw Error("sgd: learning rate must be >= 0");
  for (const auto& [key, g] : grads) {
    auto pit = params.find(key);
    if (pit == params.end()) throw Error("sgd: gradient for unknown parameter '" + key + "'");
    Tensor<S>& p = pit->second;
    if (p.shape != g.shape)
      throw Error("sgd: parameter '" + key + "' shape " + shape_str(p.shape) +
                  " vs gradient shape " + shape_str(g.shape));
    auto vit = velocity.find(key);
    if (vit == velocity.end()) vit = velocity.emplace(key, Tensor<S>::zeros(p.shape)).first;
    Tensor<S>& v = vit->second;
    const S mom = static_cast<S>(momentum), wd = static_cast<S>(weight_decay);
    const S rate = static_cast<S>(lr);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      v.data[i] = mom * v.data[i] + g.data[i] + wd * p.data[i];
      p.data[i] -= rate * v.data[i];
    }
  }
}

// Half-cosine decay from lr0 at step 0 to 0 at step == total_steps.
inline double cosine_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps <= 0) throw Error("cosine_lr: total_steps must be > 0");
  if (step < 0 || step > total_steps)
    throw Error("cosine_lr: step " + std::to_string(step) + " outside [0," +
                std::to_string(total_steps) + "]");
  constexpr double pi = 3.14159265358979323846;
  return lr0 * 0.5 * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace netbooster
