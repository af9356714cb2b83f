#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "netbooster/tensor.hpp"

namespace netbooster {

template <class S>
using GradMap = std::map<std::string, Tensor<S>>;

/// Reverse-mode tape. Forward kernels push one node per primitive op; the
/// nodes form a stack program whose reversal yields gradients. `dup`/`add`
/// bracket the single supported branch shape (an identity skip around a
/// run of ops). Single-threaded per training step.
template <class S>
class GradientTape {
 public:
  using UnaryBackward = std::function<Tensor<S>(const Tensor<S>&, GradientTape<S>&)>;

  void push_unary(UnaryBackward fn) { nodes_.push_back({Kind::unary, std::move(fn)}); }
  void push_dup() { nodes_.push_back({Kind::dup, {}}); }
  void push_add() { nodes_.push_back({Kind::add, {}}); }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }

  /// Declares a trainable tensor so gradient shapes can be checked.
  void register_param(const std::string& id, Shape shape) {
    param_shapes_[id] = std::move(shape);
  }

  void add_param_grad(const std::string& id, Tensor<S> g) {
    auto ps = param_shapes_.find(id);
    if (ps != param_shapes_.end() && ps->second != g.shape)
      throw Error("gradient for '" + id + "' has shape " + shape_str(g.shape) +
                  ", parameter has " + shape_str(ps->second));
    auto it = grads_.find(id);
    if (it == grads_.end()) {
      grads_.emplace(id, std::move(g));
      return;
    }
    if (!it->second.same_shape(g))
      throw Error("gradient for '" + id + "' accumulated with mismatched shapes");
    for (std::size_t i = 0; i < it->second.data.size(); ++i)
      it->second.data[i] += g.data[i];
  }

  /// Replays the recorded ops in exact reverse order. `loss_grad` is
  /// dLoss/dOutput of the last recorded op (loss itself is scalar).
  GradMap<S> backward(const Tensor<S>& loss_grad) {
    if (nodes_.empty()) throw Error("backward: tape is empty (no forward pass recorded)");
    grads_.clear();
    std::vector<Tensor<S>> stack;
    stack.push_back(loss_grad);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      switch (it->kind) {
        case Kind::unary: {
          Tensor<S> g = std::move(stack.back());
          stack.pop_back();
          stack.push_back(it->fn(g, *this));
          break;
        }
        case Kind::add: {
          // y = a + b: the same gradient flows to both summands. Top of the
          // stack must be the later-computed input (the skipped-over run).
          Tensor<S> g = std::move(stack.back());
          stack.pop_back();
          stack.push_back(g);
          stack.push_back(std::move(g));
          break;
        }
        case Kind::dup: {
          Tensor<S> g1 = std::move(stack.back());
          stack.pop_back();
          Tensor<S> g2 = std::move(stack.back());
          stack.pop_back();
          stack.push_back(g1 + g2);
          break;
        }
      }
    }
    if (stack.size() != 1)
      throw Error("backward: malformed tape (unbalanced dup/add nodes)");
    input_grad_ = std::move(stack.back());
    return std::move(grads_);
  }

  /// dLoss/dInput from the most recent backward() call.
  const Tensor<S>& input_gradient() const { return input_grad_; }

 private:
  enum class Kind { unary, dup, add };
  struct Node {
    Kind kind;
    UnaryBackward fn;
  };
  std::vector<Node> nodes_;
  GradMap<S> grads_;
  std::map<std::string, Shape> param_shapes_;
  Tensor<S> input_grad_;
};

}  // namespace netbooster
