#pragma once

#include <cstddef>
#include <vector>

#include "dts/nn/ops.hpp"

namespace dts::nn {

/// A trainable tensor together with its accumulated gradient.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  explicit Parameter(Tensor<T> v = {}) : value(std::move(v)), grad(value.empty() ? Tensor<T>() : Tensor<T>(value.shape())) {}
  void zero_grad() { grad.fill(T{}); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Records a forward graph and replays it in reverse to accumulate gradients.
/// A tape is single-use: after backward() it must be reset() before recording again.
template <typename T>
class Tape {
 public:
  Var input(Tensor<T> value, bool requires_grad = false);
  Var param(Parameter<T>& p);

  Var conv(Var x, Var w, Var b, int dims);
  Var relu(Var x);
  Var add(Var a, Var b);
  Var avg_pool(Var x, int dims);
  Var upsample(Var x, int dims);
  Var sum(Var x);
  /// Σ x·c for a constant tensor c; used to project outputs onto a fixed direction.
  Var dot(Var x, Tensor<T> c);
  /// weight · mean|pred − target|. The subgradient at a zero residual is taken as 0.
  Var l1_loss(Var pred, Tensor<T> target, T weight);

  const Tensor<T>& value(Var v) const;
  /// Gradient of the last backward() with respect to v (zeros when v did not influence the loss).
  const Tensor<T>& grad(Var v) const;
  T scalar(Var v) const;

  /// Accumulates d(loss)/d(·) into every recorded node and into the bound Parameters.
  void backward(Var loss);
  void reset();
  /// Sign pattern of every ReLU input and L1 residual; equal patterns mean the same linear piece.
  std::vector<signed char> activation_pattern() const;
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op { input, param, conv, relu, add, pool, upsample, sum, dot, l1 };
  struct Node {
    explicit Node(Op o, std::size_t a_ = 0, std::size_t b_ = 0, std::size_t c_ = 0, int d = 0)
        : op(o), a(a_), b(b_), c(c_), dims(d) {}
    Op op;
    std::size_t a = 0, b = 0, c = 0;
    int dims = 0;
    T weight{};
    Tensor<T> value;
    Tensor<T> aux;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* bound = nullptr;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  Tensor<T>& grad_of(std::size_t id);

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace dts::nn
