#include "dts/nn/tape.hpp"

#include <cmath>

namespace dts::nn {

template <typename T>
Var Tape<T>::push(Node n) {
  if (consumed_) fail(ErrorKind::state, "tape: recording after backward(); call reset() first");
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
  if (v.id >= nodes_.size()) fail(ErrorKind::state, "tape: variable does not belong to the current graph");
  return nodes_[v.id];
}

template <typename T>
Tensor<T>& Tape<T>::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Var Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node n{Op::input};
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
  Node n{Op::param};
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::conv(Var x, Var w, Var b, int dims) {
  Node n{Op::conv, x.id, w.id, b.id, dims};
  n.value = conv_forward(node(x).value, node(w).value, node(b).value, dims);
  n.requires_grad = node(x).requires_grad || node(w).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::relu(Var x) {
  Node n{Op::relu, x.id};
  n.value = node(x).value;
  for (auto& v : n.value.values()) v = v > T{} ? v : T{};
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  const auto& va = node(a).value;
  const auto& vb = node(b).value;
  if (va.shape() != vb.shape())
    fail(ErrorKind::invalid_argument, "add: shape " + shape_str(va.shape()) + " vs " + shape_str(vb.shape()));
  Node n{Op::add, a.id, b.id};
  n.value = va;
  for (std::size_t i = 0; i < vb.size(); ++i) n.value[i] += vb[i];
  n.requires_grad = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::avg_pool(Var x, int dims) {
  Node n{Op::pool, x.id, 0, 0, dims};
  n.value = avg_pool2(node(x).value, dims);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::upsample(Var x, int dims) {
  Node n{Op::upsample, x.id, 0, 0, dims};
  n.value = upsample2(node(x).value, dims);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::sum(Var x) {
  Node n{Op::sum, x.id};
  T acc{};
  for (T v : node(x).value.values()) acc += v;
  n.value = Tensor<T>({1}, acc);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::dot(Var x, Tensor<T> c) {
  const auto& vx = node(x).value;
  if (vx.shape() != c.shape()) fail(ErrorKind::invalid_argument, "dot: shape mismatch");
  Node n{Op::dot, x.id};
  T acc{};
  for (std::size_t i = 0; i < c.size(); ++i) acc += vx[i] * c[i];
  n.value = Tensor<T>({1}, acc);
  n.aux = std::move(c);
  n.requires_grad = node(x).requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Tape<T>::l1_loss(Var pred, Tensor<T> target, T weight) {
  const auto& vp = node(pred).value;
  if (vp.shape() != target.shape())
    fail(ErrorKind::invalid_argument,
         "l1_loss: prediction " + shape_str(vp.shape()) + " vs target " + shape_str(target.shape()));
  Node n{Op::l1, pred.id};
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) acc += std::abs(static_cast<double>(vp[i] - target[i]));
  n.value = Tensor<T>({1}, static_cast<T>(weight * (acc / static_cast<double>(target.size()))));
  n.aux = std::move(target);
  n.weight = weight;
  n.requires_grad = node(pred).requires_grad;
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) fail(ErrorKind::state, "tape: no gradient recorded for this variable");
  return n.grad;
}

template <typename T>
T Tape<T>::scalar(Var v) const {
  const auto& t = node(v).value;
  if (t.size() != 1) fail(ErrorKind::invalid_argument, "tape: value is not a scalar");
  return t[0];
}

template <typename T>
void Tape<T>::backward(Var loss) {
  if (nodes_.empty()) fail(ErrorKind::state, "backward() called without a recorded forward pass");
  if (consumed_) fail(ErrorKind::state, "backward() already ran on this graph");
  if (node(loss).value.size() != 1) fail(ErrorKind::invalid_argument, "backward() needs a scalar loss");
  consumed_ = true;
  for (auto& n : nodes_) n.grad = Tensor<T>(n.value.shape());
  nodes_[loss.id].grad[0] = T(1);

  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    const Tensor<T>& g = n.grad;
    switch (n.op) {
      case Op::input:
        break;
      case Op::param:
        for (std::size_t i = 0; i < g.size(); ++i) n.bound->grad[i] += g[i];
        break;
      case Op::conv: {
        Node& x = nodes_[n.a];
        Node& w = nodes_[n.b];
        Node& b = nodes_[n.c];
        conv_backward(x.value, w.value, g, n.dims, x.requires_grad ? &x.grad : nullptr,
                      w.requires_grad ? &w.grad : nullptr, b.requires_grad ? &b.grad : nullptr);
        break;
      }
      case Op::relu: {
        Node& x = nodes_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x.value[i] > T{}) x.grad[i] += g[i];
        break;
      }
      case Op::add: {
        for (std::size_t src : {n.a, n.b}) {
          Node& x = nodes_[src];
          if (!x.requires_grad) continue;
          for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i];
        }
        break;
      }
      case Op::pool:
        avg_pool2_backward(g, n.dims, nodes_[n.a].grad);
        break;
      case Op::upsample:
        upsample2_backward(g, n.dims, nodes_[n.a].grad);
        break;
      case Op::sum: {
        Node& x = nodes_[n.a];
        for (auto& v : x.grad.values()) v += g[0];
        break;
      }
      case Op::dot: {
        Node& x = nodes_[n.a];
        for (std::size_t i = 0; i < n.aux.size(); ++i) x.grad[i] += g[0] * n.aux[i];
        break;
      }
      case Op::l1: {
        Node& x = nodes_[n.a];
        T scale = g[0] * n.weight / static_cast<T>(n.aux.size());
        for (std::size_t i = 0; i < n.aux.size(); ++i) {
          T r = x.value[i] - n.aux[i];
          if (r > T{}) x.grad[i] += scale;
          else if (r < T{}) x.grad[i] -= scale;
        }
        break;
      }
    }
  }
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  consumed_ = false;
}

template <typename T>
std::vector<signed char> Tape<T>::activation_pattern() const {
  std::vector<signed char> out;
  auto sign = [](T r) -> signed char { return r > T{} ? 1 : (r < T{} ? -1 : 0); };
  for (const auto& n : nodes_) {
    if (n.op == Op::relu) {
      for (T v : nodes_[n.a].value.values()) out.push_back(sign(v));
    } else if (n.op == Op::l1) {
      const auto& p = nodes_[n.a].value;
      for (std::size_t i = 0; i < p.size(); ++i) out.push_back(sign(p[i] - n.aux[i]));
    }
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dts::nn
