#pragma once

// Finite-difference gradient oracle shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "dts/nn/model.hpp"

namespace dts::testing {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using nn::ConvNet;
using nn::ConvNetSpec;

template <typename T>
inline Tensor<T> random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

using Builder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

struct CheckResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Central-difference oracle. For each checked tensor the error is max|analytic − numeric| / max|numeric|.
// Coordinates whose ±h perturbation moves any ReLU input or L1 residual across zero are skipped,
// since the function is not differentiable across that step.
inline CheckResult grad_check(std::vector<Tensor<double>>& inputs, const std::vector<Parameter<double>*>& params,
                       const Builder& build, std::uint64_t seed, std::size_t max_coords = 64) {
  const double h = 1e-5;
  auto run = [&](Tape<double>& tape) {
    std::vector<Var> vars;
    for (auto& in : inputs) vars.push_back(tape.input(in, true));
    return std::make_pair(build(tape, vars), vars);
  };

  for (auto* p : params) p->zero_grad();
  Tape<double> tape;
  auto [loss, vars] = run(tape);
  auto base_pattern = tape.activation_pattern();
  tape.backward(loss);

  std::vector<Tensor<double>*> targets;
  std::vector<Tensor<double>> analytic;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    targets.push_back(&inputs[k]);
    analytic.push_back(tape.grad(vars[k]));
  }
  for (auto* p : params) {
    targets.push_back(&p->value);
    analytic.push_back(p->grad);
  }

  auto eval = [&](std::vector<signed char>& pattern) {
    Tape<double> t;
    auto [l, v] = run(t);
    pattern = t.activation_pattern();
    return t.scalar(l);
  };

  CheckResult res;
  std::vector<std::pair<double, double>> errs;
  double global = 0.0;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor<double>& x = *targets[k];
    std::vector<std::size_t> coords(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > max_coords) coords.resize(max_coords);
    double max_err = 0.0, max_num = 0.0;
    for (std::size_t i : coords) {
      double orig = x[i];
      std::vector<signed char> pp, pm;
      x[i] = orig + h;
      double fp = eval(pp);
      x[i] = orig - h;
      double fm = eval(pm);
      x[i] = orig;
      if (pp != base_pattern || pm != base_pattern) {
        ++res.skipped;
        continue;
      }
      double num = (fp - fm) / (2.0 * h);
      max_err = std::max(max_err, std::abs(num - analytic[k][i]));
      max_num = std::max(max_num, std::abs(num));
      ++res.checked;
    }
    errs.emplace_back(max_err, max_num);
    global = std::max(global, max_num);
  }
  // A tensor whose true gradient vanishes (e.g. a bias under a balanced L1 loss) is measured
  // against a thousandth of the largest gradient in the graph instead of its own round-off.
  for (auto [err, scale] : errs) res.max_rel = std::max(res.max_rel, err / std::max(scale, 1e-3 * global));
  return res;
}

/// Checks every tape op, plus small residual networks built from them, on one seed.
/// `report` receives the op name and its check result.
inline void gradient_suite(std::uint64_t seed, const std::function<void(const char*, const CheckResult&)>& report) {
  std::mt19937_64 rng(1000 + seed);

  {
    std::vector<Tensor<double>> in{random_tensor<double>({2, 2, 5, 4}, rng)};
    Parameter<double> w(random_tensor<double>({3, 2, 3, 3}, rng)), b(random_tensor<double>({3}, rng));
    auto c = random_tensor<double>({2, 3, 5, 4}, rng);
    report("conv2d", grad_check(in, {&w, &b}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.dot(t.conv(v[0], t.param(w), t.param(b), 2), c);
    }, seed));
  }
  {
    std::vector<Tensor<double>> in{random_tensor<double>({1, 2, 4, 3, 5}, rng)};
    Parameter<double> w(random_tensor<double>({2, 2, 3, 3, 3}, rng)), b(random_tensor<double>({2}, rng));
    auto c = random_tensor<double>({1, 2, 4, 3, 5}, rng);
    report("conv3d", grad_check(in, {&w, &b}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.dot(t.conv(v[0], t.param(w), t.param(b), 3), c);
    }, seed));
  }
  {
    auto x = random_tensor<double>({3, 7}, rng);
    for (auto& v : x.values()) v += v >= 0 ? 0.01 : -0.01;
    std::vector<Tensor<double>> in{x};
    auto c = random_tensor<double>({3, 7}, rng);
    report("relu", grad_check(in, {}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.dot(t.relu(v[0]), c);
    }, seed));
  }
  {
    std::vector<Tensor<double>> in{random_tensor<double>({4, 3}, rng)};
    report("sum", grad_check(in, {}, [&](Tape<double>& t, const std::vector<Var>& v) { return t.sum(v[0]); }, seed));
  }
  {
    std::vector<Tensor<double>> in{random_tensor<double>({2, 5}, rng), random_tensor<double>({2, 5}, rng)};
    auto c = random_tensor<double>({2, 5}, rng);
    report("residual add", grad_check(in, {}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.dot(t.add(v[0], t.add(v[1], v[0])), c);
    }, seed));
  }
  {
    std::vector<Tensor<double>> in{random_tensor<double>({2, 3, 4}, rng)};
    auto target = random_tensor<double>({2, 3, 4}, rng);
    report("l1 loss", grad_check(in, {}, [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.l1_loss(v[0], target, 50.0);
    }, seed));
  }
  {
    std::vector<Tensor<double>> in{random_tensor<double>({1, 2, 4, 6}, rng), random_tensor<double>({1, 1, 4, 2, 6}, rng)};
    auto c2 = random_tensor<double>({1, 2, 4, 6}, rng);
    auto c3 = random_tensor<double>({1, 1, 4, 2, 6}, rng);
    report("pool and upsample", grad_check(in, {}, [&](Tape<double>& t, const std::vector<Var>& v) {
      Var a = t.dot(t.upsample(t.avg_pool(v[0], 2), 2), c2);
      Var b = t.dot(t.upsample(t.avg_pool(v[1], 3), 3), c3);
      return t.add(a, b);
    }, seed));
  }
  {
    ConvNetSpec spec;
    spec.dims = 2;
    spec.in_channels = 2;
    spec.blocks = {{3, 3}, {4, 3}};
    spec.pool = seed % 2 == 1;
    ConvNet<double> net(spec, seed);
    // The head starts at zero; give it weights so gradients reach the whole network.
    for (auto* p : net.parameters())
      for (auto& v : p->value.values()) v += 0.1 * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    std::vector<Tensor<double>> in{random_tensor<double>({1, 2, 6, 4}, rng)};
    auto target = random_tensor<double>({1, 1, 6, 4}, rng);
    report("residual network 2d", grad_check(in, net.parameters(), [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.l1_loss(net.forward(t, v[0]), target, 20.0);
    }, seed, 24));
  }
  {
    ConvNetSpec spec;
    spec.dims = 3;
    spec.in_channels = 2;
    spec.blocks = {{2, 3}, {3, 1}};
    spec.pool = seed % 2 == 0;
    ConvNet<double> net(spec, seed);
    for (auto* p : net.parameters())
      for (auto& v : p->value.values()) v += 0.1 * std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    std::vector<Tensor<double>> in{random_tensor<double>({1, 2, 4, 2, 4}, rng)};
    auto c = random_tensor<double>({1, 1, 4, 2, 4}, rng);
    report("residual network 3d", grad_check(in, net.parameters(), [&](Tape<double>& t, const std::vector<Var>& v) {
      return t.dot(net.forward(t, v[0]), c);
    }, seed, 24));
  }
}

}  // namespace dts::testing
