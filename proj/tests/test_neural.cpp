#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "dts/nn/model.hpp"
#include "gradcheck.hpp"

using namespace dts;
using namespace dts::nn;
using namespace dts::testing;

namespace {

// Direct six-loop cross-correlation with zero padding, the reference for conv_forward.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int dims) {
  auto xs = x.shape();
  auto ws = w.shape();
  if (dims == 2) {
    xs.insert(xs.begin() + 2, 1);
    ws.insert(ws.begin() + 2, 1);
  }
  std::size_t N = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4];
  std::size_t O = ws[0], KD = ws[2], KH = ws[3], KW = ws[4];
  auto ys = x.shape();
  ys[1] = O;
  Tensor<double> y(ys);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t z = 0; z < D; ++z)
        for (std::size_t r = 0; r < H; ++r)
          for (std::size_t c = 0; c < W; ++c) {
            double acc = b[o];
            for (std::size_t i = 0; i < C; ++i)
              for (std::size_t a = 0; a < KD; ++a)
                for (std::size_t bb = 0; bb < KH; ++bb)
                  for (std::size_t e = 0; e < KW; ++e) {
                    long zz = static_cast<long>(z + a) - static_cast<long>(KD / 2);
                    long rr = static_cast<long>(r + bb) - static_cast<long>(KH / 2);
                    long cc = static_cast<long>(c + e) - static_cast<long>(KW / 2);
                    if (zz < 0 || rr < 0 || cc < 0 || zz >= static_cast<long>(D) || rr >= static_cast<long>(H) ||
                        cc >= static_cast<long>(W))
                      continue;
                    acc += w[(((o * C + i) * KD + a) * KH + bb) * KW + e] *
                           x[(((n * C + i) * D + zz) * H + rr) * W + cc];
                  }
            y[(((n * O + o) * D + z) * H + r) * W + c] = acc;
          }
  return y;
}

void require_grad_ok(const CheckResult& r) {
  CHECK(r.max_rel <= 1e-5);
  CHECK(r.checked > 0);
  CHECK(r.skipped * 4 <= r.checked + r.skipped);
}

}  // namespace

TEST_CASE("conv identity kernel reproduces the input") {
  std::mt19937_64 rng(1);
  for (int dims : {2, 3}) {
    std::vector<std::size_t> xs = dims == 2 ? std::vector<std::size_t>{2, 1, 6, 7} : std::vector<std::size_t>{1, 1, 4, 5, 6};
    std::vector<std::size_t> ws = dims == 2 ? std::vector<std::size_t>{1, 1, 3, 3} : std::vector<std::size_t>{1, 1, 3, 3, 3};
    auto x = random_tensor<float>(xs, rng);
    Tensor<float> w(ws);
    w[w.size() / 2] = 1.0f;
    auto y = conv_forward(x, w, Tensor<float>({1}), dims);
    CHECK(y == x);
  }
}

TEST_CASE("all-ones 3x3 kernel on all-ones 5x5 counts the in-bounds taps") {
  Tensor<float> x({1, 1, 5, 5}, 1.0f);
  Tensor<float> w({1, 1, 3, 3}, 1.0f);
  auto y = conv_forward(x, w, Tensor<float>({1}), 2);
  CHECK(y[2 * 5 + 2] == 9.0f);
  CHECK(y[1 * 5 + 3] == 9.0f);
  CHECK(y[0] == 4.0f);
  CHECK(y[4] == 4.0f);
  CHECK(y[20] == 4.0f);
  CHECK(y[24] == 4.0f);
  CHECK(y[2] == 6.0f);
  CHECK(y[2 * 5] == 6.0f);
}

TEST_CASE("conv matches the direct reference in both dimensionalities") {
  std::mt19937_64 rng(7);
  struct Case {
    int dims;
    std::vector<std::size_t> x, w;
  };
  std::vector<Case> cases = {
      {2, {2, 3, 7, 5}, {4, 3, 3, 3}},
      {2, {1, 2, 6, 6}, {3, 2, 5, 5}},
      {2, {1, 2, 4, 9}, {2, 2, 1, 1}},
      {3, {2, 2, 4, 5, 3}, {3, 2, 3, 3, 3}},
      {3, {1, 3, 5, 4, 6}, {2, 3, 1, 3, 5}},
  };
  for (const auto& c : cases) {
    auto x = random_tensor<double>(c.x, rng);
    auto w = random_tensor<double>(c.w, rng);
    auto b = random_tensor<double>({c.w[0]}, rng);
    auto y = conv_forward(x, w, b, c.dims);
    auto ref = naive_conv(x, w, b, c.dims);
    REQUIRE(y.shape() == ref.shape());
    double err = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - ref[i]));
    CHECK(err < 1e-12);
  }
}

TEST_CASE("conv is linear in its input") {
  std::mt19937_64 rng(3);
  auto x = random_tensor<float>({1, 2, 8, 8}, rng);
  auto w = random_tensor<float>({3, 2, 3, 3}, rng);
  Tensor<float> b({3});
  auto y = conv_forward(x, w, b, 2);
  const float a = 2.5f;
  auto xa = x;
  for (auto& v : xa.values()) v *= a;
  auto ya = conv_forward(xa, w, b, 2);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(ya[i] - a * y[i]) <= 1e-6f * std::max(1.0f, std::abs(ya[i])));
}

TEST_CASE("conv shape errors") {
  Tensor<float> x({1, 2, 5, 5});
  CHECK_THROWS_AS(conv_forward(x, Tensor<float>({1, 3, 3, 3}), Tensor<float>({1}), 2), Error);
  CHECK_THROWS_AS(conv_forward(x, Tensor<float>({1, 2, 2, 2}), Tensor<float>({1}), 2), Error);
  CHECK_THROWS_AS(conv_forward(x, Tensor<float>({1, 2, 3, 3}), Tensor<float>({2}), 2), Error);
  CHECK_THROWS_AS(conv_forward(x, Tensor<float>({1, 2, 3, 3}), Tensor<float>({1}), 3), Error);
}

TEST_CASE("gradient of a plain sum is all ones") {
  std::mt19937_64 rng(5);
  Tape<float> tape;
  Var x = tape.input(random_tensor<float>({2, 3, 4}, rng), true);
  tape.backward(tape.sum(x));
  for (float g : tape.grad(x).values()) CHECK(g == 1.0f);
}

TEST_CASE("relu passes no gradient at negative inputs") {
  Tape<float> tape;
  Var x = tape.input(Tensor<float>({4}, std::vector<float>{-2.0f, -0.5f, 0.5f, 3.0f}), true);
  tape.backward(tape.sum(tape.relu(x)));
  const auto& g = tape.grad(x);
  CHECK(g[0] == 0.0f);
  CHECK(g[1] == 0.0f);
  CHECK(g[2] == 1.0f);
  CHECK(g[3] == 1.0f);
}

TEST_CASE("backward requires a fresh recorded graph") {
  Tape<float> tape;
  CHECK_THROWS_AS(tape.backward(Var{0}), Error);
  try {
    tape.backward(Var{0});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::state);
  }
  Var x = tape.input(Tensor<float>({3}, 1.0f), true);
  Var s = tape.sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), Error);
  CHECK_THROWS_AS(tape.input(Tensor<float>({1})), Error);
  tape.reset();
  CHECK(tape.size() == 0);
  Var y = tape.input(Tensor<float>({2}, 3.0f), true);
  tape.backward(tape.sum(y));
  CHECK(tape.grad(y)[1] == 1.0f);
}

TEST_CASE("l1 loss closed forms") {
  Tape<float> tape;
  Tensor<float> target({2, 3}, 0.25f);
  Var p = tape.input(target, true);
  CHECK(tape.scalar(tape.l1_loss(p, target, 50.0f)) == 0.0f);
  auto shifted = target;
  for (auto& v : shifted.values()) v -= 0.125f;
  Var q = tape.input(shifted, true);
  Var loss = tape.l1_loss(q, target, 50.0f);
  CHECK(tape.scalar(loss) == doctest::Approx(50.0 * 0.125).epsilon(1e-7));
  CHECK_THROWS_AS(tape.l1_loss(q, Tensor<float>({6}), 1.0f), Error);

  Tape<double> t2;
  Var z = t2.input(Tensor<double>({3}, std::vector<double>{1.0, 2.0, 3.0}), true);
  t2.backward(t2.l1_loss(z, Tensor<double>({3}, std::vector<double>{1.0, 1.0, 4.0}), 3.0));
  CHECK(t2.grad(z)[0] == 0.0);
  CHECK(t2.grad(z)[1] == doctest::Approx(1.0));
  CHECK(t2.grad(z)[2] == doctest::Approx(-1.0));
}

TEST_CASE("gradient check: every op, 20 seeds, f64") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    gradient_suite(seed, [](const char* op, const CheckResult& r) {
      INFO(op);
      require_grad_ok(r);
    });
  }
}

TEST_CASE("network spec text round trip and validation") {
  ConvNetSpec spec;
  spec.dims = 3;
  spec.in_channels = 2;
  spec.blocks = {{8, 3}, {16, 5}};
  spec.pool = true;
  CHECK(spec.str() == "dims=3 in=2 blocks=8x3,16x5 out=1 pool=1");
  CHECK(ConvNetSpec::parse(spec.str()) == spec);
  CHECK_THROWS_AS(ConvNetSpec::parse("dims=4 in=1 blocks=8 out=1"), Error);
  CHECK_THROWS_AS(ConvNetSpec::parse("dims=2 in=1 blocks= out=1"), Error);
  CHECK_THROWS_AS(ConvNetSpec::parse("dims=2 in=1 blocks=8x2 out=1"), Error);
  CHECK_THROWS_AS(ConvNetSpec::parse("dims=2 in=1 blocks=8 out=1 depth=3"), Error);
}

TEST_CASE("zero-initialised head predicts zero and spatial shape is preserved") {
  std::mt19937_64 rng(11);
  ConvNetSpec s3;
  s3.dims = 3;
  ConvNet<float> net3(s3, 4);
  for (std::vector<std::size_t> shape : {std::vector<std::size_t>{1, 1, 16, 8, 16}, std::vector<std::size_t>{1, 1, 12, 6, 12}}) {
    auto y = net3.predict(random_tensor<float>(shape, rng));
    CHECK(y.shape() == shape);
    for (float v : y.values()) CHECK(v == 0.0f);
  }
  ConvNetSpec s2;
  s2.blocks = {{4, 3}, {6, 3}};
  s2.pool = true;
  ConvNet<float> net2(s2, 4);
  CHECK(net2.predict(random_tensor<float>({3, 1, 8, 10}, rng)).shape() == std::vector<std::size_t>{3, 1, 8, 10});
  CHECK_THROWS_AS(net2.predict(random_tensor<float>({1, 1, 7, 10}, rng)), Error);
  CHECK_THROWS_AS(net2.predict(random_tensor<float>({1, 2, 8, 10}, rng)), Error);
}

TEST_CASE("initialisation is seeded") {
  ConvNetSpec spec;
  ConvNet<float> a(spec, 9), b(spec, 9), c(spec, 10);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  CHECK(pa[0]->value == pb[0]->value);
  CHECK(!(pa[0]->value == pc[0]->value));
  double bound = std::sqrt(6.0 / 9.0);
  for (float v : pa[0]->value.values()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  std::mt19937_64 rng(2);
  Parameter<float> p(random_tensor<float>({10}, rng));
  auto before = p.value;
  auto state = AdamState::for_parameters<float>({&p}, {});
  for (int i = 0; i < 50; ++i) adam_step<float>({&p}, state);
  CHECK(p.value == before);
  CHECK(state.step == 50);
}

TEST_CASE("adam: a constant gradient gives steps of size lr") {
  Parameter<double> p(Tensor<double>({3}, std::vector<double>{0.0, 1.0, -2.0}));
  std::vector<double> g{0.3, -7.0, 1e-3};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  auto state = AdamState::for_parameters<double>({&p}, cfg);
  for (int step = 1; step <= 2000; ++step) {
    auto before = p.value;
    for (std::size_t i = 0; i < 3; ++i) p.grad[i] = g[i];
    adam_step<double>({&p}, state);
    if (step == 1 || step == 2000) {
      for (std::size_t i = 0; i < 3; ++i) {
        double delta = before[i] - p.value[i];
        double expected = cfg.lr * g[i] / (std::abs(g[i]) + cfg.eps);
        CHECK(delta == doctest::Approx(expected).epsilon(1e-6));
      }
    }
  }
}

namespace {

std::vector<float> train_tiny(std::uint64_t seed) {
  ConvNetSpec spec;
  spec.blocks = {{4, 3}};
  ConvNet<float> net(spec, seed);
  std::mt19937_64 rng(seed);
  auto x = random_tensor<float>({2, 1, 8, 8}, rng, 0.0, 1.0);
  auto y = random_tensor<float>({2, 1, 8, 8}, rng, -0.2, 0.2);
  AdamConfig cfg;
  cfg.lr = 1e-2;
  auto state = AdamState::for_parameters(net.parameters(), cfg);
  std::vector<float> losses;
  for (int i = 0; i < 30; ++i) {
    Tape<float> tape;
    net.zero_grad();
    Var loss = tape.l1_loss(net.forward(tape, tape.input(x)), y, 20.0f);
    losses.push_back(tape.scalar(loss));
    tape.backward(loss);
    adam_step(net.parameters(), state);
  }
  for (const auto* p : net.parameters()) losses.insert(losses.end(), p->value.values().begin(), p->value.values().end());
  return losses;
}

}  // namespace

TEST_CASE("training is bit-reproducible and reduces a toy loss") {
  auto a = train_tiny(5);
  auto b = train_tiny(5);
  CHECK(a == b);
  CHECK(a[29] < a[0]);
}

TEST_CASE("checkpoint round trip") {
  auto dir = std::filesystem::temp_directory_path() / "dts_test_neural";
  std::filesystem::create_directories(dir);
  ConvNetSpec spec;
  spec.dims = 3;
  spec.in_channels = 2;
  spec.blocks = {{4, 3}, {6, 3}};
  ConvNet<float> a(spec, 1), b(spec, 2);
  std::mt19937_64 rng(4);
  for (auto* p : a.parameters()) p->grad = random_tensor<float>(p->value.shape(), rng);
  auto state = AdamState::for_parameters(a.parameters(), {});
  adam_step(a.parameters(), state);

  write_checkpoint(dir / "a.ckpt", a, 17, &state);
  write_checkpoint(dir / "plain.ckpt", a, 17);
  AdamState restored;
  auto info = read_checkpoint(dir / "a.ckpt", b, &restored);
  CHECK(info.step == 17);
  CHECK(info.has_adam);
  CHECK(info.spec == spec);
  CHECK(restored.step == state.step);
  CHECK(restored.m == state.m);
  CHECK(restored.v == state.v);
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
  CHECK(!read_checkpoint(dir / "plain.ckpt", b).has_adam);
  CHECK(peek_checkpoint(dir / "plain.ckpt").spec == spec);

  ConvNetSpec other = spec;
  other.blocks = {{4, 3}};
  ConvNet<float> c(other, 1);
  CHECK_THROWS_AS(read_checkpoint(dir / "a.ckpt", c), Error);
  CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt", c), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("eager prediction equals the recorded forward pass") {
  std::mt19937_64 rng(12);
  for (bool pool : {false, true}) {
    ConvNetSpec spec;
    spec.dims = 3;
    spec.in_channels = 2;
    spec.blocks = {{4, 3}, {6, 3}};
    spec.pool = pool;
    ConvNet<float> net(spec, 3);
    for (auto* p : net.parameters())
      for (auto& v : p->value.values()) v += 0.05f * static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng));
    auto x = random_tensor<float>({1, 2, 8, 4, 6}, rng);
    Tape<float> tape;
    Var y = net.forward(tape, tape.input(x));
    CHECK(net.predict(x) == tape.value(y));
  }
}
