#include "dts/nn/model.hpp"

#include <cmath>
#include <sstream>

#include "dts/binary_io.hpp"
#include "dts/keyvalue.hpp"

namespace dts::nn {

void ConvNetSpec::validate() const {
  if (dims != 2 && dims != 3) fail(ErrorKind::config, "network dims must be 2 or 3");
  if (in_channels == 0 || out_channels == 0) fail(ErrorKind::config, "network channel counts must be positive");
  if (blocks.empty()) fail(ErrorKind::config, "network needs at least one residual block");
  for (const auto& b : blocks) {
    if (b.channels == 0) fail(ErrorKind::config, "block channels must be positive");
    if (b.kernel % 2 == 0) fail(ErrorKind::config, "block kernel must be odd");
  }
}

std::string ConvNetSpec::str() const {
  std::ostringstream os;
  os << "dims=" << dims << " in=" << in_channels << " blocks=";
  for (std::size_t i = 0; i < blocks.size(); ++i) os << (i ? "," : "") << blocks[i].channels << 'x' << blocks[i].kernel;
  os << " out=" << out_channels << " pool=" << (pool ? 1 : 0);
  return os.str();
}

ConvNetSpec ConvNetSpec::parse(const std::string& s) {
  ConvNetSpec spec;
  spec.blocks.clear();
  auto to_size = [&](const std::string& v) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) fail(ErrorKind::config, "bad number '" + v + "' in network spec '" + s + "'");
    return static_cast<std::size_t>(n);
  };
  for (const auto& tok : split(s, ' ')) {
    if (tok.empty()) continue;
    auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::config, "bad token '" + tok + "' in network spec");
    std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "dims") {
      spec.dims = static_cast<int>(to_size(val));
    } else if (key == "in") {
      spec.in_channels = to_size(val);
    } else if (key == "out") {
      spec.out_channels = to_size(val);
    } else if (key == "pool") {
      spec.pool = to_size(val) != 0;
    } else if (key == "blocks") {
      for (const auto& b : split(val, ',')) {
        auto x = b.find('x');
        if (x == std::string::npos) spec.blocks.push_back({to_size(b), 3});
        else spec.blocks.push_back({to_size(b.substr(0, x)), to_size(b.substr(x + 1))});
      }
    } else {
      fail(ErrorKind::config, "unknown key '" + key + "' in network spec");
    }
  }
  spec.validate();
  return spec;
}

namespace {

// splitmix64: a small portable generator so initial weights do not depend on the standard library.
std::uint64_t next_u64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double next_unit(std::uint64_t& s) { return static_cast<double>(next_u64(s) >> 11) * 0x1.0p-53; }

}  // namespace

template <typename T>
typename ConvNet<T>::Conv ConvNet<T>::make_conv(std::size_t cin, std::size_t cout, std::size_t k, bool zero) {
  std::vector<std::size_t> wshape{cout, cin, k, k};
  if (spec_.dims == 3) wshape.insert(wshape.begin() + 2, k);
  Tensor<T> w(wshape);
  if (!zero) {
    std::size_t fan_in = w.size() / cout;
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w.values()) v = static_cast<T>((2.0 * next_unit(rng_state_) - 1.0) * bound);
  }
  return Conv{Parameter<T>(std::move(w)), Parameter<T>(Tensor<T>({cout}))};
}

template <typename T>
ConvNet<T>::ConvNet(ConvNetSpec spec, std::uint64_t seed) : spec_(std::move(spec)), rng_state_(seed) {
  spec_.validate();
  std::size_t c = spec_.blocks.front().channels;
  stem_ = make_conv(spec_.in_channels, c, spec_.blocks.front().kernel, false);
  for (const auto& b : spec_.blocks) {
    Block blk{make_conv(c, b.channels, b.kernel, false), make_conv(b.channels, b.channels, b.kernel, false), {}};
    if (b.channels != c) blk.proj = make_conv(c, b.channels, 1, false);
    blocks_.push_back(std::move(blk));
    c = b.channels;
  }
  head_ = make_conv(c, spec_.out_channels, spec_.blocks.back().kernel, true);
}

template <typename T>
Var ConvNet<T>::apply(Tape<T>& tape, Conv& c, Var x) {
  return tape.conv(x, tape.param(c.w), tape.param(c.b), spec_.dims);
}

template <typename T>
Var ConvNet<T>::forward(Tape<T>& tape, Var x) {
  const auto& shape = tape.value(x).shape();
  if (shape.size() != static_cast<std::size_t>(spec_.dims) + 2 || shape[1] != spec_.in_channels)
    fail(ErrorKind::invalid_argument,
         "network input " + shape_str(shape) + " does not match spec '" + spec_.str() + "'");
  Var stem = tape.relu(apply(tape, stem_, x));
  Var h = spec_.pool ? tape.avg_pool(stem, spec_.dims) : stem;
  for (auto& blk : blocks_) {
    Var inner = apply(tape, blk.c2, tape.relu(apply(tape, blk.c1, h)));
    Var skip = blk.proj ? apply(tape, *blk.proj, h) : h;
    h = tape.relu(tape.add(skip, inner));
  }
  if (spec_.pool) {
    h = tape.upsample(h, spec_.dims);
    if (tape.value(h).shape() == tape.value(stem).shape()) h = tape.add(h, stem);
  }
  return apply(tape, head_, h);
}

template <typename T>
Tensor<T> ConvNet<T>::predict(const Tensor<T>& x) const {
  // Same graph as forward(), evaluated eagerly so intermediate activations can be released.
  const auto& shape = x.shape();
  if (shape.size() != static_cast<std::size_t>(spec_.dims) + 2 || shape[1] != spec_.in_channels)
    fail(ErrorKind::invalid_argument,
         "network input " + shape_str(shape) + " does not match spec '" + spec_.str() + "'");
  const int d = spec_.dims;
  auto conv = [&](const Conv& c, const Tensor<T>& in) { return conv_forward(in, c.w.value, c.b.value, d); };
  auto relu_inplace = [](Tensor<T>& t) {
    for (auto& v : t.values()) v = v > T{} ? v : T{};
  };
  auto add_inplace = [](Tensor<T>& a, const Tensor<T>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  Tensor<T> stem = conv(stem_, x);
  relu_inplace(stem);
  Tensor<T> h = spec_.pool ? avg_pool2(stem, d) : stem;
  for (const auto& blk : blocks_) {
    Tensor<T> inner = conv(blk.c1, h);
    relu_inplace(inner);
    inner = conv(blk.c2, inner);
    if (blk.proj) add_inplace(inner, conv(*blk.proj, h));
    else add_inplace(inner, h);
    relu_inplace(inner);
    h = std::move(inner);
  }
  if (spec_.pool) {
    h = upsample2(h, d);
    if (h.shape() == stem.shape()) add_inplace(h, stem);
  }
  return conv(head_, h);
}

template <typename T>
std::vector<Parameter<T>*> ConvNet<T>::parameters() {
  std::vector<Parameter<T>*> out{&stem_.w, &stem_.b};
  for (auto& blk : blocks_) {
    for (Conv* c : {&blk.c1, &blk.c2}) {
      out.push_back(&c->w);
      out.push_back(&c->b);
    }
    if (blk.proj) {
      out.push_back(&blk.proj->w);
      out.push_back(&blk.proj->b);
    }
  }
  out.push_back(&head_.w);
  out.push_back(&head_.b);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ConvNet<T>::parameters() const {
  auto ps = const_cast<ConvNet*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <typename T>
void ConvNet<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t ConvNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template class ConvNet<float>;
template class ConvNet<double>;

template <typename T>
AdamState AdamState::for_parameters(const std::vector<Parameter<T>*>& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto* p : params) {
    s.m.emplace_back(p->value.size(), 0.0);
    s.v.emplace_back(p->value.size(), 0.0);
  }
  return s;
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState& state) {
  if (state.m.size() != params.size()) fail(ErrorKind::state, "adam: state was built for a different parameter list");
  const AdamConfig& c = state.config;
  ++state.step;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.value.size()) fail(ErrorKind::state, "adam: moment buffer does not match parameter");
    for (std::size_t i = 0; i < m.size(); ++i) {
      double g = static_cast<double>(p.grad[i]);
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      double update = c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - update);
    }
  }
}

template AdamState AdamState::for_parameters<float>(const std::vector<Parameter<float>*>&, AdamConfig);
template AdamState AdamState::for_parameters<double>(const std::vector<Parameter<double>*>&, AdamConfig);
template void adam_step<float>(const std::vector<Parameter<float>*>&, AdamState&);
template void adam_step<double>(const std::vector<Parameter<double>*>&, AdamState&);

namespace {

constexpr char kMagic[8] = {'D', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

CheckpointInfo read_header(ByteReader& r, const std::filesystem::path& path) {
  char magic[8];
  r.raw(magic, 8);
  if (!std::equal(magic, magic + 8, kMagic)) fail(ErrorKind::io, path.string() + ": not a checkpoint file");
  CheckpointInfo info;
  info.spec = ConvNetSpec::parse(r.str());
  info.step = r.u64();
  return info;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ConvNet<float>& net, std::uint64_t step,
                      const AdamState* adam) {
  ByteWriter w;
  w.raw(kMagic, 8);
  w.str(net.spec().str());
  w.u64(step);
  auto params = net.parameters();
  w.u64(net.parameter_count());
  for (const auto* p : params)
    for (float v : p->value.values()) w.f32(v);
  w.u32(adam ? 1 : 0);
  if (adam) {
    w.f64(adam->config.lr);
    w.f64(adam->config.beta1);
    w.f64(adam->config.beta2);
    w.f64(adam->config.eps);
    w.u64(adam->step);
    for (const auto* buf : {&adam->m, &adam->v})
      for (const auto& b : *buf)
        for (double v : b) w.f64(v);
  }
  w.save(path);
}

CheckpointInfo read_checkpoint(const std::filesystem::path& path, ConvNet<float>& net, AdamState* adam) {
  ByteReader r = ByteReader::load(path);
  CheckpointInfo info = read_header(r, path);
  if (!(info.spec == net.spec()))
    fail(ErrorKind::config, path.string() + ": checkpoint network '" + info.spec.str() + "' does not match '" +
                                net.spec().str() + "'");
  if (r.u64() != net.parameter_count()) fail(ErrorKind::io, path.string() + ": parameter count mismatch");
  auto params = net.parameters();
  for (auto* p : params)
    for (auto& v : p->value.values()) v = r.f32();
  info.has_adam = r.u32() != 0;
  if (info.has_adam) {
    AdamState s = AdamState::for_parameters(params, {});
    s.config.lr = r.f64();
    s.config.beta1 = r.f64();
    s.config.beta2 = r.f64();
    s.config.eps = r.f64();
    s.step = r.u64();
    for (auto* buf : {&s.m, &s.v})
      for (auto& b : *buf)
        for (double& v : b) v = r.f64();
    if (adam) *adam = std::move(s);
  }
  r.expect_end();
  return info;
}

CheckpointInfo peek_checkpoint(const std::filesystem::path& path) {
  ByteReader r = ByteReader::load(path);
  return read_header(r, path);
}

}  // namespace dts::nn
