#include "dts/suppression.hpp"

#include <cmath>
#include <random>

#include "dts/parallel.hpp"

namespace dts {

using nn::Tensor;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::m2d:
      return "m2d";
    case Stage::m3d:
      return "m3d";
    case Stage::f:
      return "f";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "m2d") return Stage::m2d;
  if (s == "m3d") return Stage::m3d;
  if (s == "f") return Stage::f;
  fail(ErrorKind::invalid_argument, "unknown stage '" + s + "' (expected m2d, m3d or f)");
}

void TripleNetSpec::validate() const {
  m2d.validate();
  m3d.validate();
  f.validate();
  if (m2d.dims != 2 || m2d.in_channels != 1 || m2d.out_channels != 1)
    fail(ErrorKind::config, "m2d must map 1-channel 2D images to 1-channel 2D images");
  if (m3d.dims != 3 || m3d.in_channels != 1 || m3d.out_channels != 1)
    fail(ErrorKind::config, "m3d must map 1-channel volumes to 1-channel volumes");
  if (f.dims != 3 || f.in_channels != 2 || f.out_channels != 1)
    fail(ErrorKind::config, "f must map 2-channel volumes to 1-channel volumes");
}

namespace {

// Distinct, fixed streams for the three models derived from one run seed.
std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t k) { return seed * 0x9e3779b97f4a7c15ULL + k * 0x632be59bd9b4e019ULL; }

}  // namespace

TripleNet::TripleNet(const TripleNetSpec& spec, std::uint64_t seed, ConeBeamGeometry geom, SimulationConfig sim,
                     NormStats s)
    : m2d((spec.validate(), spec.m2d), sub_seed(seed, 1)),
      m3d(spec.m3d, sub_seed(seed, 2)),
      f(spec.f, sub_seed(seed, 3)),
      geometry(std::move(geom)),
      simulation(std::move(sim)),
      stats(s) {}

TripleNet::TripleNet(const TripleNetSpec& spec, std::uint64_t seed, const DatasetSplit& split)
    : TripleNet(spec, seed, split.geometry, split.simulation, split.stats) {}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorKind::config, "learning rate must be >= 0");
  if (batch == 0) fail(ErrorKind::config, "batch size must be positive");
  for (auto p : patch)
    if (p == 0) fail(ErrorKind::config, "patch extent must be positive");
}

Tensor<float> projection_input(const Projection2D& p, const NormStats& s) {
  Tensor<float> t({1, 1, p.rows, p.cols});
  for (std::size_t i = 0; i < p.data.size(); ++i) t[i] = s.norm_proj(p.data[i]);
  return t;
}

Tensor<float> projection_target(const Projection2D& d, const NormStats& s) {
  Tensor<float> t({1, 1, d.rows, d.cols});
  for (std::size_t i = 0; i < d.data.size(); ++i) t[i] = static_cast<float>(d.data[i] / s.proj_delta_scale);
  return t;
}

Tensor<float> volume_input(const Volume3& v, const NormStats& s) {
  const auto& sh = v.shape();
  Tensor<float> t({1, 1, sh[0], sh[1], sh[2]});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = s.norm_vol(v[i]);
  return t;
}

Tensor<float> volume_target(const Volume3& d, const NormStats& s) {
  const auto& sh = d.shape();
  Tensor<float> t({1, 1, sh[0], sh[1], sh[2]});
  for (std::size_t i = 0; i < d.size(); ++i) t[i] = static_cast<float>(d[i] / s.vol_delta_scale);
  return t;
}

namespace {

void check_view(const TripleNet& net, const Projection2D& view) {
  if (view.rows != net.geometry.detector_rows || view.cols != net.geometry.detector_cols)
    fail(ErrorKind::geometry_mismatch, "projection size does not match the detector");
}

void check_volume(const TripleNet& net, const Volume3& v) {
  if (v.shape() != net.geometry.volume_shape)
    fail(ErrorKind::geometry_mismatch, "volume shape does not match the geometry");
}

Volume3 volume_from(const Tensor<float>& t, const ConeBeamGeometry& g, double scale) {
  Volume3 v(g.volume_shape, g.voxel_spacing());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(t[i] * scale);
  return v;
}

}  // namespace

Projection2D m2d_predict(const TripleNet& net, const Projection2D& view) {
  check_view(net, view);
  Tensor<float> y = net.m2d.predict(projection_input(view, net.stats));
  Projection2D out(view.rows, view.cols, view.pixel_mm, view.theta_deg);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(y[i] * net.stats.proj_delta_scale);
  return out;
}

ProjectionSet m2d_predict_all(const TripleNet& net, const ProjectionSet& views, int threads) {
  views.check_against(net.geometry);
  ProjectionSet out;
  out.geometry = views.geometry;
  out.projections.resize(views.projections.size());
  parallel_for(views.projections.size(), threads <= 0 ? default_threads() : threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t v = b; v < e; ++v) out.projections[v] = m2d_predict(net, views.projections[v]);
  });
  return out;
}

Volume3 m3d_predict(const TripleNet& net, const Volume3& v_alpha) {
  check_volume(net, v_alpha);
  return volume_from(net.m3d.predict(volume_input(v_alpha, net.stats)), net.geometry, net.stats.vol_delta_scale);
}

Tensor<float> aggregate_channels(const TripleNet& net, const ProjectionSet& predicted_deltas,
                                 const Volume3& predicted_volume_delta, int threads) {
  check_volume(net, predicted_volume_delta);
  BackprojectOptions bp = net.simulation.backproject;
  bp.threads = threads;
  Volume3 from_2d = fbp(predicted_deltas, net.geometry, net.simulation.filter, bp);
  const auto& sh = net.geometry.volume_shape;
  const std::size_t n = from_2d.size();
  Tensor<float> t({1, 2, sh[0], sh[1], sh[2]});
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = static_cast<float>(from_2d[i] / net.stats.vol_delta_scale);
    t[n + i] = static_cast<float>(predicted_volume_delta[i] / net.stats.vol_delta_scale);
  }
  return t;
}

Tensor<float> aggregate_inputs(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha,
                               int threads) {
  return aggregate_channels(net, m2d_predict_all(net, projections, threads), m3d_predict(net, v_alpha), threads);
}

Volume3 aggregate_predict(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha, int threads) {
  return volume_from(net.f.predict(aggregate_inputs(net, projections, v_alpha, threads)), net.geometry,
                     net.stats.vol_delta_scale);
}

Volume3 suppress(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha, int threads) {
  return subtract(v_alpha, aggregate_predict(net, projections, v_alpha, threads));
}

Volume3 suppress_2d_only(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha,
                         int threads) {
  check_volume(net, v_alpha);
  BackprojectOptions bp = net.simulation.backproject;
  bp.threads = threads;
  return subtract(v_alpha, fbp(m2d_predict_all(net, projections, threads), net.geometry, net.simulation.filter, bp));
}

Volume3 suppress_3d_only(const TripleNet& net, const Volume3& v_alpha) {
  return subtract(v_alpha, m3d_predict(net, v_alpha));
}

namespace {

double l1_mean(const Tensor<float>& pred, const Tensor<float>& target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(static_cast<double>(pred[i]) - target[i]);
  return acc / static_cast<double>(pred.size());
}

std::vector<Tensor<float>> f_inputs_for(const TripleNet& net, const std::vector<Case>& cases, int threads) {
  std::vector<Tensor<float>> out;
  out.reserve(cases.size());
  for (const auto& c : cases) out.push_back(aggregate_inputs(net, c.proj_full, c.vol_full, threads));
  return out;
}

// Mean over cases of λ · mean|net(x) − y| on whole volumes.
double volume_stage_loss(const nn::ConvNet<float>& model, const std::vector<Tensor<float>>& inputs,
                         const std::vector<Case>& cases, const NormStats& stats, double lambda) {
  double acc = 0.0;
  for (std::size_t i = 0; i < cases.size(); ++i)
    acc += l1_mean(model.predict(inputs[i]), volume_target(cases[i].vol_delta, stats));
  return lambda * acc / static_cast<double>(cases.size());
}

double m2d_loss(const TripleNet& net, const std::vector<Case>& cases, int threads) {
  std::vector<std::pair<std::size_t, std::size_t>> views;
  for (std::size_t c = 0; c < cases.size(); ++c)
    for (std::size_t v = 0; v < cases[c].proj_full.projections.size(); ++v) views.emplace_back(c, v);
  std::vector<double> per_view(views.size());
  parallel_for(views.size(), threads <= 0 ? default_threads() : threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      const auto& cs = cases[views[k].first];
      std::size_t v = views[k].second;
      per_view[k] = l1_mean(net.m2d.predict(projection_input(cs.proj_full.projections[v], net.stats)),
                            projection_target(cs.proj_delta.projections[v], net.stats));
    }
  });
  double acc = 0.0;
  for (double x : per_view) acc += x;
  return net.weights.l2d * acc / static_cast<double>(views.size());
}

std::vector<Tensor<float>> m3d_inputs_for(const TripleNet& net, const std::vector<Case>& cases) {
  std::vector<Tensor<float>> out;
  for (const auto& c : cases) out.push_back(volume_input(c.vol_full, net.stats));
  return out;
}

void require_submodels(const TripleNet& net) {
  if (!net.m2d_ready || !net.m3d_ready)
    fail(ErrorKind::state, std::string("stage f needs trained m2d and m3d models (missing ") +
                               (!net.m2d_ready ? "m2d" : "m3d") + " checkpoint)");
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return n <= 1 ? 0 : static_cast<std::size_t>(rng() % n); }

// Copies a spatial crop of every channel of src (1, C, X, Y, Z) into batch slot b of dst (B, C, px, py, pz).
void crop_into(const Tensor<float>& src, std::array<std::size_t, 3> off, Tensor<float>& dst, std::size_t b) {
  const auto& s = src.shape();
  const auto& d = dst.shape();
  const std::size_t C = s[1];
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < d[2]; ++i)
      for (std::size_t j = 0; j < d[3]; ++j) {
        const float* from = src.data() + ((c * s[2] + off[0] + i) * s[3] + off[1] + j) * s[4] + off[2];
        float* to = dst.data() + (((b * C + c) * d[2] + i) * d[3] + j) * d[4];
        std::copy(from, from + d[4], to);
      }
}

}  // namespace

double stage_loss(const TripleNet& net, const DatasetSplit& split, Stage stage, int threads) {
  switch (stage) {
    case Stage::m2d:
      return m2d_loss(net, split.train, threads);
    case Stage::m3d:
      return volume_stage_loss(net.m3d, m3d_inputs_for(net, split.train), split.train, net.stats, net.weights.l3d);
    case Stage::f:
      return volume_stage_loss(net.f, f_inputs_for(net, split.train, threads), split.train, net.stats, net.weights.lm);
  }
  return 0.0;
}

TrainResult train_stage(TripleNet& net, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) fail(ErrorKind::invalid_argument, "train_stage: empty training split");
  if (!(split.geometry == net.geometry)) fail(ErrorKind::geometry_mismatch, "train_stage: dataset geometry differs");
  if (cfg.stage == Stage::f) require_submodels(net);

  TrainResult res;
  res.stage = cfg.stage;
  std::mt19937_64 rng(cfg.seed);
  const auto& cases = split.train;

  if (cfg.stage == Stage::m2d) {
    std::vector<std::pair<std::size_t, std::size_t>> views;
    for (std::size_t c = 0; c < cases.size(); ++c)
      for (std::size_t v = 0; v < cases[c].proj_full.projections.size(); ++v) views.emplace_back(c, v);
    const std::size_t R = net.geometry.detector_rows, C = net.geometry.detector_cols;
    auto state = nn::AdamState::for_parameters(net.m2d.parameters(), {cfg.lr});
    res.initial_loss = m2d_loss(net, cases, cfg.threads);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      Tensor<float> x({cfg.batch, 1, R, C}), y({cfg.batch, 1, R, C});
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        auto [c, v] = views[pick(rng, views.size())];
        auto xi = projection_input(cases[c].proj_full.projections[v], net.stats);
        auto yi = projection_target(cases[c].proj_delta.projections[v], net.stats);
        std::copy(xi.values().begin(), xi.values().end(), x.data() + b * R * C);
        std::copy(yi.values().begin(), yi.values().end(), y.data() + b * R * C);
      }
      nn::Tape<float> tape;
      net.m2d.zero_grad();
      nn::Var loss = tape.l1_loss(net.m2d.forward(tape, tape.input(std::move(x))), std::move(y),
                                  static_cast<float>(net.weights.l2d));
      res.step_loss.push_back(tape.scalar(loss));
      tape.backward(loss);
      nn::adam_step(net.m2d.parameters(), state);
    }
    res.final_loss = m2d_loss(net, cases, cfg.threads);
    net.m2d_ready = true;
    return res;
  }

  const bool is_f = cfg.stage == Stage::f;
  nn::ConvNet<float>& model = is_f ? net.f : net.m3d;
  const double lambda = is_f ? net.weights.lm : net.weights.l3d;
  std::vector<Tensor<float>> inputs = is_f ? f_inputs_for(net, cases, cfg.threads) : m3d_inputs_for(net, cases);
  std::vector<Tensor<float>> targets;
  for (const auto& c : cases) targets.push_back(volume_target(c.vol_delta, net.stats));

  const auto& shape = net.geometry.volume_shape;
  std::array<std::size_t, 3> patch;
  for (int a = 0; a < 3; ++a) patch[a] = std::min(cfg.patch[a], shape[a]);
  if (model.spec().pool)
    for (auto p : patch)
      if (p % 2) fail(ErrorKind::config, "patch extents must be even when the network pools");
  const std::size_t cin = model.spec().in_channels;

  auto state = nn::AdamState::for_parameters(model.parameters(), {cfg.lr});
  res.initial_loss = volume_stage_loss(model, inputs, cases, net.stats, lambda);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Tensor<float> x({cfg.batch, cin, patch[0], patch[1], patch[2]});
    Tensor<float> y({cfg.batch, 1, patch[0], patch[1], patch[2]});
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      std::size_t c = pick(rng, cases.size());
      std::array<std::size_t, 3> off;
      for (int a = 0; a < 3; ++a) off[a] = pick(rng, shape[a] - patch[a] + 1);
      crop_into(inputs[c], off, x, b);
      crop_into(targets[c], off, y, b);
    }
    nn::Tape<float> tape;
    model.zero_grad();
    nn::Var loss = tape.l1_loss(model.forward(tape, tape.input(std::move(x))), std::move(y), static_cast<float>(lambda));
    res.step_loss.push_back(tape.scalar(loss));
    tape.backward(loss);
    nn::adam_step(model.parameters(), state);
  }
  res.final_loss = volume_stage_loss(model, inputs, cases, net.stats, lambda);
  if (!is_f) net.m3d_ready = true;
  return res;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Stage stage) {
  return dir / (std::string(stage_name(stage)) + ".ckpt");
}

namespace {

nn::ConvNet<float>& model_of(TripleNet& net, Stage s) {
  return s == Stage::m2d ? net.m2d : (s == Stage::m3d ? net.m3d : net.f);
}

}  // namespace

void save_stage(const std::filesystem::path& dir, const TripleNet& net, Stage stage, std::uint64_t steps) {
  std::filesystem::create_directories(dir);
  nn::write_checkpoint(checkpoint_path(dir, stage), model_of(const_cast<TripleNet&>(net), stage), steps);
}

void load_stage(const std::filesystem::path& dir, TripleNet& net, Stage stage) {
  auto path = checkpoint_path(dir, stage);
  if (!std::filesystem::exists(path))
    fail(ErrorKind::missing_checkpoint, "missing checkpoint: " + path.string() + " (run train --stage " +
                                            stage_name(stage) + " first)");
  nn::read_checkpoint(path, model_of(net, stage));
  if (stage == Stage::m2d) net.m2d_ready = true;
  if (stage == Stage::m3d) net.m3d_ready = true;
}

}  // namespace dts
