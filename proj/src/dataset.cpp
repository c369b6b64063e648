#include "dts/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dts/parallel.hpp"

namespace dts {

namespace {

double range_of(const Volume3& v) {
  auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  return static_cast<double>(*hi) - static_cast<double>(*lo);
}

}  // namespace

Case simulate_case(const Phantom& phantom, const ConeBeamGeometry& geom, const SimulationConfig& sim, int threads) {
  geom.validate();
  sim.spectrum.validate();
  if (phantom.full.shape() != geom.volume_shape)
    fail(ErrorKind::geometry_mismatch, "phantom shape does not match the geometry volume");

  ProjectorOptions popts = sim.projector;
  popts.threads = threads;
  BackprojectOptions bopts = sim.backproject;
  bopts.threads = threads;

  Case c;
  c.phantom_seed = phantom.seed;
  c.proj_full = project_all(volumes_for_spectrum(phantom, sim.spectrum, false), geom, sim.spectrum, popts);
  c.proj_ribfree = project_all(volumes_for_spectrum(phantom, sim.spectrum, true), geom, sim.spectrum, popts);
  c.proj_delta = subtract(c.proj_full, c.proj_ribfree);

  c.vol_full = fbp(c.proj_full, geom, sim.filter, bopts);
  c.vol_ribfree = fbp(c.proj_ribfree, geom, sim.filter, bopts);
  c.vol_delta = subtract(c.vol_full, c.vol_ribfree);

  Volume3 direct = fbp(c.proj_delta, geom, sim.filter, bopts);
  double worst = 0.0;
  for (std::size_t n = 0; n < direct.size(); ++n)
    worst = std::max(worst, std::abs(static_cast<double>(direct[n]) - static_cast<double>(c.vol_delta[n])));
  c.linearity_max_abs = worst;
  c.vol_range = range_of(c.vol_full);
  if (worst > 1e-4 * c.vol_range)
    fail(ErrorKind::state, "seed " + std::to_string(phantom.seed) + ": fbp(I_delta) deviates from V_full − V_ribfree by " +
                               format_double(worst));

  c.lung_mask = phantom.lung_mask;
  c.lesion_mask = phantom.lesion_mask;
  c.rib_mask = phantom.rib_mask;
  c.truth_full = phantom.full;
  c.truth_ribfree = phantom.rib_free;
  return c;
}

NormStats compute_stats(const std::vector<Case>& train) {
  if (train.empty()) fail(ErrorKind::invalid_argument, "compute_stats: no training cases");
  double ps = 0.0, pss = 0.0, vs = 0.0, vss = 0.0, pd = 0.0, vd = 0.0;
  double pmin = INFINITY, pmax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
  std::size_t pn = 0, vn = 0;
  for (const auto& c : train) {
    for (const auto& p : c.proj_full.projections)
      for (float v : p.data) {
        ps += v;
        pss += static_cast<double>(v) * v;
        ++pn;
        pmin = std::min(pmin, static_cast<double>(v));
        pmax = std::max(pmax, static_cast<double>(v));
      }
    for (const auto& p : c.proj_delta.projections)
      for (float v : p.data) pd = std::max(pd, std::abs(static_cast<double>(v)));
    for (float v : c.vol_full.data()) {
      vs += v;
      vss += static_cast<double>(v) * v;
      ++vn;
      vmin = std::min(vmin, static_cast<double>(v));
      vmax = std::max(vmax, static_cast<double>(v));
    }
    for (float v : c.vol_delta.data()) vd = std::max(vd, std::abs(static_cast<double>(v)));
  }
  auto spread = [](double sum, double sq, std::size_t n) {
    double m = sum / static_cast<double>(n);
    double var = sq / static_cast<double>(n) - m * m;
    return var > 0.0 ? std::sqrt(var) : 1.0;
  };
  NormStats s;
  s.proj_mean = ps / static_cast<double>(pn);
  s.proj_std = spread(ps, pss, pn);
  s.vol_mean = vs / static_cast<double>(vn);
  s.vol_std = spread(vs, vss, vn);
  s.proj_min = pmin;
  s.proj_max = pmax;
  s.vol_min = vmin;
  s.vol_max = vmax;
  s.proj_delta_scale = pd > 0.0 ? pd : 1.0;
  s.vol_delta_scale = vd > 0.0 ? vd : 1.0;
  return s;
}

DatasetSplit build_dataset(std::size_t n_train, std::size_t n_test, std::uint64_t base_seed,
                           const ConeBeamGeometry& geom, const PhantomConfig& phantom, const SimulationConfig& sim,
                           int threads) {
  if (n_train < 1 || n_test < 1) fail(ErrorKind::invalid_argument, "build_dataset: counts must be at least 1");
  PhantomConfig pcfg = phantom;
  pcfg.shape = geom.volume_shape;
  pcfg.fov_mm = geom.fov_mm;

  const std::size_t n = n_train + n_test;
  std::vector<Case> cases(n);
  if (threads <= 0) threads = default_threads();
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      std::uint64_t seed = base_seed + i;
      try {
        cases[i] = simulate_case(generate_phantom(seed, pcfg), geom, sim, 1);
      } catch (const Error& err) {
        std::string msg = err.what();
        if (msg.rfind("seed ", 0) != 0) msg = "seed " + std::to_string(seed) + ": " + msg;
        fail(err.kind(), msg);
      }
    }
  });

  DatasetSplit split;
  split.geometry = geom;
  split.simulation = sim;
  split.train.assign(std::make_move_iterator(cases.begin()), std::make_move_iterator(cases.begin() + n_train));
  split.test.assign(std::make_move_iterator(cases.begin() + n_train), std::make_move_iterator(cases.end()));
  split.stats = compute_stats(split.train);
  return split;
}

Mask3 rib_shadow_region(const Mask3& rib_mask, std::size_t radius) {
  const auto& s = rib_mask.shape();
  std::vector<std::uint8_t> column(s[0] * s[2], 0);
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k)
        if (rib_mask.at(i, j, k)) column[i * s[2] + k] = 1;

  const long r = static_cast<long>(radius);
  std::vector<std::uint8_t> dilated(column.size(), 0);
  for (long i = 0; i < static_cast<long>(s[0]); ++i)
    for (long k = 0; k < static_cast<long>(s[2]); ++k) {
      bool hit = false;
      for (long di = -r; di <= r && !hit; ++di)
        for (long dk = -r; dk <= r && !hit; ++dk) {
          if (di * di + dk * dk > r * r) continue;
          long ii = i + di, kk = k + dk;
          if (ii < 0 || kk < 0 || ii >= static_cast<long>(s[0]) || kk >= static_cast<long>(s[2])) continue;
          hit = column[static_cast<std::size_t>(ii) * s[2] + static_cast<std::size_t>(kk)] != 0;
        }
      dilated[static_cast<std::size_t>(i) * s[2] + static_cast<std::size_t>(k)] = hit ? 1 : 0;
    }

  Mask3 out(s, rib_mask.spacing_mm());
  for (std::size_t i = 0; i < s[0]; ++i)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k) out.at(i, j, k) = dilated[i * s[2] + k];
  return out;
}

double energy_fraction(const Volume3& v, const Mask3& mask) {
  require_same_layout(v, mask, "energy_fraction");
  double inside = 0.0, total = 0.0;
  for (std::size_t n = 0; n < v.size(); ++n) {
    double e = static_cast<double>(v[n]) * static_cast<double>(v[n]);
    total += e;
    if (mask[n]) inside += e;
  }
  return total > 0.0 ? inside / total : 0.0;
}

std::filesystem::path case_dir(const std::filesystem::path& root, std::uint64_t seed) {
  return root / ("case_" + std::to_string(seed));
}

void write_simulation_config(KeyValueFile& kv, const std::string& sim_section, const std::string& recon_section,
                             const SimulationConfig& sim) {
  std::string spec;
  for (std::size_t b = 0; b < sim.spectrum.energy_bins_kev.size(); ++b) {
    if (b) spec += ',';
    spec += format_double(sim.spectrum.energy_bins_kev[b]);
    if (sim.spectrum.energy_bins_kev.size() > 1) spec += ':' + format_double(sim.spectrum.weights[b]);
  }
  kv.set(sim_section, "spectrum", spec);
  kv.set(sim_section, "step_mm", format_double(sim.projector.step_mm));
  kv.set(sim_section, "supersample", std::to_string(sim.projector.supersample));
  write_filter_spec(kv, recon_section, sim.filter, sim.backproject);
}

SimulationConfig read_simulation_config(const KeyValueFile& kv, const std::string& sim_section,
                                        const std::string& recon_section) {
  SimulationConfig sim;
  kv.reject_unknown(sim_section, {"spectrum", "step_mm", "supersample"});
  if (auto s = kv.get(sim_section, "spectrum")) {
    Spectrum sp;
    for (const auto& item : split(*s, ',')) {
      auto parts = split(item, ':');
      try {
        if (parts.size() == 1) {
          sp.energy_bins_kev.push_back(std::stod(parts[0]));
          sp.weights.push_back(1.0);
        } else if (parts.size() == 2) {
          sp.energy_bins_kev.push_back(std::stod(parts[0]));
          sp.weights.push_back(std::stod(parts[1]));
        } else {
          throw std::invalid_argument(item);
        }
      } catch (const std::exception&) {
        fail(ErrorKind::config, "[" + sim_section + "] bad spectrum entry '" + item + "'");
      }
    }
    if (sp.energy_bins_kev.size() == 1) sp.weights = {1.0};
    try {
      sp.validate();
    } catch (const Error& e) {
      fail(ErrorKind::config, "[" + sim_section + "] " + e.what());
    }
    sim.spectrum = sp;
  }
  if (kv.has(sim_section, "step_mm")) sim.projector.step_mm = kv.get_double(sim_section, "step_mm");
  if (kv.has(sim_section, "supersample")) {
    long long n = kv.get_int(sim_section, "supersample");
    if (n < 1 || n > 8) fail(ErrorKind::config, "[" + sim_section + "] supersample must be in 1..8");
    sim.projector.supersample = static_cast<int>(n);
  }
  read_filter_spec(kv, recon_section, sim.filter, sim.backproject);
  return sim;
}

void write_stats(KeyValueFile& kv, const std::string& section, const NormStats& s) {
  kv.set(section, "proj_mean", format_double(s.proj_mean));
  kv.set(section, "proj_std", format_double(s.proj_std));
  kv.set(section, "vol_mean", format_double(s.vol_mean));
  kv.set(section, "vol_std", format_double(s.vol_std));
  kv.set(section, "proj_min", format_double(s.proj_min));
  kv.set(section, "proj_max", format_double(s.proj_max));
  kv.set(section, "vol_min", format_double(s.vol_min));
  kv.set(section, "vol_max", format_double(s.vol_max));
  kv.set(section, "proj_delta_scale", format_double(s.proj_delta_scale));
  kv.set(section, "vol_delta_scale", format_double(s.vol_delta_scale));
}

NormStats read_stats(const KeyValueFile& kv, const std::string& section) {
  kv.reject_unknown(section, {"proj_mean", "proj_std", "vol_mean", "vol_std", "proj_min", "proj_max", "vol_min", "vol_max",
                              "proj_delta_scale", "vol_delta_scale"});
  NormStats s;
  s.proj_mean = kv.get_double(section, "proj_mean");
  s.proj_std = kv.get_double(section, "proj_std");
  s.vol_mean = kv.get_double(section, "vol_mean");
  s.vol_std = kv.get_double(section, "vol_std");
  s.proj_min = kv.get_double(section, "proj_min");
  s.proj_max = kv.get_double(section, "proj_max");
  s.vol_min = kv.get_double(section, "vol_min");
  s.vol_max = kv.get_double(section, "vol_max");
  s.proj_delta_scale = kv.get_double(section, "proj_delta_scale");
  s.vol_delta_scale = kv.get_double(section, "vol_delta_scale");
  if (!(s.proj_std > 0) || !(s.vol_std > 0) || !(s.proj_delta_scale > 0) || !(s.vol_delta_scale > 0))
    fail(ErrorKind::config, "[" + section + "] inconsistent normalisation statistics");
  return s;
}

void write_case(const std::filesystem::path& root, const Case& c, const ConeBeamGeometry& geom) {
  auto dir = case_dir(root, c.phantom_seed);
  std::filesystem::create_directories(dir);
  write_projection_set(dir / "proj_full.prj", c.proj_full);
  write_projection_set(dir / "proj_ribfree.prj", c.proj_ribfree);
  write_projection_set(dir / "proj_delta.prj", c.proj_delta);
  write_volume(dir / "vol_full.vol", c.vol_full);
  write_volume(dir / "vol_ribfree.vol", c.vol_ribfree);
  write_volume(dir / "vol_delta.vol", c.vol_delta);
  write_volume(dir / "truth_full.vol", c.truth_full);
  write_volume(dir / "truth_ribfree.vol", c.truth_ribfree);
  write_mask(dir / "lung_mask.msk", c.lung_mask);
  write_mask(dir / "lesion_mask.msk", c.lesion_mask);
  write_mask(dir / "rib_mask.msk", c.rib_mask);
  KeyValueFile kv;
  kv.set("case", "seed", std::to_string(c.phantom_seed));
  kv.set("case", "linearity_max_abs", format_double(c.linearity_max_abs));
  kv.set("case", "vol_range", format_double(c.vol_range));
  write_geometry(kv, "geometry", geom);
  kv.save(dir / "manifest.txt");
}

Case read_case(const std::filesystem::path& root, std::uint64_t seed, const ConeBeamGeometry& geom) {
  auto dir = case_dir(root, seed);
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::io, dir.string() + ": case directory not found");
  auto kv = KeyValueFile::load(dir / "manifest.txt");
  if (!(read_geometry(kv, "geometry") == geom))
    fail(ErrorKind::geometry_mismatch, dir.string() + ": case was simulated with a different geometry");
  Case c;
  c.phantom_seed = static_cast<std::uint64_t>(kv.get_int("case", "seed"));
  if (c.phantom_seed != seed) fail(ErrorKind::io, dir.string() + ": manifest seed does not match directory");
  c.linearity_max_abs = kv.get_double("case", "linearity_max_abs");
  c.vol_range = kv.get_double("case", "vol_range");
  c.proj_full = read_projection_set(dir / "proj_full.prj", geom);
  c.proj_ribfree = read_projection_set(dir / "proj_ribfree.prj", geom);
  c.proj_delta = read_projection_set(dir / "proj_delta.prj", geom);
  c.vol_full = read_volume(dir / "vol_full.vol");
  c.vol_ribfree = read_volume(dir / "vol_ribfree.vol");
  c.vol_delta = read_volume(dir / "vol_delta.vol");
  c.truth_full = read_volume(dir / "truth_full.vol");
  c.truth_ribfree = read_volume(dir / "truth_ribfree.vol");
  c.lung_mask = read_mask(dir / "lung_mask.msk");
  c.lesion_mask = read_mask(dir / "lesion_mask.msk");
  c.rib_mask = read_mask(dir / "rib_mask.msk");
  for (const Volume3* v : {&c.vol_full, &c.vol_ribfree, &c.vol_delta, &c.truth_full, &c.truth_ribfree})
    if (v->shape() != geom.volume_shape || v->spacing_mm() != geom.voxel_spacing())
      fail(ErrorKind::geometry_mismatch, dir.string() + ": volume layout does not match the geometry");
  for (const Mask3* m : {&c.lung_mask, &c.lesion_mask, &c.rib_mask})
    if (m->shape() != geom.volume_shape) fail(ErrorKind::geometry_mismatch, dir.string() + ": mask layout mismatch");
  return c;
}

void write_dataset(const std::filesystem::path& root, const DatasetSplit& split) {
  std::filesystem::create_directories(root);
  auto seeds = [](const std::vector<Case>& cs) {
    std::string s;
    for (const auto& c : cs) s += (s.empty() ? "" : ",") + std::to_string(c.phantom_seed);
    return s;
  };
  for (const auto* part : {&split.train, &split.test})
    for (const auto& c : *part) write_case(root, c, split.geometry);
  KeyValueFile kv;
  write_geometry(kv, "geometry", split.geometry);
  write_simulation_config(kv, "simulation", "recon", split.simulation);
  kv.set("dataset", "train_seeds", seeds(split.train));
  kv.set("dataset", "test_seeds", seeds(split.test));
  write_stats(kv, "stats", split.stats);
  kv.save(root / "dataset.txt");
}

DatasetSplit read_dataset(const std::filesystem::path& root) {
  auto path = root / "dataset.txt";
  if (!std::filesystem::exists(path)) fail(ErrorKind::io, path.string() + ": dataset manifest not found");
  auto kv = KeyValueFile::load(path);
  DatasetSplit split;
  split.geometry = read_geometry(kv, "geometry");
  split.simulation = read_simulation_config(kv, "simulation", "recon");
  split.stats = read_stats(kv, "stats");
  kv.reject_unknown("dataset", {"train_seeds", "test_seeds"});
  auto load = [&](const std::string& key, std::vector<Case>& out) {
    for (const auto& s : dts::split(kv.get_string("dataset", key), ',')) {
      std::uint64_t seed = 0;
      try {
        seed = std::stoull(s);
      } catch (const std::exception&) {
        fail(ErrorKind::config, path.string() + ": bad seed '" + s + "'");
      }
      out.push_back(read_case(root, seed, split.geometry));
    }
  };
  load("train_seeds", split.train);
  load("test_seeds", split.test);
  if (split.train.empty() || split.test.empty()) fail(ErrorKind::config, path.string() + ": empty split");
  return split;
}

}  // namespace dts
