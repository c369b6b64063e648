#include "dts/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dts {

MaterialTable MaterialTable::standard() {
  // Coefficients follow the energy dependence of water (soft tissue, lung) and ICRU cortical bone
  // mass-attenuation data, anchored at 60 keV to 0.020 / 0.004 / 0.048 mm^-1.
  MaterialTable t;
  t.energies_kev = {30.0, 40.0, 60.0, 80.0, 120.0};
  t.soft_tissue = {0.036484, 0.026061, 0.020, 0.017844, 0.015668};
  t.lung = {0.0072968, 0.0052122, 0.004, 0.0035687, 0.0031335};
  t.bone = {0.20295, 0.101474, 0.048, 0.033987, 0.025555};
  return t;
}

namespace {

double interp_loglog(const std::vector<double>& e, const std::vector<double>& mu, double energy) {
  if (energy < e.front() || energy > e.back())
    fail(ErrorKind::out_of_range, "attenuation_at_energy: " + format_double(energy) + " keV outside table range");
  auto it = std::lower_bound(e.begin(), e.end(), energy);
  std::size_t hi = static_cast<std::size_t>(it - e.begin());
  if (e[hi] == energy) return mu[hi];
  std::size_t lo = hi - 1;
  double t = (std::log(energy) - std::log(e[lo])) / (std::log(e[hi]) - std::log(e[lo]));
  return std::exp(std::log(mu[lo]) + t * (std::log(mu[hi]) - std::log(mu[lo])));
}

}  // namespace

double attenuation_at_energy(const MaterialTable& table, Material material, double energy_kev) {
  switch (material) {
    case Material::air:
      if (energy_kev < table.energies_kev.front() || energy_kev > table.energies_kev.back())
        fail(ErrorKind::out_of_range, "attenuation_at_energy: energy outside table range");
      return 0.0;
    case Material::soft_tissue:
      return interp_loglog(table.energies_kev, table.soft_tissue, energy_kev);
    case Material::lung:
      return interp_loglog(table.energies_kev, table.lung, energy_kev);
    case Material::bone:
      return interp_loglog(table.energies_kev, table.bone, energy_kev);
    case Material::lesion:
      return table.lesion_fraction * interp_loglog(table.energies_kev, table.soft_tissue, energy_kev);
  }
  fail(ErrorKind::invalid_argument, "attenuation_at_energy: unknown material");
}

Spectrum Spectrum::monoenergetic(double energy_kev) { return Spectrum{{energy_kev}, {1.0}}; }

void Spectrum::validate() const {
  require(!energy_bins_kev.empty(), "spectrum: at least one bin required");
  require(energy_bins_kev.size() == weights.size(), "spectrum: bins and weights differ in length");
  double sum = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "spectrum: weights must be nonnegative");
    sum += w;
  }
  require(std::abs(sum - 1.0) < 1e-9, "spectrum: weights must sum to 1");
}

std::array<double, 3> PhantomConfig::spacing_mm() const {
  return {fov_mm[0] / static_cast<double>(shape[0]), fov_mm[1] / static_cast<double>(shape[1]),
          fov_mm[2] / static_cast<double>(shape[2])};
}

void PhantomConfig::validate() const {
  for (int a = 0; a < 3; ++a) require(shape[a] > 0 && fov_mm[a] > 0.0, "phantom: shape and fov must be positive");
  require(rib_radius_mm > 0.0, "phantom: rib radius must be positive");
  require(min_lesions <= max_lesions, "phantom: min_lesions > max_lesions");
  require(lesion_radius_min_mm > 0.0 && lesion_radius_min_mm <= lesion_radius_max_mm,
          "phantom: invalid lesion radius range");
  require(size_jitter >= 0.0 && size_jitter < 0.2, "phantom: size_jitter must be in [0, 0.2)");
  require(lung_scale > 0.0 && lung_scale <= 1.2, "phantom: lung_scale must be in (0, 1.2]");
}

void write_phantom_config(KeyValueFile& kv, const std::string& section, const PhantomConfig& cfg) {
  kv.set(section, "energy_kev", format_double(cfg.energy_kev));
  kv.set(section, "n_rib_pairs", std::to_string(cfg.n_rib_pairs));
  kv.set(section, "rib_radius_mm", format_double(cfg.rib_radius_mm));
  kv.set(section, "min_lesions", std::to_string(cfg.min_lesions));
  kv.set(section, "max_lesions", std::to_string(cfg.max_lesions));
  kv.set(section, "lesion_radius_min_mm", format_double(cfg.lesion_radius_min_mm));
  kv.set(section, "lesion_radius_max_mm", format_double(cfg.lesion_radius_max_mm));
  kv.set(section, "size_jitter", format_double(cfg.size_jitter));
  kv.set(section, "lung_scale", format_double(cfg.lung_scale));
}

PhantomConfig read_phantom_config(const KeyValueFile& kv, const std::string& section, PhantomConfig cfg) {
  kv.reject_unknown(section, {"energy_kev", "n_rib_pairs", "rib_radius_mm", "min_lesions", "max_lesions",
                              "lesion_radius_min_mm", "lesion_radius_max_mm", "size_jitter", "lung_scale"});
  auto dbl = [&](const char* k, double& d) {
    if (kv.has(section, k)) d = kv.get_double(section, k);
  };
  auto cnt = [&](const char* k, std::size_t& d) {
    if (kv.has(section, k)) {
      long long v = kv.get_int(section, k);
      if (v < 0) fail(ErrorKind::config, std::string("[") + section + "] " + k + " must be >= 0");
      d = static_cast<std::size_t>(v);
    }
  };
  dbl("energy_kev", cfg.energy_kev);
  cnt("n_rib_pairs", cfg.n_rib_pairs);
  dbl("rib_radius_mm", cfg.rib_radius_mm);
  cnt("min_lesions", cfg.min_lesions);
  cnt("max_lesions", cfg.max_lesions);
  dbl("lesion_radius_min_mm", cfg.lesion_radius_min_mm);
  dbl("lesion_radius_max_mm", cfg.lesion_radius_max_mm);
  dbl("size_jitter", cfg.size_jitter);
  dbl("lung_scale", cfg.lung_scale);
  try {
    cfg.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("[") + section + "] " + e.what());
  }
  return cfg;
}

namespace {

struct Ellipsoid {
  double cx, cy, cz;
  double ax, ay, az;
  bool contains(double x, double y, double z) const {
    double u = (x - cx) / ax, v = (y - cy) / ay, w = (z - cz) / az;
    return u * u + v * v + w * w <= 1.0;
  }
};

struct Sphere {
  double cx, cy, cz, r;
  bool contains(double x, double y, double z) const {
    double dx = x - cx, dy = y - cy, dz = z - cz;
    return dx * dx + dy * dy + dz * dz <= r * r;
  }
};

// Rib pairs: tubes of radius r around arcs of the ellipse (z/a_z)^2 + (y/a_y)^2 = 1 in the
// transverse plane, sloping inferiorly towards the anterior side. Arcs skip |z| < gap so the
// spine and sternum regions stay free.
struct RibCage {
  double a_y, a_z, r, gap, drop;
  std::vector<double> levels_x;

  bool contains(double x, double y, double z) const {
    if (levels_x.empty()) return false;
    double t = std::atan2(y / a_y, z / a_z);
    double pz = a_z * std::cos(t);
    double py = a_y * std::sin(t);
    if (std::abs(pz) < gap) return false;
    double d2_plane = (y - py) * (y - py) + (z - pz) * (z - pz);
    if (d2_plane > r * r) return false;
    double slope = drop * (py / a_y);
    for (double lx : levels_x) {
      double dx = x - (lx + slope);
      if (d2_plane + dx * dx <= r * r) return true;
    }
    return false;
  }
};

}  // namespace

Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& config, const MaterialTable& table) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double amount) { return 1.0 + amount * (2.0 * unit(rng) - 1.0); };

  const double j = config.size_jitter;
  double body_scale = jitter(j);
  Ellipsoid thorax{0.0, 0.0, 0.0, 300.0, 135.0 * body_scale, 195.0 * body_scale};
  double ls = config.lung_scale;
  Ellipsoid lungs[2];
  for (int side = 0; side < 2; ++side) {
    double sgn = side == 0 ? -1.0 : 1.0;
    lungs[side] = {-10.0 + 6.0 * (2.0 * unit(rng) - 1.0), 5.0, sgn * 78.0 * body_scale,
                   150.0 * ls * jitter(j),          80.0 * ls * jitter(j) * body_scale,
                   60.0 * ls * jitter(j) * body_scale};
  }
  // Spine runs along x behind the lungs.
  const double spine_y = -100.0 * body_scale, spine_r = 22.0;

  RibCage ribs{118.0 * body_scale, 170.0 * body_scale, config.rib_radius_mm, 30.0, 25.0, {}};
  if (config.n_rib_pairs > 0) {
    double span = 300.0;
    double step = config.n_rib_pairs > 1 ? span / static_cast<double>(config.n_rib_pairs - 1) : 0.0;
    for (std::size_t r = 0; r < config.n_rib_pairs; ++r) {
      double base = config.n_rib_pairs > 1 ? -span / 2.0 + step * static_cast<double>(r) : 0.0;
      ribs.levels_x.push_back(base + 8.0 * (2.0 * unit(rng) - 1.0));
    }
  }

  std::uniform_int_distribution<std::size_t> lesion_count(config.min_lesions, config.max_lesions);
  std::size_t n_lesions = lesion_count(rng);
  struct Lesion {
    Sphere sphere;
    int lung;
  };
  std::vector<Lesion> lesions;
  for (std::size_t l = 0; l < n_lesions; ++l) {
    double r = config.lesion_radius_min_mm + (config.lesion_radius_max_mm - config.lesion_radius_min_mm) * unit(rng);
    int side = unit(rng) < 0.5 ? 0 : 1;
    const Ellipsoid& lung = lungs[side];
    double sx = lung.ax - r, sy = lung.ay - r, sz = lung.az - r;
    if (sx <= 0.0 || sy <= 0.0 || sz <= 0.0)
      fail(ErrorKind::lesion_placement, "lesion of radius " + format_double(r) + " mm does not fit in lung (seed " +
                                            std::to_string(seed) + ")");
    // Uniform point in the shrunken ellipsoid by rejection.
    double u, v, w;
    do {
      u = 2.0 * unit(rng) - 1.0;
      v = 2.0 * unit(rng) - 1.0;
      w = 2.0 * unit(rng) - 1.0;
    } while (u * u + v * v + w * w > 1.0);
    lesions.push_back({{lung.cx + u * sx, lung.cy + v * sy, lung.cz + w * sz, r}, side});
  }

  const auto spacing = config.spacing_mm();
  const auto& shape = config.shape;
  Phantom p;
  p.seed = seed;
  p.labels = Grid3<std::uint8_t>(shape, spacing, static_cast<std::uint8_t>(Material::air));
  p.rib_mask = Mask3(shape, spacing, 0);
  p.lung_mask = Mask3(shape, spacing, 0);
  p.lesion_mask = Mask3(shape, spacing, 0);

  for (std::size_t i = 0; i < shape[0]; ++i) {
    double x = (static_cast<double>(i) + 0.5) * spacing[0] - 0.5 * config.fov_mm[0];
    for (std::size_t jj = 0; jj < shape[1]; ++jj) {
      double y = (static_cast<double>(jj) + 0.5) * spacing[1] - 0.5 * config.fov_mm[1];
      for (std::size_t k = 0; k < shape[2]; ++k) {
        double z = (static_cast<double>(k) + 0.5) * spacing[2] - 0.5 * config.fov_mm[2];
        std::size_t n = p.labels.index(i, jj, k);
        if (!thorax.contains(x, y, z)) continue;
        Material m = Material::soft_tissue;
        int in_lung = lungs[0].contains(x, y, z) ? 0 : (lungs[1].contains(x, y, z) ? 1 : -1);
        bool in_spine = (y - spine_y) * (y - spine_y) + z * z <= spine_r * spine_r;
        if (in_lung >= 0) {
          m = Material::lung;
          p.lung_mask[n] = 1;
          for (const auto& les : lesions) {
            if (les.lung == in_lung && les.sphere.contains(x, y, z)) {
              m = Material::lesion;
              p.lesion_mask[n] = 1;
            }
          }
        } else if (in_spine) {
          m = Material::bone;
        } else if (ribs.contains(x, y, z)) {
          m = Material::bone;
          p.rib_mask[n] = 1;
        }
        p.labels[n] = static_cast<std::uint8_t>(m);
      }
    }
  }

  p.rib_free_labels = p.labels;
  for (std::size_t n = 0; n < p.labels.size(); ++n)
    if (p.rib_mask[n]) p.rib_free_labels[n] = static_cast<std::uint8_t>(Material::soft_tissue);

  float mu[5];
  for (int m = 0; m < 5; ++m)
    mu[m] = static_cast<float>(attenuation_at_energy(table, static_cast<Material>(m), config.energy_kev));
  p.full = Volume3(shape, spacing);
  p.rib_free = Volume3(shape, spacing);
  for (std::size_t n = 0; n < p.labels.size(); ++n) {
    p.full[n] = mu[p.labels[n]];
    p.rib_free[n] = mu[p.rib_free_labels[n]];
  }
  return p;
}

const Volume3& rib_free_of(const Phantom& p) { return p.rib_free; }

std::vector<Volume3> volumes_for_spectrum(const Phantom& p, const Spectrum& spectrum, bool rib_free,
                                          const MaterialTable& table) {
  spectrum.validate();
  const auto& labels = rib_free ? p.rib_free_labels : p.labels;
  std::vector<Volume3> out;
  for (double e : spectrum.energy_bins_kev) {
    float mu[5];
    for (int m = 0; m < 5; ++m) mu[m] = static_cast<float>(attenuation_at_energy(table, static_cast<Material>(m), e));
    Volume3 v(labels.shape(), labels.spacing_mm());
    for (std::size_t n = 0; n < labels.size(); ++n) v[n] = mu[labels[n]];
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace dts
