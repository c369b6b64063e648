#include "dts/projector.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dts/binary_io.hpp"
#include "dts/parallel.hpp"

namespace dts {

void ProjectionSet::check_against(const ConeBeamGeometry& geom) const {
  if (projections.size() != geom.angles.n_views)
    fail(ErrorKind::geometry_mismatch, "projection set has " + std::to_string(projections.size()) +
                                           " views, geometry expects " + std::to_string(geom.angles.n_views));
  for (std::size_t v = 0; v < projections.size(); ++v) {
    const auto& p = projections[v];
    if (p.rows != geom.detector_rows || p.cols != geom.detector_cols || p.data.size() != p.rows * p.cols)
      fail(ErrorKind::geometry_mismatch, "projection shape does not match detector");
    if (p.theta_deg != geom.angles.angles[v])
      fail(ErrorKind::geometry_mismatch, "projection angle " + format_double(p.theta_deg) + " does not match geometry");
  }
}

ProjectionSet zero_projection_set(const ConeBeamGeometry& geom) {
  ProjectionSet ps;
  ps.geometry = geom;
  for (double a : geom.angles.angles)
    ps.projections.emplace_back(geom.detector_rows, geom.detector_cols, geom.detector_pixel_mm, a);
  return ps;
}

ProjectionSet subtract(const ProjectionSet& a, const ProjectionSet& b) {
  b.check_against(a.geometry);
  ProjectionSet out = a;
  for (std::size_t v = 0; v < out.projections.size(); ++v) {
    auto& d = out.projections[v].data;
    const auto& s = b.projections[v].data;
    for (std::size_t n = 0; n < d.size(); ++n) d[n] = a.projections[v].data[n] - s[n];
  }
  return out;
}

ProjectionSet combine(double a, const ProjectionSet& A, double b, const ProjectionSet& B) {
  B.check_against(A.geometry);
  ProjectionSet out = A;
  for (std::size_t v = 0; v < out.projections.size(); ++v) {
    auto& d = out.projections[v].data;
    for (std::size_t n = 0; n < d.size(); ++n)
      d[n] = static_cast<float>(a * A.projections[v].data[n] + b * B.projections[v].data[n]);
  }
  return out;
}

double default_step_mm(const Volume3& vol) {
  const auto& sp = vol.spacing_mm();
  return 0.5 * std::min({sp[0], sp[1], sp[2]});
}

namespace {

// Trilinear sample at isocenter coordinates; indices are clamped to the voxel-centre lattice,
// so the field is continuous inside the volume box.
inline double sample_trilinear(const Volume3& vol, const double* half_ext, const Vec3& p) {
  const auto& sh = vol.shape();
  const auto& sp = vol.spacing_mm();
  double c[3];
  std::size_t i0[3], i1[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    c[a] = (p[a] + half_ext[a]) / sp[a] - 0.5;
    double hi = static_cast<double>(sh[a] - 1);
    c[a] = std::clamp(c[a], 0.0, hi);
    double fl = std::floor(c[a]);
    i0[a] = static_cast<std::size_t>(fl);
    i1[a] = std::min(i0[a] + 1, sh[a] - 1);
    f[a] = c[a] - fl;
  }
  const float* d = vol.data().data();
  auto at = [&](std::size_t i, std::size_t j, std::size_t k) {
    return static_cast<double>(d[(i * sh[1] + j) * sh[2] + k]);
  };
  double c00 = at(i0[0], i0[1], i0[2]) * (1 - f[2]) + at(i0[0], i0[1], i1[2]) * f[2];
  double c01 = at(i0[0], i1[1], i0[2]) * (1 - f[2]) + at(i0[0], i1[1], i1[2]) * f[2];
  double c10 = at(i1[0], i0[1], i0[2]) * (1 - f[2]) + at(i1[0], i0[1], i1[2]) * f[2];
  double c11 = at(i1[0], i1[1], i0[2]) * (1 - f[2]) + at(i1[0], i1[1], i1[2]) * f[2];
  double c0 = c00 * (1 - f[1]) + c01 * f[1];
  double c1 = c10 * (1 - f[1]) + c11 * f[1];
  return c0 * (1 - f[0]) + c1 * f[0];
}

}  // namespace

double line_integral(const Volume3& vol, const Ray& ray, double step_mm) {
  if (!(step_mm > 0.0)) fail(ErrorKind::invalid_argument, "line_integral: step must be positive");
  if (vol.size() == 0) return 0.0;
  double half_ext[3];
  for (int a = 0; a < 3; ++a) half_ext[a] = 0.5 * static_cast<double>(vol.shape()[a]) * vol.spacing_mm()[a];

  // Slab clipping of the ray against the volume box, restricted to t >= 0.
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double o = ray.origin[a], d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < -half_ext[a] || o > half_ext[a]) return 0.0;
      continue;
    }
    double ta = (-half_ext[a] - o) / d;
    double tb = (half_ext[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return 0.0;

  double length = t1 - t0;
  auto n = static_cast<std::size_t>(std::ceil(length / step_mm));
  n = std::max<std::size_t>(n, 1);
  double h = length / static_cast<double>(n);
  double sum = 0.0;
  for (std::size_t s = 0; s <= n; ++s) {
    double t = t0 + h * static_cast<double>(s);
    double w = (s == 0 || s == n) ? 0.5 : 1.0;
    sum += w * sample_trilinear(vol, half_ext, ray.origin + t * ray.direction);
  }
  return sum * h;
}

Projection2D forward_project(const std::vector<Volume3>& vol_by_energy, const ConeBeamGeometry& geom,
                             double theta_deg, const Spectrum& spectrum, const ProjectorOptions& opts) {
  spectrum.validate();
  if (vol_by_energy.size() != spectrum.energy_bins_kev.size())
    fail(ErrorKind::invalid_argument, "forward_project: " + std::to_string(vol_by_energy.size()) +
                                          " volumes for " + std::to_string(spectrum.energy_bins_kev.size()) + " bins");
  require(opts.supersample >= 1, "forward_project: supersample must be >= 1");
  for (const auto& v : vol_by_energy) {
    if (v.shape() != geom.volume_shape) fail(ErrorKind::geometry_mismatch, "forward_project: volume shape mismatch");
  }
  const double step = opts.step_mm > 0.0 ? opts.step_mm : default_step_mm(vol_by_energy.front());
  const bool mono = vol_by_energy.size() == 1 && spectrum.weights[0] == 1.0;
  Projection2D out(geom.detector_rows, geom.detector_cols, geom.detector_pixel_mm, theta_deg);
  const int ss = opts.supersample;

  auto pixel_value = [&](double u, double v) {
    Ray ray = ray_through(geom, theta_deg, u, v);
    if (mono) return line_integral(vol_by_energy[0], ray, step);
    double intensity = 0.0;
    for (std::size_t b = 0; b < vol_by_energy.size(); ++b)
      intensity += spectrum.weights[b] * std::exp(-line_integral(vol_by_energy[b], ray, step));
    return -std::log(intensity);
  };

  parallel_for(geom.detector_rows, opts.threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = 0; c < geom.detector_cols; ++c) {
        double acc = 0.0;
        for (int sv = 0; sv < ss; ++sv)
          for (int su = 0; su < ss; ++su) {
            double du = (static_cast<double>(su) + 0.5) / ss - 0.5;
            double dv = (static_cast<double>(sv) + 0.5) / ss - 0.5;
            acc += pixel_value(static_cast<double>(c) + du, static_cast<double>(r) + dv);
          }
        out.at(r, c) = static_cast<float>(acc / static_cast<double>(ss * ss));
      }
    }
  });
  return out;
}

ProjectionSet project_all(const std::vector<Volume3>& vol_by_energy, const ConeBeamGeometry& geom,
                          const Spectrum& spectrum, const ProjectorOptions& opts) {
  geom.validate();
  ProjectionSet ps;
  ps.geometry = geom;
  ps.projections.resize(geom.angles.n_views);
  ProjectorOptions inner = opts;
  inner.threads = 1;
  parallel_for(geom.angles.n_views, opts.threads, [&](std::size_t v0, std::size_t v1) {
    for (std::size_t v = v0; v < v1; ++v) {
      double theta = geom.angles.angles[v];
      try {
        ps.projections[v] = forward_project(vol_by_energy, geom, theta, spectrum, inner);
      } catch (const Error& e) {
        fail(e.kind(), "view theta=" + format_double(theta) + ": " + e.what());
      }
    }
  });
  return ps;
}

ProjectionSet project_all(const Volume3& vol, const ConeBeamGeometry& geom, const ProjectorOptions& opts) {
  return project_all(std::vector<Volume3>{vol}, geom, Spectrum::monoenergetic(60.0), opts);
}

namespace {
constexpr char kPrjMagic[8] = {'D', 'T', 'S', 'P', 'R', 'J', '1', '\0'};
}

void write_projection_set(const std::filesystem::path& path, const ProjectionSet& ps) {
  ByteWriter w;
  w.raw(kPrjMagic, 8);
  std::size_t rows = ps.projections.empty() ? 0 : ps.projections[0].rows;
  std::size_t cols = ps.projections.empty() ? 0 : ps.projections[0].cols;
  w.u32(static_cast<std::uint32_t>(ps.projections.size()));
  w.u32(static_cast<std::uint32_t>(rows));
  w.u32(static_cast<std::uint32_t>(cols));
  w.f64(ps.projections.empty() ? 0.0 : ps.projections[0].pixel_mm);
  for (const auto& p : ps.projections) w.f64(p.theta_deg);
  for (const auto& p : ps.projections)
    for (float v : p.data) w.f32(v);
  w.save(path);
}

ProjectionSet read_projection_set(const std::filesystem::path& path, const ConeBeamGeometry& geom) {
  ByteReader r = ByteReader::load(path);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kPrjMagic, 8) != 0) fail(ErrorKind::io, path.string() + ": not a projection stack");
  std::size_t n = r.u32(), rows = r.u32(), cols = r.u32();
  double pixel = r.f64();
  ProjectionSet ps;
  ps.geometry = geom;
  std::vector<double> angles(n);
  for (auto& a : angles) a = r.f64();
  for (std::size_t v = 0; v < n; ++v) {
    Projection2D p(rows, cols, pixel, angles[v]);
    for (auto& x : p.data) x = r.f32();
    ps.projections.push_back(std::move(p));
  }
  r.expect_end();
  ps.check_against(geom);
  return ps;
}

GrayImage render_projection(const Projection2D& p, double lo, double hi) {
  require(hi > lo, "render_projection: empty window");
  GrayImage img{p.cols, p.rows, std::vector<std::uint8_t>(p.data.size())};
  for (std::size_t n = 0; n < p.data.size(); ++n) {
    double t = std::clamp((p.data[n] - lo) / (hi - lo), 0.0, 1.0);
    img.pixels[n] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  return img;
}

}  // namespace dts
