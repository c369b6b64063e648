#include "dts/geometry.hpp"

#include <numbers>

#include "dts/error.hpp"

namespace dts {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

double AngleSet::spacing_rad() const {
  if (n_views < 2) return 1.0;
  return alpha / static_cast<double>(n_views - 1) * kDeg;
}

AngleSet make_angle_set(double alpha_deg, std::size_t n_views) {
  if (!(alpha_deg >= 0.0) || !std::isfinite(alpha_deg)) fail(ErrorKind::invalid_argument, "alpha must be >= 0");
  if (n_views == 0) fail(ErrorKind::invalid_argument, "n_views must be >= 1");
  if (n_views > 1 && alpha_deg == 0.0) fail(ErrorKind::invalid_argument, "several views need alpha > 0");
  AngleSet set;
  set.alpha = alpha_deg;
  set.n_views = n_views;
  set.angles.resize(n_views, 0.0);
  if (n_views == 1) return set;
  double half = alpha_deg / 2.0;
  double step = alpha_deg / static_cast<double>(n_views - 1);
  // Fill from both ends so angle[i] == -angle[n-1-i] exactly.
  for (std::size_t i = 0; i < n_views / 2; ++i) {
    double a = -half + step * static_cast<double>(i);
    set.angles[i] = a;
    set.angles[n_views - 1 - i] = -a;
  }
  set.angles.front() = -half;
  set.angles.back() = half;
  return set;
}

std::array<double, 3> ConeBeamGeometry::voxel_spacing() const {
  return {fov_mm[0] / static_cast<double>(volume_shape[0]), fov_mm[1] / static_cast<double>(volume_shape[1]),
          fov_mm[2] / static_cast<double>(volume_shape[2])};
}

void ConeBeamGeometry::validate() const {
  require(sid_mm > 0.0 && sdd_mm > sid_mm, "geometry: need sdd_mm > sid_mm > 0");
  require(detector_rows > 0 && detector_cols > 0, "geometry: detector counts must be positive");
  require(detector_pixel_mm > 0.0, "geometry: detector pitch must be positive");
  for (int a = 0; a < 3; ++a) {
    require(fov_mm[a] > 0.0, "geometry: fov must be positive");
    require(volume_shape[a] > 0, "geometry: volume shape must be positive");
  }
  require(fov_mm[1] / 2.0 < sid_mm, "geometry: volume reaches the source line");
  require(angles.n_views == angles.angles.size() && angles.n_views >= 1, "geometry: malformed angle set");
  for (double a : angles.angles) require(std::abs(a) < 90.0, "geometry: |theta| must be < 90 degrees");
}

Vec3 source_position(const ConeBeamGeometry& geom, double theta_deg) {
  if (!(std::abs(theta_deg) < 90.0)) fail(ErrorKind::invalid_argument, "source_position: |theta| must be < 90 degrees");
  Vec3 s{0.0, geom.sid_mm, 0.0};
  s[geom.column_axis()] = geom.sid_mm * std::tan(theta_deg * kDeg);
  return s;
}

Vec3 detector_point(const ConeBeamGeometry& geom, double u, double v) {
  Vec3 p{0.0, geom.detector_plane_y(), 0.0};
  p[geom.column_axis()] = (u - 0.5 * static_cast<double>(geom.detector_cols - 1)) * geom.detector_pixel_mm;
  p[geom.row_axis()] = (v - 0.5 * static_cast<double>(geom.detector_rows - 1)) * geom.detector_pixel_mm;
  return p;
}

std::array<double, 2> detector_pixel_of(const ConeBeamGeometry& geom, const Vec3& p) {
  return {p[geom.column_axis()] / geom.detector_pixel_mm + 0.5 * static_cast<double>(geom.detector_cols - 1),
          p[geom.row_axis()] / geom.detector_pixel_mm + 0.5 * static_cast<double>(geom.detector_rows - 1)};
}

Ray ray_through(const ConeBeamGeometry& geom, double theta_deg, double detector_u, double detector_v) {
  double cols = static_cast<double>(geom.detector_cols);
  double rows = static_cast<double>(geom.detector_rows);
  if (!(detector_u >= -0.5 && detector_u <= cols - 0.5) || !(detector_v >= -0.5 && detector_v <= rows - 0.5))
    fail(ErrorKind::invalid_argument, "ray_through: detector pixel out of range");
  Vec3 src = source_position(geom, theta_deg);
  Vec3 d = detector_point(geom, detector_u, detector_v) - src;
  return {src, (1.0 / norm(d)) * d};
}

Vec3 voxel_center(const ConeBeamGeometry& geom, std::size_t i, std::size_t j, std::size_t k) {
  auto sp = geom.voxel_spacing();
  return {(static_cast<double>(i) + 0.5) * sp[0] - 0.5 * geom.fov_mm[0],
          (static_cast<double>(j) + 0.5) * sp[1] - 0.5 * geom.fov_mm[1],
          (static_cast<double>(k) + 0.5) * sp[2] - 0.5 * geom.fov_mm[2]};
}

void write_geometry(KeyValueFile& kv, const std::string& section, const ConeBeamGeometry& geom) {
  kv.set(section, "sid_mm", format_double(geom.sid_mm));
  kv.set(section, "sdd_mm", format_double(geom.sdd_mm));
  kv.set(section, "detector_rows", std::to_string(geom.detector_rows));
  kv.set(section, "detector_cols", std::to_string(geom.detector_cols));
  kv.set(section, "detector_pixel_mm", format_double(geom.detector_pixel_mm));
  kv.set(section, "fov_mm_x", format_double(geom.fov_mm[0]));
  kv.set(section, "fov_mm_y", format_double(geom.fov_mm[1]));
  kv.set(section, "fov_mm_z", format_double(geom.fov_mm[2]));
  kv.set(section, "vol_nx", std::to_string(geom.volume_shape[0]));
  kv.set(section, "vol_ny", std::to_string(geom.volume_shape[1]));
  kv.set(section, "vol_nz", std::to_string(geom.volume_shape[2]));
  kv.set(section, "alpha_deg", format_double(geom.angles.alpha));
  kv.set(section, "n_views", std::to_string(geom.angles.n_views));
  kv.set(section, "motion_axis", geom.motion_axis == MotionAxis::x ? "x" : "z");
}

ConeBeamGeometry read_geometry(const KeyValueFile& kv, const std::string& section) {
  kv.reject_unknown(section, {"sid_mm", "sdd_mm", "detector_rows", "detector_cols", "detector_pixel_mm", "fov_mm_x",
                              "fov_mm_y", "fov_mm_z", "vol_nx", "vol_ny", "vol_nz", "alpha_deg", "n_views",
                              "motion_axis"});
  ConeBeamGeometry g;
  auto dbl = [&](const char* key, double& dst) {
    if (kv.has(section, key)) dst = kv.get_double(section, key);
  };
  auto cnt = [&](const char* key, std::size_t& dst) {
    if (kv.has(section, key)) {
      long long v = kv.get_int(section, key);
      if (v <= 0) fail(ErrorKind::config, std::string("[") + section + "] " + key + " must be positive");
      dst = static_cast<std::size_t>(v);
    }
  };
  dbl("sid_mm", g.sid_mm);
  dbl("sdd_mm", g.sdd_mm);
  cnt("detector_rows", g.detector_rows);
  cnt("detector_cols", g.detector_cols);
  dbl("detector_pixel_mm", g.detector_pixel_mm);
  dbl("fov_mm_x", g.fov_mm[0]);
  dbl("fov_mm_y", g.fov_mm[1]);
  dbl("fov_mm_z", g.fov_mm[2]);
  cnt("vol_nx", g.volume_shape[0]);
  cnt("vol_ny", g.volume_shape[1]);
  cnt("vol_nz", g.volume_shape[2]);
  double alpha = g.angles.alpha;
  std::size_t views = g.angles.n_views;
  dbl("alpha_deg", alpha);
  cnt("n_views", views);
  if (auto axis = kv.get(section, "motion_axis")) {
    if (*axis == "x") g.motion_axis = MotionAxis::x;
    else if (*axis == "z") g.motion_axis = MotionAxis::z;
    else fail(ErrorKind::config, "[" + section + "] motion_axis must be x or z");
  }
  try {
    g.angles = make_angle_set(alpha, views);
    g.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("[") + section + "] " + e.what());
  }
  return g;
}

}  // namespace dts
