#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "dts/error.hpp"
#include "dts/keyvalue.hpp"

namespace dts {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// Equiangular, endpoint-inclusive view angles in degrees, symmetric about 0.
struct AngleSet {
  std::vector<double> angles;
  double alpha = 0.0;
  std::size_t n_views = 1;

  /// Spacing between neighbouring views in radians; 1 for a single view.
  double spacing_rad() const;
  friend bool operator==(const AngleSet&, const AngleSet&) = default;
};

AngleSet make_angle_set(double alpha_deg, std::size_t n_views);

/// Axis along which the source translates (and along which detector columns run).
enum class MotionAxis { x = 0, z = 2 };

/// Stationary-detector tomosynthesis geometry.
///
/// Isocenter coordinates in mm: x is the superior-inferior axis, y points from the detector
/// towards the source (anterior-posterior), z is lateral. The source travels on the line
/// y = sid_mm parallel to the motion axis; the flat detector lies in the plane y = sid_mm - sdd_mm
/// and never moves. Detector columns run along the motion axis, rows along the other in-plane
/// axis. The voxel grid is centred on the isocenter with extents fov_mm.
struct ConeBeamGeometry {
  double sid_mm = 1000.0;
  double sdd_mm = 1200.0;
  std::size_t detector_rows = 64;
  std::size_t detector_cols = 64;
  double detector_pixel_mm = 9.6;
  std::array<double, 3> fov_mm{409.6, 300.0, 409.6};
  std::array<std::size_t, 3> volume_shape{64, 32, 64};
  MotionAxis motion_axis = MotionAxis::x;
  AngleSet angles = make_angle_set(30.0, 59);

  std::array<double, 3> voxel_spacing() const;
  double detector_plane_y() const { return sid_mm - sdd_mm; }
  int column_axis() const { return static_cast<int>(motion_axis); }
  int row_axis() const { return motion_axis == MotionAxis::x ? 2 : 0; }

  /// Throws invalid-argument on any broken invariant.
  void validate() const;

  friend bool operator==(const ConeBeamGeometry&, const ConeBeamGeometry&) = default;
};

Vec3 source_position(const ConeBeamGeometry& geom, double theta_deg);

/// Physical centre of (fractional) detector pixel (u = column, v = row).
Vec3 detector_point(const ConeBeamGeometry& geom, double u, double v);

/// Inverse of detector_point for a point on the detector plane: returns (u, v).
std::array<double, 2> detector_pixel_of(const ConeBeamGeometry& geom, const Vec3& p);

Ray ray_through(const ConeBeamGeometry& geom, double theta_deg, double detector_u, double detector_v);

/// Centre of voxel (i, j, k) in isocenter coordinates.
Vec3 voxel_center(const ConeBeamGeometry& geom, std::size_t i, std::size_t j, std::size_t k);

void write_geometry(KeyValueFile& kv, const std::string& section, const ConeBeamGeometry& geom);
ConeBeamGeometry read_geometry(const KeyValueFile& kv, const std::string& section);

}  // namespace dts
