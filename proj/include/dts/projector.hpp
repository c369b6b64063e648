#pragma once

#include <filesystem>
#include <vector>

#include "dts/geometry.hpp"
#include "dts/phantom.hpp"
#include "dts/volume.hpp"

namespace dts {

/// One log-projection image; data is row-major [row * cols + col].
struct Projection2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double pixel_mm = 1.0;
  double theta_deg = 0.0;
  std::vector<float> data;

  Projection2D() = default;
  Projection2D(std::size_t rows_, std::size_t cols_, double pixel, double theta)
      : rows(rows_), cols(cols_), pixel_mm(pixel), theta_deg(theta), data(rows_ * cols_, 0.0f) {}

  float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  friend bool operator==(const Projection2D&, const Projection2D&) = default;
};

/// One projection per angle of the geometry's angle set, in angle order.
struct ProjectionSet {
  ConeBeamGeometry geometry;
  std::vector<Projection2D> projections;

  /// Throws geometry-mismatch if the views do not line up with `geom`.
  void check_against(const ConeBeamGeometry& geom) const;
  friend bool operator==(const ProjectionSet&, const ProjectionSet&) = default;
};

ProjectionSet zero_projection_set(const ConeBeamGeometry& geom);
ProjectionSet subtract(const ProjectionSet& a, const ProjectionSet& b);
/// a * A + b * B, viewwise.
ProjectionSet combine(double a, const ProjectionSet& A, double b, const ProjectionSet& B);

struct ProjectorOptions {
  /// Ray-marching step; <= 0 selects half the smallest voxel spacing.
  double step_mm = 0.0;
  /// n x n sub-pixel rays per detector pixel (1 = pixel centres only).
  int supersample = 1;
  int threads = 0;
};

double default_step_mm(const Volume3& vol);

/// Integral of the trilinearly interpolated volume along `ray`, trapezoid rule over the
/// intersection with the volume box (the volume is centred on the isocenter). 0 on a miss.
double line_integral(const Volume3& vol, const Ray& ray, double step_mm);

/// -ln sum_b w_b exp(-p_b) per pixel, with p_b the line integral through the bin-b volume.
Projection2D forward_project(const std::vector<Volume3>& vol_by_energy, const ConeBeamGeometry& geom,
                             double theta_deg, const Spectrum& spectrum, const ProjectorOptions& opts = {});

ProjectionSet project_all(const std::vector<Volume3>& vol_by_energy, const ConeBeamGeometry& geom,
                          const Spectrum& spectrum, const ProjectorOptions& opts = {});
/// Monoenergetic convenience overload.
ProjectionSet project_all(const Volume3& vol, const ConeBeamGeometry& geom, const ProjectorOptions& opts = {});

// Stacked container:
//   char[8] "DTSPRJ1\0", u32 n_views, u32 rows, u32 cols, f64 pixel_mm, f64 angles[n_views],
//   f32 payload, view-major then row-major. Little-endian throughout.
void write_projection_set(const std::filesystem::path& path, const ProjectionSet& ps);
ProjectionSet read_projection_set(const std::filesystem::path& path, const ConeBeamGeometry& geom);

/// Per-view window used for PNG export of projections.
GrayImage render_projection(const Projection2D& p, double lo, double hi);

}  // namespace dts
