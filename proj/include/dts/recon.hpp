#pragma once

#include <vector>

#include "dts/geometry.hpp"
#include "dts/keyvalue.hpp"
#include "dts/projector.hpp"
#include "dts/volume.hpp"

namespace dts {

enum class RampKind { ram_lak, hann };

struct RampFilterSpec {
  RampKind kind = RampKind::ram_lak;
  /// Power of two >= 2 * cols; 0 picks the smallest such length.
  std::size_t padded_len = 0;

  std::size_t resolved_length(std::size_t cols) const;
  void validate(std::size_t cols) const;
};

/// H[k] for the r2c bins k = 0..P/2 of a length-P transform at sample spacing pixel_mm,
/// in cycles per mm: H[k] = k / (P * pixel_mm) (times the Hann window for RampKind::hann).
std::vector<double> ramp_transfer(RampKind kind, std::size_t padded_len, double pixel_mm);

/// Closed-form discrete Ram-Lak kernel h[n] at spacing tau:
/// 1/(4 tau^2) at n = 0, 0 for even n, -1/(pi^2 n^2 tau^2) for odd n.
double ram_lak_kernel(long n, double tau);

/// Filters every detector row independently (zero padding, multiply by H, crop).
Projection2D ramp_filter(const Projection2D& p, const RampFilterSpec& spec);
ProjectionSet ramp_filter_all(const ProjectionSet& ps, const RampFilterSpec& spec, int threads = 0);

struct BackprojectOptions {
  /// Inverse-square distance weight (L / (L - s))^2; off for the ablation mode.
  bool distance_weight = true;
  int threads = 0;
};

/// Voxel-driven backprojection of (already filtered) views, summed in angle order and scaled by
/// the angular spacing and the detector magnification.
Volume3 backproject(const ProjectionSet& ps, const ConeBeamGeometry& geom, const BackprojectOptions& opts = {});

Volume3 fbp(const ProjectionSet& ps, const ConeBeamGeometry& geom, const RampFilterSpec& spec = {},
            const BackprojectOptions& opts = {});

void write_filter_spec(KeyValueFile& kv, const std::string& section, const RampFilterSpec& spec,
                       const BackprojectOptions& bp);
void read_filter_spec(const KeyValueFile& kv, const std::string& section, RampFilterSpec& spec,
                      BackprojectOptions& bp);

}  // namespace dts
