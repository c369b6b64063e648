#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dts/dataset.hpp"

namespace dts {

struct ErrorPair {
  double l1 = 0.0;
  double l2 = 0.0;
};

/// Mean |a − b| and mean (a − b)² over all voxels, or over the voxels of `mask` when given.
ErrorPair l1_l2(const Volume3& pred, const Volume3& truth, const Mask3* mask = nullptr);

struct PsnrResult {
  /// +infinity when the masked error is exactly zero (see `infinite`).
  double db = 0.0;
  bool infinite = false;
  double mse = 0.0;
};

/// Both volumes are min-max normalised to [0, 1] over the whole volume, then the MSE inside
/// `mask` gives 10 log10(1 / MSE).
PsnrResult psnr(const Volume3& pred, const Volume3& truth, const Mask3& mask);
/// PSNR from a mean squared error with peak 1.
PsnrResult psnr_from_mse(double mse);

struct MetricsReport {
  std::string case_id;
  std::string method;
  double l1 = 0.0, l2 = 0.0;
  double l1_la = 0.0, l2_la = 0.0;
  std::optional<PsnrResult> psnr;
};

struct MethodVolume {
  std::string method;
  Volume3 volume;
};

/// One report per method against the case's rib-free reconstruction.
std::vector<MetricsReport> evaluate_methods(const Case& c, const std::vector<MethodVolume>& methods,
                                            const std::string& case_id = "");

/// Aligned text table; L1 columns are shown ×10⁻² and L2 columns ×10⁻⁴.
void write_table(std::ostream& os, const std::vector<MetricsReport>& reports);
/// Comma-separated lines under the header `case,method,l1,l2,l1_la,l2_la,psnr_db`; PSNR is "inf" or empty.
void write_csv(std::ostream& os, const std::vector<MetricsReport>& reports);
extern const char* const kCsvHeader;

}  // namespace dts
