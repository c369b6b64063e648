#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dts/keyvalue.hpp"
#include "dts/volume.hpp"

namespace dts {

enum class Material : std::uint8_t { air = 0, soft_tissue = 1, lung = 2, bone = 3, lesion = 4 };

/// Linear attenuation coefficients (mm^-1) tabulated per material over photon energy.
struct MaterialTable {
  std::vector<double> energies_kev;
  std::vector<double> soft_tissue;
  std::vector<double> lung;
  std::vector<double> bone;
  /// Lesions are modelled as soft tissue scaled by this factor.
  double lesion_fraction = 0.75;

  static MaterialTable standard();
};

/// Log-log interpolation of the tabulated coefficient; air is 0 at every energy.
double attenuation_at_energy(const MaterialTable& table, Material material, double energy_kev);

/// Normalised beam spectrum.
struct Spectrum {
  std::vector<double> energy_bins_kev;
  std::vector<double> weights;

  static Spectrum monoenergetic(double energy_kev);
  void validate() const;
};

struct PhantomConfig {
  std::array<std::size_t, 3> shape{64, 32, 64};
  std::array<double, 3> fov_mm{409.6, 300.0, 409.6};
  double energy_kev = 60.0;
  std::size_t n_rib_pairs = 6;
  double rib_radius_mm = 9.0;
  std::size_t min_lesions = 1;
  std::size_t max_lesions = 2;
  double lesion_radius_min_mm = 10.0;
  double lesion_radius_max_mm = 16.0;
  /// Relative per-seed variation of body and lung sizes.
  double size_jitter = 0.05;
  /// Scales the lung ellipsoids; mainly for exercising the lesion-placement error.
  double lung_scale = 1.0;

  std::array<double, 3> spacing_mm() const;
  void validate() const;
};

void write_phantom_config(KeyValueFile& kv, const std::string& section, const PhantomConfig& cfg);
/// Reads overrides from `section`; shape and fov come from `base` (normally the geometry).
PhantomConfig read_phantom_config(const KeyValueFile& kv, const std::string& section, PhantomConfig base);

/// Synthetic chest with exact masks. `full` and `rib_free` are evaluated at config.energy_kev;
/// the label maps allow re-evaluation at other energies.
struct Phantom {
  Volume3 full;
  Volume3 rib_free;
  Mask3 rib_mask;
  Mask3 lung_mask;
  Mask3 lesion_mask;
  Grid3<std::uint8_t> labels;
  Grid3<std::uint8_t> rib_free_labels;
  std::uint64_t seed = 0;
};

Phantom generate_phantom(std::uint64_t seed, const PhantomConfig& config,
                         const MaterialTable& table = MaterialTable::standard());

const Volume3& rib_free_of(const Phantom& p);

/// One attenuation volume per spectrum bin, from the full (or rib-free) label map.
std::vector<Volume3> volumes_for_spectrum(const Phantom& p, const Spectrum& spectrum, bool rib_free,
                                          const MaterialTable& table = MaterialTable::standard());

}  // namespace dts
