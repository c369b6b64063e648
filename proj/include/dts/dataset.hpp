#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dts/phantom.hpp"
#include "dts/projector.hpp"
#include "dts/recon.hpp"

namespace dts {

/// How a phantom becomes projections and reconstructions.
struct SimulationConfig {
  Spectrum spectrum = Spectrum::monoenergetic(60.0);
  RampFilterSpec filter;
  BackprojectOptions backproject;
  ProjectorOptions projector;
};

/// One supervised training case. `truth_*` hold the phantom attenuation the projections came from.
struct Case {
  std::uint64_t phantom_seed = 0;
  ProjectionSet proj_full, proj_ribfree, proj_delta;
  Volume3 vol_full, vol_ribfree, vol_delta;
  Mask3 lung_mask, lesion_mask, rib_mask;
  Volume3 truth_full, truth_ribfree;
  /// max |vol_delta − fbp(proj_delta)| and the value range of vol_full, from simulation time.
  double linearity_max_abs = 0.0;
  double vol_range = 0.0;

  friend bool operator==(const Case&, const Case&) = default;
};

/// Statistics of the training cases. Network inputs are standardised with the mean and standard
/// deviation; targets are only scaled. The value ranges are recorded alongside.
struct NormStats {
  double proj_mean = 0.0, proj_std = 1.0;
  double vol_mean = 0.0, vol_std = 1.0;
  double proj_min = 0.0, proj_max = 0.0;
  double vol_min = 0.0, vol_max = 0.0;
  /// max |proj_delta| and max |vol_delta|; targets are divided by these so "no ribs" stays 0.
  double proj_delta_scale = 1.0;
  double vol_delta_scale = 1.0;

  float norm_proj(float v) const { return static_cast<float>((v - proj_mean) / proj_std); }
  float norm_vol(float v) const { return static_cast<float>((v - vol_mean) / vol_std); }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

struct DatasetSplit {
  ConeBeamGeometry geometry;
  SimulationConfig simulation;
  std::vector<Case> train;
  std::vector<Case> test;
  NormStats stats;
};

/// Projects the full and rib-free phantoms, forms I_delta by subtraction, and reconstructs the
/// three volumes. Throws a state error if fbp(I_delta) and V_full − V_ribfree disagree by more
/// than 1e-4 of the reconstruction range.
Case simulate_case(const Phantom& phantom, const ConeBeamGeometry& geom, const SimulationConfig& sim,
                   int threads = 0);

NormStats compute_stats(const std::vector<Case>& train);

/// Seeds base_seed .. base_seed + n_train + n_test − 1; the first n_train go to training.
DatasetSplit build_dataset(std::size_t n_train, std::size_t n_test, std::uint64_t base_seed,
                           const ConeBeamGeometry& geom, const PhantomConfig& phantom, const SimulationConfig& sim,
                           int threads = 0);

/// Voxels within `radius` voxels (in the x-z plane) of a column that contains rib.
/// The central ray runs along y, so this is where the rib shadow and its streaks fall.
Mask3 rib_shadow_region(const Mask3& rib_mask, std::size_t radius);

/// Fraction of Σ v² that lies inside `mask`.
double energy_fraction(const Volume3& v, const Mask3& mask);

// On-disk layout:
//   <dir>/dataset.txt                    geometry, simulation, seeds and stats
//   <dir>/case_<seed>/manifest.txt       geometry, seed, linearity check
//   <dir>/case_<seed>/proj_{full,ribfree,delta}.prj
//   <dir>/case_<seed>/vol_{full,ribfree,delta}.vol, truth_{full,ribfree}.vol
//   <dir>/case_<seed>/{lung,lesion,rib}_mask.msk
std::filesystem::path case_dir(const std::filesystem::path& root, std::uint64_t seed);
void write_case(const std::filesystem::path& root, const Case& c, const ConeBeamGeometry& geom);
Case read_case(const std::filesystem::path& root, std::uint64_t seed, const ConeBeamGeometry& geom);
void write_dataset(const std::filesystem::path& root, const DatasetSplit& split);
DatasetSplit read_dataset(const std::filesystem::path& root);

/// Spectrum and projector settings go to `sim_section` (spectrum = "60" or "40:0.3,60:0.7"),
/// filter and backprojection settings to `recon_section`.
void write_simulation_config(KeyValueFile& kv, const std::string& sim_section, const std::string& recon_section,
                             const SimulationConfig& sim);
SimulationConfig read_simulation_config(const KeyValueFile& kv, const std::string& sim_section,
                                        const std::string& recon_section);
void write_stats(KeyValueFile& kv, const std::string& section, const NormStats& stats);
NormStats read_stats(const KeyValueFile& kv, const std::string& section);

}  // namespace dts
