#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dts/metrics.hpp"
#include "dts/suppression.hpp"

namespace dts {

inline constexpr const char* kToolVersion = "dts 0.1.0";

/// Everything a run needs, parsed from one key=value file. Unknown sections or keys are rejected.
struct RunConfig {
  /// Angular presets; each alpha maps to a view count.
  std::vector<double> alphas{15.0, 30.0};
  std::size_t views_15 = 29;
  std::size_t views_30 = 59;
  std::uint64_t seed = 7;
  int threads = 0;
  bool export_png = true;

  ConeBeamGeometry geometry;  // angles are replaced per alpha
  PhantomConfig phantom;
  SimulationConfig simulation;

  std::size_t n_train = 8;
  std::size_t n_test = 2;
  std::uint64_t base_seed = 100;

  TripleNetSpec networks;
  LossWeights weights;
  double lr = 1e-4;
  std::size_t steps = 200;
  std::size_t batch_2d = 4;
  std::size_t batch_3d = 1;
  std::array<std::size_t, 3> patch{32, 32, 32};

  static RunConfig parse(const KeyValueFile& kv);
  static RunConfig load(const std::filesystem::path& path);
  /// Fully resolved echo, suitable for reproducing the run.
  KeyValueFile to_kv() const;

  ConeBeamGeometry geometry_for(double alpha) const;
  TrainConfig train_config(Stage stage) const;
  void validate() const;
};

/// Command-line overrides shared by all subcommands.
struct RunOptions {
  std::filesystem::path out = "dts_out";
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

/// Applies overrides; --seed replaces the model and training seed, not the phantom seeds.
RunConfig resolve(RunConfig cfg, const RunOptions& opts);
std::vector<double> selected_alphas(const RunConfig& cfg, const RunOptions& opts);

// Output layout under --out:
//   phantoms/case_<seed>/           cmd_phantom
//   alpha_<a>/dataset/              cmd_simulate
//   alpha_<a>/models/               cmd_train (<stage>.ckpt, loss_<stage>.csv, train_<stage>.txt)
//   alpha_<a>/suppressed/case_<s>/  cmd_suppress, cmd_ablate (<method>.vol, <method>.png)
//   alpha_<a>/metrics.{txt,csv}     cmd_eval, one alpha
//   metrics.{txt,csv}               cmd_eval, every alpha it ran on
// Every directory written gets a manifest.txt echoing the resolved config and tool version.
std::filesystem::path alpha_dir(const std::filesystem::path& out, double alpha);

void cmd_phantom(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_simulate(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_train(const RunConfig& cfg, const RunOptions& opts, Stage stage, std::ostream& log);
void cmd_suppress(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_ablate(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_eval(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);
void cmd_demo(const RunConfig& cfg, const RunOptions& opts, std::ostream& log);

/// Method labels in table order.
inline const std::vector<std::string> kMethods{"none", "m2d", "m3d", "triple"};

/// Loss curve as written by cmd_train: initial/final full-split losses plus one line per step.
void write_loss_curve(const std::filesystem::path& path, const TrainResult& r);
TrainResult read_loss_curve(const std::filesystem::path& path);

/// 64-bit FNV-1a of a file's bytes; used in manifests to prove checkpoints were not rewritten.
std::uint64_t file_digest(const std::filesystem::path& path);

/// Process exit code for each error category.
int exit_code_for(ErrorKind kind);

}  // namespace dts
