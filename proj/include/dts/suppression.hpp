#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dts/dataset.hpp"
#include "dts/nn/model.hpp"

namespace dts {

enum class Stage { m2d, m3d, f };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);

struct LossWeights {
  double l2d = 20.0;
  double l3d = 50.0;
  double lm = 50.0;
};

struct TripleNetSpec {
  nn::ConvNetSpec m2d{2, 1, std::vector<nn::BlockSpec>(4), 1, false};
  nn::ConvNetSpec m3d{3, 1, std::vector<nn::BlockSpec>(4), 1, false};
  nn::ConvNetSpec f{3, 2, std::vector<nn::BlockSpec>(4), 1, false};

  void validate() const;
};

/// The projection-domain model m2d (shared across all views), the volume-domain model m3d and
/// the aggregation model f, plus everything needed to move between physical and network units.
struct TripleNet {
  TripleNet(const TripleNetSpec& spec, std::uint64_t seed, const DatasetSplit& split);
  TripleNet(const TripleNetSpec& spec, std::uint64_t seed, ConeBeamGeometry geometry, SimulationConfig simulation,
            NormStats stats);

  nn::ConvNet<float> m2d, m3d, f;
  ConeBeamGeometry geometry;
  SimulationConfig simulation;
  NormStats stats;
  LossWeights weights;
  /// Stage f refuses to run until both sub-models were trained or loaded.
  bool m2d_ready = false;
  bool m3d_ready = false;
};

struct TrainConfig {
  Stage stage = Stage::m2d;
  double lr = 1e-4;
  std::size_t steps = 200;
  /// Views per m2d step, or patches per m3d / f step.
  std::size_t batch = 4;
  /// Training crop for the volume models; clamped to the volume shape.
  std::array<std::size_t, 3> patch{32, 32, 32};
  std::uint64_t seed = 1;
  int threads = 0;

  void validate() const;
};

struct TrainResult {
  Stage stage = Stage::m2d;
  /// Loss of each optimiser step on its mini-batch.
  std::vector<double> step_loss;
  /// Mean loss over the whole training split before and after the run.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Network-unit conversions.
nn::Tensor<float> projection_input(const Projection2D& p, const NormStats& s);
nn::Tensor<float> projection_target(const Projection2D& delta, const NormStats& s);
nn::Tensor<float> volume_input(const Volume3& v, const NormStats& s);
nn::Tensor<float> volume_target(const Volume3& delta, const NormStats& s);

/// Predicted rib component of one view in physical (log-attenuation) units.
Projection2D m2d_predict(const TripleNet& net, const Projection2D& view);
ProjectionSet m2d_predict_all(const TripleNet& net, const ProjectionSet& views, int threads = 0);
/// Predicted rib-artifact volume in physical units.
Volume3 m3d_predict(const TripleNet& net, const Volume3& v_alpha);

/// The two input channels of f in network units: FBP of the predicted 2D deltas, then the 3D prediction.
nn::Tensor<float> aggregate_channels(const TripleNet& net, const ProjectionSet& predicted_deltas,
                                     const Volume3& predicted_volume_delta, int threads = 0);
nn::Tensor<float> aggregate_inputs(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha,
                                   int threads = 0);
Volume3 aggregate_predict(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha,
                          int threads = 0);

Volume3 suppress(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha, int threads = 0);
Volume3 suppress_2d_only(const TripleNet& net, const ProjectionSet& projections, const Volume3& v_alpha,
                         int threads = 0);
Volume3 suppress_3d_only(const TripleNet& net, const Volume3& v_alpha);

/// Mean λ-weighted L1 loss of a stage over the training split.
double stage_loss(const TripleNet& net, const DatasetSplit& split, Stage stage, int threads = 0);

TrainResult train_stage(TripleNet& net, const DatasetSplit& split, const TrainConfig& config);

/// Checkpoint file of a stage inside a run directory ("m2d.ckpt", ...).
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, Stage stage);
void save_stage(const std::filesystem::path& dir, const TripleNet& net, Stage stage, std::uint64_t steps);
/// Loads a stage checkpoint; throws missing-checkpoint if the file does not exist.
void load_stage(const std::filesystem::path& dir, TripleNet& net, Stage stage);

}  // namespace dts
