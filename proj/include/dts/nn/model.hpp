#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dts/nn/tape.hpp"

namespace dts::nn {

struct BlockSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Residual CNN layout. Spatial shape is preserved end to end.
struct ConvNetSpec {
  int dims = 2;
  std::size_t in_channels = 1;
  std::vector<BlockSpec> blocks = std::vector<BlockSpec>(4);
  std::size_t out_channels = 1;
  /// Adds one average-pool / upsample level around the residual blocks.
  bool pool = false;

  void validate() const;
  /// Canonical one-line description, e.g. "dims=3 in=2 blocks=16x3,16x3 out=1 pool=0".
  std::string str() const;
  static ConvNetSpec parse(const std::string& s);
  friend bool operator==(const ConvNetSpec&, const ConvNetSpec&) = default;
};

template <typename T>
class ConvNet {
 public:
  ConvNet(ConvNetSpec spec, std::uint64_t seed);

  /// Records the network on the tape. x: (N, in_channels, spatial...).
  Var forward(Tape<T>& tape, Var x);
  /// Inference without keeping a graph.
  Tensor<T> predict(const Tensor<T>& x) const;

  const ConvNetSpec& spec() const { return spec_; }
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  void zero_grad();
  std::size_t parameter_count() const;

 private:
  struct Conv {
    Parameter<T> w, b;
  };
  struct Block {
    Conv c1, c2;
    std::optional<Conv> proj;
  };

  Conv make_conv(std::size_t cin, std::size_t cout, std::size_t k, bool zero);
  Var apply(Tape<T>& tape, Conv& c, Var x);

  ConvNetSpec spec_;
  std::uint64_t rng_state_;
  Conv stem_;
  std::vector<Block> blocks_;
  Conv head_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam moments for a fixed parameter list.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;

  template <typename T>
  static AdamState for_parameters(const std::vector<Parameter<T>*>& params, AdamConfig config);
};

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState& state);

/// Checkpoint: magic, spec echo, step count, f32 parameters, optional Adam moments.
void write_checkpoint(const std::filesystem::path& path, const ConvNet<float>& net, std::uint64_t step,
                      const AdamState* adam = nullptr);
struct CheckpointInfo {
  ConvNetSpec spec;
  std::uint64_t step = 0;
  bool has_adam = false;
};
CheckpointInfo read_checkpoint(const std::filesystem::path& path, ConvNet<float>& net, AdamState* adam = nullptr);
CheckpointInfo peek_checkpoint(const std::filesystem::path& path);

}  // namespace dts::nn
