#pragma once

#include "dts/nn/tensor.hpp"

namespace dts::nn {

/// Spatial layout of a conv input: 2D tensors are (N, C, H, W), 3D tensors (N, C, D, H, W).
struct ConvGeometry {
  std::size_t batch, in_channels, out_channels;
  std::size_t depth, height, width;
  std::size_t kd, kh, kw;
};

ConvGeometry conv_geometry(const std::vector<std::size_t>& x, const std::vector<std::size_t>& w, int dims);

/// Same-padded, stride-1 cross-correlation. x: (N, Cin, [D,] H, W); w: (Cout, Cin, [kD,] kH, kW); b: (Cout).
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int dims);

/// Accumulates dL/dx, dL/dw, dL/db for the convolution given dL/dy. Null outputs are skipped.
template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int dims, Tensor<T>* dx,
                   Tensor<T>* dw, Tensor<T>* db);

/// 2x average pooling over the spatial axes (which must be even).
template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x, int dims);
template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, int dims, Tensor<T>& dx);

/// 2x nearest-neighbour upsampling over the spatial axes.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x, int dims);
template <typename T>
void upsample2_backward(const Tensor<T>& dy, int dims, Tensor<T>& dx);

}  // namespace dts::nn
