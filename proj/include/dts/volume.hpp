#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dts/error.hpp"

namespace dts {

/// Dense 3D grid. Axis order (x, y, z); z varies fastest: index = (i * ny + j) * nz + k.
template <typename T>
class Grid3 {
 public:
  Grid3() = default;
  Grid3(std::array<std::size_t, 3> shape, std::array<double, 3> spacing_mm, T fill = T{})
      : shape_(shape), spacing_(spacing_mm), data_(shape[0] * shape[1] * shape[2], fill) {}

  const std::array<std::size_t, 3>& shape() const { return shape_; }
  const std::array<double, 3>& spacing_mm() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * shape_[1] + j) * shape_[2] + k; }
  T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const { return data_[index(i, j, k)]; }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_layout(const Grid3& other) const { return shape_ == other.shape_ && spacing_ == other.spacing_; }
  template <typename U>
  bool same_layout(const Grid3<U>& other) const {
    return shape_ == other.shape() && spacing_ == other.spacing_mm();
  }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  std::array<std::size_t, 3> shape_{0, 0, 0};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using Volume3 = Grid3<float>;
using Mask3 = Grid3<std::uint8_t>;

template <typename T, typename U>
void require_same_layout(const Grid3<T>& a, const Grid3<U>& b, const char* what) {
  if (!a.same_layout(b)) fail(ErrorKind::geometry_mismatch, std::string(what) + ": volume layouts differ");
}

Volume3 subtract(const Volume3& a, const Volume3& b);
std::size_t count(const Mask3& m);

// Container: 64-byte little-endian header followed by the raw payload.
//   0  char[8]  magic "DTSVOL1\0"
//   8  u32      dtype (1 = f32, 2 = u8)
//  12  u32      rank (3)
//  16  u32[3]   shape (x, y, z)
//  28  f64[3]   spacing_mm
//  52  u8[12]   zero
void write_volume(const std::filesystem::path& path, const Volume3& v);
void write_mask(const std::filesystem::path& path, const Mask3& m);
Volume3 read_volume(const std::filesystem::path& path);
Mask3 read_mask(const std::filesystem::path& path);

enum class SlicePlane { axial, coronal, sagittal };

/// Window/level display mapping; values map to [level - window/2, level + window/2] -> [0, 255].
struct DisplayWindow {
  double level = 0.025;
  double window = 0.05;
};

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage render_slice(const Volume3& v, SlicePlane plane, std::size_t index, DisplayWindow win);
GrayImage hconcat(const std::vector<GrayImage>& panels, std::size_t gap = 2);
void write_png(const std::filesystem::path& path, const GrayImage& img);

}  // namespace dts
