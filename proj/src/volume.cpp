#include "dts/volume.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "dts/binary_io.hpp"

namespace dts {

Volume3 subtract(const Volume3& a, const Volume3& b) {
  require_same_layout(a, b, "subtract");
  Volume3 out(a.shape(), a.spacing_mm());
  for (std::size_t n = 0; n < a.size(); ++n) out[n] = a[n] - b[n];
  return out;
}

std::size_t count(const Mask3& m) {
  std::size_t c = 0;
  for (auto v : m.data()) c += v ? 1 : 0;
  return c;
}

namespace {

constexpr char kMagic[8] = {'D', 'T', 'S', 'V', 'O', 'L', '1', '\0'};
constexpr std::uint32_t kF32 = 1;
constexpr std::uint32_t kU8 = 2;

template <typename T>
void write_grid(const std::filesystem::path& path, const Grid3<T>& g, std::uint32_t dtype) {
  ByteWriter w;
  w.raw(kMagic, 8);
  w.u32(dtype);
  w.u32(3);
  for (auto s : g.shape()) w.u32(static_cast<std::uint32_t>(s));
  for (auto s : g.spacing_mm()) w.f64(s);
  w.zeros(12);
  if constexpr (std::is_same_v<T, float>) {
    for (float v : g.data()) w.f32(v);
  } else {
    w.raw(g.data().data(), g.size());
  }
  w.save(path);
}

template <typename T>
Grid3<T> read_grid(const std::filesystem::path& path, std::uint32_t dtype) {
  ByteReader r = ByteReader::load(path);
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) fail(ErrorKind::io, path.string() + ": not a volume container");
  std::uint32_t dt = r.u32();
  if (dt != dtype) fail(ErrorKind::io, path.string() + ": unexpected dtype " + std::to_string(dt));
  if (r.u32() != 3) fail(ErrorKind::io, path.string() + ": unsupported rank");
  std::array<std::size_t, 3> shape{};
  for (auto& s : shape) s = r.u32();
  std::array<double, 3> spacing{};
  for (auto& s : spacing) s = r.f64();
  r.skip(12);
  Grid3<T> g(shape, spacing);
  if constexpr (std::is_same_v<T, float>) {
    for (auto& v : g.data()) v = r.f32();
  } else {
    r.raw(g.data().data(), g.size());
  }
  r.expect_end();
  return g;
}

}  // namespace

void write_volume(const std::filesystem::path& path, const Volume3& v) { write_grid(path, v, kF32); }
void write_mask(const std::filesystem::path& path, const Mask3& m) { write_grid(path, m, kU8); }
Volume3 read_volume(const std::filesystem::path& path) { return read_grid<float>(path, kF32); }
Mask3 read_mask(const std::filesystem::path& path) { return read_grid<std::uint8_t>(path, kU8); }

GrayImage render_slice(const Volume3& v, SlicePlane plane, std::size_t index, DisplayWindow win) {
  const auto& s = v.shape();
  // axial: fixed x (image z across, y down); coronal: fixed y (z across, x down);
  // sagittal: fixed z (y across, x down).
  std::size_t fixed_axis = plane == SlicePlane::axial ? 0 : (plane == SlicePlane::coronal ? 1 : 2);
  if (index >= s[fixed_axis]) fail(ErrorKind::invalid_argument, "render_slice: index out of range");
  require(win.window > 0.0, "render_slice: window must be positive");
  GrayImage img;
  double lo = win.level - 0.5 * win.window;
  auto map = [&](float x) {
    double t = (static_cast<double>(x) - lo) / win.window;
    return static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
  };
  if (plane == SlicePlane::axial) {
    img.width = s[2];
    img.height = s[1];
    img.pixels.resize(img.width * img.height);
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t k = 0; k < s[2]; ++k) img.pixels[(s[1] - 1 - j) * s[2] + k] = map(v.at(index, j, k));
  } else if (plane == SlicePlane::coronal) {
    img.width = s[2];
    img.height = s[0];
    img.pixels.resize(img.width * img.height);
    for (std::size_t i = 0; i < s[0]; ++i)
      for (std::size_t k = 0; k < s[2]; ++k) img.pixels[i * s[2] + k] = map(v.at(i, index, k));
  } else {
    img.width = s[1];
    img.height = s[0];
    img.pixels.resize(img.width * img.height);
    for (std::size_t i = 0; i < s[0]; ++i)
      for (std::size_t j = 0; j < s[1]; ++j) img.pixels[i * s[1] + j] = map(v.at(i, j, index));
  }
  return img;
}

GrayImage hconcat(const std::vector<GrayImage>& panels, std::size_t gap) {
  GrayImage out;
  for (const auto& p : panels) {
    out.height = std::max(out.height, p.height);
    out.width += p.width;
  }
  if (!panels.empty()) out.width += gap * (panels.size() - 1);
  out.pixels.assign(out.width * out.height, 0);
  std::size_t x0 = 0;
  for (const auto& p : panels) {
    for (std::size_t y = 0; y < p.height; ++y)
      std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(y * p.width), p.width,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>(y * out.width + x0));
    x0 += p.width + gap;
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  require(img.width > 0 && img.height > 0, "write_png: empty image");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!fp) fail(ErrorKind::io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace dts
