#include "dts/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <sstream>

namespace dts::nn {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

ConvGeometry conv_geometry(const std::vector<std::size_t>& x, const std::vector<std::size_t>& w, int dims) {
  if (dims != 2 && dims != 3) fail(ErrorKind::invalid_argument, "conv: dims must be 2 or 3");
  std::size_t rank = static_cast<std::size_t>(dims) + 2;
  if (x.size() != rank || w.size() != rank)
    fail(ErrorKind::invalid_argument, "conv: expected rank-" + std::to_string(rank) + " input and weight, got " +
                                          shape_str(x) + " and " + shape_str(w));
  ConvGeometry g{};
  g.batch = x[0];
  g.in_channels = x[1];
  g.out_channels = w[0];
  if (w[1] != g.in_channels)
    fail(ErrorKind::invalid_argument, "conv: weight expects " + std::to_string(w[1]) + " input channels, got " +
                                          std::to_string(g.in_channels));
  if (dims == 2) {
    g.depth = 1;
    g.height = x[2];
    g.width = x[3];
    g.kd = 1;
    g.kh = w[2];
    g.kw = w[3];
  } else {
    g.depth = x[2];
    g.height = x[3];
    g.width = x[4];
    g.kd = w[2];
    g.kh = w[3];
    g.kw = w[4];
  }
  if (g.kd % 2 == 0 || g.kh % 2 == 0 || g.kw % 2 == 0) fail(ErrorKind::invalid_argument, "conv: kernel must be odd");
  return g;
}

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

constexpr std::size_t kColsBudget = std::size_t{1} << 21;

struct Tap {
  std::size_t channel;
  long dz, dy, dx;
};

std::vector<Tap> taps(const ConvGeometry& g) {
  std::vector<Tap> out;
  out.reserve(g.in_channels * g.kd * g.kh * g.kw);
  long rd = static_cast<long>(g.kd / 2), rh = static_cast<long>(g.kh / 2), rw = static_cast<long>(g.kw / 2);
  for (std::size_t c = 0; c < g.in_channels; ++c)
    for (long a = 0; a < static_cast<long>(g.kd); ++a)
      for (long b = 0; b < static_cast<long>(g.kh); ++b)
        for (long e = 0; e < static_cast<long>(g.kw); ++e) out.push_back({c, a - rd, b - rh, e - rw});
  return out;
}

// cols[r, p - p0] = x[channel, z + dz, y + dy, x + dx] (zero outside), p in [p0, p1).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, const std::vector<Tap>& tp, std::size_t p0, std::size_t p1, T* cols) {
  const long D = static_cast<long>(g.depth), H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  const std::size_t len = p1 - p0;
  const std::size_t plane = g.height * g.width;
  const std::size_t vol = g.depth * plane;
  for (std::size_t r = 0; r < tp.size(); ++r) {
    const Tap& t = tp[r];
    const T* src = x + t.channel * vol;
    T* dst = cols + r * len;
    std::size_t p = p0;
    long z = static_cast<long>(p0 / plane), y = static_cast<long>((p0 / g.width) % g.height),
         xx = static_cast<long>(p0 % g.width);
    while (p < p1) {
      // Process the remainder of the current image row in one run.
      std::size_t run = std::min<std::size_t>(p1 - p, static_cast<std::size_t>(W - xx));
      long sz = z + t.dz, sy = y + t.dy;
      T* out = dst + (p - p0);
      if (sz < 0 || sz >= D || sy < 0 || sy >= H) {
        std::fill(out, out + run, T{});
      } else {
        const T* row = src + (static_cast<std::size_t>(sz) * g.height + static_cast<std::size_t>(sy)) * g.width;
        for (std::size_t q = 0; q < run; ++q) {
          long sx = xx + static_cast<long>(q) + t.dx;
          out[q] = (sx < 0 || sx >= W) ? T{} : row[sx];
        }
      }
      p += run;
      xx = 0;
      if (++y == H) {
        y = 0;
        ++z;
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, const std::vector<Tap>& tp, std::size_t p0, std::size_t p1,
                T* dx) {
  const long D = static_cast<long>(g.depth), H = static_cast<long>(g.height), W = static_cast<long>(g.width);
  const std::size_t len = p1 - p0;
  const std::size_t plane = g.height * g.width;
  const std::size_t vol = g.depth * plane;
  for (std::size_t r = 0; r < tp.size(); ++r) {
    const Tap& t = tp[r];
    T* dst = dx + t.channel * vol;
    const T* src = cols + r * len;
    std::size_t p = p0;
    long z = static_cast<long>(p0 / plane), y = static_cast<long>((p0 / g.width) % g.height),
         xx = static_cast<long>(p0 % g.width);
    while (p < p1) {
      std::size_t run = std::min<std::size_t>(p1 - p, static_cast<std::size_t>(W - xx));
      long sz = z + t.dz, sy = y + t.dy;
      if (sz >= 0 && sz < D && sy >= 0 && sy < H) {
        T* row = dst + (static_cast<std::size_t>(sz) * g.height + static_cast<std::size_t>(sy)) * g.width;
        const T* in = src + (p - p0);
        for (std::size_t q = 0; q < run; ++q) {
          long sx = xx + static_cast<long>(q) + t.dx;
          if (sx >= 0 && sx < W) row[sx] += in[q];
        }
      }
      p += run;
      xx = 0;
      if (++y == H) {
        y = 0;
        ++z;
      }
    }
  }
}

std::size_t chunk_len(std::size_t k, std::size_t positions) {
  return std::max<std::size_t>(1, std::min(positions, kColsBudget / std::max<std::size_t>(k, 1)));
}

}  // namespace

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int dims) {
  ConvGeometry g = conv_geometry(x.shape(), w.shape(), dims);
  if (b.rank() != 1 || b.dim(0) != g.out_channels) fail(ErrorKind::invalid_argument, "conv: bias shape mismatch");
  auto yshape = x.shape();
  yshape[1] = g.out_channels;
  Tensor<T> y(yshape);
  const std::size_t P = g.depth * g.height * g.width;
  const auto tp = taps(g);
  const std::size_t K = tp.size();
  const std::size_t chunk = chunk_len(K, P);
  std::vector<T> cols(K * chunk);
  Eigen::Map<const MatR<T>> wm(w.data(), static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data() + n * g.in_channels * P;
    T* yn = y.data() + n * g.out_channels * P;
    for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
      std::size_t p1 = std::min(P, p0 + chunk);
      std::size_t len = p1 - p0;
      im2col(xn, g, tp, p0, p1, cols.data());
      Eigen::Map<const MatR<T>> cm(cols.data(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(len));
      StridedMap<T> ym(yn + p0, static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(len),
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(P)));
      ym.noalias() = wm * cm;
    }
    for (std::size_t c = 0; c < g.out_channels; ++c) {
      T bc = b[c];
      T* row = yn + c * P;
      for (std::size_t p = 0; p < P; ++p) row[p] += bc;
    }
  }
  return y;
}

template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, int dims, Tensor<T>* dx,
                   Tensor<T>* dw, Tensor<T>* db) {
  ConvGeometry g = conv_geometry(x.shape(), w.shape(), dims);
  const std::size_t P = g.depth * g.height * g.width;
  const auto tp = taps(g);
  const std::size_t K = tp.size();
  const std::size_t chunk = chunk_len(K, P);
  std::vector<T> cols(K * chunk);
  Eigen::Map<const MatR<T>> wm(w.data(), static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data() + n * g.in_channels * P;
    const T* dyn = dy.data() + n * g.out_channels * P;
    if (db) {
      for (std::size_t c = 0; c < g.out_channels; ++c) {
        T acc{};
        const T* row = dyn + c * P;
        for (std::size_t p = 0; p < P; ++p) acc += row[p];
        (*db)[c] += acc;
      }
    }
    for (std::size_t p0 = 0; p0 < P; p0 += chunk) {
      std::size_t p1 = std::min(P, p0 + chunk);
      auto len = static_cast<Eigen::Index>(p1 - p0);
      ConstStridedMap<T> dym(dyn + p0, static_cast<Eigen::Index>(g.out_channels), len,
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(P)));
      Eigen::Map<MatR<T>> cm(cols.data(), static_cast<Eigen::Index>(K), len);
      if (dw) {
        im2col(xn, g, tp, p0, p1, cols.data());
        Eigen::Map<MatR<T>> dwm(dw->data(), static_cast<Eigen::Index>(g.out_channels), static_cast<Eigen::Index>(K));
        dwm.noalias() += dym * cm.transpose();
      }
      if (dx) {
        cm.noalias() = wm.transpose() * dym;
        col2im_add(cols.data(), g, tp, p0, p1, dx->data() + n * g.in_channels * P);
      }
    }
  }
}

namespace {

struct Spatial {
  std::size_t outer, d, h, w;
};

Spatial spatial_of(const std::vector<std::size_t>& s, int dims) {
  if (dims == 2 && s.size() == 4) return {s[0] * s[1], 1, s[2], s[3]};
  if (dims == 3 && s.size() == 5) return {s[0] * s[1], s[2], s[3], s[4]};
  fail(ErrorKind::invalid_argument, "pool/upsample: rank does not match dims");
}

}  // namespace

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x, int dims) {
  Spatial s = spatial_of(x.shape(), dims);
  bool pool_d = dims == 3;
  if ((pool_d && s.d % 2) || s.h % 2 || s.w % 2) fail(ErrorKind::invalid_argument, "avg_pool2: odd spatial size");
  auto shape = x.shape();
  for (std::size_t a = 2; a < shape.size(); ++a) shape[a] /= 2;
  Tensor<T> y(shape);
  std::size_t od = pool_d ? s.d / 2 : 1, oh = s.h / 2, ow = s.w / 2;
  std::size_t fd = pool_d ? 2 : 1;
  T scale = T(1) / static_cast<T>(fd * 4);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          T acc{};
          for (std::size_t a = 0; a < fd; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t c = 0; c < 2; ++c)
                acc += x[((o * s.d + z * fd + a) * s.h + yy * 2 + b) * s.w + xx * 2 + c];
          y[((o * od + z) * oh + yy) * ow + xx] = acc * scale;
        }
  return y;
}

template <typename T>
void avg_pool2_backward(const Tensor<T>& dy, int dims, Tensor<T>& dx) {
  Spatial s = spatial_of(dx.shape(), dims);
  bool pool_d = dims == 3;
  std::size_t od = pool_d ? s.d / 2 : 1, oh = s.h / 2, ow = s.w / 2;
  std::size_t fd = pool_d ? 2 : 1;
  T scale = T(1) / static_cast<T>(fd * 4);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          T g = dy[((o * od + z) * oh + yy) * ow + xx] * scale;
          for (std::size_t a = 0; a < fd; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t c = 0; c < 2; ++c) dx[((o * s.d + z * fd + a) * s.h + yy * 2 + b) * s.w + xx * 2 + c] += g;
        }
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x, int dims) {
  Spatial s = spatial_of(x.shape(), dims);
  bool up_d = dims == 3;
  auto shape = x.shape();
  for (std::size_t a = 2; a < shape.size(); ++a) shape[a] *= 2;
  Tensor<T> y(shape);
  std::size_t fd = up_d ? 2 : 1;
  std::size_t od = s.d * fd, oh = s.h * 2, ow = s.w * 2;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx)
          y[((o * od + z) * oh + yy) * ow + xx] = x[((o * s.d + z / fd) * s.h + yy / 2) * s.w + xx / 2];
  return y;
}

template <typename T>
void upsample2_backward(const Tensor<T>& dy, int dims, Tensor<T>& dx) {
  Spatial s = spatial_of(dx.shape(), dims);
  bool up_d = dims == 3;
  std::size_t fd = up_d ? 2 : 1;
  std::size_t od = s.d * fd, oh = s.h * 2, ow = s.w * 2;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx)
          dx[((o * s.d + z / fd) * s.h + yy / 2) * s.w + xx / 2] += dy[((o * od + z) * oh + yy) * ow + xx];
}

#define DTS_INSTANTIATE(T)                                                                                  \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);            \
  template void conv_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, Tensor<T>*,     \
                                 Tensor<T>*, Tensor<T>*);                                                   \
  template Tensor<T> avg_pool2<T>(const Tensor<T>&, int);                                                   \
  template void avg_pool2_backward<T>(const Tensor<T>&, int, Tensor<T>&);                                   \
  template Tensor<T> upsample2<T>(const Tensor<T>&, int);                                                   \
  template void upsample2_backward<T>(const Tensor<T>&, int, Tensor<T>&);

DTS_INSTANTIATE(float)
DTS_INSTANTIATE(double)

}  // namespace dts::nn
