#include "dts/recon.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "dts/parallel.hpp"

namespace dts {

namespace {
// FFTW planning is not thread-safe; execution with new-array functions is.
std::mutex g_fftw_plan_mutex;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

std::size_t RampFilterSpec::resolved_length(std::size_t cols) const {
  if (padded_len != 0) return padded_len;
  std::size_t p = 1;
  while (p < 2 * cols) p <<= 1;
  return p;
}

void RampFilterSpec::validate(std::size_t cols) const {
  std::size_t p = resolved_length(cols);
  require(is_pow2(p), "ramp filter: padded length must be a power of two");
  require(p >= 2 * cols, "ramp filter: padded length must be >= 2 * cols");
}

std::vector<double> ramp_transfer(RampKind kind, std::size_t padded_len, double pixel_mm) {
  require(is_pow2(padded_len) && padded_len >= 2, "ramp_transfer: padded length must be a power of two");
  require(pixel_mm > 0.0, "ramp_transfer: pixel spacing must be positive");
  std::size_t half = padded_len / 2;
  std::vector<double> h(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    double v = static_cast<double>(k) / (static_cast<double>(padded_len) * pixel_mm);
    if (kind == RampKind::hann)
      v *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(k) / static_cast<double>(half)));
    h[k] = v;
  }
  return h;
}

double ram_lak_kernel(long n, double tau) {
  if (n == 0) return 1.0 / (4.0 * tau * tau);
  if (n % 2 == 0) return 0.0;
  double dn = static_cast<double>(n);
  return -1.0 / (std::numbers::pi * std::numbers::pi * dn * dn * tau * tau);
}

namespace {

struct FftwPlans {
  std::size_t len;
  double* real;
  fftw_complex* spec;
  fftw_plan forward;
  fftw_plan inverse;

  explicit FftwPlans(std::size_t n) : len(n) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
  }
  ~FftwPlans() {
    {
      std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
      fftw_destroy_plan(forward);
      fftw_destroy_plan(inverse);
    }
    fftw_free(real);
    fftw_free(spec);
  }
  FftwPlans(const FftwPlans&) = delete;
  FftwPlans& operator=(const FftwPlans&) = delete;
};

}  // namespace

Projection2D ramp_filter(const Projection2D& p, const RampFilterSpec& spec) {
  spec.validate(p.cols);
  const std::size_t len = spec.resolved_length(p.cols);
  const auto transfer = ramp_transfer(spec.kind, len, p.pixel_mm);
  FftwPlans fft(len);
  Projection2D out(p.rows, p.cols, p.pixel_mm, p.theta_deg);
  // transfer[] is the DTFT of pixel_mm * h[n], so only the unnormalised c2r needs undoing.
  const double scale = 1.0 / static_cast<double>(len);
  for (std::size_t r = 0; r < p.rows; ++r) {
    std::fill(fft.real, fft.real + len, 0.0);
    for (std::size_t c = 0; c < p.cols; ++c) fft.real[c] = p.at(r, c);
    fftw_execute_dft_r2c(fft.forward, fft.real, fft.spec);
    for (std::size_t k = 0; k <= len / 2; ++k) {
      fft.spec[k][0] *= transfer[k];
      fft.spec[k][1] *= transfer[k];
    }
    fftw_execute_dft_c2r(fft.inverse, fft.spec, fft.real);
    for (std::size_t c = 0; c < p.cols; ++c) out.at(r, c) = static_cast<float>(fft.real[c] * scale);
  }
  return out;
}

ProjectionSet ramp_filter_all(const ProjectionSet& ps, const RampFilterSpec& spec, int threads) {
  ProjectionSet out;
  out.geometry = ps.geometry;
  out.projections.resize(ps.projections.size());
  parallel_for(ps.projections.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t v = b; v < e; ++v) out.projections[v] = ramp_filter(ps.projections[v], spec);
  });
  return out;
}

Volume3 backproject(const ProjectionSet& ps, const ConeBeamGeometry& geom, const BackprojectOptions& opts) {
  geom.validate();
  ps.check_against(geom);
  const auto shape = geom.volume_shape;
  Volume3 vol(shape, geom.voxel_spacing());

  struct View {
    Vec3 src;
    Vec3 central;  // unit vector from isocenter to source
    double src_dist;
    const Projection2D* proj;
  };
  std::vector<View> views;
  for (const auto& p : ps.projections) {
    Vec3 s = source_position(geom, p.theta_deg);
    double d = norm(s);
    views.push_back({s, (1.0 / d) * s, d, &p});
  }
  const double det_y = geom.detector_plane_y();
  const int ca = geom.column_axis();
  const int ra = geom.row_axis();
  const double pitch = geom.detector_pixel_mm;
  const double u_off = 0.5 * static_cast<double>(geom.detector_cols - 1);
  const double v_off = 0.5 * static_cast<double>(geom.detector_rows - 1);
  const double scale = geom.angles.spacing_rad() * (geom.sdd_mm / geom.sid_mm);
  const long cols = static_cast<long>(geom.detector_cols);
  const long rows = static_cast<long>(geom.detector_rows);

  parallel_for(shape[0], opts.threads, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i)
      for (std::size_t j = 0; j < shape[1]; ++j)
        for (std::size_t k = 0; k < shape[2]; ++k) {
          Vec3 x = voxel_center(geom, i, j, k);
          double acc = 0.0;
          for (const auto& view : views) {
            double t = (view.src.y - det_y) / (view.src.y - x.y);
            double pc = view.src[ca] + t * (x[ca] - view.src[ca]);
            double pr = view.src[ra] + t * (x[ra] - view.src[ra]);
            double u = pc / pitch + u_off;
            double v = pr / pitch + v_off;
            double fu = std::floor(u), fv = std::floor(v);
            long u0 = static_cast<long>(fu), v0 = static_cast<long>(fv);
            if (u0 < -1 || u0 >= cols || v0 < -1 || v0 >= rows) continue;
            double du = u - fu, dv = v - fv;
            auto px = [&](long r, long c) -> double {
              if (r < 0 || r >= rows || c < 0 || c >= cols) return 0.0;
              return view.proj->data[static_cast<std::size_t>(r * cols + c)];
            };
            double val = (1 - dv) * ((1 - du) * px(v0, u0) + du * px(v0, u0 + 1)) +
                         dv * ((1 - du) * px(v0 + 1, u0) + du * px(v0 + 1, u0 + 1));
            if (opts.distance_weight) {
              double s = dot(x, view.central);
              double w = view.src_dist / (view.src_dist - s);
              val *= w * w;
            }
            acc += val;
          }
          vol.at(i, j, k) = static_cast<float>(acc * scale);
        }
  });
  return vol;
}

Volume3 fbp(const ProjectionSet& ps, const ConeBeamGeometry& geom, const RampFilterSpec& spec,
            const BackprojectOptions& opts) {
  ps.check_against(geom);
  return backproject(ramp_filter_all(ps, spec, opts.threads), geom, opts);
}

void write_filter_spec(KeyValueFile& kv, const std::string& section, const RampFilterSpec& spec,
                       const BackprojectOptions& bp) {
  kv.set(section, "filter", spec.kind == RampKind::ram_lak ? "ram-lak" : "hann");
  kv.set(section, "padded_len", std::to_string(spec.padded_len));
  kv.set(section, "distance_weight", bp.distance_weight ? "true" : "false");
}

void read_filter_spec(const KeyValueFile& kv, const std::string& section, RampFilterSpec& spec,
                      BackprojectOptions& bp) {
  kv.reject_unknown(section, {"filter", "padded_len", "distance_weight"});
  if (auto f = kv.get(section, "filter")) {
    if (*f == "ram-lak") spec.kind = RampKind::ram_lak;
    else if (*f == "hann") spec.kind = RampKind::hann;
    else fail(ErrorKind::config, "[" + section + "] filter must be ram-lak or hann");
  }
  if (kv.has(section, "padded_len")) {
    long long p = kv.get_int(section, "padded_len");
    if (p < 0) fail(ErrorKind::config, "[" + section + "] padded_len must be >= 0");
    spec.padded_len = static_cast<std::size_t>(p);
  }
  if (auto w = kv.get(section, "distance_weight")) {
    if (*w == "true") bp.distance_weight = true;
    else if (*w == "false") bp.distance_weight = false;
    else fail(ErrorKind::config, "[" + section + "] distance_weight must be true or false");
  }
}

}  // namespace dts
