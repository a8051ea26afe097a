#include "ctpnp/fdk.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>

#include "ctpnp/errors.hpp"

namespace ctpnp {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Real frequency response of the (optionally apodized) Ram-Lak kernel.
std::vector<double> kernel_response(std::size_t P, FilterKind kind) {
  auto taps = fftw_buffer<double>(P);
  auto spec = fftw_buffer<fftw_complex>(P / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(P), taps.get(), spec.get(), FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < P; ++i) taps[i] = 0.0;
  taps[0] = ramlak_tap(0);
  for (std::size_t k = 1; k <= P / 2; ++k) {
    const double t = ramlak_tap(static_cast<long>(k));
    taps[k] = t;
    taps[P - k] = t;
  }
  fftw_execute(plan);
  std::vector<double> H(P / 2 + 1);
  for (std::size_t f = 0; f <= P / 2; ++f) {
    H[f] = spec[f][0];
    if (kind == FilterKind::Hann)
      H[f] *= 0.5 * (1.0 + std::cos(2.0 * kPi * static_cast<double>(f) / static_cast<double>(P)));
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return H;
}

void check_shape(const ProjectionSet& p, const ConeBeamGeometry& g) {
  if (p.n_views != g.n_views() || p.det_rows != g.det_rows || p.det_cols != g.det_cols ||
      p.data.size() != p.n_views * p.det_rows * p.det_cols)
    throw ShapeError("fdk: projection shape does not match geometry");
}

}  // namespace

double parker_weight(double beta, double gamma, double half_fan) {
  const double d = half_fan;
  if (beta < 0.0 || beta > kPi + 2.0 * d) return 0.0;
  if (beta < 2.0 * (d + gamma)) {
    const double s = std::sin(0.25 * kPi * beta / (d + gamma));
    return s * s;
  }
  if (beta <= kPi + 2.0 * gamma) return 1.0;
  const double s = std::sin(0.25 * kPi * (kPi + 2.0 * d - beta) / (d - gamma));
  return s * s;
}

ParkerWeights parker_weights(const ConeBeamGeometry& geom) {
  if (geom.scan_kind != ScanKind::ShortScan) throw NotShortScan("Parker weights need a short scan");
  ParkerWeights out{geom.n_views(), geom.det_cols, std::vector<double>(geom.n_views() * geom.det_cols)};
  const double half_fan = 0.5 * deg2rad(fan_angle(geom).value_deg);
  const double a0 = geom.angles_deg.front();
  for (std::size_t v = 0; v < geom.n_views(); ++v) {
    const double beta = deg2rad(geom.angles_deg[v] - a0);
    for (std::size_t c = 0; c < geom.det_cols; ++c) {
      const double u = (static_cast<double>(c) - 0.5 * static_cast<double>(geom.det_cols - 1)) * geom.pixel_pitch_mm;
      const double gamma = std::atan(u / geom.source_detector_dist_mm);
      out.w[v * geom.det_cols + c] = parker_weight(beta, gamma, half_fan);
    }
  }
  return out;
}

double ramlak_tap(long k) {
  if (k == 0) return 0.25;
  if (k % 2 == 0) return 0.0;
  const double kd = static_cast<double>(k);
  return -1.0 / (kPi * kPi * kd * kd);
}

std::size_t resolve_padded_len(const FilterSpec& spec, std::size_t det_cols) {
  if (spec.padded_len == 0) {
    std::size_t P = 1;
    while (P < 2 * det_cols) P <<= 1;
    return P;
  }
  if (!is_pow2(spec.padded_len) || spec.padded_len < 2 * det_cols)
    throw ParamError("padded_len must be a power of two >= 2 * det_cols, got " + std::to_string(spec.padded_len));
  return spec.padded_len;
}

ProjectionSet ramp_filter(const ProjectionSet& projs, const FilterSpec& spec) {
  const std::size_t cols = projs.det_cols;
  const std::size_t P = resolve_padded_len(spec, cols);
  const std::vector<double> H = kernel_response(P, spec.kind);

  auto probe_in = fftw_buffer<double>(P);
  auto probe_out = fftw_buffer<fftw_complex>(P / 2 + 1);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(P), probe_in.get(), probe_out.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(P), probe_out.get(), probe_in.get(), FFTW_ESTIMATE);
  }

  ProjectionSet out(projs.n_views, projs.det_rows, cols, projs.angles_deg);
  const long nrows = static_cast<long>(projs.n_views * projs.det_rows);
#pragma omp parallel
  {
    auto buf = fftw_buffer<double>(P);
    auto freq = fftw_buffer<fftw_complex>(P / 2 + 1);
#pragma omp for schedule(static)
    for (long row = 0; row < nrows; ++row) {
      const double* src = projs.data.data() + static_cast<std::size_t>(row) * cols;
      for (std::size_t i = 0; i < P; ++i) buf[i] = i < cols ? src[i] : 0.0;
      fftw_execute_dft_r2c(fwd, buf.get(), freq.get());
      for (std::size_t f = 0; f <= P / 2; ++f) {
        freq[f][0] *= H[f];
        freq[f][1] *= H[f];
      }
      fftw_execute_dft_c2r(inv, freq.get(), buf.get());
      double* dst = out.data.data() + static_cast<std::size_t>(row) * cols;
      const double scale = 1.0 / static_cast<double>(P);
      for (std::size_t i = 0; i < cols; ++i) dst[i] = buf[i] * scale;
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  return out;
}

Volume fdk_reconstruct(const ProjectionSet& projs, const ConeBeamGeometry& geom, const FilterSpec& spec) {
  check_shape(projs, geom);
  const double sod = geom.source_object_dist_mm;
  const double sdd = geom.source_detector_dist_mm;
  const double pitch = geom.pixel_pitch_mm;
  const std::size_t rows = geom.det_rows, cols = geom.det_cols, nviews = geom.n_views();
  const double rc = 0.5 * static_cast<double>(rows - 1);
  const double cc = 0.5 * static_cast<double>(cols - 1);

  // Cosine and (short-scan) redundancy weighting.
  ProjectionSet weighted = projs;
  const bool short_scan = geom.scan_kind == ScanKind::ShortScan;
  ParkerWeights parker;
  if (short_scan) parker = parker_weights(geom);
  for (std::size_t v = 0; v < nviews; ++v)
    for (std::size_t r = 0; r < rows; ++r) {
      const double vv = (static_cast<double>(r) - rc) * pitch;
      for (std::size_t c = 0; c < cols; ++c) {
        const double uu = (static_cast<double>(c) - cc) * pitch;
        double w = sdd / std::sqrt(sdd * sdd + uu * uu + vv * vv);
        if (short_scan) w *= parker.at(v, c);
        weighted.at(v, r, c) *= w;
      }
    }

  const ProjectionSet filtered = ramp_filter(weighted, spec);

  // Angular step: the scan arc divided by the view count; full scans count
  // each ray twice.
  const double arc_deg = short_scan ? 180.0 + fan_angle(geom).value_deg : 360.0;
  const double dbeta = deg2rad(arc_deg) / static_cast<double>(nviews);
  const double redundancy = short_scan ? 1.0 : 0.5;
  const double iso_pitch = pitch * sod / sdd;
  const double scale = redundancy * dbeta / iso_pitch;

  std::vector<double> cb(nviews), sb(nviews);
  for (std::size_t v = 0; v < nviews; ++v) {
    cb[v] = std::cos(deg2rad(geom.angles_deg[v]));
    sb[v] = std::sin(deg2rad(geom.angles_deg[v]));
  }

  const Dims3 d = geom.vol_dims;
  const double vs = geom.voxel_size_mm;
  Volume out(d, vs);
  const double cx = 0.5 * static_cast<double>(d.nx - 1);
  const double cy = 0.5 * static_cast<double>(d.ny - 1);
  const double cz = 0.5 * static_cast<double>(d.nz - 1);
  const long nz = static_cast<long>(d.nz);
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < nz; ++k) {
    const double z = (static_cast<double>(k) - cz) * vs;
    for (std::size_t j = 0; j < d.ny; ++j) {
      const double y = (static_cast<double>(j) - cy) * vs;
      for (std::size_t i = 0; i < d.nx; ++i) {
        const double x = (static_cast<double>(i) - cx) * vs;
        double acc = 0.0;
        for (std::size_t v = 0; v < nviews; ++v) {
          const double t = x * cb[v] + y * sb[v];
          const double depth = sod - x * sb[v] + y * cb[v];
          const double mag = sdd / depth;
          const double fc = t * mag / pitch + cc;
          const double fr = z * mag / pitch + rc;
          const double fcf = std::floor(fc), frf = std::floor(fr);
          const long c0 = static_cast<long>(fcf), r0 = static_cast<long>(frf);
          const double wc = fc - fcf, wr = fr - frf;
          double sample = 0.0;
          for (int dr = 0; dr < 2; ++dr) {
            const long rr = r0 + dr;
            if (rr < 0 || rr >= static_cast<long>(rows)) continue;
            const double wrr = dr ? wr : 1.0 - wr;
            for (int dc = 0; dc < 2; ++dc) {
              const long ccol = c0 + dc;
              if (ccol < 0 || ccol >= static_cast<long>(cols)) continue;
              const double wcc = dc ? wc : 1.0 - wc;
              sample += wrr * wcc * filtered.at(v, static_cast<std::size_t>(rr), static_cast<std::size_t>(ccol));
            }
          }
          const double w = sod / depth;
          acc += w * w * sample;
        }
        out.at(i, j, static_cast<std::size_t>(k)) = acc * scale;
      }
    }
  }
  return out;
}

}  // namespace ctpnp
