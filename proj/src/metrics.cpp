#include "ctpnp/metrics.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "ctpnp/errors.hpp"
#include "ctpnp/parallel.hpp"

namespace ctpnp {

double nrmse(std::span<const double> x, std::span<const double> ref) {
  if (x.size() != ref.size()) throw ShapeError("nrmse: length mismatch");
  const double r = norm2(ref);
  if (!(r > 0.0)) throw MetricUndefined("nrmse: reference has zero norm");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - ref[i];
  return norm2(d) / r;
}

double nrmse(const Volume& x, const Volume& ref) {
  if (!(x.dims == ref.dims)) throw ShapeError("nrmse: volume dims differ");
  return nrmse(std::span<const double>(x.data), std::span<const double>(ref.data));
}

std::vector<double> gaussian_window(int size, double sigma) {
  if (size < 1 || !(sigma > 0.0)) throw ParamError("gaussian window needs size >= 1 and sigma > 0");
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double s = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - c;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    s += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= s;
  return g;
}

namespace {

// Valid-mode separable filtering: output is (h-n+1) x (w-n+1).
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t n = g.size();
  const std::size_t ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k] * img[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

double ssim_mean(std::span<const double> x, std::span<const double> ref, std::size_t h, std::size_t w, double L,
                 const SsimOptions& opt, std::size_t* n_out) {
  const auto g = gaussian_window(opt.window, opt.sigma);
  if (h < g.size() || w < g.size()) throw ShapeError("ssim: image smaller than the window");
  const double c1 = (opt.k1 * L) * (opt.k1 * L);
  const double c2 = (opt.k2 * L) * (opt.k2 * L);
  std::vector<double> a(x.begin(), x.end()), b(ref.begin(), ref.end()), aa(h * w), bb(h * w), ab(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, g), mu_b = filter_valid(b, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);
  double s = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
    s += num / den;
  }
  *n_out = mu_a.size();
  return s / static_cast<double>(mu_a.size());
}

}  // namespace

double ssim_image(std::span<const double> x, std::span<const double> ref, std::size_t h, std::size_t w,
                  double dynamic_range, const SsimOptions& opt) {
  if (x.size() != h * w || ref.size() != h * w) throw ShapeError("ssim: image size mismatch");
  if (!(dynamic_range > 0.0)) throw MetricUndefined("ssim: dynamic range is zero");
  std::size_t n = 0;
  return ssim_mean(x, ref, h, w, dynamic_range, opt, &n);
}

double ssim(const Volume& x, const Volume& ref, const SsimOptions& opt) {
  if (!(x.dims == ref.dims)) throw ShapeError("ssim: volume dims differ");
  if (ref.data.empty()) throw ShapeError("ssim: empty volume");
  auto [lo, hi] = std::minmax_element(ref.data.begin(), ref.data.end());
  double L = *hi - *lo;
  if (opt.joint_range) {
    auto [xl, xh] = std::minmax_element(x.data.begin(), x.data.end());
    L = std::max(*hi, *xh) - std::min(*lo, *xl);
  }
  if (!(L > 0.0)) throw MetricUndefined("ssim: reference is constant");
  double s = 0.0;
  for (std::size_t k = 0; k < ref.dims.nz; ++k) {
    std::size_t n = 0;
    s += ssim_mean(x.slice(k), ref.slice(k), ref.dims.ny, ref.dims.nx, L, opt, &n);
  }
  return s / static_cast<double>(ref.dims.nz);
}

void RegionSpec::validate(Dims3 dims) const {
  if (n_slices == 0) throw RangeError("region slice range is empty");
  if (z0 + n_slices > dims.nz) throw RangeError("region slice range exceeds the volume");
  for (const Window2D* w : {&background, &material}) {
    if (w->height == 0 || w->width == 0) throw RangeError("region window is empty");
    if (w->y0 + w->height > dims.ny || w->x0 + w->width > dims.nx)
      throw RangeError("region window exceeds the slice bounds");
  }
}

RegionStats window_stats(const Volume& vol, std::size_t z0, std::size_t n_slices, const Window2D& w) {
  if (n_slices == 0 || w.height == 0 || w.width == 0) throw RangeError("empty region");
  if (z0 + n_slices > vol.dims.nz || w.y0 + w.height > vol.dims.ny || w.x0 + w.width > vol.dims.nx)
    throw RangeError("region exceeds the volume");
  RegionStats st;
  st.count = n_slices * w.height * w.width;
  double s = 0.0;
  for (std::size_t k = z0; k < z0 + n_slices; ++k)
    for (std::size_t j = w.y0; j < w.y0 + w.height; ++j)
      for (std::size_t i = w.x0; i < w.x0 + w.width; ++i) s += vol.at(i, j, k);
  st.mean = s / static_cast<double>(st.count);
  double v = 0.0;
  for (std::size_t k = z0; k < z0 + n_slices; ++k)
    for (std::size_t j = w.y0; j < w.y0 + w.height; ++j)
      for (std::size_t i = w.x0; i < w.x0 + w.width; ++i) {
        const double d = vol.at(i, j, k) - st.mean;
        v += d * d;
      }
  st.stddev = std::sqrt(v / static_cast<double>(st.count));
  return st;
}

double snr_db(double mean, double stddev) {
  if (!(mean > 0.0)) throw MetricUndefined("snr: material mean must be positive");
  if (stddev == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(mean / stddev);
}

double snr(const Volume& vol, const RegionSpec& region) {
  region.validate(vol.dims);
  const RegionStats m = window_stats(vol, region.z0, region.n_slices, region.material);
  return snr_db(m.mean, m.stddev);
}

double cnr_value(const RegionStats& background, const RegionStats& material) {
  const double diff = std::abs(background.mean - material.mean);
  const double noise = std::sqrt(background.stddev * background.stddev + material.stddev * material.stddev);
  if (noise == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / noise;
}

double cnr(const Volume& vol, const RegionSpec& region) {
  region.validate(vol.dims);
  return cnr_value(window_stats(vol, region.z0, region.n_slices, region.background),
                   window_stats(vol, region.z0, region.n_slices, region.material));
}

std::vector<double> line_profile(const Volume& vol, std::size_t z, std::size_t row) {
  if (z >= vol.dims.nz || row >= vol.dims.ny) throw RangeError("line profile index outside the volume");
  const auto s = vol.slice(z);
  return {s.begin() + static_cast<std::ptrdiff_t>(row * vol.dims.nx),
          s.begin() + static_cast<std::ptrdiff_t>((row + 1) * vol.dims.nx)};
}

Histogram make_histogram(std::span<const double> values, std::size_t n_bins) {
  if (n_bins < 2) throw ParamError("histogram needs at least two bins");
  if (values.empty()) throw DegenerateHistogram("no values");
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw NumericError("non-finite value in histogram input");
  if (!(*hi > *lo)) throw DegenerateHistogram("all values are equal");
  Histogram h;
  h.lo = *lo;
  h.width = (*hi - *lo) / static_cast<double>(n_bins);
  h.counts.assign(n_bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - h.lo) / h.width);
    h.counts[std::min(b, n_bins - 1)] += 1;
  }
  return h;
}

std::size_t otsu_split(const std::vector<std::uint64_t>& counts) {
  using boost::multiprecision::cpp_int;
  const std::size_t n = counts.size();
  if (n < 2) throw DegenerateHistogram("fewer than two bins");
  cpp_int N = 0, S = 0;
  for (std::size_t i = 0; i < n; ++i) {
    N += counts[i];
    S += cpp_int(counts[i]) * i;
  }
  // With bin indices as values, N^2 times the between-class variance for
  // the split at k is (N s0 - S n0)^2 / (n0 n1).
  cpp_int n0 = 0, s0 = 0;
  cpp_int best_num = -1, best_den = 1;
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k) {
    n0 += counts[k - 1];
    s0 += cpp_int(counts[k - 1]) * (k - 1);
    const cpp_int n1 = N - n0;
    if (n0 == 0 || n1 == 0) continue;
    const cpp_int d = N * s0 - S * n0;
    const cpp_int num = d * d, den = n0 * n1;
    if (best == 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best = k;
    }
  }
  if (best == 0) throw DegenerateHistogram("histogram occupies a single bin");
  return best;
}

double otsu_threshold(std::span<const double> values, std::size_t n_bins) {
  const Histogram h = make_histogram(values, n_bins);
  return h.lo + static_cast<double>(otsu_split(h.counts)) * h.width;
}

double otsu_threshold(const Volume& vol, std::size_t n_bins) {
  return otsu_threshold(std::span<const double>(vol.data), n_bins);
}

}  // namespace ctpnp
