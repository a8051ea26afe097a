#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctpnp/types.hpp"

namespace ctpnp {

/// ||x - ref|| / ||ref||
double nrmse(const Volume& x, const Volume& ref);
double nrmse(std::span<const double> x, std::span<const double> ref);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  bool joint_range = false;  // L from the range of both images instead of ref
};

/// Mean local SSIM over the valid window positions of every axial slice,
/// averaged over slices.
double ssim(const Volume& x, const Volume& ref, const SsimOptions& opt = {});

/// Single 2D image, row-major h x w, with an explicit dynamic range.
double ssim_image(std::span<const double> x, std::span<const double> ref, std::size_t h, std::size_t w,
                  double dynamic_range, const SsimOptions& opt = {});

/// Normalized separable Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

struct Window2D {
  std::size_t y0 = 0, x0 = 0;
  std::size_t height = 50, width = 50;
};

struct RegionSpec {
  std::size_t z0 = 0;
  std::size_t n_slices = 10;
  Window2D background;
  Window2D material;

  void validate(Dims3 dims) const;
};

struct RegionStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

RegionStats window_stats(const Volume& vol, std::size_t z0, std::size_t n_slices, const Window2D& w);

/// 20 log10(mu / sigma); +inf when sigma is zero.
double snr_db(double mean, double stddev);
double snr(const Volume& vol, const RegionSpec& region);

/// |mu_b - mu_m| / sqrt(sigma_b^2 + sigma_m^2); +inf when both sigmas vanish.
double cnr_value(const RegionStats& background, const RegionStats& material);
double cnr(const Volume& vol, const RegionSpec& region);

std::vector<double> line_profile(const Volume& vol, std::size_t z, std::size_t row);

struct Histogram {
  double lo = 0.0;
  double width = 0.0;
  std::vector<std::uint64_t> counts;
};

/// n_bins equal bins over [min, max]; the maximum lands in the last bin.
Histogram make_histogram(std::span<const double> values, std::size_t n_bins);

/// Split index k in 1 .. n-1 (classes [0, k) and [k, n)) maximizing the
/// between-class variance, lowest k on ties. Exact integer arithmetic.
std::size_t otsu_split(const std::vector<std::uint64_t>& counts);

/// Threshold value lo + k * width; voxels below it form the low class.
double otsu_threshold(const Volume& vol, std::size_t n_bins = 256);
double otsu_threshold(std::span<const double> values, std::size_t n_bins = 256);

}  // namespace ctpnp
