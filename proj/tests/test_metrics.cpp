#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ctpnp/errors.hpp"
#include "ctpnp/metrics.hpp"
#include "oracles.hpp"

using namespace ctpnp;

namespace {

Volume random_volume(Dims3 d, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Volume v(d, 1.0);
  v.data = oracle::random_vector(v.data.size(), seed, lo, hi);
  return v;
}

// Sample statistics over a full-image Gaussian window, from the definition.
double ssim_direct(const std::vector<double>& x, const std::vector<double>& y, int n, int win, double sigma,
                   double L) {
  std::vector<double> g(win);
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    g[i] = std::exp(-std::pow(i - (win - 1) / 2.0, 2) / (2 * sigma * sigma));
    gs += g[i];
  }
  const double c1 = std::pow(0.01 * L, 2), c2 = std::pow(0.03 * L, 2);
  double total = 0.0;
  int count = 0;
  for (int oy = 0; oy + win <= n; ++oy)
    for (int ox = 0; ox + win <= n; ++ox) {
      long double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) {
          const double w = g[a] * g[b] / (gs * gs);
          const double xv = x[(oy + a) * n + ox + b], yv = y[(oy + a) * n + ox + b];
          mx += w * xv;
          my += w * yv;
        }
      for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) {
          const double w = g[a] * g[b] / (gs * gs);
          const double dx = x[(oy + a) * n + ox + b] - mx, dy = y[(oy + a) * n + ox + b] - my;
          sxx += w * dx * dx;
          syy += w * dy * dy;
          sxy += w * dx * dy;
        }
      total += static_cast<double>(((2 * mx * my + c1) * (2 * sxy + c2)) /
                                   ((mx * mx + my * my + c1) * (sxx + syy + c2)));
      ++count;
    }
  return total / count;
}

Volume gaussian_region_volume(double mu, double sigma, std::uint64_t seed) {
  Volume v(Dims3{60, 60, 12}, 1.0);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(mu, sigma);
  for (double& x : v.data) x = n(gen);
  return v;
}

}  // namespace

TEST_CASE("NRMSE") {
  const Volume r = random_volume(Dims3{4, 4, 4}, 1);
  CHECK(nrmse(r, r) == 0.0);
  Volume twice = r;
  for (double& v : twice.data) v *= 2.0;
  CHECK(nrmse(twice, r) == doctest::Approx(1.0).epsilon(1e-15));
  Volume shifted = r;
  for (double& v : shifted.data) v += 0.25;
  CHECK(nrmse(shifted, r) == doctest::Approx(0.25 * 8.0 / oracle::norm(r.data)).epsilon(1e-13));
  CHECK_THROWS_AS(nrmse(r, Volume(Dims3{4, 4, 4}, 1.0)), MetricUndefined);
  CHECK_THROWS_AS(nrmse(r, Volume(Dims3{4, 4, 3}, 1.0)), ShapeError);
}

TEST_CASE("SSIM of an image with itself is exactly one") {
  const Volume r = random_volume(Dims3{20, 18, 3}, 2);
  CHECK(ssim(r, r) == 1.0);
  CHECK_THROWS_AS(ssim(r, Volume(Dims3{20, 18, 3}, 1.0)), MetricUndefined);
  CHECK_THROWS_AS(ssim(random_volume(Dims3{8, 8, 1}, 3), random_volume(Dims3{8, 8, 1}, 4)), ShapeError);
}

TEST_CASE("SSIM drops under heavy noise") {
  Volume ref(Dims3{48, 48, 2}, 1.0);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 48; ++j)
      for (std::size_t i = 0; i < 48; ++i) ref.at(i, j, k) = (i / 12 + j / 12) % 2 ? 1.0 : 0.0;
  Volume noisy = ref;
  const auto n = oracle::random_vector(noisy.data.size(), 5, -2.0, 2.0);
  for (std::size_t i = 0; i < n.size(); ++i) noisy.data[i] += n[i];
  CHECK(ssim(noisy, ref) < 0.5);
}

TEST_CASE("SSIM of a small image matches the definition") {
  const int n = 8;
  const auto x = oracle::random_vector(n * n, 6, 0.0, 1.0);
  const auto y = oracle::random_vector(n * n, 7, 0.0, 1.0);
  SsimOptions opt;
  opt.window = 5;
  opt.sigma = 1.5;
  const double s = ssim_image(x, y, n, n, 1.0, opt);
  CHECK(s == doctest::Approx(ssim_direct(x, y, n, 5, 1.5, 1.0)).epsilon(1e-12));
  Volume vx(Dims3{8, 8, 1}, 1.0), vy = vx;
  vx.data = x;
  vy.data = y;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  CHECK(ssim(vx, vy, opt) == doctest::Approx(ssim_direct(x, y, n, 5, 1.5, *hi - *lo)).epsilon(1e-12));
}

TEST_CASE("SSIM with a joint range is symmetric") {
  const Volume a = random_volume(Dims3{16, 16, 2}, 8), b = random_volume(Dims3{16, 16, 2}, 9, -0.5, 1.5);
  SsimOptions opt;
  opt.joint_range = true;
  CHECK(ssim(a, b, opt) == doctest::Approx(ssim(b, a, opt)).epsilon(1e-14));
}

TEST_CASE("SNR closed forms") {
  CHECK(snr_db(1.0, 0.1) == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(snr_db(1.0, 0.01) == doctest::Approx(40.0).epsilon(1e-14));
  CHECK(snr_db(2.0, 0.0) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(snr_db(0.0, 1.0), MetricUndefined);
}

TEST_CASE("SNR of seeded Gaussian regions") {
  RegionSpec region;
  region.z0 = 1;
  region.material = {5, 5, 50, 50};
  region.background = {0, 0, 10, 10};
  const double expect = 20.0 * std::log10(2.0 / 0.05);
  REQUIRE(expect == doctest::Approx(32.04).epsilon(1e-3));
  double mean = 0.0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const double s = snr(gaussian_region_volume(2.0, 0.05, 100 + t), region);
    CHECK(std::abs(s - expect) < 0.3);
    mean += s / 10.0;
  }
  CHECK(std::abs(mean - expect) < 0.3);
}

TEST_CASE("window statistics use the population deviation") {
  Volume v(Dims3{4, 1, 1}, 1.0);
  v.data = {1, 2, 3, 4};
  const RegionStats st = window_stats(v, 0, 1, Window2D{0, 0, 1, 4});
  CHECK(st.mean == 2.5);
  CHECK(st.stddev == doctest::Approx(std::sqrt(1.25)));
  CHECK(st.count == 4);
  CHECK_THROWS_AS(window_stats(v, 0, 1, Window2D{0, 1, 1, 4}), RangeError);
  RegionSpec bad;
  CHECK_THROWS_AS(bad.validate(v.dims), RangeError);
}

TEST_CASE("CNR") {
  CHECK(cnr_value({0.0, 0.1, 10}, {1.0, 0.1, 10}) == doctest::Approx(7.0711).epsilon(1e-4));
  CHECK(cnr_value({0.5, 0.1, 10}, {0.5, 0.2, 10}) == 0.0);
  CHECK(cnr_value({0.0, 0.0, 10}, {1.0, 0.0, 10}) == std::numeric_limits<double>::infinity());
  CHECK(cnr_value({1.0, 0.0, 10}, {1.0, 0.0, 10}) == 0.0);

  Volume v = gaussian_region_volume(0.0, 0.1, 7);
  for (std::size_t k = 0; k < v.dims.nz; ++k)
    for (std::size_t j = 30; j < 60; ++j)
      for (std::size_t i = 0; i < 60; ++i) v.at(i, j, k) += 1.0;
  RegionSpec region;
  region.background = {0, 0, 25, 50};
  region.material = {32, 0, 25, 50};
  const double c = cnr(v, region);
  CHECK(c == doctest::Approx(1.0 / std::sqrt(0.02)).epsilon(0.05));
  Volume v2 = v;
  for (double& x : v2.data) x *= 2.0;
  CHECK(cnr(v2, region) == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("line profiles") {
  Volume c(Dims3{6, 3, 2}, 1.0);
  for (double& x : c.data) x = 0.7;
  CHECK(line_profile(c, 1, 2) == std::vector<double>(6, 0.7));
  Volume r(Dims3{5, 2, 1}, 1.0);
  r.at(1, 1, 0) = 2.0;
  r.at(2, 1, 0) = 2.0;
  CHECK(line_profile(r, 0, 1) == std::vector<double>{0, 2, 2, 0, 0});
  CHECK_THROWS_AS(line_profile(r, 1, 0), RangeError);
  CHECK_THROWS_AS(line_profile(r, 0, 2), RangeError);
}

TEST_CASE("histogram binning") {
  const std::vector<double> v{0.0, 0.5, 1.0, 0.25, 0.999};
  const Histogram h = make_histogram(v, 4);
  CHECK(h.lo == 0.0);
  CHECK(h.width == 0.25);
  CHECK(h.counts == std::vector<std::uint64_t>{1, 1, 1, 2});
  CHECK_THROWS_AS(make_histogram(std::vector<double>{3.0, 3.0}, 4), DegenerateHistogram);
}

TEST_CASE("Otsu: two-valued data is split between the values") {
  std::vector<double> v(100, 0.0);
  for (std::size_t i = 0; i < 30; ++i) v[i] = 1.0;
  const double t = otsu_threshold(v);
  CHECK(t > 0.0);
  CHECK(t <= 1.0);
  for (double x : v) CHECK((x < t) == (x == 0.0));
  CHECK_THROWS_AS(otsu_threshold(std::vector<double>(10, 2.0)), DegenerateHistogram);
}

TEST_CASE("Otsu split equals the exhaustive search on random histograms") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<std::uint64_t> h(256);
    const int style = trial % 4;
    for (auto& c : h) {
      if (style == 0) c = gen() % 1000;
      else if (style == 1) c = (gen() % 5 == 0) ? gen() % 1000 : 0;
      else if (style == 2) c = gen() % 3;
      else c = gen() % 2 ? 7 : 0;
    }
    if (std::count_if(h.begin(), h.end(), [](auto c) { return c > 0; }) < 2) h[0] = h[255] = 1;
    REQUIRE(otsu_split(h) == oracle::otsu_bruteforce(h));
  }
  // Symmetric histogram: a tie between mirrored splits goes to the lower one.
  std::vector<std::uint64_t> sym{1, 0, 1, 0, 1};
  CHECK(otsu_split(sym) == oracle::otsu_bruteforce(sym));
  CHECK(otsu_split(sym) == 1);
}

TEST_CASE("Otsu on a Gaussian mixture") {
  std::mt19937_64 gen(77);
  std::normal_distribution<double> a(0.2, 0.05), b(0.8, 0.05);
  std::vector<double> v;
  for (int i = 0; i < 20000; ++i) v.push_back(i % 2 ? a(gen) : b(gen));
  const double t = otsu_threshold(v);
  CHECK(t > 0.4);
  CHECK(t < 0.6);

  // Affine maps carry the threshold along, within one bin.
  for (const auto [s, o] : {std::pair{3.0, -1.0}, std::pair{0.01, 5.0}}) {
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) w[i] = s * v[i] + o;
    const Histogram h = make_histogram(w, 256);
    CHECK(std::abs(otsu_threshold(w) - (s * t + o)) <= h.width * (1 + 1e-9));
  }
}
