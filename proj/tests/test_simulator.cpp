#include <doctest.h>

#include <cmath>

#include "ctpnp/errors.hpp"
#include "ctpnp/projector.hpp"
#include "ctpnp/simulator.hpp"
#include "oracles.hpp"

using namespace ctpnp;

namespace {

ConeBeamGeometry small_geometry() {
  ConeBeamGeometry g;
  g.vol_dims = {24, 24, 24};
  g.det_rows = 37;
  g.det_cols = 48;
  return g;
}

PhotonCounts constant_counts(std::size_t n, double value) {
  ProjectionSet p(1, 1, n, {0.0});
  for (auto& v : p.data) v = value;
  return {p, 1e6};
}

}  // namespace

TEST_CASE("empty spec gives an empty phantom") {
  const Phantom ph = build_phantom(PhantomSpec{}, {8, 8, 8}, 1.0);
  CHECK(ph.defects.empty());
  for (double v : ph.volume.data) REQUIRE(v == 0.0);
}

TEST_CASE("sphere voxel count follows the analytic volume") {
  PhantomSpec spec;
  spec.body.push_back({Sphere{{0, 0, 0}, 10.0}, 0.5});
  const Phantom ph = build_phantom(spec, {64, 64, 64}, 1.0);
  std::size_t n = 0;
  for (double v : ph.volume.data) n += v != 0.0;
  const double analytic = 4.0 / 3.0 * M_PI * 1000.0;
  CHECK(std::abs(static_cast<double>(n) - analytic) < 0.04 * analytic);
}

TEST_CASE("cylinder with one pore") {
  PhantomSpec spec;
  spec.body.push_back({Cylinder{0, 0, 10.0, -10.0, 10.0}, 0.03});
  spec.pores.push_back({{1.0, -2.0, 0.5}, 5.0 * 0.5});
  const Phantom ph = build_phantom(spec, {32, 32, 32}, 0.5);
  REQUIRE(ph.defects.size() == 1);
  CHECK(ph.defects[0].diameter_mm == 2.5);
  CHECK(ph.defects[0].center_voxel[0] == doctest::Approx(15.5 + 2.0));
  CHECK(ph.defects[0].center_voxel[1] == doctest::Approx(15.5 - 4.0));
  CHECK(ph.defects[0].center_voxel[2] == doctest::Approx(15.5 + 1.0));
  // Every pore voxel is empty; the body around it is not.
  for (std::size_t idx : defect_voxels(ph.defects[0], ph.volume.dims, 0.5)) CHECK(ph.volume.data[idx] == 0.0);
  CHECK(ph.volume.at(15, 15, 15) == 0.03);
}

TEST_CASE("later solids take precedence") {
  PhantomSpec spec;
  spec.body.push_back({Box{{-5, -5, -5}, {5, 5, 5}}, 0.01});
  spec.body.push_back({Sphere{{0, 0, 0}, 2.0}, 0.04});
  const Phantom ph = build_phantom(spec, {16, 16, 16}, 1.0);
  CHECK(ph.volume.at(8, 8, 8) == 0.04);
  CHECK(ph.volume.at(4, 4, 4) == 0.01);
  CHECK(ph.volume.at(0, 0, 0) == 0.0);
}

TEST_CASE("invalid pores are rejected") {
  PhantomSpec spec;
  spec.body.push_back({Cylinder{0, 0, 10.0, -10.0, 10.0}, 0.03});
  spec.pores = {{{9.5, 0, 0}, 2.0}};
  CHECK_THROWS_AS(build_phantom(spec, {32, 32, 32}, 1.0), SpecError);
  spec.pores = {{{0, 0, 0}, 4.0}, {{1, 0, 0}, 4.0}};
  CHECK_THROWS_AS(build_phantom(spec, {32, 32, 32}, 1.0), SpecError);
  spec.pores = {{{0, 0, 0}, 0.0}};
  CHECK_THROWS_AS(build_phantom(spec, {32, 32, 32}, 1.0), SpecError);
}

TEST_CASE("random pores are seeded and keep their clearances") {
  PhantomSpec spec;
  spec.body.push_back({Cylinder{0, 0, 20.0, -20.0, 20.0}, 0.02});
  spec.random_pores = RandomPores{12, 2.0, 5.0};
  spec.rng_seed = 4;
  const auto a = resolve_pores(spec), b = resolve_pores(spec);
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].center_mm == b[i].center_mm);
    const double r = 0.5 * a[i].diameter_mm;
    CHECK(r >= 1.0);
    CHECK(r <= 2.5);
    // One radius of wall to the cylinder surface and caps.
    CHECK(std::hypot(a[i].center_mm[0], a[i].center_mm[1]) + 2 * r <= 20.0 + 1e-9);
    CHECK(std::abs(a[i].center_mm[2]) + 2 * r <= 20.0 + 1e-9);
    for (std::size_t j = 0; j < i; ++j) {
      const double rj = 0.5 * a[j].diameter_mm;
      const double d = std::sqrt(std::pow(a[i].center_mm[0] - a[j].center_mm[0], 2) +
                                 std::pow(a[i].center_mm[1] - a[j].center_mm[1], 2) +
                                 std::pow(a[i].center_mm[2] - a[j].center_mm[2], 2));
      CHECK(d >= r + rj + std::max(r, rj));
    }
  }
  spec.rng_seed = 5;
  CHECK(resolve_pores(spec)[0].center_mm != a[0].center_mm);
}

TEST_CASE("photon counts from path integrals") {
  const Spectrum mono = Spectrum::monochromatic();
  CHECK(polychromatic_intensity(0.0, mono, 1e4) == 1e4);
  CHECK(polychromatic_intensity(std::log(2.0), mono, 1e4) == doctest::Approx(5e3).epsilon(1e-15));
  const Spectrum two{{{0.5, 1.5}, {0.5, 0.5}}};
  CHECK(polychromatic_intensity(1.0, two, 1.0) == doctest::Approx(0.5 * std::exp(-1.5) + 0.5 * std::exp(-0.5)));
  CHECK(polychromatic_intensity(1.0, two, 1.0) == doctest::Approx(0.4148304).epsilon(1e-6));
  CHECK(polychromatic_intensity(0.0, Spectrum::polychromatic(), 7.0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("spectrum validation") {
  CHECK_NOTHROW(Spectrum::polychromatic().validate());
  CHECK_THROWS_AS((Spectrum{{{0.5, 1.0}, {0.6, 0.5}}}.validate()), ParamError);
  CHECK_THROWS_AS((Spectrum{{{0.5, 1.0}, {0.5, 1.0}}}.validate()), ParamError);
  CHECK_THROWS_AS((Spectrum{{{1.0, 0.0}}}.validate()), ParamError);
  CHECK_THROWS_AS(Spectrum{}.validate(), ParamError);
}

TEST_CASE("beam hardening makes attenuation sub-linear in path length") {
  const Spectrum s = Spectrum::polychromatic();
  for (double p : {0.01, 0.1, 0.5, 1.0, 3.0}) {
    const double y1 = -std::log(polychromatic_intensity(p, s, 1.0));
    const double y2 = -std::log(polychromatic_intensity(2 * p, s, 1.0));
    CHECK(y2 < 2 * y1);
  }
}

TEST_CASE("noise: sigma zero is the identity, moments follow W sigma^2") {
  const PhotonCounts W = constant_counts(100000, 1e4);
  const PhotonCounts same = add_noise(W, 0.0, 1);
  CHECK(same.counts.data == W.counts.data);
  CHECK_THROWS_AS(add_noise(W, -0.1, 1), ParamError);
  for (double sigma : {0.5, 1.0}) {
    const auto noisy = add_noise(W, sigma, 9).counts.data;
    double m = 0.0;
    for (double v : noisy) m += v;
    m /= static_cast<double>(noisy.size());
    double var = 0.0;
    for (double v : noisy) var += (v - m) * (v - m);
    var /= static_cast<double>(noisy.size() - 1);
    const double target = 1e4 * sigma * sigma;
    CHECK(std::abs(var - target) < 0.02 * target);
    CHECK(std::abs(m - 1e4) < 3.0 * std::sqrt(target / static_cast<double>(noisy.size())));
  }
  CHECK(add_noise(W, 1.0, 3).counts.data == add_noise(W, 1.0, 3).counts.data);
  CHECK(add_noise(W, 1.0, 3).counts.data != add_noise(W, 1.0, 4).counts.data);
}

TEST_CASE("noise clamps at the count floor") {
  const PhotonCounts W = constant_counts(1000, 1.0);
  for (double v : add_noise(W, 50.0, 2).counts.data) CHECK(v >= count_floor(W.I0));
}

TEST_CASE("log normalization") {
  PhotonCounts W = constant_counts(3, 1.0);
  W.I0 = 10.0;
  W.counts.data = {10.0, 10.0 * std::exp(-3.0), -5.0};
  const auto y = log_normalize(W);
  CHECK(y.data[0] == 0.0);
  CHECK(y.data[1] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(y.data[2] == doctest::Approx(-std::log(1e-6)));
}

TEST_CASE("monochromatic noiseless pipeline recovers the line integrals") {
  const auto g = with_views(small_geometry(), ScanKind::FullScan, 12);
  PhantomSpec spec;
  spec.body.push_back({Cylinder{0, 0, 9.0, -9.0, 9.0}, 0.02});
  const Volume v = build_phantom(spec, g.vol_dims, g.voxel_size_mm).volume;
  const auto direct = forward_project(v, g);
  const auto y = log_normalize(project_counts(v, g, Spectrum::monochromatic(), 1e4));
  for (std::size_t i = 0; i < y.data.size(); ++i) REQUIRE(std::abs(y.data[i] - direct.data[i]) < 1e-10);
  // A one-bin spectrum is the monochromatic case bit for bit.
  CHECK(project_counts(v, g, Spectrum{{{1.0, 1.0}}}, 1e4).counts.data ==
        project_counts(v, g, Spectrum::monochromatic(), 1e4).counts.data);
}

TEST_CASE("paired scans") {
  PhantomSpec spec;
  spec.body.push_back({Cylinder{0, 0, 9.0, -9.0, 9.0}, 0.02});
  spec.pores.push_back({{2.0, 0.0, 0.0}, 3.0});
  const auto base = small_geometry();
  const ScanSettings ref{ScanKind::FullScan, 24, 0.0, Spectrum::monochromatic()};
  // Degenerate pair: the input scan is the reference scan.
  const ScanPair same = simulate_pair(spec, base, ref, ref, 1e4, 3);
  CHECK(same.input.projections.data == same.reference.projections.data);
  CHECK(same.phantom.defects.size() == 1);

  const ScanSettings in{ScanKind::ShortScan, 12, 1.0, Spectrum::polychromatic()};
  const ScanPair a = simulate_pair(spec, base, in, ref, 1e4, 3), b = simulate_pair(spec, base, in, ref, 1e4, 3);
  CHECK(a.input.projections.data == b.input.projections.data);
  CHECK(a.input.geom.n_views() == 12);
  CHECK(a.input.geom.scan_kind == ScanKind::ShortScan);
  CHECK(a.reference.geom.n_views() == 24);
}
