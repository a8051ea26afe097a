#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctpnp/errors.hpp"
#include "ctpnp/pnp.hpp"
#include "ctpnp/simulator.hpp"
#include "oracles.hpp"

using namespace ctpnp;

namespace {

ConeBeamGeometry desk_geometry(std::size_t n, ScanKind kind, std::size_t views) {
  ConeBeamGeometry g;
  g.vol_dims = {n, n, n};
  g.det_cols = n + n / 2 + 8;
  g.det_rows = n + n / 4 + 5;
  if (g.det_rows % 2 == 0) ++g.det_rows;
  return with_views(g, kind, views);
}

// 3 x 2 x 2 voxels seen by 2 views of a 2 x 5 detector: a 20 x 12 system.
ConeBeamGeometry dense_geometry() {
  ConeBeamGeometry g;
  g.source_object_dist_mm = 100.0;
  g.source_detector_dist_mm = 200.0;
  g.det_rows = 2;
  g.det_cols = 5;
  g.pixel_pitch_mm = 2.0;
  g.vol_dims = {3, 2, 2};
  g.voxel_size_mm = 1.0;
  g.angles_deg = {0.0, 70.0};
  return g;
}

// Row-major m x n matrix of the projector, one column per unit voxel.
std::vector<double> dense_matrix(const ConeBeamGeometry& g, std::size_t& m, std::size_t& n) {
  n = g.vol_dims.count();
  m = g.n_views() * g.det_rows * g.det_cols;
  std::vector<double> A(m * n);
  for (std::size_t j = 0; j < n; ++j) {
    Volume e(g.vol_dims, g.voxel_size_mm);
    e.data[j] = 1.0;
    const auto col = forward_project(e, g).data;
    for (std::size_t i = 0; i < m; ++i) A[i * n + j] = col[i];
  }
  return A;
}

LinearMap matrix_map(const std::vector<double>& A, std::size_t m, std::size_t n) {
  return {[&A, m, n](std::span<const double> x) {
            std::vector<double> y(m, 0.0);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) y[i] += A[i * n + j] * x[j];
            return y;
          },
          [&A, m, n](std::span<const double> y) {
            std::vector<double> x(n, 0.0);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) x[j] += A[i * n + j] * y[i];
            return x;
          }};
}

std::vector<double> dense_solve(const std::vector<double>& A, std::size_t m, std::size_t n, double beta,
                                const std::vector<double>& y, const std::vector<double>& z) {
  std::vector<double> M(n * n, 0.0), b(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < m; ++i) s += static_cast<long double>(A[i * n + r]) * A[i * n + c];
      M[r * n + c] = static_cast<double>(s) + (r == c ? beta : 0.0);
    }
    long double s = 0.0L;
    for (std::size_t i = 0; i < m; ++i) s += static_cast<long double>(A[i * n + r]) * y[i];
    b[r] = static_cast<double>(s) + beta * z[r];
  }
  return oracle::solve_dense(M, b);
}

void check_objective_monotone(const CgStats& st) {
  for (std::size_t i = 1; i < st.objective.size(); ++i)
    CHECK(st.objective[i] <= st.objective[i - 1] * (1.0 + 1e-9) + 1e-300);
}

Volume random_volume(const ConeBeamGeometry& g, std::uint64_t seed, double lo = 0.0, double hi = 0.05) {
  Volume v(g.vol_dims, g.voxel_size_mm);
  v.data = oracle::random_vector(v.data.size(), seed, lo, hi);
  return v;
}

Volume flip_x(const Volume& v) {
  Volume out = v;
  for (std::size_t k = 0; k < v.dims.nz; ++k)
    for (std::size_t j = 0; j < v.dims.ny; ++j)
      for (std::size_t i = 0; i < v.dims.nx; ++i) out.at(v.dims.nx - 1 - i, j, k) = v.at(i, j, k);
  return out;
}

// x -> -x maps view angle b to -b (view n - k) and column c to cols-1-c.
ProjectionSet flip_views(const ProjectionSet& p) {
  ProjectionSet out = p;
  for (std::size_t v = 0; v < p.n_views; ++v)
    for (std::size_t r = 0; r < p.det_rows; ++r)
      for (std::size_t c = 0; c < p.det_cols; ++c)
        out.at((p.n_views - v) % p.n_views, r, p.det_cols - 1 - c) = p.at(v, r, c);
  return out;
}

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return oracle::norm(d) / oracle::norm(b);
}

}  // namespace

TEST_CASE("default hyperparameters") {
  const PnPConfig cfg;
  CHECK(cfg.K == 3);
  CHECK(cfg.cg_steps == 10);
  CHECK(cfg.n_sel == 5);
  REQUIRE(cfg.beta_grid.size() == 15);
  for (int i = 0; i <= 14; ++i) CHECK(cfg.beta_grid[static_cast<std::size_t>(i)] == std::pow(2.0, 1 - i));
  CHECK_NOTHROW(cfg.validate());
  PnPConfig bad = cfg;
  bad.beta_grid = {1.0, 1.0};
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = cfg;
  bad.beta_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ParamError);
  bad = cfg;
  bad.K = 0;
  CHECK_THROWS_AS(bad.validate(), ParamError);
}

TEST_CASE("CG: a consistent fixed point is returned unchanged") {
  const auto g = desk_geometry(16, ScanKind::FullScan, 8);
  const Volume x = random_volume(g, 1);
  const ProjectionSet y = forward_project(x, g);
  CgStats st;
  const Volume out = cg_solve(g, 0.5, x, y, x, 10, &st);
  CHECK(out.data == x.data);
  CHECK(st.residual_norms.size() == 1);
}

TEST_CASE("CG: a huge beta pins the solution to z") {
  const auto g = desk_geometry(16, ScanKind::FullScan, 8);
  const Volume z = random_volume(g, 2), x0 = random_volume(g, 3);
  ProjectionSet y = forward_project(random_volume(g, 4), g);
  CgStats st;
  const Volume out = cg_solve(g, 1e8, z, y, x0, 10, &st);
  CHECK(rel_diff(out.data, z.data) < 1e-6);
  check_objective_monotone(st);
}

TEST_CASE("CG matches the dense normal-equation solve") {
  const auto g = dense_geometry();
  std::size_t m = 0, n = 0;
  const auto A = dense_matrix(g, m, n);
  REQUIRE(m == 20);
  REQUIRE(n == 12);
  for (double beta : {1.0, 0.25, 0.01}) {
    const auto y = oracle::random_vector(m, 5);
    const auto z = oracle::random_vector(n, 6);
    const auto x0 = oracle::random_vector(n, 7);
    const auto direct = dense_solve(A, m, n, beta, y, z);
    Volume zv(g.vol_dims, 1.0), x0v(g.vol_dims, 1.0);
    zv.data = z;
    x0v.data = x0;
    ProjectionSet yp(g.n_views(), g.det_rows, g.det_cols, g.angles_deg);
    yp.data = y;
    CgStats st;
    const Volume x = cg_solve(g, beta, zv, yp, x0v, 40, &st);
    for (std::size_t i = 0; i < n; ++i) CHECK(x.data[i] == doctest::Approx(direct[i]).epsilon(1e-8).scale(1.0));
    check_objective_monotone(st);
    // The explicit matrix gives the same iterates as the projector.
    const auto xm = cg_normal_equations(matrix_map(A, m, n), beta, z, y, x0, 40);
    for (std::size_t i = 0; i < n; ++i) CHECK(xm[i] == doctest::Approx(direct[i]).epsilon(1e-8).scale(1.0));
  }
}

TEST_CASE("CG objective never increases on a desk-scale problem") {
  const auto g = desk_geometry(16, ScanKind::ShortScan, 12);
  const Volume z = random_volume(g, 8), x0 = random_volume(g, 9);
  ProjectionSet y = forward_project(random_volume(g, 10), g);
  for (auto& v : y.data) v += 0.01;
  for (double beta : {2.0, 1.0 / 64, std::ldexp(1.0, -13)}) {
    CgStats st;
    cg_solve(g, beta, z, y, x0, 10, &st);
    CHECK(st.residual_norms.size() == 11);
    check_objective_monotone(st);
    CHECK(st.objective.back() < st.objective.front());
  }
}

TEST_CASE("CG argument checks") {
  const auto g = desk_geometry(16, ScanKind::FullScan, 4);
  const Volume z(g.vol_dims, 1.0);
  const ProjectionSet y(g.n_views(), g.det_rows, g.det_cols, g.angles_deg);
  CHECK_THROWS_AS(cg_solve(g, 1.0, Volume(Dims3{16, 16, 8}, 1.0), y, z, 3), ShapeError);
  CHECK_THROWS_AS(cg_solve(g, 1.0, z, ProjectionSet(4, 3, g.det_cols, g.angles_deg), z, 3), ShapeError);
  CHECK_THROWS_AS(cg_solve(g, 0.0, z, y, z, 3), ParamError);
  CHECK_THROWS_AS(cg_solve(g, 1.0, z, y, z, 0), ParamError);
}

TEST_CASE("selection rule") {
  CHECK(select_from_residuals({0.5}, {3.0}, 0.05) == 0.5);
  const std::vector<double> grid{2, 1, 0.5, 0.25};
  CHECK(select_from_residuals(grid, {0, 0, 0, 0}, 0.05) == 2.0);
  CHECK(select_from_residuals(grid, {1.0, 0.2, 0.104, 0.1}, 0.05) == 0.5);
  CHECK(select_from_residuals(grid, {1.0, 0.2, 0.106, 0.1}, 0.05) == 0.25);
  CHECK(select_from_residuals(grid, {1.0, 0.2, 0.106, 0.1}, 0.0) == 0.25);
  CHECK_THROWS_AS(select_from_residuals({}, {}, 0.05), ParamError);
}

TEST_CASE("selection on the centre slab") {
  const auto g = desk_geometry(16, ScanKind::FullScan, 10);
  const auto rc = restrict_center(g, 3);
  const auto grid = default_beta_grid();

  // z inside the slab with noiseless data: every candidate fits exactly.
  Volume z(g.vol_dims, 1.0);
  const Volume slab_vals = random_volume(g, 11);
  for (std::size_t k = rc.slab_lo; k <= rc.slab_hi; ++k)
    std::copy(slab_vals.slice(k).begin(), slab_vals.slice(k).end(), z.slice(k).begin());
  const auto y_c = restrict_rows(forward_project(z, g), rc);
  Selection s = regularization_selection(z, g, rc, y_c, grid, 5);
  CHECK(s.beta == grid.front());
  for (double r : s.residuals) CHECK(r < 1e-12);

  s = regularization_selection(z, g, rc, y_c, {0.125}, 5);
  CHECK(s.beta == 0.125);

  // Smoothed anchor against different data: the residual grows with beta.
  const Volume other = random_volume(g, 12);
  const auto y2 = restrict_rows(forward_project(other, g), rc);
  s = regularization_selection(z, g, rc, y2, grid, 5);
  CHECK(std::find(grid.begin(), grid.end(), s.beta) != grid.end());
  for (std::size_t i = 1; i < s.residuals.size(); ++i) CHECK(s.residuals[i] <= s.residuals[i - 1] + 1e-6);
  CHECK_THROWS_AS(regularization_selection(z, g, rc, y2, {}, 5), ParamError);
}

TEST_CASE("exact solves: data residual is non-decreasing in beta") {
  const auto g = dense_geometry();
  std::size_t m = 0, n = 0;
  const auto A = dense_matrix(g, m, n);
  const auto y = oracle::random_vector(m, 13), z = oracle::random_vector(n, 14);
  double prev = -1.0;
  for (double beta : {std::ldexp(1.0, -13), 1.0 / 64, 0.25, 1.0, 2.0}) {
    const auto x = dense_solve(A, m, n, beta, y, z);
    std::vector<double> r = matrix_map(A, m, n).forward(x);
    for (std::size_t i = 0; i < m; ++i) r[i] -= y[i];
    const double res = oracle::norm(r);
    CHECK(res >= prev - 1e-12);
    prev = res;
  }
}

TEST_CASE("PnP: trace bookkeeping with the default schedule") {
  const auto g = desk_geometry(16, ScanKind::ShortScan, 12);
  ProjectionSet y = forward_project(random_volume(g, 15), g);
  const auto noise = oracle::random_vector(y.data.size(), 16, -0.01, 0.01);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += noise[i];
  const PnPConfig cfg;
  int calls = 0;
  const PnPResult r = pnp_reconstruct(
      y, g,
      [&calls](const Volume& v) {
        ++calls;
        return v;
      },
      cfg);
  CHECK(calls == 3);
  CHECK(r.trace.denoiser_calls == 3);
  CHECK(r.trace.selections == 3);
  CHECK(r.trace.cg_steps_total == 30);
  REQUIRE(r.trace.iterations.size() == 3);
  double t = r.trace.fdk_time_s;
  for (const auto& it : r.trace.iterations) {
    CHECK(std::find(cfg.beta_grid.begin(), cfg.beta_grid.end(), it.beta) != cfg.beta_grid.end());
    CHECK(it.selection_residuals.size() == 15);
    CHECK(it.cg_residual_norms.size() == 11);
    CHECK(it.objective_after <= it.objective_before);
    CHECK(it.wall_time_s >= t);
    CHECK(it.peak_memory_bytes > 0);
    t = it.wall_time_s;
  }
  CHECK(r.trace.iterations[2].peak_memory_bytes >= r.trace.iterations[0].peak_memory_bytes);
}

TEST_CASE("PnP: zero-parameter prior with a huge fixed beta stays at FDK") {
  const auto g = desk_geometry(16, ScanKind::ShortScan, 12);
  const ProjectionSet y = forward_project(random_volume(g, 17), g);
  PnPConfig cfg;
  cfg.K = 1;
  cfg.fixed_beta = 1e10;
  const PnPResult r = pnp_reconstruct(y, g, zero_params(Architecture{1, 2, 2, 1.0}), cfg);
  CHECK(r.trace.selections == 0);
  CHECK(rel_diff(r.volume.data, r.initial.data) < 1e-6);
}

TEST_CASE("PnP: identity prior with a fixed beta settles down") {
  const auto g = desk_geometry(16, ScanKind::ShortScan, 12);
  const ProjectionSet y = forward_project(random_volume(g, 18), g);
  PnPConfig cfg;
  cfg.K = 5;
  cfg.fixed_beta = 0.05;
  std::vector<Volume> inputs;
  const PnPResult r = pnp_reconstruct(
      y, g,
      [&inputs](const Volume& v) {
        inputs.push_back(v);
        return v;
      },
      cfg);
  inputs.push_back(r.volume);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < inputs.size(); ++k) {
    std::vector<double> d(inputs[k].data.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = inputs[k].data[i] - inputs[k - 1].data[i];
    const double step = oracle::norm(d);
    CHECK(step < prev);
    prev = step;
  }
}

TEST_CASE("CG commutes with the mirror symmetry of a full scan") {
  const auto g = desk_geometry(16, ScanKind::FullScan, 10);
  const Volume x = random_volume(g, 19), z = random_volume(g, 20);
  const ProjectionSet y = forward_project(x, g);
  const ProjectionSet yf = forward_project(flip_x(x), g);
  CHECK(rel_diff(yf.data, flip_views(y).data) < 1e-8);

  Volume x0(g.vol_dims, 1.0);
  const Volume a = cg_solve(g, 0.1, z, y, x0, 10);
  const Volume b = cg_solve(g, 0.1, flip_x(z), flip_views(y), x0, 10);
  CHECK(rel_diff(b.data, flip_x(a).data) < 1e-8);
}

TEST_CASE("PnP rejects mismatched inputs") {
  const auto g = desk_geometry(16, ScanKind::ShortScan, 12);
  const ProjectionSet y(11, g.det_rows, g.det_cols, std::vector<double>(11, 0.0));
  CHECK_THROWS_AS(pnp_reconstruct(y, g, [](const Volume& v) { return v; }, PnPConfig{}), ShapeError);
  const ProjectionSet ok(g.n_views(), g.det_rows, g.det_cols, g.angles_deg);
  CHECK_THROWS_AS(pnp_reconstruct(ok, g, [](const Volume&) { return Volume(Dims3{2, 2, 2}, 1.0); }, PnPConfig{}),
                  ShapeError);
}
