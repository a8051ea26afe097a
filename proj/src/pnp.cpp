#include "ctpnp/pnp.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "ctpnp/errors.hpp"
#include "ctpnp/parallel.hpp"

namespace ctpnp {
namespace {

std::size_t peak_rss_bytes() {
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  return static_cast<std::size_t>(ru.ru_maxrss) * 1024;
}

LinearMap full_operator(const ConeBeamGeometry& geom) {
  return {[&geom](std::span<const double> x) {
            Volume v(geom.vol_dims, geom.voxel_size_mm);
            std::copy(x.begin(), x.end(), v.data.begin());
            return forward_project(v, geom).data;
          },
          [&geom](std::span<const double> p) {
            ProjectionSet ps(geom.n_views(), geom.det_rows, geom.det_cols, geom.angles_deg);
            std::copy(p.begin(), p.end(), ps.data.begin());
            return back_project(ps, geom).data;
          }};
}

LinearMap center_operator(const ConeBeamGeometry& geom, const CenterRestriction& rc) {
  return {[&geom, rc](std::span<const double> x) {
            Volume v(Dims3{geom.vol_dims.nx, geom.vol_dims.ny, rc.slices()}, geom.voxel_size_mm);
            std::copy(x.begin(), x.end(), v.data.begin());
            return forward_project_center(v, geom, rc).data;
          },
          [&geom, rc](std::span<const double> p) {
            ProjectionSet ps(geom.n_views(), rc.rows(), geom.det_cols, geom.angles_deg);
            std::copy(p.begin(), p.end(), ps.data.begin());
            return back_project_center(ps, geom, rc).data;
          }};
}

}  // namespace

std::vector<double> default_beta_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 14; ++i) g.push_back(std::ldexp(1.0, 1 - i));
  return g;
}

void PnPConfig::validate() const {
  if (K < 1) throw ParamError("K must be >= 1");
  if (cg_steps < 1) throw ParamError("cg_steps must be >= 1");
  if (n_sel < 1) throw ParamError("n_sel must be >= 1");
  if (beta_grid.empty()) throw ParamError("beta grid is empty");
  for (std::size_t i = 0; i < beta_grid.size(); ++i) {
    if (!(beta_grid[i] > 0.0)) throw ParamError("beta grid values must be positive");
    if (i > 0 && !(beta_grid[i] < beta_grid[i - 1])) throw ParamError("beta grid must be strictly decreasing");
  }
  if (!(tau >= 0.0)) throw ParamError("tau must be >= 0");
  if (fixed_beta && !(*fixed_beta > 0.0)) throw ParamError("fixed beta must be positive");
  if (beta_scale && !(*beta_scale > 0.0)) throw ParamError("beta scale must be positive");
}

double data_term_scale(const ConeBeamGeometry& geom) {
  const Dims3 d = geom.vol_dims;
  Volume e(d, geom.voxel_size_mm);
  e.at(d.nx / 2, d.ny / 2, d.nz / 2) = 1.0;
  const double s = norm2(forward_project(e, geom).data);
  if (!(s > 0.0)) throw GeometryError("the central voxel is not seen by any detector pixel");
  return s * s;
}

double subproblem_objective(std::span<const double> Ax, std::span<const double> y, std::span<const double> x,
                            std::span<const double> z, double beta) {
  double data = 0.0, prox = 0.0;
  std::vector<double> diff(Ax.size());
  for (std::size_t i = 0; i < Ax.size(); ++i) diff[i] = Ax[i] - y[i];
  data = dot(diff, diff);
  diff.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - z[i];
  prox = dot(diff, diff);
  return 0.5 * data + 0.5 * beta * prox;
}

std::vector<double> cg_normal_equations(const LinearMap& A, double beta, std::span<const double> z,
                                        std::span<const double> y, std::span<const double> x0, int n_steps,
                                        CgStats* stats) {
  if (!(beta > 0.0)) throw ParamError("beta must be positive");
  if (n_steps < 1) throw ParamError("CG needs at least one step");
  if (z.size() != x0.size()) throw ShapeError("cg: z and x0 differ in length");

  const std::size_t n = x0.size();
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> Ax = A.forward(x);
  if (Ax.size() != y.size()) throw ShapeError("cg: measurement length mismatch");

  // b = A^T y + beta z ; r = b - (A^T A + beta I) x
  std::vector<double> r = A.adjoint(y);
  {
    const std::vector<double> AtAx = A.adjoint(Ax);
    for (std::size_t i = 0; i < n; ++i) r[i] += beta * z[i] - AtAx[i] - beta * x[i];
  }
  std::vector<double> b = A.adjoint(y);
  for (std::size_t i = 0; i < n; ++i) b[i] += beta * z[i];
  const double b_norm = norm2(b);
  const double stop = 1e-12 * (b_norm > 0.0 ? b_norm : 1.0);

  std::vector<double> p = r;
  double rr = dot(r, r);
  if (stats) {
    stats->residual_norms = {std::sqrt(rr)};
    stats->objective = {subproblem_objective(Ax, y, x, z, beta)};
  }
  for (int step = 0; step < n_steps; ++step) {
    if (std::sqrt(rr) < stop) break;
    const std::vector<double> Ap = A.forward(p);
    std::vector<double> q = A.adjoint(Ap);
    axpy(beta, p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) break;
    const double alpha = rr / pq;
    axpy(alpha, p, x);
    axpy(alpha, Ap, Ax);
    axpy(-alpha, q, r);
    const double rr_new = dot(r, r);
    const double ratio = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + ratio * p[i];
    rr = rr_new;
    if (stats) {
      stats->residual_norms.push_back(std::sqrt(rr));
      stats->objective.push_back(subproblem_objective(Ax, y, x, z, beta));
    }
  }
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("non-finite value in CG iterate");
  if (stats) stats->forward_of_x = std::move(Ax);
  return x;
}

Volume cg_solve(const ConeBeamGeometry& geom, double beta, const Volume& z, const ProjectionSet& y,
                const Volume& x0, int n_steps, CgStats* stats) {
  if (!(z.dims == geom.vol_dims) || !(x0.dims == geom.vol_dims)) throw ShapeError("cg_solve: volume dims");
  if (y.n_views != geom.n_views() || y.det_rows != geom.det_rows || y.det_cols != geom.det_cols)
    throw ShapeError("cg_solve: projection shape");
  Volume out(geom.vol_dims, geom.voxel_size_mm);
  out.data = cg_normal_equations(full_operator(geom), beta, z.data, y.data, x0.data, n_steps, stats);
  return out;
}

double select_from_residuals(const std::vector<double>& grid, const std::vector<double>& residuals, double tau) {
  if (grid.empty()) throw ParamError("beta grid is empty");
  if (grid.size() != residuals.size()) throw ShapeError("selection residual count");
  const double best = *std::min_element(residuals.begin(), residuals.end());
  const double limit = (1.0 + tau) * best + 1e-12;
  std::size_t pick = 0;
  double pick_beta = -1.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (residuals[i] <= limit && grid[i] > pick_beta) {
      pick = i;
      pick_beta = grid[i];
    }
  return grid[pick];
}

Selection regularization_selection(const Volume& z, const ConeBeamGeometry& geom, const CenterRestriction& rc,
                                   const ProjectionSet& y_c, const std::vector<double>& grid, int n_sel,
                                   double tau) {
  if (grid.empty()) throw ParamError("beta grid is empty");
  const Volume z_slab = extract_slab(z, rc);
  const LinearMap Ac = center_operator(geom, rc);
  const double yc_norm = norm2(y_c.data);
  Selection sel;
  for (double beta : grid) {
    CgStats st;
    cg_normal_equations(Ac, beta, z_slab.data, y_c.data, z_slab.data, n_sel, &st);
    std::vector<double> diff(st.forward_of_x.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = st.forward_of_x[i] - y_c.data[i];
    const double res = norm2(diff);
    sel.residuals.push_back(yc_norm > 0.0 ? res / yc_norm : res);
  }
  sel.beta = select_from_residuals(grid, sel.residuals, tau);
  return sel;
}

PnPResult pnp_reconstruct(const ProjectionSet& y, const ConeBeamGeometry& geom, const Denoiser& denoiser,
                          const PnPConfig& cfg) {
  cfg.validate();
  geom.validate();
  if (y.n_views != geom.n_views() || y.det_rows != geom.det_rows || y.det_cols != geom.det_cols)
    throw ShapeError("pnp: projections do not match geometry");
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  PnPResult res;
  res.initial = fdk_reconstruct(y, geom, cfg.fdk);
  res.trace.fdk_time_s = elapsed();
  const CenterRestriction rc = restrict_center(geom, cfg.half_rows);
  const ProjectionSet y_c = restrict_rows(y, rc);
  const double scale = cfg.beta_scale ? *cfg.beta_scale : data_term_scale(geom);
  res.trace.beta_scale = scale;
  std::vector<double> grid = cfg.beta_grid;
  for (double& b : grid) b *= scale;

  Volume x = res.initial;
  for (int k = 1; k <= cfg.K; ++k) {
    IterationTrace it;
    it.k = k;
    const Volume z = denoiser(x);
    res.trace.denoiser_calls += 1;
    if (!(z.dims == geom.vol_dims)) throw ShapeError("denoiser changed the volume shape");
    if (cfg.fixed_beta) {
      it.beta = *cfg.fixed_beta;
    } else {
      const Selection sel = regularization_selection(z, geom, rc, y_c, grid, cfg.n_sel, cfg.tau);
      res.trace.selections += 1;
      const auto pos = std::find(grid.begin(), grid.end(), sel.beta) - grid.begin();
      it.beta = cfg.beta_grid[static_cast<std::size_t>(pos)];
      it.selection_residuals = sel.residuals;
    }
    CgStats st;
    x = cg_solve(geom, it.beta * scale, z, y, x, cfg.cg_steps, &st);
    res.trace.cg_steps_total += static_cast<int>(st.residual_norms.size()) - 1;
    it.cg_residual_norms = st.residual_norms;
    it.cg_objective = st.objective;
    it.objective_before = st.objective.front();
    it.objective_after = st.objective.back();
    it.wall_time_s = elapsed();
    it.peak_memory_bytes = peak_rss_bytes();
    res.trace.iterations.push_back(std::move(it));
  }
  res.volume = std::move(x);
  return res;
}

PnPResult pnp_reconstruct(const ProjectionSet& y, const ConeBeamGeometry& geom, const PriorParams& prior,
                          const PnPConfig& cfg) {
  return pnp_reconstruct(y, geom, [&prior](const Volume& v) { return denoise_volume(prior, v); }, cfg);
}

}  // namespace ctpnp
