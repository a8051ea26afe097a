#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ctpnp/fdk.hpp"
#include "ctpnp/geometry.hpp"
#include "ctpnp/network.hpp"
#include "ctpnp/projector.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

/// {2^(1-i)} for i = 0 .. 14, largest first.
std::vector<double> default_beta_grid();

struct PnPConfig {
  int K = 3;
  int cg_steps = 10;
  std::vector<double> beta_grid = default_beta_grid();
  int n_sel = 5;
  std::size_t half_rows = 4;
  /// Selection keeps the largest beta whose centre-slab residual is within
  /// (1 + tau) of the best one on the grid.
  double tau = 0.05;
  /// Skips selection and uses this beta at every iteration.
  std::optional<double> fixed_beta;
  /// Multiplier applied to beta before it enters the subproblem, so grid
  /// values are relative to the data term. Unset: data_term_scale(geom).
  std::optional<double> beta_scale;
  FilterSpec fdk;

  void validate() const;
};

/// A matrix-free linear operator pair.
struct LinearMap {
  std::function<std::vector<double>(std::span<const double>)> forward;  // A
  std::function<std::vector<double>(std::span<const double>)> adjoint;  // A^T
};

struct CgStats {
  std::vector<double> residual_norms;  // ||b - M x_k|| for k = 0 .. steps
  std::vector<double> objective;       // subproblem objective at x_0 .. x_steps
  std::vector<double> forward_of_x;    // A x at the returned iterate
};

/// Conjugate gradient on (A^T A + beta I) x = A^T y + beta z, warm-started
/// at x0, for n_steps iterations. Stops early only once the residual falls
/// below 1e-12 relative to the right-hand side.
std::vector<double> cg_normal_equations(const LinearMap& A, double beta, std::span<const double> z,
                                        std::span<const double> y, std::span<const double> x0, int n_steps,
                                        CgStats* stats = nullptr);

/// 1/2 ||Ax - y||^2 + beta/2 ||x - z||^2 given Ax.
double subproblem_objective(std::span<const double> Ax, std::span<const double> y, std::span<const double> x,
                            std::span<const double> z, double beta);

Volume cg_solve(const ConeBeamGeometry& geom, double beta, const Volume& z, const ProjectionSet& y,
                const Volume& x0, int n_steps, CgStats* stats = nullptr);

struct Selection {
  double beta = 0.0;
  std::vector<double> residuals;  // r(beta) per grid entry
};

/// Grid search on the centre slab: for every candidate, a few CG steps
/// warm-started at z's slab, scored by ||A_c x - y_c|| / ||y_c||.
Selection regularization_selection(const Volume& z, const ConeBeamGeometry& geom, const CenterRestriction& rc,
                                   const ProjectionSet& y_c, const std::vector<double>& grid, int n_sel,
                                   double tau = 0.05);

/// Picks the largest grid value whose residual is within (1 + tau) of the
/// minimum. `grid` must be strictly decreasing.
double select_from_residuals(const std::vector<double>& grid, const std::vector<double>& residuals, double tau);

/// Squared norm of the projections of one voxel at the volume centre, i.e.
/// the central diagonal entry of A^T A.
double data_term_scale(const ConeBeamGeometry& geom);

struct IterationTrace {
  int k = 0;
  double beta = 0.0;  // grid value; the subproblem uses beta * beta_scale
  std::vector<double> selection_residuals;
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::vector<double> cg_residual_norms;
  std::vector<double> cg_objective;
  double wall_time_s = 0.0;           // cumulative since the start of the run
  std::size_t peak_memory_bytes = 0;  // process high-water mark
};

struct PnPTrace {
  std::vector<IterationTrace> iterations;
  int denoiser_calls = 0;
  int selections = 0;
  int cg_steps_total = 0;
  double beta_scale = 1.0;
  double fdk_time_s = 0.0;
};

struct PnPResult {
  Volume volume;
  Volume initial;  // FDK reconstruction x_0
  PnPTrace trace;
};

using Denoiser = std::function<Volume(const Volume&)>;

PnPResult pnp_reconstruct(const ProjectionSet& y, const ConeBeamGeometry& geom, const Denoiser& denoiser,
                          const PnPConfig& cfg);
PnPResult pnp_reconstruct(const ProjectionSet& y, const ConeBeamGeometry& geom, const PriorParams& prior,
                          const PnPConfig& cfg);

}  // namespace ctpnp
