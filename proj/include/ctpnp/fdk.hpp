#pragma once

#include <cstddef>
#include <vector>

#include "ctpnp/geometry.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

enum class FilterKind { RamLak, Hann };

struct FilterSpec {
  FilterKind kind = FilterKind::RamLak;
  /// Zero-padded transform length; 0 picks the smallest power of two
  /// >= 2 * det_cols.
  std::size_t padded_len = 0;
};

/// Per-(view, column) short-scan weights.
struct ParkerWeights {
  std::size_t n_views = 0;
  std::size_t det_cols = 0;
  std::vector<double> w;

  double at(std::size_t v, std::size_t c) const { return w[v * det_cols + c]; }
};

/// Parker's smooth short-scan weight for source angle `beta` in [0, pi + 2*delta]
/// and fan coordinate `gamma` in (-delta, delta), all in radians. `gamma` is
/// positive toward the detector +u direction, so the conjugate of
/// (beta, gamma) is (beta + pi - 2 gamma, -gamma).
double parker_weight(double beta, double gamma, double half_fan);

ParkerWeights parker_weights(const ConeBeamGeometry& geom);

/// Ram-Lak taps in pixel units: 1/4 at 0, -1/(pi^2 k^2) at odd k, 0 at even k.
double ramlak_tap(long k);

std::size_t resolve_padded_len(const FilterSpec& spec, std::size_t det_cols);

/// Filters every detector row along the column axis, in pixel units.
ProjectionSet ramp_filter(const ProjectionSet& projs, const FilterSpec& spec);

/// FDK: cosine pre-weighting, Parker weighting for short scans, ramp
/// filtering and distance-weighted voxel-driven backprojection.
Volume fdk_reconstruct(const ProjectionSet& projs, const ConeBeamGeometry& geom, const FilterSpec& spec = {});

}  // namespace ctpnp
