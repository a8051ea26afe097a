#pragma once

#include <cstddef>

#include "ctpnp/geometry.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

/// Detector row window centred on the mid-row, and the volume z-slab those
/// rows see at the isocentre. Both ranges are inclusive.
struct CenterRestriction {
  std::size_t row_lo = 0;
  std::size_t row_hi = 0;
  std::size_t slab_lo = 0;
  std::size_t slab_hi = 0;

  std::size_t rows() const { return row_hi - row_lo + 1; }
  std::size_t slices() const { return slab_hi - slab_lo + 1; }
};

// Joseph-style cone-beam projector. Each ray runs from the source to a
// detector pixel centre; the march steps one voxel plane at a time along the
// dominant in-plane axis and samples the volume bilinearly in the orthogonal
// (in-plane, z) plane. back_project applies exactly the transposed weights.

ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom);
Volume back_project(const ProjectionSet& projs, const ConeBeamGeometry& geom);

CenterRestriction restrict_center(const ConeBeamGeometry& geom, std::size_t half_rows);

/// A_c: slab volume (nx, ny, restriction.slices()) -> rows of the window.
ProjectionSet forward_project_center(const Volume& slab, const ConeBeamGeometry& geom,
                                     const CenterRestriction& rc);
/// A_c^T: window rows -> slab volume.
Volume back_project_center(const ProjectionSet& projs, const ConeBeamGeometry& geom,
                           const CenterRestriction& rc);

/// Copies the window rows out of a full projection set (y_c).
ProjectionSet restrict_rows(const ProjectionSet& projs, const CenterRestriction& rc);
/// Copies the slab slices out of a full volume.
Volume extract_slab(const Volume& vol, const CenterRestriction& rc);

}  // namespace ctpnp
