#pragma once

#include <cstddef>
#include <vector>

#include "ctpnp/types.hpp"

namespace ctpnp {

enum class ScanKind { FullScan, ShortScan };

/// Circular cone-beam acquisition with a flat detector centred on the
/// source-origin ray.
///
/// Convention: the source rotates counter-clockwise about the volume z-axis
/// and sits on the -y axis at angle 0, i.e. at (SOD sin b, -SOD cos b, 0).
/// The detector u-axis is (cos b, sin b, 0) and its v-axis is +z; detector
/// row r and column c map to v = (r - (rows-1)/2) pitch and
/// u = (c - (cols-1)/2) pitch. The volume is centred on the rotation axis.
struct ConeBeamGeometry {
  double source_object_dist_mm = 400.0;
  double source_detector_dist_mm = 800.0;
  std::size_t det_rows = 77;
  std::size_t det_cols = 104;
  double pixel_pitch_mm = 2.0;
  Dims3 vol_dims{64, 64, 64};
  double voxel_size_mm = 1.0;
  std::vector<double> angles_deg;
  ScanKind scan_kind = ScanKind::FullScan;

  /// Throws GeometryError on any violated invariant, including a volume
  /// that does not fit inside the field of view.
  void validate() const;

  std::size_t n_views() const { return angles_deg.size(); }
};

struct FanAngle {
  double value_deg = 0.0;
};

/// Full in-plane opening angle subtended by the detector width.
FanAngle fan_angle(const ConeBeamGeometry& geom);

/// Equispaced angles over [0, 360) or [0, 180 + fan), endpoint excluded.
std::vector<double> make_angles(ScanKind kind, FanAngle fan, std::size_t n_views);

double magnification(const ConeBeamGeometry& geom);

/// Arc length the angle list covers, counting the trailing spacing:
/// (last - first) * n / (n - 1). Zero for a single view.
double angular_span_deg(const std::vector<double>& angles_deg);

/// Copies `geom` with a new angle list generated by make_angles.
ConeBeamGeometry with_views(const ConeBeamGeometry& geom, ScanKind kind, std::size_t n_views);

constexpr double kPi = 3.14159265358979323846;
inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

}  // namespace ctpnp
