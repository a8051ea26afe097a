#include "ctpnp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctpnp/errors.hpp"

namespace ctpnp {

FanAngle fan_angle(const ConeBeamGeometry& geom) {
  const double half_width = 0.5 * static_cast<double>(geom.det_cols) * geom.pixel_pitch_mm;
  return {rad2deg(2.0 * std::atan(half_width / geom.source_detector_dist_mm))};
}

std::vector<double> make_angles(ScanKind kind, FanAngle fan, std::size_t n_views) {
  if (n_views == 0) throw EmptyScan("n_views must be >= 1");
  const double span = kind == ScanKind::FullScan ? 360.0 : 180.0 + fan.value_deg;
  std::vector<double> angles(n_views);
  for (std::size_t i = 0; i < n_views; ++i)
    angles[i] = span * static_cast<double>(i) / static_cast<double>(n_views);
  return angles;
}

double magnification(const ConeBeamGeometry& geom) {
  return geom.source_detector_dist_mm / geom.source_object_dist_mm;
}

double angular_span_deg(const std::vector<double>& angles) {
  if (angles.size() < 2) return 0.0;
  const double n = static_cast<double>(angles.size());
  return (angles.back() - angles.front()) * n / (n - 1.0);
}

ConeBeamGeometry with_views(const ConeBeamGeometry& geom, ScanKind kind, std::size_t n_views) {
  ConeBeamGeometry out = geom;
  out.scan_kind = kind;
  out.angles_deg = make_angles(kind, fan_angle(geom), n_views);
  return out;
}

void ConeBeamGeometry::validate() const {
  const double sod = source_object_dist_mm;
  const double sdd = source_detector_dist_mm;
  if (!(sod > 0.0) || !(sdd > sod))
    throw GeometryError("require source_detector_dist_mm > source_object_dist_mm > 0");
  if (det_rows == 0 || det_cols == 0 || vol_dims.nx == 0 || vol_dims.ny == 0 || vol_dims.nz == 0)
    throw GeometryError("all counts must be >= 1");
  if (!(voxel_size_mm > 0.0) || !(pixel_pitch_mm > 0.0))
    throw GeometryError("voxel size and pixel pitch must be positive");
  if (angles_deg.empty()) throw GeometryError("angle list is empty");
  for (std::size_t i = 1; i < angles_deg.size(); ++i)
    if (!(angles_deg[i] > angles_deg[i - 1])) throw GeometryError("angles must be strictly increasing");

  const double half_height = 0.5 * static_cast<double>(det_rows) * pixel_pitch_mm;
  if (!(half_height < 0.5 * sdd))
    throw GeometryError("detector too tall for the projector: half-height must be < SDD/2");

  if (scan_kind == ScanKind::FullScan) {
    if (!(angles_deg.back() - angles_deg.front() < 360.0))
      throw GeometryError("full scan must span less than 360 degrees");
  } else {
    if (angles_deg.size() < 2) throw GeometryError("short scan needs at least two views");
    const double expected = 180.0 + fan_angle(*this).value_deg;
    const double span = angular_span_deg(angles_deg);
    if (std::abs(span - expected) > 1e-9)
      throw GeometryError("short scan spans " + std::to_string(span) + " deg, expected 180 + fan = " +
                          std::to_string(expected));
  }

  // Field of view: every volume corner must project onto the detector at
  // every view, and the source must stay outside the volume.
  const double hx = 0.5 * static_cast<double>(vol_dims.nx) * voxel_size_mm;
  const double hy = 0.5 * static_cast<double>(vol_dims.ny) * voxel_size_mm;
  const double hz = 0.5 * static_cast<double>(vol_dims.nz) * voxel_size_mm;
  if (!(std::hypot(hx, hy) < sod)) throw GeometryError("source orbit intersects the volume");
  const double half_w = 0.5 * static_cast<double>(det_cols) * pixel_pitch_mm;
  for (double a : angles_deg) {
    const double b = deg2rad(a);
    const double cb = std::cos(b), sb = std::sin(b);
    for (int corner = 0; corner < 8; ++corner) {
      const double x = (corner & 1) ? hx : -hx;
      const double y = (corner & 2) ? hy : -hy;
      const double z = (corner & 4) ? hz : -hz;
      const double t = x * cb + y * sb;
      const double depth = sod + (-x * sb + y * cb);
      const double u = t * sdd / depth;
      const double v = z * sdd / depth;
      if (std::abs(u) > half_w || std::abs(v) > half_height)
        throw GeometryError("volume corner projects outside the detector at angle " + std::to_string(a));
    }
  }
}

}  // namespace ctpnp
