#include "ctpnp/projector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctpnp/errors.hpp"

namespace ctpnp {
namespace {

struct ViewFrame {
  double sx, sy;    // source (z = 0)
  double dcx, dcy;  // detector centre
  double ux, uy;    // detector u-axis
};

ViewFrame view_frame(const ConeBeamGeometry& g, double angle_deg) {
  const double b = deg2rad(angle_deg);
  const double cb = std::cos(b), sb = std::sin(b);
  const double sod = g.source_object_dist_mm;
  const double odd = g.source_detector_dist_mm - sod;
  return {sod * sb, -sod * cb, -odd * sb, odd * cb, cb, sb};
}

// One ray in voxel-index coordinates. Along plane m of the primary axis the
// secondary in-plane index is fb0 + m*fb_step and the slab z index is
// fz0 + m*fz_step.
struct Ray {
  bool x_primary;
  double fb0, fb_step;
  double fz0, fz_step;
  double length;  // path length per plane step, mm
};

// Operator extent: which slab of z-slices the volume side covers, and which
// detector rows the projection side covers.
struct Window {
  std::size_t row_lo, rows;
  std::size_t slab_lo, slices;
};

Ray make_ray(const ConeBeamGeometry& g, const ViewFrame& f, std::size_t r, std::size_t c,
             std::size_t slab_lo) {
  const double pitch = g.pixel_pitch_mm;
  const double u = (static_cast<double>(c) - 0.5 * static_cast<double>(g.det_cols - 1)) * pitch;
  const double v = (static_cast<double>(r) - 0.5 * static_cast<double>(g.det_rows - 1)) * pitch;
  const double px = f.dcx + u * f.ux;
  const double py = f.dcy + u * f.uy;
  const double dx = px - f.sx, dy = py - f.sy, dz = v;
  const double vs = g.voxel_size_mm;
  const double cx = 0.5 * static_cast<double>(g.vol_dims.nx - 1);
  const double cy = 0.5 * static_cast<double>(g.vol_dims.ny - 1);
  const double cz = 0.5 * static_cast<double>(g.vol_dims.nz - 1) - static_cast<double>(slab_lo);
  const double len = std::sqrt(dx * dx + dy * dy + dz * dz);

  Ray ray{};
  if (std::abs(dx) >= std::abs(dy)) {
    ray.x_primary = true;
    // plane m sits at x = (m - cx) vs
    const double t0 = (-cx * vs - f.sx) / dx;
    const double dt = vs / dx;
    ray.fb0 = (f.sy + t0 * dy) / vs + cy;
    ray.fb_step = dt * dy / vs;
    ray.fz0 = (t0 * dz) / vs + cz;
    ray.fz_step = dt * dz / vs;
    ray.length = vs * len / std::abs(dx);
  } else {
    ray.x_primary = false;
    const double t0 = (-cy * vs - f.sy) / dy;
    const double dt = vs / dy;
    ray.fb0 = (f.sx + t0 * dx) / vs + cx;
    ray.fb_step = dt * dx / vs;
    ray.fz0 = (t0 * dz) / vs + cz;
    ray.fz_step = dt * dz / vs;
    ray.length = vs * len / std::abs(dy);
  }
  return ray;
}

// Conservative plane range [lo, hi] for which f0 + m*step lies in (a, b).
void clip_linear(double f0, double step, double a, double b, long& lo, long& hi) {
  if (step == 0.0) {
    if (!(f0 > a && f0 < b)) hi = lo - 1;
    return;
  }
  double m1 = (a - f0) / step, m2 = (b - f0) / step;
  if (m1 > m2) std::swap(m1, m2);
  lo = std::max(lo, static_cast<long>(std::floor(m1)) - 1);
  hi = std::min(hi, static_cast<long>(std::ceil(m2)) + 1);
}

struct Extent {
  long na, nb, nz;
};

Extent ray_extent(const Ray& ray, const Dims3& d, std::size_t slices) {
  return ray.x_primary ? Extent{static_cast<long>(d.nx), static_cast<long>(d.ny), static_cast<long>(slices)}
                       : Extent{static_cast<long>(d.ny), static_cast<long>(d.nx), static_cast<long>(slices)};
}

inline std::size_t voxel_index(const Ray& ray, const Dims3& d, long a, long b, long k) {
  const long i = ray.x_primary ? a : b;
  const long j = ray.x_primary ? b : a;
  return (static_cast<std::size_t>(k) * d.ny + static_cast<std::size_t>(j)) * d.nx + static_cast<std::size_t>(i);
}

double trace_forward(const Ray& ray, const Dims3& d, std::size_t slices, const double* vol) {
  const Extent e = ray_extent(ray, d, slices);
  long lo = 0, hi = e.na - 1;
  clip_linear(ray.fb0, ray.fb_step, -1.0, static_cast<double>(e.nb), lo, hi);
  clip_linear(ray.fz0, ray.fz_step, -1.0, static_cast<double>(e.nz), lo, hi);
  double acc = 0.0;
  for (long m = lo; m <= hi; ++m) {
    const double fb = ray.fb0 + static_cast<double>(m) * ray.fb_step;
    const double fz = ray.fz0 + static_cast<double>(m) * ray.fz_step;
    const double fbf = std::floor(fb), fzf = std::floor(fz);
    const long b0 = static_cast<long>(fbf), k0 = static_cast<long>(fzf);
    const double wb = fb - fbf, wz = fz - fzf;
    const bool b0ok = b0 >= 0 && b0 < e.nb, b1ok = b0 + 1 >= 0 && b0 + 1 < e.nb;
    const bool k0ok = k0 >= 0 && k0 < e.nz, k1ok = k0 + 1 >= 0 && k0 + 1 < e.nz;
    if (k0ok) {
      if (b0ok) acc += (1.0 - wb) * (1.0 - wz) * vol[voxel_index(ray, d, m, b0, k0)];
      if (b1ok) acc += wb * (1.0 - wz) * vol[voxel_index(ray, d, m, b0 + 1, k0)];
    }
    if (k1ok) {
      if (b0ok) acc += (1.0 - wb) * wz * vol[voxel_index(ray, d, m, b0, k0 + 1)];
      if (b1ok) acc += wb * wz * vol[voxel_index(ray, d, m, b0 + 1, k0 + 1)];
    }
  }
  return acc * ray.length;
}

// Transposed weights of trace_forward restricted to slab slice k.
void trace_back_slice(const Ray& ray, const Dims3& d, std::size_t slices, long k, double value,
                      double* vol) {
  const Extent e = ray_extent(ray, d, slices);
  long lo = 0, hi = e.na - 1;
  clip_linear(ray.fb0, ray.fb_step, -1.0, static_cast<double>(e.nb), lo, hi);
  clip_linear(ray.fz0, ray.fz_step, static_cast<double>(k - 1), static_cast<double>(k + 1), lo, hi);
  const double scaled = value * ray.length;
  for (long m = lo; m <= hi; ++m) {
    const double fb = ray.fb0 + static_cast<double>(m) * ray.fb_step;
    const double fz = ray.fz0 + static_cast<double>(m) * ray.fz_step;
    const double fbf = std::floor(fb), fzf = std::floor(fz);
    const long b0 = static_cast<long>(fbf), k0 = static_cast<long>(fzf);
    const double wb = fb - fbf, wz = fz - fzf;
    double w_k;
    if (k0 == k)
      w_k = 1.0 - wz;
    else if (k0 + 1 == k)
      w_k = wz;
    else
      continue;
    const bool b0ok = b0 >= 0 && b0 < e.nb, b1ok = b0 + 1 >= 0 && b0 + 1 < e.nb;
    if (b0ok) vol[voxel_index(ray, d, m, b0, k)] += (1.0 - wb) * w_k * scaled;
    if (b1ok) vol[voxel_index(ray, d, m, b0 + 1, k)] += wb * w_k * scaled;
  }
}

void check_volume(const Volume& vol, const ConeBeamGeometry& g, std::size_t slices, const char* who) {
  if (vol.dims.nx != g.vol_dims.nx || vol.dims.ny != g.vol_dims.ny || vol.dims.nz != slices)
    throw ShapeError(std::string(who) + ": volume dims do not match geometry");
  if (vol.data.size() != vol.dims.count()) throw ShapeError(std::string(who) + ": volume data length");
  if (std::abs(vol.voxel_size_mm - g.voxel_size_mm) > 1e-12 * g.voxel_size_mm)
    throw ShapeError(std::string(who) + ": voxel size does not match geometry");
}

void check_projections(const ProjectionSet& p, const ConeBeamGeometry& g, std::size_t rows, const char* who) {
  if (p.n_views != g.n_views() || p.det_rows != rows || p.det_cols != g.det_cols)
    throw ShapeError(std::string(who) + ": projection shape does not match geometry");
  if (p.data.size() != p.n_views * p.det_rows * p.det_cols)
    throw ShapeError(std::string(who) + ": projection data length");
}

ProjectionSet forward_window(const Volume& vol, const ConeBeamGeometry& g, const Window& w) {
  ProjectionSet out(g.n_views(), w.rows, g.det_cols, g.angles_deg);
  const long nviews = static_cast<long>(g.n_views());
#pragma omp parallel for schedule(dynamic, 1)
  for (long v = 0; v < nviews; ++v) {
    const ViewFrame f = view_frame(g, g.angles_deg[static_cast<std::size_t>(v)]);
    for (std::size_t r = 0; r < w.rows; ++r) {
      for (std::size_t c = 0; c < g.det_cols; ++c) {
        const Ray ray = make_ray(g, f, w.row_lo + r, c, w.slab_lo);
        out.at(static_cast<std::size_t>(v), r, c) = trace_forward(ray, vol.dims, w.slices, vol.data.data());
      }
    }
  }
  return out;
}

Volume back_window(const ProjectionSet& p, const ConeBeamGeometry& g, const Window& w) {
  Volume out(Dims3{g.vol_dims.nx, g.vol_dims.ny, w.slices}, g.voxel_size_mm);
  const std::size_t nviews = g.n_views();
  std::vector<ViewFrame> frames(nviews);
  for (std::size_t v = 0; v < nviews; ++v) frames[v] = view_frame(g, g.angles_deg[v]);

  // Conservative z-index band reached by each detector row inside the
  // volume's cylindrical support.
  const double vs = g.voxel_size_mm;
  const double radius = 0.5 * vs *
                        std::hypot(static_cast<double>(g.vol_dims.nx), static_cast<double>(g.vol_dims.ny));
  const double sod = g.source_object_dist_mm, sdd = g.source_detector_dist_mm;
  const double cz = 0.5 * static_cast<double>(g.vol_dims.nz - 1) - static_cast<double>(w.slab_lo);
  std::vector<double> row_zlo(w.rows), row_zhi(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double v = (static_cast<double>(w.row_lo + r) - 0.5 * static_cast<double>(g.det_rows - 1)) *
                     g.pixel_pitch_mm;
    const double z1 = v * (sod - radius) / sdd / vs + cz;
    const double z2 = v * (sod + radius) / sdd / vs + cz;
    row_zlo[r] = std::min(z1, z2) - 1.0;
    row_zhi[r] = std::max(z1, z2) + 1.0;
  }

  // Gather form: each slice owns its output and visits rays in a fixed
  // order, so the sum order is independent of the worker count.
  const long nslices = static_cast<long>(w.slices);
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < nslices; ++k) {
    const double kd = static_cast<double>(k);
    for (std::size_t v = 0; v < nviews; ++v) {
      for (std::size_t r = 0; r < w.rows; ++r) {
        if (kd + 1.0 < row_zlo[r] || kd - 1.0 > row_zhi[r]) continue;
        for (std::size_t c = 0; c < g.det_cols; ++c) {
          const double val = p.at(v, r, c);
          if (val == 0.0) continue;
          const Ray ray = make_ray(g, frames[v], w.row_lo + r, c, w.slab_lo);
          trace_back_slice(ray, out.dims, w.slices, k, val, out.data.data());
        }
      }
    }
  }
  return out;
}

}  // namespace

ProjectionSet forward_project(const Volume& vol, const ConeBeamGeometry& geom) {
  check_volume(vol, geom, geom.vol_dims.nz, "forward_project");
  return forward_window(vol, geom, Window{0, geom.det_rows, 0, geom.vol_dims.nz});
}

Volume back_project(const ProjectionSet& projs, const ConeBeamGeometry& geom) {
  check_projections(projs, geom, geom.det_rows, "back_project");
  return back_window(projs, geom, Window{0, geom.det_rows, 0, geom.vol_dims.nz});
}

CenterRestriction restrict_center(const ConeBeamGeometry& geom, std::size_t half_rows) {
  if (2 * half_rows + 1 > geom.det_rows)
    throw RangeError("center window of " + std::to_string(2 * half_rows + 1) + " rows exceeds detector (" +
                     std::to_string(geom.det_rows) + " rows)");
  CenterRestriction rc;
  const std::size_t mid = (geom.det_rows - 1) / 2;
  rc.row_lo = mid - half_rows;
  rc.row_hi = mid + half_rows;
  // Half-thickness of the window at the isocentre, in voxels.
  const double half_mm = static_cast<double>(half_rows) * geom.pixel_pitch_mm / magnification(geom);
  const double half_vox = half_mm / geom.voxel_size_mm;
  const double zc = 0.5 * static_cast<double>(geom.vol_dims.nz - 1);
  const double lo = std::floor(zc - half_vox + 1e-9);
  const double hi = std::ceil(zc + half_vox - 1e-9);
  rc.slab_lo = static_cast<std::size_t>(std::max(0.0, lo));
  rc.slab_hi = static_cast<std::size_t>(std::min(static_cast<double>(geom.vol_dims.nz - 1), hi));
  return rc;
}

ProjectionSet forward_project_center(const Volume& slab, const ConeBeamGeometry& geom,
                                     const CenterRestriction& rc) {
  check_volume(slab, geom, rc.slices(), "forward_project_center");
  return forward_window(slab, geom, Window{rc.row_lo, rc.rows(), rc.slab_lo, rc.slices()});
}

Volume back_project_center(const ProjectionSet& projs, const ConeBeamGeometry& geom,
                           const CenterRestriction& rc) {
  check_projections(projs, geom, rc.rows(), "back_project_center");
  return back_window(projs, geom, Window{rc.row_lo, rc.rows(), rc.slab_lo, rc.slices()});
}

ProjectionSet restrict_rows(const ProjectionSet& projs, const CenterRestriction& rc) {
  if (rc.row_hi >= projs.det_rows) throw RangeError("restriction rows exceed projection rows");
  ProjectionSet out(projs.n_views, rc.rows(), projs.det_cols, projs.angles_deg);
  for (std::size_t v = 0; v < projs.n_views; ++v)
    for (std::size_t r = 0; r < rc.rows(); ++r)
      for (std::size_t c = 0; c < projs.det_cols; ++c) out.at(v, r, c) = projs.at(v, rc.row_lo + r, c);
  return out;
}

Volume extract_slab(const Volume& vol, const CenterRestriction& rc) {
  if (rc.slab_hi >= vol.dims.nz) throw RangeError("restriction slab exceeds volume");
  Volume out(Dims3{vol.dims.nx, vol.dims.ny, rc.slices()}, vol.voxel_size_mm);
  std::copy(vol.data.begin() + static_cast<std::ptrdiff_t>(rc.slab_lo * vol.dims.slice_count()),
            vol.data.begin() + static_cast<std::ptrdiff_t>((rc.slab_hi + 1) * vol.dims.slice_count()),
            out.data.begin());
  return out;
}

}  // namespace ctpnp
