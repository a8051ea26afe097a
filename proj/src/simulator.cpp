#include "ctpnp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ctpnp/errors.hpp"
#include "ctpnp/projector.hpp"
#include "ctpnp/rng.hpp"

namespace ctpnp {
namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ull;  // "noise"
constexpr std::uint64_t kPoreStream = 0x706f726573ull;   // "pores"

bool inside_body(const std::vector<Solid>& body, const Vec3& p) {
  return std::any_of(body.begin(), body.end(), [&](const Solid& s) { return s.contains(p); });
}

// Sphere containment test on the centre plus 26 surface points.
bool sphere_inside_body(const std::vector<Solid>& body, const Vec3& c, double r) {
  if (!inside_body(body, c)) return false;
  for (int dx = -1; dx <= 1; ++dx)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dz = -1; dz <= 1; ++dz) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const double n = std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz));
        const Vec3 p{c[0] + r * dx / n, c[1] + r * dy / n, c[2] + r * dz / n};
        if (!inside_body(body, p)) return false;
      }
  return true;
}

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

void body_bounds(const std::vector<Solid>& body, Vec3& lo, Vec3& hi) {
  lo = {1e300, 1e300, 1e300};
  hi = {-1e300, -1e300, -1e300};
  for (const Solid& s : body) {
    Vec3 a{}, b{};
    if (const auto* box = std::get_if<Box>(&s.shape)) {
      a = box->min_mm;
      b = box->max_mm;
    } else if (const auto* cyl = std::get_if<Cylinder>(&s.shape)) {
      a = {cyl->cx_mm - cyl->radius_mm, cyl->cy_mm - cyl->radius_mm, cyl->z_min_mm};
      b = {cyl->cx_mm + cyl->radius_mm, cyl->cy_mm + cyl->radius_mm, cyl->z_max_mm};
    } else {
      const auto& sp = std::get<Sphere>(s.shape);
      for (int d = 0; d < 3; ++d) {
        a[d] = sp.center_mm[d] - sp.radius_mm;
        b[d] = sp.center_mm[d] + sp.radius_mm;
      }
    }
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], a[d]);
      hi[d] = std::max(hi[d], b[d]);
    }
  }
}

Vec3 voxel_center_mm(std::size_t i, std::size_t j, std::size_t k, Dims3 d, double vs) {
  return {(static_cast<double>(i) - 0.5 * static_cast<double>(d.nx - 1)) * vs,
          (static_cast<double>(j) - 0.5 * static_cast<double>(d.ny - 1)) * vs,
          (static_cast<double>(k) - 0.5 * static_cast<double>(d.nz - 1)) * vs};
}

}  // namespace

bool Solid::contains(const Vec3& p) const {
  if (const auto* box = std::get_if<Box>(&shape)) {
    for (int d = 0; d < 3; ++d)
      if (!(p[d] > box->min_mm[d] && p[d] < box->max_mm[d])) return false;
    return true;
  }
  if (const auto* cyl = std::get_if<Cylinder>(&shape)) {
    const double dx = p[0] - cyl->cx_mm, dy = p[1] - cyl->cy_mm;
    return dx * dx + dy * dy < cyl->radius_mm * cyl->radius_mm && p[2] > cyl->z_min_mm && p[2] < cyl->z_max_mm;
  }
  const auto& sp = std::get<Sphere>(shape);
  const double dx = p[0] - sp.center_mm[0], dy = p[1] - sp.center_mm[1], dz = p[2] - sp.center_mm[2];
  return dx * dx + dy * dy + dz * dz < sp.radius_mm * sp.radius_mm;
}

std::vector<Pore> resolve_pores(const PhantomSpec& spec) {
  std::vector<Pore> pores = spec.pores;
  for (std::size_t i = 0; i < pores.size(); ++i) {
    const Pore& p = pores[i];
    if (!(p.diameter_mm > 0.0)) throw SpecError("pore " + std::to_string(i) + " has non-positive diameter");
    if (!sphere_inside_body(spec.body, p.center_mm, 0.5 * p.diameter_mm))
      throw SpecError("pore " + std::to_string(i) + " is not strictly inside the body");
    for (std::size_t j = 0; j < i; ++j)
      if (distance(p.center_mm, pores[j].center_mm) < 0.5 * (p.diameter_mm + pores[j].diameter_mm))
        throw SpecError("pores " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
  }

  if (spec.random_pores && spec.random_pores->count > 0) {
    const RandomPores& rp = *spec.random_pores;
    if (!(rp.diameter_min_mm > 0.0) || rp.diameter_max_mm < rp.diameter_min_mm)
      throw SpecError("random pore diameter range is invalid");
    if (spec.body.empty()) throw SpecError("random pores need a body");
    Vec3 lo, hi;
    body_bounds(spec.body, lo, hi);
    CounterRng rng(spec.rng_seed, kPoreStream);
    const std::size_t max_attempts = 20000 * rp.count;
    std::size_t placed = 0;
    for (std::size_t attempt = 0; attempt < max_attempts && placed < rp.count; ++attempt) {
      const double dia = rng.uniform(rp.diameter_min_mm, rp.diameter_max_mm);
      const Vec3 c{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2])};
      const double r = 0.5 * dia;
      if (!sphere_inside_body(spec.body, c, 2.0 * r)) continue;
      bool clear = true;
      for (const Pore& q : pores) {
        const double rq = 0.5 * q.diameter_mm;
        if (distance(c, q.center_mm) < r + rq + std::max(r, rq)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      pores.push_back({c, dia});
      ++placed;
    }
    if (placed < rp.count)
      throw SpecError("could only place " + std::to_string(placed) + " of " + std::to_string(rp.count) +
                      " random pores");
  }
  return pores;
}

Phantom build_phantom(const PhantomSpec& spec, Dims3 dims, double voxel_size_mm) {
  if (dims.count() == 0 || !(voxel_size_mm > 0.0)) throw SpecError("invalid phantom grid");
  const std::vector<Pore> pores = resolve_pores(spec);
  Phantom out{Volume(dims, voxel_size_mm), {}};

  const long nz = static_cast<long>(dims.nz);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < dims.ny; ++j)
      for (std::size_t i = 0; i < dims.nx; ++i) {
        const Vec3 p = voxel_center_mm(i, j, static_cast<std::size_t>(k), dims, voxel_size_mm);
        double mu = 0.0;
        for (auto it = spec.body.rbegin(); it != spec.body.rend(); ++it)
          if (it->contains(p)) {
            mu = it->mu_ref;
            break;
          }
        if (mu != 0.0)
          for (const Pore& q : pores)
            if (distance(p, q.center_mm) < 0.5 * q.diameter_mm) {
              mu = 0.0;
              break;
            }
        out.volume.at(i, j, static_cast<std::size_t>(k)) = mu;
      }

  for (const Pore& q : pores) {
    Defect d;
    d.diameter_mm = q.diameter_mm;
    d.center_voxel = {q.center_mm[0] / voxel_size_mm + 0.5 * static_cast<double>(dims.nx - 1),
                      q.center_mm[1] / voxel_size_mm + 0.5 * static_cast<double>(dims.ny - 1),
                      q.center_mm[2] / voxel_size_mm + 0.5 * static_cast<double>(dims.nz - 1)};
    out.defects.push_back(d);
  }
  return out;
}

std::vector<std::size_t> defect_voxels(const Defect& defect, Dims3 dims, double voxel_size_mm) {
  std::vector<std::size_t> out;
  const double r = 0.5 * defect.diameter_mm / voxel_size_mm;
  const auto lo = [&](int d) { return static_cast<long>(std::floor(defect.center_voxel[d] - r)); };
  const auto hi = [&](int d) { return static_cast<long>(std::ceil(defect.center_voxel[d] + r)); };
  const long n[3] = {static_cast<long>(dims.nx), static_cast<long>(dims.ny), static_cast<long>(dims.nz)};
  for (long k = std::max(0L, lo(2)); k <= std::min(n[2] - 1, hi(2)); ++k)
    for (long j = std::max(0L, lo(1)); j <= std::min(n[1] - 1, hi(1)); ++j)
      for (long i = std::max(0L, lo(0)); i <= std::min(n[0] - 1, hi(0)); ++i) {
        const double dx = static_cast<double>(i) - defect.center_voxel[0];
        const double dy = static_cast<double>(j) - defect.center_voxel[1];
        const double dz = static_cast<double>(k) - defect.center_voxel[2];
        if (std::sqrt(dx * dx + dy * dy + dz * dz) * voxel_size_mm < 0.5 * defect.diameter_mm)
          out.push_back((static_cast<std::size_t>(k) * dims.ny + static_cast<std::size_t>(j)) * dims.nx +
                        static_cast<std::size_t>(i));
      }
  return out;
}

void Spectrum::validate() const {
  if (bins.empty()) throw ParamError("spectrum has no bins");
  double total = 0.0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (!(bins[b].weight >= 0.0)) throw ParamError("spectrum weights must be >= 0");
    if (!(bins[b].mu_scale > 0.0)) throw ParamError("spectrum mu_scale must be > 0");
    if (b > 0 && !(bins[b].mu_scale < bins[b - 1].mu_scale))
      throw ParamError("spectrum mu_scale must strictly decrease with bin index");
    total += bins[b].weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParamError("spectrum weights must sum to 1");
}

Spectrum Spectrum::monochromatic() { return Spectrum{{{1.0, 1.0}}}; }

Spectrum Spectrum::polychromatic() { return Spectrum{{{0.3, 2.0}, {0.4, 1.0}, {0.3, 0.5}}}; }

double polychromatic_intensity(double path, const Spectrum& spectrum, double I0) {
  double acc = 0.0;
  for (const SpectrumBin& b : spectrum.bins) acc += b.weight * std::exp(-b.mu_scale * path);
  return I0 * acc;
}

PhotonCounts counts_from_paths(const ProjectionSet& paths, const Spectrum& spectrum, double I0) {
  spectrum.validate();
  if (!(I0 > 0.0)) throw ParamError("I0 must be positive");
  PhotonCounts out{paths, I0};
  for (double& v : out.counts.data) v = polychromatic_intensity(v, spectrum, I0);
  return out;
}

PhotonCounts project_counts(const Volume& phantom, const ConeBeamGeometry& geom, const Spectrum& spectrum,
                            double I0) {
  return counts_from_paths(forward_project(phantom, geom), spectrum, I0);
}

double count_floor(double I0) { return 1e-6 * I0; }

PhotonCounts add_noise(const PhotonCounts& W, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ParamError("noise sigma must be >= 0");
  PhotonCounts out = W;
  if (sigma == 0.0) return out;
  const double floor = count_floor(W.I0);
  auto& data = out.counts.data;
  const long n = static_cast<long>(data.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double w = data[static_cast<std::size_t>(i)];
    const double noisy =
        w + std::sqrt(std::max(w, 0.0)) * sigma * philox_normal(seed, kNoiseStream, static_cast<std::uint64_t>(i));
    data[static_cast<std::size_t>(i)] = std::max(noisy, floor);
  }
  return out;
}

ProjectionSet log_normalize(const PhotonCounts& W) {
  if (!(W.I0 > 0.0)) throw ParamError("I0 must be positive");
  ProjectionSet out = W.counts;
  const double floor = count_floor(W.I0);
  for (double& v : out.data) v = -std::log(std::max(v, floor) / W.I0);
  return out;
}

SimulatedScan simulate_scan(const Volume& phantom, const ConeBeamGeometry& base, const ScanSettings& scan,
                            double I0, std::uint64_t seed) {
  SimulatedScan out{with_views(base, scan.kind, scan.n_views), {}};
  out.geom.validate();
  const PhotonCounts clean = project_counts(phantom, out.geom, scan.spectrum, I0);
  out.projections = log_normalize(add_noise(clean, scan.sigma, seed));
  return out;
}

ScanPair simulate_pair(const PhantomSpec& spec, const ConeBeamGeometry& base, const ScanSettings& input,
                       const ScanSettings& reference, double I0, std::uint64_t seed) {
  ScanPair out;
  out.phantom = build_phantom(spec, base.vol_dims, base.voxel_size_mm);
  out.input = simulate_scan(out.phantom.volume, base, input, I0, seed);
  out.reference = simulate_scan(out.phantom.volume, base, reference, I0, seed + 1);
  return out;
}

}  // namespace ctpnp
