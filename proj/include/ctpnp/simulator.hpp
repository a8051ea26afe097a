#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "ctpnp/geometry.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

using Vec3 = std::array<double, 3>;

// Solids are given in millimetres relative to the volume centre.
struct Box {
  Vec3 min_mm;
  Vec3 max_mm;
};
struct Cylinder {  // axis parallel to z
  double cx_mm = 0.0, cy_mm = 0.0, radius_mm = 0.0;
  double z_min_mm = 0.0, z_max_mm = 0.0;
};
struct Sphere {
  Vec3 center_mm;
  double radius_mm = 0.0;
};

struct Solid {
  std::variant<Box, Cylinder, Sphere> shape;
  double mu_ref = 0.0;  // mm^-1 at the reference energy

  bool contains(const Vec3& p) const;
};

struct Pore {
  Vec3 center_mm;
  double diameter_mm = 0.0;
};

/// Pores placed by seeded rejection sampling: each pore keeps at least one
/// radius of material between its surface and the body boundary and
/// between itself and every other pore.
struct RandomPores {
  std::size_t count = 0;
  double diameter_min_mm = 0.0;
  double diameter_max_mm = 0.0;
};

struct PhantomSpec {
  // Later solids take precedence where they overlap earlier ones.
  std::vector<Solid> body;
  std::vector<Pore> pores;
  std::optional<RandomPores> random_pores;
  std::uint64_t rng_seed = 0;
};

struct Defect {
  Vec3 center_voxel;  // continuous voxel index coordinates (i, j, k)
  double diameter_mm = 0.0;
};

struct Phantom {
  Volume volume;
  std::vector<Defect> defects;
};

/// Explicit pores plus any randomly placed ones, validated against the body.
std::vector<Pore> resolve_pores(const PhantomSpec& spec);

Phantom build_phantom(const PhantomSpec& spec, Dims3 dims, double voxel_size_mm);

/// Voxels whose centres fall inside `defect`'s sphere, as flat indices.
std::vector<std::size_t> defect_voxels(const Defect& defect, Dims3 dims, double voxel_size_mm);

struct SpectrumBin {
  double weight = 1.0;
  double mu_scale = 1.0;
};

struct Spectrum {
  std::vector<SpectrumBin> bins;

  void validate() const;
  static Spectrum monochromatic();
  /// Three-bin stand-in for a filtered tungsten spectrum.
  static Spectrum polychromatic();
};

/// Detected intensity in counts; same layout as ProjectionSet.
struct PhotonCounts {
  ProjectionSet counts;
  double I0 = 1.0;
};

/// I0 * sum_b w_b exp(-s_b p) for a path integral p.
double polychromatic_intensity(double path, const Spectrum& spectrum, double I0);

PhotonCounts counts_from_paths(const ProjectionSet& paths, const Spectrum& spectrum, double I0);
PhotonCounts project_counts(const Volume& phantom, const ConeBeamGeometry& geom, const Spectrum& spectrum,
                            double I0);

/// W + sqrt(W) sigma N(0,1), clamped below at count_floor(I0).
PhotonCounts add_noise(const PhotonCounts& W, double sigma, std::uint64_t seed);

double count_floor(double I0);

/// y = -ln(max(W, floor) / I0)
ProjectionSet log_normalize(const PhotonCounts& W);

struct ScanSettings {
  ScanKind kind = ScanKind::FullScan;
  std::size_t n_views = 360;
  double sigma = 0.0;
  Spectrum spectrum = Spectrum::monochromatic();
};

struct SimulatedScan {
  ConeBeamGeometry geom;
  ProjectionSet projections;
};

/// One acquisition of an already voxelized phantom. `base` supplies every
/// geometry field except the angle list.
SimulatedScan simulate_scan(const Volume& phantom, const ConeBeamGeometry& base, const ScanSettings& scan,
                            double I0, std::uint64_t seed);

struct ScanPair {
  Phantom phantom;
  SimulatedScan input;
  SimulatedScan reference;
};

/// Input (sparse/short/noisy/polychromatic) and reference (dense/full/clean/
/// monochromatic) scans of the same phantom.
ScanPair simulate_pair(const PhantomSpec& spec, const ConeBeamGeometry& base, const ScanSettings& input,
                       const ScanSettings& reference, double I0, std::uint64_t seed);

}  // namespace ctpnp
