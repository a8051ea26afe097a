#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctpnp/fdk.hpp"
#include "ctpnp/geometry.hpp"
#include "ctpnp/metrics.hpp"
#include "ctpnp/network.hpp"
#include "ctpnp/pnp.hpp"
#include "ctpnp/simulator.hpp"
#include "ctpnp/training.hpp"

namespace ctpnp {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct NoiseConfig {
  double sigma = 1.0;
  std::uint64_t seed = 0;
  double I0 = 1e4;
};

struct ScanConfig {
  ScanKind input_kind = ScanKind::ShortScan;
  std::size_t input_views = 36;
  ScanKind reference_kind = ScanKind::FullScan;
  std::size_t reference_views = 360;
};

struct TrainingConfig {
  TrainConfig train;
  PatchingConfig patch;  // half_width is taken from the prior section
  double split = 0.8;
};

struct AnalysisConfig {
  std::vector<double> bin_edges_mm;  // empty: voxel-scaled defaults
  double min_iou = 0.0;
  std::optional<RegionSpec> region;
};

struct RunConfig {
  ConeBeamGeometry geometry;  // angle list unused; scans generate their own
  PhantomSpec phantom = default_phantom();
  Spectrum spectrum = Spectrum::polychromatic();  // input scan; the reference is monochromatic
  NoiseConfig noise;
  ScanConfig scan;
  FilterSpec fdk;
  PnPConfig pnp;
  Architecture prior{2, 8, 2, 0.0};  // input_scale 0: fitted during training
  TrainingConfig training;
  AnalysisConfig analysis;

  ScanSettings input_settings() const;
  ScanSettings reference_settings() const;

  /// Cylinder with randomly placed pores, sized for the default geometry.
  static PhantomSpec default_phantom();
};

/// Unknown keys anywhere raise SpecError; missing keys keep their defaults.
RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

json geometry_to_json(const ConeBeamGeometry& g, bool with_angles);
ConeBeamGeometry geometry_from_json(const json& j);
json phantom_to_json(const PhantomSpec& p);
PhantomSpec phantom_from_json(const json& j);
json spectrum_to_json(const Spectrum& s);
Spectrum spectrum_from_json(const json& j);

const char* scan_kind_name(ScanKind k);
ScanKind parse_scan_kind(const std::string& s);
const char* filter_name(FilterKind k);
FilterKind parse_filter(const std::string& s);

/// Rejects any key of `j` outside `allowed`.
void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace ctpnp
