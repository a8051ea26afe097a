#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctpnp/defects.hpp"
#include "ctpnp/geometry.hpp"
#include "ctpnp/network.hpp"
#include "ctpnp/training.hpp"
#include "ctpnp/types.hpp"

namespace ctpnp {

namespace fs = std::filesystem;

enum class Dtype { F32, F64 };

const char* dtype_name(Dtype d);
Dtype parse_dtype(const std::string& s);

/// A file pair `<stem>.json` (header) + `<stem>.raw` (payload). Either the
/// stem or the header path may be passed.
struct FilePair {
  fs::path header;
  fs::path payload;
};
FilePair file_pair(const fs::path& p);

struct VolumeFile {
  Volume volume;
  Dtype dtype = Dtype::F64;
};

void write_volume(const fs::path& p, const Volume& vol, Dtype dtype = Dtype::F64);
VolumeFile read_volume(const fs::path& p);

struct ProjectionFile {
  ProjectionSet projections;
  ConeBeamGeometry geometry;  // angles and scan kind match the projections
  Dtype dtype = Dtype::F64;
};

void write_projections(const fs::path& p, const ProjectionSet& projs, const ConeBeamGeometry& geom,
                       Dtype dtype = Dtype::F64);
ProjectionFile read_projections(const fs::path& p);

struct CheckpointInfo {
  std::uint64_t seed = 0;
  int best_epoch = 0;
};

void write_checkpoint(const fs::path& p, const PriorParams& params, const CheckpointInfo& info = {});
PriorParams read_checkpoint(const fs::path& p, CheckpointInfo* info = nullptr);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const fs::path& p, const std::string& bytes);
std::string read_file(const fs::path& p);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& p);

/// 16-bit binary PGM of one slice, min-max windowed, with a `.json` sidecar
/// recording the window.
void write_slice_pgm(const fs::path& p, const Volume& vol, std::size_t z);

void write_training_log_csv(const fs::path& p, const std::vector<EpochLog>& log);
void write_profile_csv(const fs::path& p, const std::vector<double>& values);
void write_bins_csv(const fs::path& p, const DefectReport& report);

/// Ground-truth defect list: centres in voxel coordinates, diameters in mm.
void write_defects_json(const fs::path& p, const std::vector<Defect>& defects);
std::vector<Defect> read_defects_json(const fs::path& p);

}  // namespace ctpnp
