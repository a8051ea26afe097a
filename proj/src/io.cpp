#include "ctpnp/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctpnp/config.hpp"
#include "ctpnp/errors.hpp"

namespace ctpnp {

static_assert(std::endian::native == std::endian::little, "raw payloads are read and written as host order");

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'T', 'P', 'N', 'P', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

std::string encode(std::span<const double> v, Dtype d) {
  std::string out(v.size() * dtype_size(d), '\0');
  if (d == Dtype::F64) {
    std::memcpy(out.data(), v.data(), out.size());
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float f = static_cast<float>(v[i]);
      std::memcpy(out.data() + 4 * i, &f, 4);
    }
  }
  return out;
}

std::vector<double> decode(const std::string& bytes, std::size_t count, Dtype d, const fs::path& where) {
  const std::size_t expected = count * dtype_size(d);
  if (bytes.size() != expected)
    throw FormatError(where.string() + ": expected " + std::to_string(expected) + " payload bytes, found " +
                      std::to_string(bytes.size()));
  std::vector<double> out(count);
  if (d == Dtype::F64) {
    std::memcpy(out.data(), bytes.data(), expected);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + 4 * i, 4);
      out[i] = f;
    }
  }
  return out;
}

json parse_header(const fs::path& p) {
  const std::string text = read_file(p);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": malformed header: " + e.what());
  }
}

void require_exact(const json& j, std::initializer_list<const char*> keys, const fs::path& p) {
  if (!j.is_object()) throw FormatError(p.string() + ": header must be a JSON object");
  try {
    require_keys(j, keys, p.string());
  } catch (const SpecError& e) {
    throw FormatError(e.what());
  }
  for (const char* k : keys)
    if (!j.contains(k)) throw FormatError(p.string() + ": header is missing '" + k + "'");
}

std::size_t header_size(const json& j, const char* key, const fs::path& p) {
  if (!j.at(key).is_number_unsigned()) throw FormatError(p.string() + ": '" + key + "' must be a non-negative integer");
  return j.at(key).get<std::size_t>();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : "undefined"; }

}  // namespace

const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32le" : "f64le"; }

Dtype parse_dtype(const std::string& s) {
  if (s == "f32le") return Dtype::F32;
  if (s == "f64le") return Dtype::F64;
  throw FormatError("unknown dtype '" + s + "'");
}

FilePair file_pair(const fs::path& p) {
  fs::path stem = p;
  if (stem.extension() == ".json" || stem.extension() == ".raw") stem.replace_extension();
  return {fs::path(stem.string() + ".json"), fs::path(stem.string() + ".raw")};
}

void write_file_atomic(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename into " + p.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path& p) { return sha256_hex(read_file(p)); }

void write_volume(const fs::path& p, const Volume& vol, Dtype dtype) {
  if (vol.data.size() != vol.dims.count()) throw ShapeError("volume data does not match its dims");
  const FilePair f = file_pair(p);
  const json h = {{"dims", {vol.dims.nx, vol.dims.ny, vol.dims.nz}},
                  {"voxel_size_mm", vol.voxel_size_mm},
                  {"dtype", dtype_name(dtype)},
                  {"order", "zyx"}};
  write_file_atomic(f.payload, encode(vol.data, dtype));
  write_file_atomic(f.header, h.dump(2) + "\n");
}

VolumeFile read_volume(const fs::path& p) {
  const FilePair f = file_pair(p);
  const json h = parse_header(f.header);
  require_exact(h, {"dims", "voxel_size_mm", "dtype", "order"}, f.header);
  const json& d = h.at("dims");
  if (!d.is_array() || d.size() != 3 || !std::all_of(d.begin(), d.end(), [](const json& e) { return e.is_number_unsigned(); }))
    throw FormatError(f.header.string() + ": dims must be [nx, ny, nz]");
  if (!h.at("order").is_string() || h.at("order").get<std::string>() != "zyx")
    throw FormatError(f.header.string() + ": order must be \"zyx\"");
  if (!h.at("voxel_size_mm").is_number()) throw FormatError(f.header.string() + ": voxel_size_mm must be a number");
  if (!h.at("dtype").is_string()) throw FormatError(f.header.string() + ": dtype must be a string");
  VolumeFile out;
  out.dtype = parse_dtype(h.at("dtype").get<std::string>());
  out.volume.dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
  out.volume.voxel_size_mm = h.at("voxel_size_mm").get<double>();
  out.volume.data = decode(read_file(f.payload), out.volume.dims.count(), out.dtype, f.payload);
  return out;
}

void write_projections(const fs::path& p, const ProjectionSet& projs, const ConeBeamGeometry& geom, Dtype dtype) {
  if (projs.data.size() != projs.n_views * projs.det_rows * projs.det_cols)
    throw ShapeError("projection data does not match its shape");
  if (projs.angles_deg.size() != projs.n_views) throw ShapeError("angle count does not match n_views");
  const FilePair f = file_pair(p);
  const json h = {{"n_views", projs.n_views},
                  {"det_rows", projs.det_rows},
                  {"det_cols", projs.det_cols},
                  {"angles_deg", projs.angles_deg},
                  {"geometry", geometry_to_json(geom, false)},
                  {"dtype", dtype_name(dtype)},
                  {"scan_kind", scan_kind_name(geom.scan_kind)}};
  write_file_atomic(f.payload, encode(projs.data, dtype));
  write_file_atomic(f.header, h.dump(2) + "\n");
}

ProjectionFile read_projections(const fs::path& p) {
  const FilePair f = file_pair(p);
  const json h = parse_header(f.header);
  require_exact(h, {"n_views", "det_rows", "det_cols", "angles_deg", "geometry", "dtype", "scan_kind"}, f.header);
  ProjectionFile out;
  ProjectionSet& ps = out.projections;
  ps.n_views = header_size(h, "n_views", f.header);
  ps.det_rows = header_size(h, "det_rows", f.header);
  ps.det_cols = header_size(h, "det_cols", f.header);
  const json& a = h.at("angles_deg");
  if (!a.is_array() || !std::all_of(a.begin(), a.end(), [](const json& e) { return e.is_number(); }))
    throw FormatError(f.header.string() + ": angles_deg must be an array of numbers");
  ps.angles_deg = a.get<std::vector<double>>();
  if (ps.angles_deg.size() != ps.n_views)
    throw FormatError(f.header.string() + ": " + std::to_string(ps.angles_deg.size()) + " angles for " +
                      std::to_string(ps.n_views) + " views");
  if (!h.at("dtype").is_string() || !h.at("scan_kind").is_string())
    throw FormatError(f.header.string() + ": dtype and scan_kind must be strings");
  out.dtype = parse_dtype(h.at("dtype").get<std::string>());
  try {
    out.geometry = geometry_from_json(h.at("geometry"));
    out.geometry.scan_kind = parse_scan_kind(h.at("scan_kind").get<std::string>());
  } catch (const SpecError& e) {
    throw FormatError(f.header.string() + ": " + e.what());
  }
  if (out.geometry.det_rows != ps.det_rows || out.geometry.det_cols != ps.det_cols)
    throw FormatError(f.header.string() + ": geometry detector size disagrees with the header");
  out.geometry.angles_deg = ps.angles_deg;
  ps.data = decode(read_file(f.payload), ps.n_views * ps.det_rows * ps.det_cols, out.dtype, f.payload);
  return out;
}

void write_checkpoint(const fs::path& p, const PriorParams& params, const CheckpointInfo& info) {
  json layers = json::array();
  for (const ConvLayer& l : params.layers)
    layers.push_back({{"name", l.name}, {"cin", l.cin}, {"cout", l.cout}, {"ksize", l.ksize}});
  const json h = {{"arch",
                   {{"levels", params.arch.levels},
                    {"base_features", params.arch.base_features},
                    {"half_width", params.arch.half_width},
                    {"input_scale", params.arch.input_scale}}},
                  {"precision", "f64le"},
                  {"seed", info.seed},
                  {"best_epoch", info.best_epoch},
                  {"layers", layers}};
  const std::string hs = h.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t hlen = hs.size();
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += hs;
  for (auto t : params.tensors()) out += encode(t, Dtype::F64);
  write_file_atomic(p, out);
}

PriorParams read_checkpoint(const fs::path& p, CheckpointInfo* info) {
  const std::string bytes = read_file(p);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError(p.string() + ": not a prior checkpoint");
  std::uint32_t version;
  std::uint64_t hlen;
  std::memcpy(&version, bytes.data() + 8, 4);
  std::memcpy(&hlen, bytes.data() + 12, 8);
  if (version != kCheckpointVersion) throw FormatError(p.string() + ": unsupported checkpoint version");
  if (hlen > bytes.size() - 20) throw FormatError(p.string() + ": truncated checkpoint header");
  json h;
  try {
    h = json::parse(bytes.substr(20, hlen));
    Architecture arch;
    const json& a = h.at("arch");
    arch.levels = a.at("levels").get<int>();
    arch.base_features = a.at("base_features").get<int>();
    arch.half_width = a.at("half_width").get<int>();
    arch.input_scale = a.at("input_scale").get<double>();
    if (h.at("precision").get<std::string>() != "f64le") throw FormatError(p.string() + ": unsupported precision");
    PriorParams params = zero_params(arch);
    const json& layers = h.at("layers");
    if (layers.size() != params.layers.size()) throw FormatError(p.string() + ": layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const ConvLayer& l = params.layers[i];
      if (layers[i].at("name").get<std::string>() != l.name || layers[i].at("cin").get<int>() != l.cin ||
          layers[i].at("cout").get<int>() != l.cout || layers[i].at("ksize").get<int>() != l.ksize)
        throw FormatError(p.string() + ": layer " + l.name + " shape mismatch");
    }
    std::size_t off = 20 + hlen;
    std::size_t need = 0;
    for (auto t : params.tensors()) need += 8 * t.size();
    if (bytes.size() - off != need)
      throw FormatError(p.string() + ": expected " + std::to_string(need) + " tensor bytes, found " +
                        std::to_string(bytes.size() - off));
    for (auto t : params.tensors()) {
      std::memcpy(t.data(), bytes.data() + off, 8 * t.size());
      off += 8 * t.size();
    }
    if (info) {
      info->seed = h.at("seed").get<std::uint64_t>();
      info->best_epoch = h.at("best_epoch").get<int>();
    }
    return params;
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": bad checkpoint header: " + e.what());
  }
}

void write_slice_pgm(const fs::path& p, const Volume& vol, std::size_t z) {
  if (z >= vol.dims.nz) throw RangeError("slice " + std::to_string(z) + " outside the volume");
  const auto s = vol.slice(z);
  auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double a = *lo, b = *hi;
  std::string out = "P5\n" + std::to_string(vol.dims.nx) + " " + std::to_string(vol.dims.ny) + "\n65535\n";
  for (double v : s) {
    const double t = b > a ? (v - a) / (b - a) : 0.0;
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(t, 0.0, 1.0) * 65535.0));
    out += static_cast<char>(q >> 8);
    out += static_cast<char>(q & 0xff);
  }
  write_file_atomic(p, out);
  fs::path side = p;
  side.replace_extension(".json");
  const json h = {{"schema_version", kSchemaVersion}, {"z", z},         {"width", vol.dims.nx},
                  {"height", vol.dims.ny},             {"window_min", a}, {"window_max", b},
                  {"maxval", 65535}};
  write_file_atomic(side, h.dump(2) + "\n");
}

void write_training_log_csv(const fs::path& p, const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_loss,val_nrmse,lr\n";
  for (const EpochLog& e : log)
    out += std::to_string(e.epoch) + "," + fmt(e.train_loss) + "," + fmt(e.val_nrmse) + "," + fmt(e.lr) + "\n";
  write_file_atomic(p, out);
}

void write_profile_csv(const fs::path& p, const std::vector<double>& values) {
  std::string out = "index,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) out += std::to_string(i) + "," + fmt(values[i]) + "\n";
  write_file_atomic(p, out);
}

void write_bins_csv(const fs::path& p, const DefectReport& report) {
  std::string out = "bin_lo_mm,bin_hi_mm,recall,precision,n_gt,n_det\n";
  for (const DiameterBin& b : report.bins)
    out += fmt(b.lo_mm) + "," + fmt(b.hi_mm) + "," + fmt_opt(b.recall) + "," + fmt_opt(b.precision) + "," +
           std::to_string(b.n_gt) + "," + std::to_string(b.n_det) + "\n";
  write_file_atomic(p, out);
}

void write_defects_json(const fs::path& p, const std::vector<Defect>& defects) {
  json list = json::array();
  for (const Defect& d : defects) list.push_back({{"center_voxel", d.center_voxel}, {"diameter_mm", d.diameter_mm}});
  write_file_atomic(p, json{{"schema_version", kSchemaVersion}, {"defects", list}}.dump(2) + "\n");
}

std::vector<Defect> read_defects_json(const fs::path& p) {
  const json h = parse_header(p);
  require_exact(h, {"schema_version", "defects"}, p);
  std::vector<Defect> out;
  try {
    for (const json& e : h.at("defects")) {
      require_exact(e, {"center_voxel", "diameter_mm"}, p);
      Defect d;
      const auto c = e.at("center_voxel").get<std::vector<double>>();
      if (c.size() != 3) throw FormatError(p.string() + ": center_voxel needs 3 entries");
      d.center_voxel = {c[0], c[1], c[2]};
      d.diameter_mm = e.at("diameter_mm").get<double>();
      out.push_back(d);
    }
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  return out;
}

}  // namespace ctpnp
