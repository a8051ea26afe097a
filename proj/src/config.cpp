#include "ctpnp/config.hpp"

#include <fstream>
#include <set>

#include "ctpnp/errors.hpp"

namespace ctpnp {
namespace {

template <class T>
void read_num(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw SpecError(where + "." + key + " must be a number");
    out = v.get<T>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw SpecError(where + "." + key + " must be a non-negative integer");
    out = v.get<T>();
  } else {
    if (!v.is_number_integer()) throw SpecError(where + "." + key + " must be an integer");
    out = v.get<T>();
  }
}

std::string read_str(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_string()) throw SpecError(where + "." + key + " must be a string");
  return v.get<std::string>();
}

const json& section(const json& j, const char* key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_object()) throw SpecError(where + "." + key + " must be an object");
  return v;
}

Vec3 read_vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw SpecError(where + " must be a 3-element array");
  Vec3 out{};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) throw SpecError(where + " must hold numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

std::vector<double> read_doubles(const json& v, const std::string& where) {
  if (!v.is_array()) throw SpecError(where + " must be an array");
  std::vector<double> out;
  for (const json& e : v) {
    if (!e.is_number()) throw SpecError(where + " must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

json window_to_json(const Window2D& w) { return {{"y0", w.y0}, {"x0", w.x0}, {"height", w.height}, {"width", w.width}}; }

Window2D window_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw SpecError(where + " must be an object");
  require_keys(j, {"y0", "x0", "height", "width"}, where);
  Window2D w;
  read_num(j, "y0", w.y0, where);
  read_num(j, "x0", w.x0, where);
  read_num(j, "height", w.height, where);
  read_num(j, "width", w.width, where);
  return w;
}

}  // namespace

void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw SpecError("unknown key '" + it.key() + "' in " + where);
}

const char* scan_kind_name(ScanKind k) { return k == ScanKind::FullScan ? "full" : "short"; }

ScanKind parse_scan_kind(const std::string& s) {
  if (s == "full") return ScanKind::FullScan;
  if (s == "short") return ScanKind::ShortScan;
  throw SpecError("scan kind must be 'full' or 'short', got '" + s + "'");
}

const char* filter_name(FilterKind k) { return k == FilterKind::Hann ? "hann" : "ramlak"; }

FilterKind parse_filter(const std::string& s) {
  if (s == "ramlak") return FilterKind::RamLak;
  if (s == "hann") return FilterKind::Hann;
  throw SpecError("filter window must be 'ramlak' or 'hann', got '" + s + "'");
}

json geometry_to_json(const ConeBeamGeometry& g, bool with_angles) {
  json j = {{"source_object_dist_mm", g.source_object_dist_mm},
            {"source_detector_dist_mm", g.source_detector_dist_mm},
            {"det_rows", g.det_rows},
            {"det_cols", g.det_cols},
            {"pixel_pitch_mm", g.pixel_pitch_mm},
            {"vol_dims", {g.vol_dims.nx, g.vol_dims.ny, g.vol_dims.nz}},
            {"voxel_size_mm", g.voxel_size_mm}};
  if (with_angles) {
    j["angles_deg"] = g.angles_deg;
    j["scan_kind"] = scan_kind_name(g.scan_kind);
  }
  return j;
}

ConeBeamGeometry geometry_from_json(const json& j) {
  const std::string w = "geometry";
  if (!j.is_object()) throw SpecError("geometry must be an object");
  require_keys(j,
               {"source_object_dist_mm", "source_detector_dist_mm", "det_rows", "det_cols", "pixel_pitch_mm",
                "vol_dims", "voxel_size_mm", "angles_deg", "scan_kind"},
               w);
  ConeBeamGeometry g;
  read_num(j, "source_object_dist_mm", g.source_object_dist_mm, w);
  read_num(j, "source_detector_dist_mm", g.source_detector_dist_mm, w);
  read_num(j, "det_rows", g.det_rows, w);
  read_num(j, "det_cols", g.det_cols, w);
  read_num(j, "pixel_pitch_mm", g.pixel_pitch_mm, w);
  read_num(j, "voxel_size_mm", g.voxel_size_mm, w);
  if (j.contains("vol_dims")) {
    const json& d = j.at("vol_dims");
    if (!d.is_array() || d.size() != 3) throw SpecError("geometry.vol_dims must be [nx, ny, nz]");
    for (const json& e : d)
      if (!e.is_number_unsigned()) throw SpecError("geometry.vol_dims must hold non-negative integers");
    g.vol_dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
  }
  if (j.contains("angles_deg")) g.angles_deg = read_doubles(j.at("angles_deg"), "geometry.angles_deg");
  if (j.contains("scan_kind")) g.scan_kind = parse_scan_kind(read_str(j, "scan_kind", w));
  return g;
}

json phantom_to_json(const PhantomSpec& p) {
  json body = json::array();
  for (const Solid& s : p.body) {
    json e;
    if (const auto* b = std::get_if<Box>(&s.shape)) {
      e = {{"type", "box"}, {"min_mm", b->min_mm}, {"max_mm", b->max_mm}};
    } else if (const auto* c = std::get_if<Cylinder>(&s.shape)) {
      e = {{"type", "cylinder"},     {"cx_mm", c->cx_mm},       {"cy_mm", c->cy_mm},
           {"radius_mm", c->radius_mm}, {"z_min_mm", c->z_min_mm}, {"z_max_mm", c->z_max_mm}};
    } else {
      const auto& sp = std::get<Sphere>(s.shape);
      e = {{"type", "sphere"}, {"center_mm", sp.center_mm}, {"radius_mm", sp.radius_mm}};
    }
    e["mu"] = s.mu_ref;
    body.push_back(e);
  }
  json pores = json::array();
  for (const Pore& q : p.pores) pores.push_back({{"center_mm", q.center_mm}, {"diameter_mm", q.diameter_mm}});
  json j = {{"body", body}, {"pores", pores}, {"seed", p.rng_seed}};
  if (p.random_pores)
    j["random_pores"] = {{"count", p.random_pores->count},
                         {"diameter_min_mm", p.random_pores->diameter_min_mm},
                         {"diameter_max_mm", p.random_pores->diameter_max_mm}};
  return j;
}

PhantomSpec phantom_from_json(const json& j) {
  const std::string w = "phantom";
  if (!j.is_object()) throw SpecError("phantom must be an object");
  require_keys(j, {"body", "pores", "random_pores", "seed"}, w);
  PhantomSpec p;
  read_num(j, "seed", p.rng_seed, w);
  if (j.contains("body")) {
    if (!j.at("body").is_array()) throw SpecError("phantom.body must be an array");
    for (const json& e : j.at("body")) {
      const std::string ew = "phantom.body[]";
      if (!e.is_object() || !e.contains("type")) throw SpecError(ew + " entries need a type");
      const std::string type = read_str(e, "type", ew);
      Solid s;
      read_num(e, "mu", s.mu_ref, ew);
      if (type == "box") {
        require_keys(e, {"type", "mu", "min_mm", "max_mm"}, ew);
        s.shape = Box{read_vec3(e.at("min_mm"), ew + ".min_mm"), read_vec3(e.at("max_mm"), ew + ".max_mm")};
      } else if (type == "cylinder") {
        require_keys(e, {"type", "mu", "cx_mm", "cy_mm", "radius_mm", "z_min_mm", "z_max_mm"}, ew);
        Cylinder c;
        read_num(e, "cx_mm", c.cx_mm, ew);
        read_num(e, "cy_mm", c.cy_mm, ew);
        read_num(e, "radius_mm", c.radius_mm, ew);
        read_num(e, "z_min_mm", c.z_min_mm, ew);
        read_num(e, "z_max_mm", c.z_max_mm, ew);
        s.shape = c;
      } else if (type == "sphere") {
        require_keys(e, {"type", "mu", "center_mm", "radius_mm"}, ew);
        Sphere sp;
        sp.center_mm = read_vec3(e.at("center_mm"), ew + ".center_mm");
        read_num(e, "radius_mm", sp.radius_mm, ew);
        s.shape = sp;
      } else {
        throw SpecError("unknown solid type '" + type + "'");
      }
      p.body.push_back(s);
    }
  }
  if (j.contains("pores")) {
    if (!j.at("pores").is_array()) throw SpecError("phantom.pores must be an array");
    for (const json& e : j.at("pores")) {
      require_keys(e, {"center_mm", "diameter_mm"}, "phantom.pores[]");
      Pore q;
      q.center_mm = read_vec3(e.at("center_mm"), "phantom.pores[].center_mm");
      read_num(e, "diameter_mm", q.diameter_mm, "phantom.pores[]");
      p.pores.push_back(q);
    }
  }
  if (j.contains("random_pores") && !j.at("random_pores").is_null()) {
    const json& r = section(j, "random_pores", w);
    require_keys(r, {"count", "diameter_min_mm", "diameter_max_mm"}, "phantom.random_pores");
    RandomPores rp;
    read_num(r, "count", rp.count, "phantom.random_pores");
    read_num(r, "diameter_min_mm", rp.diameter_min_mm, "phantom.random_pores");
    read_num(r, "diameter_max_mm", rp.diameter_max_mm, "phantom.random_pores");
    p.random_pores = rp;
  }
  return p;
}

json spectrum_to_json(const Spectrum& s) {
  json bins = json::array();
  for (const SpectrumBin& b : s.bins) bins.push_back({{"weight", b.weight}, {"mu_scale", b.mu_scale}});
  return {{"bins", bins}};
}

Spectrum spectrum_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("spectrum must be an object");
  require_keys(j, {"bins"}, "spectrum");
  Spectrum s;
  if (!j.contains("bins")) return Spectrum::polychromatic();
  if (!j.at("bins").is_array()) throw SpecError("spectrum.bins must be an array");
  for (const json& e : j.at("bins")) {
    require_keys(e, {"weight", "mu_scale"}, "spectrum.bins[]");
    SpectrumBin b;
    read_num(e, "weight", b.weight, "spectrum.bins[]");
    read_num(e, "mu_scale", b.mu_scale, "spectrum.bins[]");
    s.bins.push_back(b);
  }
  try {
    s.validate();
  } catch (const ParamError& e) {
    throw SpecError(e.what());
  }
  return s;
}

PhantomSpec RunConfig::default_phantom() {
  PhantomSpec p;
  p.body.push_back({Cylinder{0.0, 0.0, 24.0, -24.0, 24.0}, 0.02});
  p.random_pores = RandomPores{10, 2.0, 6.0};
  p.rng_seed = 1;
  return p;
}

ScanSettings RunConfig::input_settings() const {
  return {scan.input_kind, scan.input_views, noise.sigma, spectrum};
}

ScanSettings RunConfig::reference_settings() const {
  return {scan.reference_kind, scan.reference_views, 0.0, Spectrum::monochromatic()};
}

json config_to_json(const RunConfig& c) {
  json pnp = {{"K", c.pnp.K},
              {"cg_steps", c.pnp.cg_steps},
              {"beta_grid", c.pnp.beta_grid},
              {"half_rows", c.pnp.half_rows},
              {"n_sel", c.pnp.n_sel},
              {"tau", c.pnp.tau},
              {"fixed_beta", c.pnp.fixed_beta ? json(*c.pnp.fixed_beta) : json(nullptr)},
              {"beta_scale", c.pnp.beta_scale ? json(*c.pnp.beta_scale) : json(nullptr)}};
  const TrainConfig& t = c.training.train;
  const PatchingConfig& pc = c.training.patch;
  json analysis = {{"bin_edges_mm", c.analysis.bin_edges_mm}, {"min_iou", c.analysis.min_iou}};
  if (c.analysis.region) {
    const RegionSpec& r = *c.analysis.region;
    analysis["region"] = {{"z0", r.z0},
                          {"n_slices", r.n_slices},
                          {"background", window_to_json(r.background)},
                          {"material", window_to_json(r.material)}};
  } else {
    analysis["region"] = nullptr;
  }
  return {
      {"geometry", geometry_to_json(c.geometry, false)},
      {"phantom", phantom_to_json(c.phantom)},
      {"spectrum", spectrum_to_json(c.spectrum)},
      {"noise", {{"sigma", c.noise.sigma}, {"seed", c.noise.seed}, {"I0", c.noise.I0}}},
      {"scan",
       {{"input_kind", scan_kind_name(c.scan.input_kind)},
        {"input_views", c.scan.input_views},
        {"reference_kind", scan_kind_name(c.scan.reference_kind)},
        {"reference_views", c.scan.reference_views}}},
      {"fdk", {{"window", filter_name(c.fdk.kind)}, {"padded_len", c.fdk.padded_len}}},
      {"pnp", pnp},
      {"prior",
       {{"levels", c.prior.levels},
        {"base_features", c.prior.base_features},
        {"half_width", c.prior.half_width},
        {"input_scale", c.prior.input_scale}}},
      {"training",
       {{"epochs", t.epochs},
        {"lr", t.lr},
        {"patience", t.plateau_patience},
        {"factor", t.plateau_factor},
        {"batch", t.batch},
        {"seed", t.seed},
        {"split", c.training.split},
        {"patch",
         {{"height", pc.height},
          {"width", pc.width},
          {"stride_y", pc.stride_y},
          {"stride_x", pc.stride_x},
          {"stride_z", pc.stride_z}}}}},
      {"analysis", analysis},
  };
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw SpecError("config must be a JSON object");
  require_keys(j,
               {"schema_version", "geometry", "phantom", "spectrum", "noise", "scan", "fdk", "pnp", "prior",
                "training", "analysis"},
               "config");
  if (j.contains("schema_version")) {
    int v = 0;
    read_num(j, "schema_version", v, "config");
    if (v != kSchemaVersion) throw SpecError("unsupported schema_version " + std::to_string(v));
  }
  RunConfig c;
  if (j.contains("geometry")) c.geometry = geometry_from_json(j.at("geometry"));
  if (j.contains("phantom")) c.phantom = phantom_from_json(j.at("phantom"));
  if (j.contains("spectrum")) c.spectrum = spectrum_from_json(j.at("spectrum"));
  if (j.contains("noise")) {
    const json& n = section(j, "noise", "config");
    require_keys(n, {"sigma", "seed", "I0"}, "noise");
    read_num(n, "sigma", c.noise.sigma, "noise");
    read_num(n, "seed", c.noise.seed, "noise");
    read_num(n, "I0", c.noise.I0, "noise");
    if (!(c.noise.sigma >= 0.0)) throw SpecError("noise.sigma must be >= 0");
    if (!(c.noise.I0 > 0.0)) throw SpecError("noise.I0 must be > 0");
  }
  if (j.contains("scan")) {
    const json& s = section(j, "scan", "config");
    require_keys(s, {"input_kind", "input_views", "reference_kind", "reference_views"}, "scan");
    if (s.contains("input_kind")) c.scan.input_kind = parse_scan_kind(read_str(s, "input_kind", "scan"));
    if (s.contains("reference_kind")) c.scan.reference_kind = parse_scan_kind(read_str(s, "reference_kind", "scan"));
    read_num(s, "input_views", c.scan.input_views, "scan");
    read_num(s, "reference_views", c.scan.reference_views, "scan");
  }
  if (j.contains("fdk")) {
    const json& f = section(j, "fdk", "config");
    require_keys(f, {"window", "padded_len"}, "fdk");
    if (f.contains("window")) c.fdk.kind = parse_filter(read_str(f, "window", "fdk"));
    read_num(f, "padded_len", c.fdk.padded_len, "fdk");
  }
  if (j.contains("pnp")) {
    const json& p = section(j, "pnp", "config");
    require_keys(p, {"K", "cg_steps", "beta_grid", "half_rows", "n_sel", "tau", "fixed_beta", "beta_scale"}, "pnp");
    read_num(p, "K", c.pnp.K, "pnp");
    read_num(p, "cg_steps", c.pnp.cg_steps, "pnp");
    read_num(p, "half_rows", c.pnp.half_rows, "pnp");
    read_num(p, "n_sel", c.pnp.n_sel, "pnp");
    read_num(p, "tau", c.pnp.tau, "pnp");
    if (p.contains("beta_grid")) c.pnp.beta_grid = read_doubles(p.at("beta_grid"), "pnp.beta_grid");
    if (p.contains("fixed_beta") && !p.at("fixed_beta").is_null()) {
      double b = 0.0;
      read_num(p, "fixed_beta", b, "pnp");
      c.pnp.fixed_beta = b;
    }
    if (p.contains("beta_scale") && !p.at("beta_scale").is_null()) {
      double b = 0.0;
      read_num(p, "beta_scale", b, "pnp");
      c.pnp.beta_scale = b;
    }
    try {
      c.pnp.validate();
    } catch (const ParamError& e) {
      throw SpecError(e.what());
    }
  }
  if (j.contains("prior")) {
    const json& p = section(j, "prior", "config");
    require_keys(p, {"levels", "base_features", "half_width", "input_scale"}, "prior");
    read_num(p, "levels", c.prior.levels, "prior");
    read_num(p, "base_features", c.prior.base_features, "prior");
    read_num(p, "half_width", c.prior.half_width, "prior");
    read_num(p, "input_scale", c.prior.input_scale, "prior");
    if (c.prior.levels < 0 || c.prior.base_features < 1 || c.prior.half_width < 0)
      throw SpecError("prior needs levels >= 0, base_features >= 1, half_width >= 0");
  }
  if (j.contains("training")) {
    const json& t = section(j, "training", "config");
    require_keys(t, {"epochs", "lr", "patience", "factor", "batch", "seed", "split", "patch"}, "training");
    TrainConfig& tc = c.training.train;
    read_num(t, "epochs", tc.epochs, "training");
    read_num(t, "lr", tc.lr, "training");
    read_num(t, "patience", tc.plateau_patience, "training");
    read_num(t, "factor", tc.plateau_factor, "training");
    read_num(t, "batch", tc.batch, "training");
    read_num(t, "seed", tc.seed, "training");
    read_num(t, "split", c.training.split, "training");
    if (tc.epochs < 1) throw SpecError("training.epochs must be >= 1");
    if (!(c.training.split > 0.0 && c.training.split < 1.0)) throw SpecError("training.split must lie in (0, 1)");
    if (t.contains("patch")) {
      const json& pt = section(t, "patch", "training");
      require_keys(pt, {"height", "width", "stride_y", "stride_x", "stride_z"}, "training.patch");
      PatchingConfig& pc = c.training.patch;
      read_num(pt, "height", pc.height, "training.patch");
      read_num(pt, "width", pc.width, "training.patch");
      read_num(pt, "stride_y", pc.stride_y, "training.patch");
      read_num(pt, "stride_x", pc.stride_x, "training.patch");
      read_num(pt, "stride_z", pc.stride_z, "training.patch");
    }
  }
  c.training.patch.half_width = c.prior.half_width;
  if (j.contains("analysis")) {
    const json& a = section(j, "analysis", "config");
    require_keys(a, {"bin_edges_mm", "min_iou", "region"}, "analysis");
    if (a.contains("bin_edges_mm")) c.analysis.bin_edges_mm = read_doubles(a.at("bin_edges_mm"), "analysis.bin_edges_mm");
    read_num(a, "min_iou", c.analysis.min_iou, "analysis");
    if (a.contains("region") && !a.at("region").is_null()) {
      const json& r = section(a, "region", "analysis");
      require_keys(r, {"z0", "n_slices", "background", "material"}, "analysis.region");
      RegionSpec rs;
      read_num(r, "z0", rs.z0, "analysis.region");
      read_num(r, "n_slices", rs.n_slices, "analysis.region");
      if (r.contains("background")) rs.background = window_from_json(r.at("background"), "analysis.region.background");
      if (r.contains("material")) rs.material = window_from_json(r.at("material"), "analysis.region.material");
      c.analysis.region = rs;
    }
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config " + path + " is not valid JSON: " + e.what());
  }
  // A run manifest carries the resolved config under "config".
  if (j.is_object() && j.contains("manifest_version")) {
    if (!j.contains("config")) throw FormatError("manifest " + path + " has no config section");
    return config_from_json(j.at("config"));
  }
  return config_from_json(j);
}

}  // namespace ctpnp
