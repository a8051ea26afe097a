// ctpnp: simulate, reconstruct, train, evaluate.
//
// Exit codes: 0 success, 2 usage, 3 data or format problem, 4 non-finite
// numbers encountered.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ctpnp/config.hpp"
#include "ctpnp/defects.hpp"
#include "ctpnp/errors.hpp"
#include "ctpnp/fdk.hpp"
#include "ctpnp/io.hpp"
#include "ctpnp/metrics.hpp"
#include "ctpnp/parallel.hpp"
#include "ctpnp/pnp.hpp"
#include "ctpnp/simulator.hpp"
#include "ctpnp/training.hpp"

using namespace ctpnp;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Records what a run read and wrote. Paths are stored relative to the
// manifest's directory where possible so two runs in different places
// produce comparable manifests.
class Manifest {
 public:
  Manifest(std::string command, fs::path where) : command_(std::move(command)), path_(std::move(where)) {}

  json args = json::object();
  json config = nullptr;
  json seeds = json::object();

  void input(const fs::path& p) { inputs_.push_back(p); }
  void artifact(const fs::path& p) { artifacts_.push_back(p); }
  void pair(const fs::path& stem, bool in) {
    const FilePair fp = file_pair(stem);
    for (const auto& p : {fp.header, fp.payload}) in ? input(p) : artifact(p);
  }

  void write() const {
    json j = {{"manifest_version", 1}, {"schema_version", kSchemaVersion}, {"command", command_},
              {"arguments", args},    {"config", config},                {"seeds", seeds}};
    j["inputs"] = listing(inputs_);
    j["artifacts"] = listing(artifacts_);
    write_file_atomic(path_, j.dump(2) + "\n");
  }

 private:
  json listing(const std::vector<fs::path>& files) const {
    json out = json::array();
    const fs::path base = fs::absolute(path_).parent_path();
    for (const auto& f : files) {
      std::string name = fs::absolute(f).lexically_relative(base).generic_string();
      if (name.empty() || name.rfind("..", 0) == 0) name = fs::absolute(f).generic_string();
      out.push_back({{"path", name}, {"sha256", sha256_file(f)}});
    }
    return out;
  }

  std::string command_;
  fs::path path_;
  std::vector<fs::path> inputs_, artifacts_;
};

fs::path manifest_path(const std::string& flag, const fs::path& out) {
  if (!flag.empty()) return flag;
  return fs::absolute(out).parent_path() / "run_manifest.json";
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, j.dump(2) + "\n");
}

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value in ") + what);
}

RunConfig config_or_default(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

// JSON has no infinity; undefined and infinite metrics are spelled out.
json metric_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "undefined";
  return v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json("undefined"); }

template <class F>
json guarded_metric(F&& f) {
  try {
    return metric_json(f());
  } catch (const MetricUndefined&) {
    return "undefined";
  }
}

json pnp_config_json(const PnPConfig& c) {
  RunConfig r;
  r.pnp = c;
  return config_to_json(r).at("pnp");
}

json trace_json(const PnPTrace& t, const PnPConfig& cfg, const Architecture& arch) {
  json its = json::array();
  for (const IterationTrace& it : t.iterations)
    its.push_back({{"k", it.k},
                   {"beta", it.beta},
                   {"selection_residuals", it.selection_residuals},
                   {"objective_before", it.objective_before},
                   {"objective_after", it.objective_after},
                   {"cg_residual_norms", it.cg_residual_norms},
                   {"cg_objective", it.cg_objective},
                   {"wall_time_s", it.wall_time_s},
                   {"peak_memory_bytes", it.peak_memory_bytes}});
  return {{"schema_version", kSchemaVersion},
          {"pnp", pnp_config_json(cfg)},
          {"prior", {{"levels", arch.levels}, {"base_features", arch.base_features}, {"half_width", arch.half_width}, {"input_scale", arch.input_scale}}},
          {"denoiser_calls", t.denoiser_calls},
          {"selections", t.selections},
          {"cg_steps_total", t.cg_steps_total},
          {"beta_scale", t.beta_scale},
          {"fdk_time_s", t.fdk_time_s},
          {"iterations", its}};
}

// One "input target" pair of volume paths per line; '#' starts a comment.
// Relative paths are taken from the list's directory.
std::vector<std::pair<fs::path, fs::path>> read_pairs(const fs::path& list) {
  std::istringstream in(read_file(list));
  std::vector<std::pair<fs::path, fs::path>> out;
  const fs::path base = list.parent_path();
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b) || (ls >> extra))
      throw FormatError(list.string() + ":" + std::to_string(n) + ": expected two paths");
    auto resolve = [&](const std::string& s) { return fs::path(s).is_absolute() ? fs::path(s) : base / s; };
    out.emplace_back(resolve(a), resolve(b));
  }
  if (out.empty()) throw DataError(list.string() + ": no training pairs");
  return out;
}

std::optional<RegionSpec> read_regions(const fs::path& p) {
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
  return config_from_json(json{{"analysis", {{"region", j}}}}).analysis.region;
}

// ---------------------------------------------------------------- commands

struct SimulateArgs {
  std::string config, out_dir, manifest;
};

void run_simulate(const SimulateArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  const ScanPair pair = simulate_pair(cfg.phantom, cfg.geometry, cfg.input_settings(), cfg.reference_settings(),
                                      cfg.noise.I0, cfg.noise.seed);
  require_finite(pair.input.projections.data, "input projections");

  Manifest m("simulate", manifest_path(a.manifest, dir / "x"));
  m.args = {{"config", a.config}, {"out_dir", a.out_dir}};
  m.config = config_to_json(cfg);
  m.seeds = {{"noise", cfg.noise.seed}, {"phantom", cfg.phantom.rng_seed}};
  if (!a.config.empty()) m.input(a.config);

  write_projections(dir / "input_proj", pair.input.projections, pair.input.geom);
  write_projections(dir / "reference_proj", pair.reference.projections, pair.reference.geom);
  write_volume(dir / "phantom", pair.phantom.volume);
  write_defects_json(dir / "truth.json", pair.phantom.defects);
  for (const char* stem : {"input_proj", "reference_proj", "phantom"}) m.pair(dir / stem, false);
  m.artifact(dir / "truth.json");
  m.write();
}

struct FdkArgs {
  std::string proj, out, window, config, manifest;
};

void run_fdk(const FdkArgs& a) {
  RunConfig cfg = config_or_default(a.config);
  if (!a.window.empty()) cfg.fdk.kind = parse_filter(a.window);
  const ProjectionFile pf = read_projections(a.proj);
  const Volume v = fdk_reconstruct(pf.projections, pf.geometry, cfg.fdk);
  require_finite(v.data, "FDK volume");
  write_volume(a.out, v);

  Manifest m("fdk", manifest_path(a.manifest, a.out));
  m.args = {{"proj", a.proj}, {"out", a.out}, {"window", filter_name(cfg.fdk.kind)}, {"config", a.config}};
  m.config = config_to_json(cfg);
  m.pair(a.proj, true);
  m.pair(a.out, false);
  m.write();
}

struct PnpArgs {
  std::string proj, prior, out, trace, config, manifest;
};

void run_pnp(const PnpArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const ProjectionFile pf = read_projections(a.proj);
  const PriorParams prior = read_checkpoint(a.prior);
  const PnPResult r = pnp_reconstruct(pf.projections, pf.geometry, prior, cfg.pnp);
  require_finite(r.volume.data, "PnP volume");
  write_volume(a.out, r.volume);
  write_json(a.trace, trace_json(r.trace, cfg.pnp, prior.arch));

  Manifest m("pnp", manifest_path(a.manifest, a.out));
  m.args = {{"proj", a.proj}, {"prior", a.prior}, {"out", a.out}, {"trace", a.trace}, {"config", a.config}};
  m.config = config_to_json(cfg);
  m.pair(a.proj, true);
  m.input(a.prior);
  m.pair(a.out, false);
  m.artifact(a.trace);
  m.write();
}

struct TrainArgs {
  std::string pairs, config, out, log, manifest;
};

void run_train(const TrainArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const auto pairs = read_pairs(a.pairs);
  Manifest m("train-prior", manifest_path(a.manifest, a.out));
  std::vector<Patch> patches;
  for (const auto& [in, tg] : pairs) {
    const Volume x = read_volume(in).volume, y = read_volume(tg).volume;
    auto p = collect_patches(x, y, cfg.training.patch);
    std::move(p.begin(), p.end(), std::back_inserter(patches));
    m.pair(in, true);
    m.pair(tg, true);
  }
  const Dataset data = split_patches(std::move(patches), cfg.training.train.seed, cfg.training.split);
  const TrainResult r = train_prior(data, cfg.prior, cfg.training.train);
  for (const auto t : r.params.tensors()) require_finite({t.begin(), t.end()}, "trained parameters");

  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_checkpoint(a.out, r.params, CheckpointInfo{cfg.training.train.seed, r.best_epoch});
  write_training_log_csv(a.log, r.log);

  m.args = {{"pairs", a.pairs}, {"config", a.config}, {"out", a.out}, {"log", a.log}};
  m.config = config_to_json(cfg);
  m.seeds = {{"training", cfg.training.train.seed}};
  m.input(a.pairs);
  if (!a.config.empty()) m.input(a.config);
  m.artifact(a.out);
  m.artifact(a.log);
  m.write();
}

struct EvalArgs {
  std::string recon, ref, report, regions, profile, config, manifest;
  long profile_row = -1;
};

void run_eval(const EvalArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const Volume x = read_volume(a.recon).volume, ref = read_volume(a.ref).volume;
  if (x.dims != ref.dims) throw ShapeError("reconstruction and reference dimensions differ");
  std::optional<RegionSpec> region = cfg.analysis.region;
  if (!a.regions.empty()) region = read_regions(a.regions);

  json rep = {{"schema_version", kSchemaVersion}};
  rep["nrmse"] = guarded_metric([&] { return nrmse(x, ref); });
  rep["ssim"] = guarded_metric([&] { return ssim(x, ref); });
  if (region) {
    region->validate(x.dims);
    rep["snr_db"] = guarded_metric([&] { return snr(x, *region); });
    rep["cnr"] = guarded_metric([&] { return cnr(x, *region); });
  } else {
    rep["snr_db"] = "undefined";
    rep["cnr"] = "undefined";
  }
  const std::size_t z = x.dims.nz / 2;
  const std::size_t row = a.profile_row >= 0 ? static_cast<std::size_t>(a.profile_row) : x.dims.ny / 2;
  const auto prof = line_profile(x, z, row), prof_ref = line_profile(ref, z, row);
  rep["profile"] = {{"z", z}, {"row", row}, {"recon", prof}, {"reference", prof_ref}};
  write_json(a.report, rep);

  Manifest m("eval", manifest_path(a.manifest, a.report));
  m.args = {{"recon", a.recon}, {"ref", a.ref}, {"report", a.report}, {"regions", a.regions}, {"profile", a.profile}};
  m.config = config_to_json(cfg);
  m.pair(a.recon, true);
  m.pair(a.ref, true);
  if (!a.regions.empty()) m.input(a.regions);
  m.artifact(a.report);
  if (!a.profile.empty()) {
    write_profile_csv(a.profile, prof);
    m.artifact(a.profile);
  }
  m.write();
}

struct DetectArgs {
  std::string recon, truth, report, csv, config, manifest;
};

void run_detect(const DetectArgs& a) {
  const RunConfig cfg = config_or_default(a.config);
  const Volume x = read_volume(a.recon).volume;
  const auto truth = read_defects_json(a.truth);
  const auto edges = cfg.analysis.bin_edges_mm.empty() ? default_bin_edges(x.voxel_size_mm) : cfg.analysis.bin_edges_mm;
  const double threshold = otsu_threshold(x);
  const DefectReport r = detect_and_score(x, truth, edges, MatchRule{cfg.analysis.min_iou});

  json bins = json::array();
  for (const DiameterBin& b : r.bins)
    bins.push_back({{"lo_mm", b.lo_mm}, {"hi_mm", b.hi_mm}, {"n_gt", b.n_gt}, {"n_gt_found", b.n_gt_found},
                    {"n_det", b.n_det}, {"n_det_true", b.n_det_true}, {"recall", optional_json(b.recall)},
                    {"precision", optional_json(b.precision)}});
  json comps = json::array();
  for (const Component& c : r.detected)
    comps.push_back({{"centroid_voxel", c.centroid}, {"voxels", c.voxels.size()}, {"equivalent_diameter_mm", c.equivalent_diameter_mm}});
  json matches = json::array();
  for (const Match& mt : r.matches) matches.push_back({{"gt", mt.gt}, {"component", mt.component}});
  const json rep = {{"schema_version", kSchemaVersion},
                    {"threshold", threshold},
                    {"n_ground_truth", r.ground_truth.size()},
                    {"n_detected", r.detected.size()},
                    {"recall", optional_json(r.recall)},
                    {"precision", optional_json(r.precision)},
                    {"bins", bins},
                    {"components", comps},
                    {"matches", matches}};
  write_json(a.report, rep);
  const fs::path csv = a.csv.empty() ? fs::path(a.report).replace_extension(".csv") : fs::path(a.csv);
  write_bins_csv(csv, r);

  Manifest m("detect", manifest_path(a.manifest, a.report));
  m.args = {{"recon", a.recon}, {"truth", a.truth}, {"report", a.report}, {"csv", csv.string()}, {"config", a.config}};
  m.config = config_to_json(cfg);
  m.pair(a.recon, true);
  m.input(a.truth);
  m.artifact(a.report);
  m.artifact(csv);
  m.write();
}

struct SliceArgs {
  std::string vol, out, manifest;
  std::size_t z = 0;
};

void run_slice(const SliceArgs& a) {
  const Volume v = read_volume(a.vol).volume;
  require_finite(v.data, "volume");
  write_slice_pgm(a.out, v, a.z);
  Manifest m("slice-dump", manifest_path(a.manifest, a.out));
  m.args = {{"vol", a.vol}, {"z", a.z}, {"out", a.out}};
  m.pair(a.vol, true);
  m.artifact(a.out);
  m.artifact(fs::path(a.out).replace_extension(".json"));
  m.write();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cone-beam CT reconstruction with a learned plug-and-play prior"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Worker cap (1 gives bit-exact runs)")->check(CLI::NonNegativeNumber);

  auto manifest_opt = [](CLI::App* sub, std::string& target) {
    sub->add_option("--manifest", target, "Manifest path (default: run_manifest.json beside the output)");
  };

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate input and reference scans of a phantom");
  c_sim->add_option("--config", sim.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  manifest_opt(c_sim, sim.manifest);

  FdkArgs fdk;
  auto* c_fdk = app.add_subcommand("fdk", "Analytic reconstruction");
  c_fdk->add_option("--proj", fdk.proj, "Projection file")->required();
  c_fdk->add_option("--out", fdk.out, "Output volume")->required();
  c_fdk->add_option("--window", fdk.window, "Ramp window")->check(CLI::IsMember({"ramlak", "hann"}));
  c_fdk->add_option("--config", fdk.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  manifest_opt(c_fdk, fdk.manifest);

  PnpArgs pnp;
  auto* c_pnp = app.add_subcommand("pnp", "Plug-and-play reconstruction with a trained prior");
  c_pnp->add_option("--proj", pnp.proj, "Projection file")->required();
  c_pnp->add_option("--prior", pnp.prior, "Prior checkpoint")->required();
  c_pnp->add_option("--out", pnp.out, "Output volume")->required();
  c_pnp->add_option("--trace", pnp.trace, "Iteration trace (JSON)")->required();
  c_pnp->add_option("--config", pnp.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  manifest_opt(c_pnp, pnp.manifest);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train-prior", "Train the slice-stack denoising prior");
  c_tr->add_option("--pairs", tr.pairs, "Text file of 'input target' volume pairs")->required();
  c_tr->add_option("--config", tr.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "Checkpoint to write")->required();
  c_tr->add_option("--log", tr.log, "Training log (CSV)")->required();
  manifest_opt(c_tr, tr.manifest);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Image quality against a reference volume");
  c_ev->add_option("--recon", ev.recon, "Reconstruction")->required();
  c_ev->add_option("--ref", ev.ref, "Reference volume")->required();
  c_ev->add_option("--report", ev.report, "Report (JSON)")->required();
  c_ev->add_option("--regions", ev.regions, "Background/material windows (JSON)")->check(CLI::ExistingFile);
  c_ev->add_option("--profile", ev.profile, "Central line profile (CSV)");
  c_ev->add_option("--profile-row", ev.profile_row, "Row of the profile (default: centre)");
  c_ev->add_option("--config", ev.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  manifest_opt(c_ev, ev.manifest);

  DetectArgs det;
  auto* c_det = app.add_subcommand("detect", "Pore detection and recall/precision by diameter");
  c_det->add_option("--recon", det.recon, "Reconstruction")->required();
  c_det->add_option("--truth", det.truth, "Ground-truth pores (JSON)")->required();
  c_det->add_option("--report", det.report, "Report (JSON)")->required();
  c_det->add_option("--csv", det.csv, "Per-bin table (default: report path with .csv)");
  c_det->add_option("--config", det.config, "Run configuration or manifest")->check(CLI::ExistingFile);
  manifest_opt(c_det, det.manifest);

  SliceArgs sl;
  auto* c_sl = app.add_subcommand("slice-dump", "Write one axial slice as a 16-bit PGM");
  c_sl->add_option("--vol", sl.vol, "Volume")->required();
  c_sl->add_option("--z", sl.z, "Slice index")->required();
  c_sl->add_option("--out", sl.out, "Image path")->required();
  manifest_opt(c_sl, sl.manifest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  set_thread_count(threads);
  try {
    if (*c_sim) run_simulate(sim);
    if (*c_fdk) run_fdk(fdk);
    if (*c_pnp) run_pnp(pnp);
    if (*c_tr) run_train(tr);
    if (*c_ev) run_eval(ev);
    if (*c_det) run_detect(det);
    if (*c_sl) run_slice(sl);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
