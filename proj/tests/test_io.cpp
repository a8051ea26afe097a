#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <unistd.h>

#include "ctpnp/config.hpp"
#include "ctpnp/errors.hpp"
#include "ctpnp/io.hpp"
#include "oracles.hpp"

using namespace ctpnp;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ctpnp_io_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

Volume random_volume(Dims3 d, std::uint64_t seed) {
  Volume v(d, 0.75);
  v.data = oracle::random_vector(v.data.size(), seed);
  return v;
}

}  // namespace

TEST_CASE("volume round trip, f64 and f32") {
  const Volume v = random_volume(Dims3{5, 4, 3}, 1);
  const fs::path p = scratch("vol");
  write_volume(p, v);
  CHECK(fs::file_size(scratch("vol.raw")) == 60 * 8);
  const VolumeFile r = read_volume(scratch("vol.json"));
  CHECK(r.volume.dims == v.dims);
  CHECK(r.volume.voxel_size_mm == 0.75);
  CHECK(r.volume.data == v.data);
  CHECK(r.dtype == Dtype::F64);
  // Writing the read volume back is byte identical.
  const std::string first = read_file(scratch("vol.raw")), first_h = read_file(scratch("vol.json"));
  write_volume(p, r.volume);
  CHECK(read_file(scratch("vol.raw")) == first);
  CHECK(read_file(scratch("vol.json")) == first_h);

  write_volume(scratch("vol32"), v, Dtype::F32);
  const VolumeFile r32 = read_volume(scratch("vol32"));
  CHECK(r32.dtype == Dtype::F32);
  for (std::size_t i = 0; i < v.data.size(); ++i) CHECK(r32.volume.data[i] == static_cast<double>(static_cast<float>(v.data[i])));
}

TEST_CASE("volume header and payload validation") {
  const Volume v = random_volume(Dims3{3, 3, 3}, 2);
  write_volume(scratch("bad"), v);
  std::string raw = read_file(scratch("bad.raw"));
  write_text(scratch("bad.raw"), raw.substr(0, raw.size() - 8));
  CHECK_THROWS_AS(read_volume(scratch("bad")), FormatError);
  try {
    read_volume(scratch("bad"));
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("216") != std::string::npos);
    CHECK(std::string(e.what()).find("208") != std::string::npos);
  }

  write_volume(scratch("hdr"), v);
  const std::string good = read_file(scratch("hdr.json"));
  auto j = json::parse(good);
  j["dtype"] = "i16le";
  write_text(scratch("hdr.json"), j.dump());
  CHECK_THROWS_AS(read_volume(scratch("hdr")), FormatError);
  j = json::parse(good);
  j["extra"] = 1;
  write_text(scratch("hdr.json"), j.dump());
  CHECK_THROWS_AS(read_volume(scratch("hdr")), FormatError);
  j = json::parse(good);
  j.erase("order");
  write_text(scratch("hdr.json"), j.dump());
  CHECK_THROWS_AS(read_volume(scratch("hdr")), FormatError);
  write_text(scratch("hdr.json"), "{ not json");
  CHECK_THROWS_AS(read_volume(scratch("hdr")), FormatError);
  CHECK_THROWS_AS(parse_dtype("f16le"), FormatError);
}

TEST_CASE("projection round trip keeps the geometry") {
  const ConeBeamGeometry g = with_views(ConeBeamGeometry{}, ScanKind::ShortScan, 7);
  ProjectionSet p(7, g.det_rows, g.det_cols, g.angles_deg);
  p.data = oracle::random_vector(p.data.size(), 3);
  write_projections(scratch("proj"), p, g);
  const ProjectionFile r = read_projections(scratch("proj"));
  CHECK(r.projections.data == p.data);
  CHECK(r.projections.angles_deg == g.angles_deg);
  CHECK(r.geometry.scan_kind == ScanKind::ShortScan);
  CHECK(r.geometry.angles_deg == g.angles_deg);
  CHECK(r.geometry.source_object_dist_mm == g.source_object_dist_mm);
  CHECK(r.geometry.vol_dims == g.vol_dims);
  CHECK_THROWS_AS(write_projections(scratch("proj2"), ProjectionSet(2, 1, 1, {0.0}), g), ShapeError);
}

TEST_CASE("checkpoint round trip") {
  const Architecture a{2, 3, 1, 0.37};
  const PriorParams p = init_params(a, 4);
  write_checkpoint(scratch("ckpt.bin"), p, CheckpointInfo{42, 17});
  CheckpointInfo info;
  const PriorParams q = read_checkpoint(scratch("ckpt.bin"), &info);
  CHECK(q.arch == a);
  CHECK(info.seed == 42);
  CHECK(info.best_epoch == 17);
  REQUIRE(q.layers.size() == p.layers.size());
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    CHECK(q.layers[i].name == p.layers[i].name);
    CHECK(q.layers[i].weight == p.layers[i].weight);
    CHECK(q.layers[i].bias == p.layers[i].bias);
  }
  const std::string bytes = read_file(scratch("ckpt.bin"));
  CHECK(bytes.substr(0, 8) == "CTPNPCKP");
  write_text(scratch("trunc.bin"), bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(scratch("trunc.bin")), FormatError);
  write_text(scratch("junk.bin"), "hello world, not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint(scratch("junk.bin")), FormatError);
}

TEST_CASE("SHA-256") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("atomic writes leave no temporary files") {
  const fs::path p = scratch("atomic/out.txt");
  write_file_atomic(p, "one");
  write_file_atomic(p, "two");
  CHECK(read_file(p) == "two");
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(p.parent_path())) n += e.is_regular_file();
  CHECK(n == 1);
}

TEST_CASE("CSV and slice outputs") {
  write_training_log_csv(scratch("log.csv"), {{1, 0.5, 0.25, 1e-3}});
  CHECK(read_file(scratch("log.csv")) == "epoch,train_loss,val_nrmse,lr\n1,0.5,0.25,0.001\n");
  write_profile_csv(scratch("prof.csv"), {0.5, 2.0});
  CHECK(read_file(scratch("prof.csv")) == "index,value\n0,0.5\n1,2\n");

  DefectReport r;
  DiameterBin b;
  b.lo_mm = 1.0;
  b.hi_mm = 2.0;
  b.n_gt = 0;
  b.n_det = 2;
  b.precision = 0.5;
  r.bins.push_back(b);
  write_bins_csv(scratch("bins.csv"), r);
  CHECK(read_file(scratch("bins.csv")) ==
        "bin_lo_mm,bin_hi_mm,recall,precision,n_gt,n_det\n1,2,undefined,0.5,0,2\n");

  Volume v(Dims3{3, 2, 2}, 1.0);
  v.at(2, 1, 1) = 4.0;
  v.at(0, 0, 1) = -4.0;
  write_slice_pgm(scratch("s.pgm"), v, 1);
  const std::string pgm = read_file(scratch("s.pgm"));
  CHECK(pgm.substr(0, 13) == "P5\n3 2\n65535\n");
  CHECK(pgm.size() == 13 + 12);
  CHECK(pgm.substr(13, 2) == std::string("\0\0", 2));
  CHECK(pgm.substr(23, 2) == "\xff\xff");
  const json side = json::parse(read_file(scratch("s.json")));
  CHECK(side.at("window_min") == -4.0);
  CHECK(side.at("window_max") == 4.0);
  CHECK_THROWS_AS(write_slice_pgm(scratch("t.pgm"), v, 2), RangeError);
}

TEST_CASE("defect list round trip") {
  const std::vector<Defect> d{{{1.5, 2.0, 3.25}, 2.5}, {{4, 5, 6}, 1.0}};
  write_defects_json(scratch("d.json"), d);
  const auto r = read_defects_json(scratch("d.json"));
  REQUIRE(r.size() == 2);
  CHECK(r[0].center_voxel == d[0].center_voxel);
  CHECK(r[1].diameter_mm == 1.0);
}

TEST_CASE("config defaults, round trip and strictness") {
  const RunConfig c = config_from_json(json::object());
  CHECK(c.pnp.K == 3);
  CHECK(c.pnp.cg_steps == 10);
  CHECK(c.pnp.beta_grid == default_beta_grid());
  CHECK(c.noise.I0 == 1e4);
  CHECK(c.training.train.epochs == 200);
  CHECK(c.training.train.lr == 1e-3);
  CHECK(c.training.train.plateau_factor == 2.0);
  CHECK(c.training.train.plateau_patience == 10);
  CHECK(c.training.split == 0.8);
  CHECK(c.prior.levels == 2);
  CHECK(c.prior.base_features == 8);
  CHECK(c.prior.half_width == 2);

  const json j = config_to_json(c);
  CHECK(config_to_json(config_from_json(j)) == j);

  json bad = j;
  bad["pnp"]["bogus"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), SpecError);
  bad = j;
  bad["nonsense"] = true;
  CHECK_THROWS_AS(config_from_json(bad), SpecError);
  bad = j;
  bad["pnp"]["beta_grid"] = {1.0, 2.0};
  CHECK_THROWS_AS(config_from_json(bad), SpecError);
  bad = j;
  bad["schema_version"] = 99;
  CHECK_THROWS_AS(config_from_json(bad), SpecError);
  bad = j;
  bad["spectrum"]["bins"] = json::array();
  CHECK_THROWS_AS(config_from_json(bad), SpecError);

  json tweak = j;
  tweak["prior"]["half_width"] = 0;
  tweak["scan"]["input_kind"] = "full";
  const RunConfig t = config_from_json(tweak);
  CHECK(t.prior.half_width == 0);
  CHECK(t.training.patch.half_width == 0);
  CHECK(t.scan.input_kind == ScanKind::FullScan);
}

TEST_CASE("config files and manifests") {
  const json j = config_to_json(RunConfig{});
  write_text(scratch("c.json"), j.dump());
  CHECK(config_to_json(load_config(scratch("c.json").string())) == j);
  write_text(scratch("m.json"), json{{"manifest_version", 1}, {"config", j}}.dump());
  CHECK(config_to_json(load_config(scratch("m.json").string())) == j);
  write_text(scratch("broken.json"), "{");
  CHECK_THROWS_AS(load_config(scratch("broken.json").string()), FormatError);
  CHECK_THROWS_AS(load_config(scratch("missing.json").string()), DataError);
}
