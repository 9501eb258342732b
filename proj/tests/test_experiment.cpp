#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "halolab/experiment.hpp"

using namespace halolab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("halolab_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

json slurp_json(const fs::path& p) {
  const json j = json::parse(slurp(p), nullptr, false);
  REQUIRE_FALSE(j.is_discarded());
  return j;
}

Window square_window(std::int64_t res, double lo, double hi) {
  Window w;
  w.n = 2;
  w.origin = {lo, lo, 0};
  w.extent = {hi - lo, hi - lo, 0};
  w.res = {res, res, 1};
  return w;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64(nullptr, 0) == 14695981039346656037ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("2d masks round trip through pgm with their geometry") {
  const Window w = square_window(48, -1.0, 2.0);
  GridMask m = GridMask::empty(w);
  for (std::int64_t f = 0; f < w.cells(); f += 7) m.set(f, true);
  const fs::path dir = fresh_dir("pgm");
  const auto files = save_mask(m, dir / "mask");
  REQUIRE(files.size() == 1);
  CHECK(files[0].extension() == ".pgm");
  const GridMask back = load_mask(dir / "mask");
  CHECK(back.win == w);
  CHECK(back.same_cells(m));
  const std::string head = slurp(files[0]).substr(0, 2);
  CHECK(head == "P5");
  fs::remove_all(dir);
}

TEST_CASE("1d and 3d masks round trip through the bit sidecar") {
  for (const int n : {1, 3}) {
    Window w;
    w.n = n;
    w.origin = {0.5, -0.25, 0};
    w.extent = {2, 1, 1};
    w.res = {64, n >= 2 ? 8 : 1, n >= 3 ? 5 : 1};
    GridMask m = GridMask::empty(w);
    for (std::int64_t f = 0; f < w.cells(); f += 3) m.set(f, true);
    const fs::path dir = fresh_dir("bits" + std::to_string(n));
    const auto files = save_mask(m, dir / "mask");
    REQUIRE(files.size() == 2);
    const GridMask back = load_mask(dir / "mask");
    CHECK(back.win == w);
    CHECK(back.same_cells(m));
    fs::remove_all(dir);
  }
}

TEST_CASE("field dumps store raw doubles next to the window header") {
  Window w;
  w.n = 1;
  w.origin = {0, 0, 0};
  w.extent = {1, 1, 1};
  w.res = {16, 1, 1};
  MaximalField f;
  f.win = w;
  f.kind = BasisKind::cubes;
  f.values.resize(16);
  for (int i = 0; i < 16; ++i) f.values[static_cast<std::size_t>(i)] = 0.25 * i;
  const fs::path dir = fresh_dir("field");
  const auto files = save_field(f, dir / "field");
  REQUIRE(files.size() == 2);
  CHECK(fs::file_size(dir / "field.f64") == 16 * sizeof(double));
  std::ifstream is(dir / "field.f64", std::ios::binary);
  double v0 = -1, v1 = -1;
  is.read(reinterpret_cast<char*>(&v0), sizeof v0);
  is.read(reinterpret_cast<char*>(&v1), sizeof v1);
  CHECK(v0 == 0.0);
  CHECK(v1 == 0.25);
  const json header = slurp_json(dir / "field.json");
  CHECK(header["kind"] == "cubes");
  CHECK(header["resolution"][0] == 16);
  fs::remove_all(dir);
}

TEST_CASE("halo runs write csv masks and a checksummed manifest") {
  const fs::path root = fresh_dir("halorun");
  const std::string cfg = R"({
    "kind": "halo",
    "window": {"n": 1, "origin": [-1.0], "extent": [3.0], "resolution": [2048]},
    "basis": {"kind": "cubes"},
    "set": {"type": "rect", "lo": [0.25], "hi": [0.75]},
    "alphas": [0.5],
    "dump_field": true,
    "out": "run1"
  })";
  RunOptions opts;
  opts.base_dir = root;
  const RunSummary sum = run_experiment_text(cfg, opts);
  CHECK(sum.kind == "halo");
  CHECK(sum.pass);
  CHECK(sum.files.back() == "manifest.json");
  const fs::path out = root / "run1";
  CHECK(fs::exists(out / "halo.csv"));
  CHECK(fs::exists(out / "set.json"));
  CHECK(fs::exists(out / "set.bits"));
  CHECK(fs::exists(out / "field.f64"));
  const std::string csv = slurp(out / "halo.csv");
  CHECK(csv.find("alpha,ratio,halo_measure,set_measure") == 0);
  // Single interval at level one half: ratio 2/alpha - 1 = 3.
  const double ratio = std::stod(csv.substr(csv.find('\n') + 1 + 4));
  CHECK(ratio == doctest::Approx(3.0).epsilon(0.01));
  const json mf = slurp_json(out / "manifest.json");
  CHECK(mf["kind"] == "halo");
  CHECK(mf["pass"] == true);
  REQUIRE(mf["outputs"].is_array());
  for (const json& o : mf["outputs"]) {
    const fs::path p = out / o["file"].get<std::string>();
    CHECK(fs::exists(p));
    CHECK(o["bytes"].get<std::int64_t>() == static_cast<std::int64_t>(fs::file_size(p)));
    CHECK(o["fnv1a64"].get<std::string>().size() == 16);
  }
  fs::remove_all(root);
}

TEST_CASE("reruns and thread counts leave every output checksum unchanged") {
  const fs::path root = fresh_dir("determinism");
  const std::string cfg = R"({
    "kind": "tauberian",
    "window": {"n": 1, "origin": [-1.0], "extent": [3.0], "resolution": [1024]},
    "basis": {"kind": "cubes"},
    "family": {"kind": "cube_union", "components": 2},
    "alphas": [0.5, 0.75],
    "budget": 4,
    "seed": 99,
    "out": "scan"
  })";
  RunOptions opts;
  opts.base_dir = root;
  opts.threads = 1;
  const RunSummary first = run_experiment_text(cfg, opts);
  const json mf1 = slurp_json(root / "scan" / "manifest.json");
  opts.threads = 3;
  const RunSummary second = run_experiment_text(cfg, opts);
  const json mf2 = slurp_json(root / "scan" / "manifest.json");
  CHECK(first.pass);
  CHECK(second.pass);
  CHECK(mf1["config_hash"] == mf2["config_hash"]);
  CHECK(mf1["outputs"] == mf2["outputs"]);
  // A different seed must change the hash (it is part of the config).
  RunOptions reseeded = opts;
  reseeded.seed = 123456;
  run_experiment_text(cfg, reseeded);
  const json mf3 = slurp_json(root / "scan" / "manifest.json");
  CHECK(mf3["config_hash"] != mf1["config_hash"]);
  fs::remove_all(root);
}

TEST_CASE("invalid configurations raise config errors before any output") {
  const fs::path root = fresh_dir("badcfg");
  RunOptions opts;
  opts.base_dir = root;
  const auto run = [&](const std::string& cfg) { return run_experiment_text(cfg, opts); };
  const auto kind_of = [&](const std::string& cfg) {
    try {
      run(cfg);
    } catch (const LabError& e) {
      return e.kind();
    }
    FAIL("expected a LabError");
    return LabError::Kind::invalid_config;
  };
  CHECK(kind_of("not json at all") == LabError::Kind::invalid_config);
  CHECK(kind_of("{\"kind\": \"bogus\", \"out\": \"x\"}") == LabError::Kind::invalid_config);
  CHECK(kind_of("{\"kind\": \"halo\", \"out\": \"x\"}") == LabError::Kind::invalid_config);
  // Ordering violations surface as config errors too.
  const std::string bad_order = R"({
    "kind": "embed", "theorem": "rect",
    "window": {"n": 2, "origin": [-1.0,-1.0], "extent": [3.0,3.0], "resolution": [64,64]},
    "basis": {"kind": "strong_rects"},
    "alpha": 0.9, "delta": 0.2, "xi": 0.85, "instances": 1, "out": "x"
  })";
  CHECK(kind_of(bad_order) == LabError::Kind::invalid_config);
  // Subcommand / config kind mismatch.
  RunOptions mismatch = opts;
  mismatch.expected_kind = "czdec";
  CHECK_THROWS_AS(
      (void)run_experiment_text("{\"kind\": \"halo\", \"out\": \"x\"}", mismatch), LabError);
  CHECK_FALSE(fs::exists(root / "x"));
  fs::remove_all(root);
}

TEST_CASE("czdec runs validate and export addressed cubes") {
  const fs::path root = fresh_dir("czrun");
  const std::string cfg = R"({
    "kind": "czdec",
    "window": {"n": 2, "origin": [0.0, 0.0], "extent": [1.0, 1.0], "resolution": [128, 128]},
    "set": {"type": "ball", "center": [0.5, 0.5], "radius": 0.2},
    "xi": 0.7,
    "out": "cz"
  })";
  RunOptions opts;
  opts.base_dir = root;
  const RunSummary sum = run_experiment_text(cfg, opts);
  CHECK(sum.pass);
  const json out = slurp_json(root / "cz" / "czdec.json");
  CHECK(out["split"] == "dyadic");
  CHECK(out["validation"]["disjoint"] == true);
  CHECK(out["validation"]["covers_set"] == true);
  CHECK(out["validation"]["selected_pass"] == true);
  CHECK(out["validation"]["ancestors_fail"] == true);
  REQUIRE(out["cubes"].is_array());
  REQUIRE_FALSE(out["cubes"].empty());
  const json& first = out["cubes"][0];
  CHECK(first["address"].is_array());
  CHECK(first["address"].size() == 3);  // level plus one index per axis
  CHECK(fs::exists(root / "cz" / "selected.pgm"));
  fs::remove_all(root);
}

TEST_CASE("embed runs report per instance lines and a summary row") {
  const fs::path root = fresh_dir("embedrun");
  const std::string cfg = R"({
    "kind": "embed", "theorem": "rect",
    "window": {"n": 2, "origin": [-1.0,-1.0], "extent": [3.0,3.0], "resolution": [128,128]},
    "basis": {"kind": "strong_rects"},
    "alpha": 0.6, "delta": 0.2, "xi": 0.85,
    "instances": 3, "seed": 5,
    "out": "embed"
  })";
  RunOptions opts;
  opts.base_dir = root;
  const RunSummary sum = run_experiment_text(cfg, opts);
  CHECK(sum.pass);
  const std::string jsonl = slurp(root / "embed" / "embed.jsonl");
  int lines = 0;
  std::istringstream ls(jsonl);
  std::string line;
  while (std::getline(ls, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    CHECK(rec["inclusion_holds"] == true);
    CHECK(rec["theorem"] == "rect");
    ++lines;
  }
  CHECK(lines == 3);
  const std::string csv = slurp(root / "embed" / "embed.csv");
  CHECK(csv.find("theorem,instances,passes,failures") == 0);
  CHECK(csv.find("rect,3,3,0") != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("scan fit and report chain produces a sectioned report") {
  const fs::path root = fresh_dir("chain");
  const std::string scan_cfg = R"({
    "kind": "tauberian",
    "window": {"n": 1, "origin": [-1.0], "extent": [3.0], "resolution": [4096]},
    "basis": {"kind": "cubes"},
    "family": {"kind": "single_cube", "min_side": 0.3, "max_side": 0.4},
    "alpha_geometric": [3, 6],
    "budget": 3,
    "out": "lab/scan"
  })";
  const std::string fit_cfg = R"({
    "kind": "fit",
    "table": "lab/scan/table.json",
    "n": 1,
    "out": "lab/fit"
  })";
  RunOptions opts;
  opts.base_dir = root;
  CHECK(run_experiment_text(scan_cfg, opts).pass);
  const RunSummary fit = run_experiment_text(fit_cfg, opts);
  CHECK(fit.pass);
  const json fj = slurp_json(root / "lab" / "fit" / "fit.json");
  CHECK(fj["rows_used"].get<std::int64_t>() >= 4);
  CHECK(fj["p_hat"].get<double>() > 0.85);
  CHECK(fj["p_hat"].get<double>() < 1.15);
  CHECK(fj["target_cube_exponent"] == 1.0);

  const RunSummary rep = run_report(root / "lab");
  CHECK(rep.pass);
  const std::string txt = slurp(root / "lab" / "report.txt");
  CHECK(txt.find("2/2 runs passing") != std::string::npos);
  CHECK(txt.find("[tauberian]") != std::string::npos);
  CHECK(txt.find("[fit]") != std::string::npos);
  CHECK(txt.find("target_1_over_n=1.0") != std::string::npos);
  const std::string csv = slurp(root / "lab" / "report.csv");
  CHECK(csv.find("run,kind,pass,summary") == 0);

  // Empty directories are an error, not an empty report.
  const fs::path empty = root / "empty";
  fs::create_directories(empty);
  CHECK_THROWS_AS((void)run_report(empty), LabError);
  fs::remove_all(root);
}

TEST_CASE("kappa calibration lands on the shipped side constants") {
  const fs::path root = fresh_dir("kappa");
  const std::string cfg = R"({
    "kind": "calibrate", "target": "kappa",
    "window": {"n": 2, "origin": [-1.0,-1.0], "extent": [3.0,3.0], "resolution": [256,256]},
    "instances": 3, "eps_list": [0.2, 0.1],
    "seed": 8, "out": "kappa"
  })";
  RunOptions opts;
  opts.base_dir = root;
  const RunSummary sum = run_experiment_text(cfg, opts);
  CHECK(sum.pass);
  const json cj = slurp_json(root / "kappa" / "calibrate.json");
  CHECK(cj["largest_passing"].get<double>() > 0);
  CHECK(cj["value"].get<double>() == doctest::Approx(0.5 * cj["largest_passing"].get<double>()));
  REQUIRE(cj["sweeps"].is_array());
  fs::remove_all(root);
}

TEST_CASE("missing mask files raise config errors") {
  const fs::path dir = fresh_dir("nomask");
  CHECK_THROWS_AS((void)load_mask(dir / "nothing"), LabError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
