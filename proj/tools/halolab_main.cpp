// Command-line experiment runner. One subcommand per experiment kind plus
// `report`; a single JSON config per run; exit codes: 0 success, 1 runtime
// failure (a failed check or an unmet resolution), 2 invalid configuration.
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "halolab/experiment.hpp"
#include "halolab/grid.hpp"

int main(int argc, char** argv) {
  CLI::App app{"halolab - a numerical laboratory for geometric maximal operators"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  int threads = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  const struct {
    const char* name;
    const char* desc;
  } kinds[] = {
      {"halo", "rasterize a set and compute halo masks and ratios per level"},
      {"czdec", "stopping-time decomposition of a set at a level, with validation"},
      {"john", "sandwich rectangles for seeded random convex polygons"},
      {"embed", "halo-composition inclusion verifiers over a corpus"},
      {"tauberian", "sharp-constant lower-bound tables by candidate search"},
      {"fit", "exponent fit of an existing table near level one"},
      {"calibrate", "measure the largest passing constant (c_n or kappa)"},
      {"report", "aggregate run manifests under a directory"},
  };
  for (const auto& k : kinds) {
    CLI::App* sub = app.add_subcommand(k.name, k.desc);
    sub->add_option("--config", config, "path to the JSON experiment config");
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--threads", threads, "worker threads; never changes outputs");
    sub->add_option("--seed", seed, "master seed (overrides the config)")
        ->each([&seed_set](const std::string&) { seed_set = true; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    halolab::RunSummary sum;
    if (cmd == "report") {
      if (out.empty()) halolab::fail_config("report needs --out <dir> with run manifests");
      sum = halolab::run_report(out);
    } else {
      if (config.empty()) halolab::fail_config(cmd + " needs --config <path>");
      halolab::RunOptions opts;
      opts.out_override = out;
      opts.threads = threads;
      if (seed_set) opts.seed = seed;
      opts.expected_kind = cmd;
      sum = halolab::run_experiment_file(config, opts);
    }
    std::printf("%s: %s [%s]\n", sum.kind.c_str(), sum.summary.c_str(),
                sum.pass ? "pass" : "fail");
    std::printf("outputs: %s\n", sum.out_dir.string().c_str());
    return sum.pass ? 0 : 1;
  } catch (const halolab::LabError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == halolab::LabError::Kind::invalid_config ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
