// Experiment harness: JSON configuration, orchestration of the grid / halo /
// decomposition / John / embedding / tauberian pipelines, atomic output
// staging with checksummed manifests, mask and field persistence, and
// plain-text report aggregation. One experiment per process; all parallelism
// stays inside the module engines and never changes output bytes.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "halolab/grid.hpp"
#include "halolab/maximal.hpp"

namespace halolab {

// FNV-1a 64-bit; the checksum used for config hashes and output files.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Mask persistence. 2D: binary PGM (P5, maxval 255, 255 = inside) with the
// window geometry in a comment line; other dimensions: a JSON header
// {n, origin, extent, resolution} plus a packed row-major bit dump
// (LSB-first within each byte) in a .bits sidecar. Returns the files written.
std::vector<std::filesystem::path> save_mask(const GridMask& m, const std::filesystem::path& stem);
GridMask load_mask(const std::filesystem::path& stem);

// Field persistence: JSON header (window plus basis kind) and a flat
// native-endian 64-bit float dump in a .f64 sidecar.
std::vector<std::filesystem::path> save_field(const MaximalField& f,
                                              const std::filesystem::path& stem);

struct RunOptions {
  std::filesystem::path out_override;  // empty: use the config's "out"
  int threads = 0;                     // 0: use the config (default 1)
  std::optional<std::uint64_t> seed;   // overrides the config "seed"
  std::filesystem::path base_dir;      // resolves relative paths in the config
  std::string expected_kind;           // subcommand name; must match the config
};

struct RunSummary {
  std::string kind;
  std::filesystem::path out_dir;
  bool pass = true;                // false: run completed but a check failed
  std::string summary;             // one line, repeated in the manifest
  std::vector<std::string> files;  // files written, manifest last
};

// Parses, validates, runs, and persists one experiment. Outputs are staged
// in a sibling temp directory and swapped in with the manifest written last;
// an existing output directory is replaced wholesale (determinism contract:
// same config, same bytes). Throws LabError on invalid configs (CLI exit 2)
// and resolution failures (exit 1).
RunSummary run_experiment_file(const std::filesystem::path& config_path, const RunOptions& opts);
RunSummary run_experiment_text(const std::string& config_json, const RunOptions& opts);

// Aggregates every manifest.json found one level under dir into report.txt
// (sectioned by kind, fitted exponents against the 1/n and 1/(n+1) targets,
// embedding pass rates) and report.csv. Errors when no manifest is found.
RunSummary run_report(const std::filesystem::path& dir);

}  // namespace halolab
