// Sharp-constant estimation: search the halo ratio sup over seeded candidate
// families, assemble monotone lower-bound tables and the halo function,
// fit near-1 asymptotic exponents, and compute discrete Hölder quotients.
// Every reported value is a LOWER bound for the true constant (the sup runs
// over a finite family); consumers operate on lower-bound envelopes.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "halolab/grid.hpp"
#include "halolab/maximal.hpp"

namespace halolab {

enum class FamilyKind { single_cube, cube_union, random_clusters, perturbation_search };

std::string family_kind_name(FamilyKind k);

struct CandidateFamily {
  FamilyKind kind = FamilyKind::single_cube;
  int components = 1;      // rects per candidate (cube_union / clusters / search)
  double min_side = 0.05;  // component sides, as fractions of the smallest extent
  double max_side = 0.40;
  double core_margin = 1.0 / 3.0;  // fraction of each extent kept clear per end
  int restarts = 20;               // hill-climb restarts (perturbation_search)
  double step_cells = 2.0;         // Gaussian mutation step, in cells
  std::uint64_t seed = 1;
  void validate() const;
};

struct ConstantEstimate {
  double c_hat = 0.0;  // best halo measure / set measure over the family
  GridMask witness;
  std::int64_t witness_id = 0;    // index of the winning candidate evaluation
  std::int64_t n_candidates = 0;  // candidates evaluated
  bool window_limited = false;    // winning halo reached the window boundary
  bool clamped = false;           // basis limits clamped during evaluation
};

// Max of halo_ratio over `budget` seeded candidates (hill-climbing moves for
// perturbation_search: translate / scale / split one component, accepted on
// strict improvement). Deterministic given (family.seed, budget, window).
ConstantEstimate estimate_constant(const Window& w, const Basis& basis, double alpha,
                                   const CandidateFamily& family, std::int64_t budget,
                                   int threads = 1);

struct TauberianRow {
  double alpha = 0.0;
  double c_hat = 0.0;
  std::int64_t witness_id = 0;
  std::int64_t n_candidates = 0;
  std::int64_t grid_n = 0;
  // Fit noise floor 10 * cell_measure / witness_measure, set by scan;
  // 0 disables the floor (synthetic tables).
  double noise_floor = 0.0;
  bool window_limited = false;
};

struct TauberianTable {
  BasisKind basis = BasisKind::cubes;
  std::vector<TauberianRow> rows;  // sorted by alpha ascending
  bool monotone = false;           // non-increasing envelope applied
};

struct ScanResult {
  TauberianTable table;
  std::vector<GridMask> witnesses;  // keyed by witness_id, one per distinct id
  std::vector<std::int64_t> witness_ids;
};

// One estimate per grid level, then the non-increasing envelope
// c(alpha) := max over alpha' >= alpha (each raw value is a lower bound and
// the true constant is non-increasing, so the envelope is still a lower
// bound). alpha_grid must be sorted, strictly inside (0, 1).
ScanResult scan(const Window& w, const Basis& basis, const std::vector<double>& alpha_grid,
                const CandidateFamily& family, std::int64_t budget, int threads = 1);

// CSV serialization: header alpha,c_hat,witness_id,n_candidates,grid_n.
std::string table_to_csv(const TauberianTable& table);

// The identity on [0, 1]; for alpha > 1 the piecewise-linear interpolation of
// c_hat(1/alpha) between table nodes. No extrapolation outside the nodes.
double halo_function(const TauberianTable& table, double alpha);

struct SolyanikFit {
  double p_hat = 0.0;  // fitted exponent of c(alpha) - 1 ~ (1 - alpha)^p
  double log_c = 0.0;  // intercept of the log-log fit
  double r2 = 0.0;
  std::int64_t rows_used = 0;
  double alpha_min = 0.0;
};

// Least squares of log(c_hat - 1) against log(1 - alpha) over rows with
// alpha >= alpha_min that clear their noise floor (c_hat - 1 > noise_floor)
// and are not window-limited. Needs at least 4 usable rows.
SolyanikFit solyanik_fit(const TauberianTable& table, double alpha_min);

// sup over node pairs x != y inside [a, b] of |c(x) - c(y)| / |x - y|^p.
double holder_quotient(const TauberianTable& table, double p, double a, double b);

}  // namespace halolab
