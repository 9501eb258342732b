// Dyadic stopping-time selection on grid masks, plus scale searches along
// concentric cube families. Selection uses the same strict integer threshold
// as the maximal operators, so "average exceeds lambda" means
// count * 2^30 > ceil((lambda + 1e-12) * 2^30) * cells.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "halolab/grid.hpp"
#include "halolab/maximal.hpp"

namespace halolab {

struct DyadicCube {
  int level = 0;  // splitting depth below the root
  IndexBox box;
  std::int64_t count = 0;  // set cells inside
  double avg = 0.0;
};

struct CzResult {
  double lambda = 0.0;
  IndexBox root;
  bool root_selected = false;   // root itself beat the threshold (degenerate)
  std::vector<DyadicCube> cubes;  // pre-order; pairwise disjoint
  std::int64_t selected_cells = 0;
  std::int64_t covered_count = 0;  // set cells inside selected cubes
};

// Maximal sub-boxes of `root` (under halving) whose average over E exceeds
// lambda. cz_decompose requires equal power-of-two extents per axis, so the
// tree is the standard dyadic one; the nonuniform variant splits any extents
// by floor halves and is meant for boxes produced by geometric constructions.
CzResult cz_decompose(const GridMask& E, const IndexBox& root, double lambda);
CzResult cz_decompose_nonuniform(const GridMask& E, const IndexBox& root, double lambda);

struct CzCheck {
  bool disjoint = false;
  bool covers_set = false;        // every E cell of the root lies in a cube
  bool selected_pass = false;     // every cube beats lambda
  bool ancestors_fail = false;    // every proper ancestor of a cube does not
  std::string detail;             // first violation, if any
  bool ok() const { return disjoint && covers_set && selected_pass && ancestors_fail; }
};

// Recounts everything from scratch, walking each cube's full ancestor chain.
CzCheck validate_cz(const GridMask& E, const CzResult& dec);

// Tree parents of the selected cubes, deduplicated, restricted to maximal
// elements under inclusion, in lexicographic box order. Root-selected
// decompositions have no parents.
std::vector<DyadicCube> maximal_parents(const GridMask& E, const CzResult& dec);

// Smallest parent average; by maximality each parent still carries at least
// 2^-n of the selected child's density.
double min_parent_average(const GridMask& E, const CzResult& dec);

// Direct tree parent of a node of the selection tree rooted at `root`.
// Fails on the root itself or on boxes that are not tree nodes.
IndexBox tree_parent_box(const IndexBox& root, const IndexBox& cube);

struct HomothetySearch {
  bool found = false;
  bool quantized = false;  // grid jump straddles the requested band / target
  double sigma = 0.0;      // half-side of the reported cube
  Rect cube;               // real-coordinate cube [c - sigma, c + sigma]^n
  IndexBox box;            // its snapped cell box
  double avg = 0.0;
  std::int64_t steps = 0;
  double max_jump = 0.0;   // largest average change between consecutive scales
};

// Sweeps concentric cubes centered at `center` from half-side sigma_max
// downward through a geometric grid until the average over E first reaches
// [lo, hi]. Reports quantized if the first crossing overshoots the band.
HomothetySearch band_cube_search(const GridMask& E, const Point& center, double lo, double hi,
                                 double sigma_max);

// Bisects the half-side between a bracketing pair avg(sigma_lo) >= target >=
// avg(sigma_hi) and returns the endpoint closer to the target. quantized is
// set when the residual jump leaves both endpoints farther than tol.
HomothetySearch exact_ratio_homothety(const GridMask& E, const Point& center, double sigma_lo,
                                      double sigma_hi, double target, double tol = 1e-3,
                                      int iters = 48);

}  // namespace halolab
