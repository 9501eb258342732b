// Instance-level verifiers for halo-set embeddings: given a set E and
// thresholds, compute the inner halo H_alpha(E), the middle halo F at a level
// close to 1, and the outer halo of F at a slightly raised threshold, then
// check the inclusion H_alpha(E) subset-of H_outer(F) cell by cell. Also the
// greedy Vitali selection and the full witness construction that walks a
// density argument through band cubes, a stopping-time selection, and nested
// homothety families, recording every inequality with its numeric slack.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "halolab/convex.hpp"
#include "halolab/cz.hpp"
#include "halolab/grid.hpp"
#include "halolab/maximal.hpp"

namespace halolab {

struct EmbeddingReport {
  std::string theorem;  // "rect" | "ball" | "convex"
  BasisKind inner_kind = BasisKind::cubes;
  BasisKind middle_kind = BasisKind::cubes;
  double alpha = 0, delta = 0, xi = 0, c_n = 0;
  double middle_alpha = 0;  // level of the middle halo (close to 1)
  double outer_alpha = 0;   // raised threshold for the outer halo
  bool inclusion_holds = false;
  std::int64_t slack_cells = 0;      // Chebyshev dilation allowed
  std::int64_t violation_cells = 0;  // escapes at that slack
  std::int64_t violations_at_zero = 0;
  double inner_measure = 0, middle_measure = 0, outer_measure = 0;
  bool measure_ok = false;  // |H_alpha(E)| <= |outer halo|
};

// Composition estimate for cube / axis-rectangle bases:
// H_alpha(E) subset-of H_{alpha (1 + (1-xi)/2^n)}(H_{1-delta}(E)),
// requiring alpha < 1-delta < xi < 1.
EmbeddingReport verify_rect_embedding(const GridMask& E, const Basis& basis, double alpha,
                                      double delta, double xi, std::int64_t slack_cells = 1,
                                      int threads = 1);

// Limit form of the rect composition as xi approaches 1-delta from above:
// H_alpha(E) subset-of H_{alpha (1 + delta/2^n)}(H_{1-delta}(E)). Witness
// level only: both sides are recomputed halos of the same E, never a
// comparison of two independently searched lower bounds.
EmbeddingReport verify_rect_composition(const GridMask& E, const Basis& basis, double alpha,
                                        double delta, std::int64_t slack_cells = 1,
                                        int threads = 1);

// Ball-basis variant routed through the axis-rectangle middle halo:
// H_{ball,alpha}(E) subset-of H_{ball,alpha(1 + c_n min(alpha,1-alpha)^n delta)}
// (H_{rect,1-delta}(E)), in the regime delta <= kappa (1 - alpha).
EmbeddingReport verify_ball_embedding(const GridMask& E, double alpha, double delta, double c_n,
                                      double kappa = 0.125, std::int64_t slack_cells = 1,
                                      int threads = 1);

// Convex-homothecy variant: middle level 1 - 3 n^{3n/2} delta, outer
// threshold alpha (1 + c_n min(alpha,1-alpha)^{2n} delta), in the regime
// 3 n^{3n/2} delta <= 1 - alpha.
EmbeddingReport verify_convex_embedding(const GridMask& E, const ConvexBody& body, double alpha,
                                        double delta, double c_n, std::int64_t slack_cells = 1,
                                        int threads = 1);

struct VitaliSelection {
  std::vector<std::size_t> chosen;  // indices into the input list
  double input_union = 0;           // measure of the union of dilated inputs
  double selected_union = 0;        // measure of the union of dilated chosen
  double ratio = 0;                 // selected_union / input_union
};

// Greedy selection by decreasing size such that the dilated chosen rects are
// pairwise disjoint; the dilated chosen union covers at least 5^-n of the
// dilated input union. dilation is the concentric scale factor (>= 1).
VitaliSelection vitali_select(const std::vector<Rect>& rects, double dilation);

// Exact measure of a union of axis-parallel rects (n <= 2).
double rect_union_measure(const std::vector<Rect>& rects);

struct InequalityRecord {
  std::string name;
  double lhs = 0, rhs = 0;  // oriented as lhs >= rhs
  double slack = 0;         // lhs - rhs
  bool pass = false;        // slack >= 0
};

struct ConvexWitnessRecord {
  int case_taken = 0;  // 1: a selected cube escapes the band cube; 2: all stay
  double alpha_requested = 0;
  double alpha = 0;  // cell-exact average of E over the body, used throughout
  double eps = 0, delta = 0, t_o = 0, c_n = 0;
  double side_R = 0;
  Rect cube_R, cube_R_in;
  std::int64_t cz_count = 0;        // selected cubes in the stopping time
  std::int64_t vitali_count = 0;    // chosen in case 2
  std::vector<Point> body_out;      // hull of the constructed witness body
                                    // (case 1) or of the first family body
  std::vector<InequalityRecord> inequalities;
  bool all_pass = false;
};

// Runs the full density-transfer construction for a normalized convex body
// (unit cube inside body inside its n^{3/2} concentric dilate): band cube R,
// inner cube R^in = t_o R, stopping-time selection of E within R^in at level
// 1 - delta, case split on whether a dilated selected cube escapes R, and the
// homothety families with their average sandwiches. Every asserted inequality
// is re-measured on the grid and recorded. Throws a resolution error naming
// the first inequality whose bracketing is unachievable at this grid.
ConvexWitnessRecord construct_convex_witnesses(const GridMask& E, const ConvexBody& body,
                                               double alpha, double delta, double c_n);

}  // namespace halolab
