// Geometric maximal operators over rasterized sets: exact fields and halo
// (super-level) sets for cube, ball, strong-rectangle, and convex-homothecy
// bases, with the enumeration conventions fixed below.
//
// Enumeration contract:
//   - cubes: all grid-aligned cubes, corner at a cell corner, integer side
//     (cells), sides {1, 1+stride, ...} up to the cap.
//   - strong_rects: all cell-aligned axis-parallel boxes up to the window.
//     Fields and halos are exact suprema over that family.
//   - balls: Euclidean balls centered at cell centers, radii {h, 2h, ...}
//     (requires square cells); a cell belongs to a ball iff its center does.
//   - convex: homothecies of a fixed convex polytope body, translated to
//     every cell center, scales on a geometric grid of ratio <= 1 + 1/N.
// Only elements fully inside the window are enumerated, so ball/convex values
// are refinement-monotone lower bounds for the continuum operator.
//
// Threshold rule: a set passes level alpha iff count/cells > alpha + 1e-12,
// realized exactly in integers (see Threshold), so sweeps, footprint engines,
// and brute-force oracles agree cell for cell.
#pragma once

#include <optional>

#include "halolab/grid.hpp"

namespace halolab {

// Exact strict average test. num/2^30 is the smallest representable threshold
// at or above alpha + 1e-12; count/cells > alpha + 1e-12 and the integer test
// agree whenever cells < 2^30, which Window::validate guarantees.
struct Threshold {
  static constexpr std::int64_t kDen = std::int64_t{1} << 30;
  double alpha = 0.0;
  std::int64_t num = 0;

  explicit Threshold(double a);
  bool exceeds(std::int64_t count, std::int64_t cells) const { return count * kDen > num * cells; }
};

enum class BasisKind { cubes, balls, strong_rects, convex };

std::string basis_kind_name(BasisKind k);

struct Basis {
  BasisKind kind = BasisKind::cubes;
  int n = 2;
  // Discretization limits. 0 means "whole window". Interpreted as max side in
  // cells (cubes), max radius in cells (balls), max footprint extent in cells
  // (convex). strong_rects always sweep the full window.
  std::int64_t max_size_cells = 0;
  std::int64_t size_stride = 1;
  // Convex scale grid ratio; 0 picks 1 + 1/max(res).
  double scale_ratio = 0.0;
  // Convex body (polytope, n <= 2). Scaling anchors at the vertex centroid.
  ShapeSpec body{};

  static Basis make_cubes(int n);
  static Basis make_balls(int n);
  static Basis make_strong(int n);
  static Basis make_convex(int n, ShapeSpec body);
  void validate(const Window& w) const;
};

struct MaximalField {
  Window win;
  BasisKind kind = BasisKind::cubes;
  std::vector<double> values;  // sup of element averages containing each cell
  bool clamped = false;        // basis limits exceeded the window and were clamped

  double at(const Index& idx) const { return values[static_cast<std::size_t>(win.flat(idx))]; }
};

struct HaloResult {
  GridMask mask;
  bool clamped = false;
};

// Sup over enumerated elements containing each cell of the element average of
// E. Exact for cubes/strong_rects; refinement-monotone lower bound for
// balls/convex. E must be nonempty.
MaximalField maximal_field(const GridMask& E, const Basis& basis, int threads = 1);

// Cells covered by some enumerated element whose average exceeds alpha
// (strict, Threshold rule). Identical to thresholding maximal_field but
// computed by per-level sweeps that stay near-linear in the window.
// alpha must lie in (0, 1).
HaloResult halo_set(const GridMask& E, const Basis& basis, double alpha, int threads = 1);

struct RatioResult {
  double ratio = 0.0;  // halo measure / set measure
  double halo_measure = 0.0;
  double set_measure = 0.0;
  bool boundary_touched = false;  // halo reached the outermost cell ring
  bool clamped = false;
};

RatioResult halo_ratio(const GridMask& E, const Basis& basis, double alpha, int threads = 1);

}  // namespace halolab
