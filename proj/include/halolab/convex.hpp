// Convex bodies (n <= 2), minimum-volume enclosing ellipsoids, the rotated
// rectangle sandwich R <= body <= factor * R, affine normalization, inner
// dyadic approximations, and scale searches along homothety families.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "halolab/grid.hpp"

namespace halolab {

struct ConvexBody {
  int n = 2;
  std::vector<Point> hull;  // ccw for n == 2; two endpoints for n == 1

  static ConvexBody from_points(int n, std::vector<Point> pts);
  double measure() const;  // area (shoelace) or length
  Rect bounding_box() const;
  // Vertex centroid: the anchor for homothety families. Always interior, and
  // s * (body - anchor) + anchor nests monotonically in s.
  Point anchor() const;
  bool contains(const Point& p) const;  // closed membership
  ShapeSpec to_shape() const;
  ConvexBody scaled_about(const Point& c, double s) const;
  ConvexBody translated(const Point& t) const;
};

// x -> A x + b, padded to 3x3 with identity on unused axes.
struct AffineMap {
  int n = 2;
  Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();

  Point apply(const Point& x) const;
  AffineMap inverse() const;
  ConvexBody apply(const ConvexBody& body) const;
};

// (x - c)^T A (x - c) <= 1.
struct Ellipsoid {
  int n = 2;
  Eigen::Matrix3d A = Eigen::Matrix3d::Identity();
  Eigen::Vector3d c = Eigen::Vector3d::Zero();

  bool contains(const Point& p, double slack = 1e-9) const;
  double quadratic(const Point& p) const;
};

// Khachiyan multiplicative-weights enclosing ellipsoid, post-scaled so every
// input point satisfies the quadratic exactly (<= 1).
Ellipsoid mvee(const std::vector<Point>& pts, int n, double eps = 1e-3, int max_iter = 100000);

// Rotated box: center + rot * local, local in prod [-half[k], half[k]].
struct RectFrame {
  int n = 2;
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  Point center{};
  double half[3] = {0, 0, 0};

  std::vector<Point> corners() const;
  RectFrame scaled(double s) const;
  double measure() const;
};

struct JohnResult {
  Ellipsoid outer;
  RectFrame rect;          // verified rect subset of the body
  double outer_factor = 0;  // measured: body subset of outer_factor * rect
  double shrink_applied = 1.0;  // extra numerical shrink beyond the bound
};

// Ellipsoid rounding: rect in the MVEE eigenbasis with rect <= body <=
// outer_factor * rect and outer_factor <= n^{3/2} (1 + 2 eps) for convex
// input. Both containments are verified on vertices, not assumed.
JohnResult john_rectangle(const ConvexBody& body, double eps = 1e-3);

struct Normalization {
  AffineMap map;           // sends the sandwich rectangle to [0,1]^n
  ConvexBody normalized;   // image of the body: contains [0,1]^n
  double outer_factor = 0;
};
Normalization normalize_to_unit_cube(const ConvexBody& body, double eps = 1e-3);

// Inner approximation by lattice-aligned dyadic cubes of side 2^-m, the
// largest such side <= kappa_n * eps (kappa = 1/4, 1/16 for n = 1, 2). A cube
// counts as inside iff all its corners are (exact for convex bodies). The
// mask is the center-rule rasterization of the kept cubes onto w; measures
// are exact in real coordinates.
struct DyadicApprox {
  int m = 0;
  double side = 0;
  std::int64_t n_cubes = 0;
  double covered_measure = 0;
  double body_measure = 0;
  double uncovered_fraction = 0;
  GridMask mask;
};
DyadicApprox dyadic_approximation(const ConvexBody& body, double eps, const Window& w);
// Same with an explicit side constant: side = largest 2^-m <= kappa * eps.
// The parameterless overload uses the shipped defaults above; calibration
// sweeps kappa to re-measure them.
DyadicApprox dyadic_approximation(const ConvexBody& body, double eps, const Window& w,
                                  double kappa);

// Concentric shrink factor for a band cube: a cube R whose average lies in
// [(alpha-eps)/(1-eps), alpha/(1-eps)] shrinks by t per axis, chosen so the
// shrunken cube still carries average at least (alpha-eps)/2 and misses at
// most the band's headroom. t^{-n} = min((1-eps+alpha)/alpha,
// (2-eps-alpha)/(1-alpha)) / 2, which lands in [1, 2].
struct InnerCubeParams {
  double t = 0;       // per-axis shrink factor, in [2^{-1/n}, 1]
  double t_pow_n = 0; // volume ratio
};
InnerCubeParams inner_cube_factor(double alpha, double eps, int n);

// Scale searches along s -> anchor + s * (body - anchor) against a mask,
// counting cells by scanline; the grid analogue of the continuity of
// averages along nested homothety families.
struct BodyScaleSearch {
  bool found = false;
  bool quantized = false;
  double s = 0;
  double avg = 0;
  std::int64_t count = 0, cells = 0;
  std::int64_t steps = 0;
  double max_jump = 0;
};

// Cell count and coverage of E over anchor + s (hull - anchor) against a
// prebuilt row-prefix table; the building block behind the scale searches.
void body_cells_at_scale(const RowPrefix& rp, const ConvexBody& body, const Point& anchor,
                         double s, std::int64_t& count, std::int64_t& cells);

// Exact cell count / average of E over the scaled body (center rule).
BodyScaleSearch body_scale_average(const GridMask& E, const ConvexBody& body, const Point& anchor,
                                   double s);

// Geometric downward sweep from s_max until the average first reaches
// [lo, hi]; quantized when the first crossing overshoots the band.
BodyScaleSearch body_scale_band_search(const GridMask& E, const ConvexBody& body,
                                       const Point& anchor, double lo, double hi, double s_max);

// Bisection between avg(s_lo) >= target >= avg(s_hi).
BodyScaleSearch body_scale_ratio_search(const GridMask& E, const ConvexBody& body,
                                        const Point& anchor, double s_lo, double s_hi,
                                        double target, double tol = 1e-3, int iters = 48);

}  // namespace halolab
