// Dense grid substrate: windows, rasterized sets, integral images, exact
// cell-aligned rectangle counting, and mask set algebra.
//
// Conventions fixed here and relied on everywhere else:
//   - A window covers [origin, origin + extent) split into res[k] cells per
//     axis; cell (i0,..,i_{n-1}) has center origin[k] + (i_k + 0.5) * h[k].
//   - A cell belongs to a rasterized set iff its center is a member
//     (center rule). Real-coordinate rectangles are half-open [lo, hi).
//   - Storage is row-major with axis 0 slowest, axis n-1 fastest.
#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace halolab {

inline constexpr int kMaxDim = 3;

// Raised for invalid configs / violated hypotheses (CLI exit 2) vs. runs that
// complete but fail a check or need a finer grid / larger window (exit 1).
class LabError : public std::runtime_error {
 public:
  enum class Kind { invalid_config, resolution };
  LabError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

[[noreturn]] inline void fail_config(const std::string& msg) {
  throw LabError(LabError::Kind::invalid_config, msg);
}
[[noreturn]] inline void fail_resolution(const std::string& msg) {
  throw LabError(LabError::Kind::resolution, msg);
}

using Index = std::array<std::int64_t, kMaxDim>;
using Point = std::array<double, kMaxDim>;

struct Window {
  int n = 0;
  Point origin{};
  Point extent{};
  Index res{};

  double h(int axis) const { return extent[axis] / static_cast<double>(res[axis]); }
  double cell_measure() const;
  std::int64_t cells() const;
  double center(int axis, std::int64_t i) const { return origin[axis] + (static_cast<double>(i) + 0.5) * h(axis); }
  std::int64_t flat(const Index& idx) const;
  Index unflat(std::int64_t flat) const;
  bool operator==(const Window& o) const;
  void validate() const;  // n in [1,3], res positive, extent positive, cells < 2^30
};

// Axis-aligned real-coordinate box, half-open per axis.
struct Rect {
  int n = 0;
  Point lo{};
  Point hi{};

  double volume() const;
  double side(int axis) const { return hi[axis] - lo[axis]; }
  bool contains_point(const Point& x) const;  // lo <= x < hi per axis
  bool contains_rect(const Rect& r) const;
  Rect scaled_concentric(double t) const;  // homothecy about the center, ratio t
  Point center_point() const;
};

// Half-open cell index box [a, b) per axis; the snapped form of a Rect.
struct IndexBox {
  int n = 0;
  Index a{};
  Index b{};

  bool empty() const;
  std::int64_t cell_count() const;
  bool contains(const IndexBox& inner) const;
  Rect to_rect(const Window& w) const;  // exact cell-boundary coordinates
};

// Center-rule snap: cell i is inside iff lo <= center_i < hi. Clamped to the
// window; may come back empty.
IndexBox snap_to_cells(const Rect& r, const Window& w);

struct GridMask {
  Window win;
  std::vector<std::uint8_t> data;  // one byte per cell, 0 or 1

  static GridMask empty(const Window& w);
  bool at(std::int64_t flat) const { return data[static_cast<std::size_t>(flat)] != 0; }
  void set(std::int64_t flat, bool v) { data[static_cast<std::size_t>(flat)] = v ? 1 : 0; }
  std::int64_t count() const;
  double measure() const { return static_cast<double>(count()) * win.cell_measure(); }
  bool boundary_touched() const;  // any set cell on the outermost cell ring

  GridMask& unite(const GridMask& o);
  GridMask& intersect(const GridMask& o);
  GridMask& subtract(const GridMask& o);
  bool same_cells(const GridMask& o) const;
};

// Chebyshev dilation by `slack` cells (binary max filter, separable).
GridMask dilate_chebyshev(const GridMask& m, std::int64_t slack);

struct SubsetReport {
  std::int64_t violations = 0;
  Index first{};  // first offending cell of a (valid when violations > 0)
  bool ok() const { return violations == 0; }
};

// Every set cell of a must lie within Chebyshev distance slack of a set cell
// of b. Windows must match.
SubsetReport subset_within(const GridMask& a, const GridMask& b, std::int64_t slack);

// n-dimensional prefix-sum table; count() is exact for any cell index box.
struct IntegralImage {
  Window win;
  std::vector<std::int64_t> sums;  // dims res[k]+1, same axis order as GridMask

  static IntegralImage build(const GridMask& m);
  std::int64_t count(const IndexBox& box) const;
  std::int64_t count_all() const;
};

// Prefix sums along the last axis only; O(1) span counts for footprint sweeps.
struct RowPrefix {
  Window win;
  std::vector<std::int64_t> pref;  // res[0..n-2] rows of res[n-1]+1 entries

  static RowPrefix build(const GridMask& m);
  // Count of set cells in row (given by the leading n-1 indices of idx) with
  // last-axis index in [j0, j1), clamped to the window.
  std::int64_t span(const Index& idx, std::int64_t j0, std::int64_t j1) const;
};

// Geometric set specification: rasterizes to a GridMask under the center rule.
// Rect parts are half-open, balls open, polytopes closed convex hulls (n <= 2).
struct ShapeSpec {
  enum class Type { rect, ball, polytope, union_set };
  Type type = Type::rect;
  Point lo{}, hi{};                 // rect
  Point center{};                   // ball
  double radius = 0.0;              // ball
  std::vector<Point> vertices;      // polytope
  std::vector<ShapeSpec> parts;     // union_set

  static ShapeSpec make_rect(const Point& lo, const Point& hi);
  static ShapeSpec make_ball(const Point& c, double r);
  static ShapeSpec make_polytope(std::vector<Point> vertices);
  static ShapeSpec make_union(std::vector<ShapeSpec> parts);

  bool contains(const Point& x, int n) const;
  // Closed-form measure where one exists (rect, ball, polytope); unions fail.
  double exact_measure(int n) const;
  void bounding_box(int n, Point& lo_out, Point& hi_out) const;
};

GridMask rasterize(const ShapeSpec& s, const Window& w);
void rasterize_into(const ShapeSpec& s, GridMask& m);  // OR accumulate

// Monotone-chain hull, counterclockwise, duplicates removed. Membership is
// closed (boundary points count as inside).
std::vector<Point> convex_hull_2d(std::vector<Point> pts);
bool point_in_hull_2d(const std::vector<Point>& hull, double x, double y);

// Mask file IO. 2D masks are binary PGM (P5, maxval 255, 255 = inside) with
// the window serialized in a comment line; other dimensions write a JSON
// header and a packed bit sidecar (row-major, LSB first within each byte).
void write_mask(const GridMask& m, const std::string& path);
GridMask read_mask(const std::string& path);

// Field file IO: JSON header plus little-endian float64 sidecar, row-major.
void write_field_file(const Window& w, const std::vector<double>& values, const std::string& json_path);

std::string window_to_json(const Window& w);
Window window_from_json(const std::string& text);

}  // namespace halolab
