// Halo-embedding verifiers, greedy Vitali selection, and the density-transfer
// witness construction over nested homothety families.
#include "halolab/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

namespace halolab {
namespace {

double dim_sqrt_factor(int n) { return std::pow(static_cast<double>(n), 1.5); }      // n^{3/2}
double dim_cube_factor(int n) { return std::pow(static_cast<double>(n), 1.5 * n); }  // n^{3n/2}

// Shrink guard matching the verified outer factor of the John rectangle: a
// normalized body may overshoot the n^{3/2} dilate of the unit cube by the
// ellipsoid approximation slack, so inner homothety images use this factor.
constexpr double kJohnSlack = 1.0 + 2.0 * 1e-3;

void add_record(std::vector<InequalityRecord>& v, std::string name, double lhs, double rhs) {
  InequalityRecord r;
  r.name = std::move(name);
  r.lhs = lhs;
  r.rhs = rhs;
  r.slack = lhs - rhs;
  r.pass = r.slack >= 0;
  v.push_back(std::move(r));
}

std::vector<Point> rect_corners(const Rect& r) {
  std::vector<Point> out;
  const int m = 1 << r.n;
  out.reserve(static_cast<std::size_t>(m));
  for (int mask = 0; mask < m; ++mask) {
    Point p{};
    for (int k = 0; k < r.n; ++k) p[k] = ((mask >> k) & 1) ? r.hi[k] : r.lo[k];
    out.push_back(p);
  }
  return out;
}

std::int64_t corners_outside_body(const ConvexBody& body, const Rect& r) {
  std::int64_t bad = 0;
  for (const Point& p : rect_corners(r))
    if (!body.contains(p)) ++bad;
  return bad;
}

std::int64_t points_outside_body(const ConvexBody& body, const std::vector<Point>& pts) {
  std::int64_t bad = 0;
  for (const Point& p : pts)
    if (!body.contains(p)) ++bad;
  return bad;
}

std::int64_t points_outside_rect(const std::vector<Point>& pts, const Rect& r, double tol) {
  std::int64_t bad = 0;
  for (const Point& p : pts) {
    for (int k = 0; k < r.n; ++k) {
      if (p[k] < r.lo[k] - tol || p[k] > r.hi[k] + tol) {
        ++bad;
        break;
      }
    }
  }
  return bad;
}

// Image of the body under the homothecy taking the unit cube onto the axis
// cube of side `scale` centered at `center`.
ConvexBody body_to_cube(const ConvexBody& body, const Point& center, double scale) {
  ConvexBody out = body;
  for (Point& v : out.hull)
    for (int k = 0; k < body.n; ++k) v[k] = center[k] + scale * (v[k] - 0.5);
  return out;
}

// Vertexwise combination of two positive homothecies of one body; again a
// positive homothecy of the same body.
ConvexBody blend_bodies(const ConvexBody& a, const ConvexBody& b, double t) {
  ConvexBody out = a;
  for (std::size_t i = 0; i < out.hull.size(); ++i)
    for (int k = 0; k < out.n; ++k)
      out.hull[i][k] = (1.0 - t) * a.hull[i][k] + t * b.hull[i][k];
  return out;
}

struct BodyAvg {
  std::int64_t count = 0, cells = 0;
  double avg = 0.0;
};

BodyAvg body_avg(const RowPrefix& rp, const ConvexBody& body) {
  BodyAvg out;
  body_cells_at_scale(rp, body, body.anchor(), 1.0, out.count, out.cells);
  out.avg = out.cells > 0 ? static_cast<double>(out.count) / static_cast<double>(out.cells) : 0.0;
  return out;
}

struct BlendBracket {
  double t_lo = 0.0, t_hi = 1.0;  // avg(t_lo) >= target >= avg(t_hi)
  BodyAvg lo_stat, hi_stat;
  double jump = 0.0;  // avg gap across the final bracket
};

// Bisect the grid average over blend_bodies(a, b, t) toward `target`; caller
// guarantees avg(a) >= target >= avg(b).
BlendBracket bisect_blend(const RowPrefix& rp, const ConvexBody& a, const ConvexBody& b,
                          double target, int iters) {
  BlendBracket br;
  br.lo_stat = body_avg(rp, a);
  br.hi_stat = body_avg(rp, b);
  for (int i = 0; i < iters; ++i) {
    const double tm = 0.5 * (br.t_lo + br.t_hi);
    const BodyAvg m = body_avg(rp, blend_bodies(a, b, tm));
    if (m.avg >= target) {
      br.t_lo = tm;
      br.lo_stat = m;
    } else {
      br.t_hi = tm;
      br.hi_stat = m;
    }
  }
  br.jump = br.lo_stat.avg - br.hi_stat.avg;
  return br;
}

double box_average(const IntegralImage& ii, const IndexBox& b) {
  const std::int64_t cells = b.cell_count();
  return cells > 0 ? static_cast<double>(ii.count(b)) / static_cast<double>(cells) : 0.0;
}

bool open_overlap(const Rect& a, const Rect& b) {
  for (int k = 0; k < a.n; ++k)
    if (!(a.lo[k] < b.hi[k] && b.lo[k] < a.hi[k])) return false;
  return true;
}

void finish_inclusion(EmbeddingReport& rep, const GridMask& inner, const GridMask& middle,
                      const GridMask& outer) {
  rep.violation_cells = subset_within(inner, outer, rep.slack_cells).violations;
  rep.violations_at_zero = subset_within(inner, outer, 0).violations;
  rep.inclusion_holds = rep.violation_cells == 0;
  rep.inner_measure = inner.measure();
  rep.middle_measure = middle.measure();
  rep.outer_measure = outer.measure();
  rep.measure_ok = inner.count() <= outer.count();
}

}  // namespace

EmbeddingReport verify_rect_embedding(const GridMask& E, const Basis& basis, double alpha,
                                      double delta, double xi, std::int64_t slack_cells,
                                      int threads) {
  if (basis.kind != BasisKind::cubes && basis.kind != BasisKind::strong_rects)
    fail_config("rect embedding requires a cube or axis-rectangle basis");
  if (!(alpha > 0 && delta > 0 && xi < 1 && alpha < 1 - delta && 1 - delta < xi))
    fail_config("rect embedding requires 0 < alpha < 1 - delta < xi < 1");
  if (slack_cells < 0) fail_config("the inclusion slack must be nonnegative");
  const int n = E.win.n;
  EmbeddingReport rep;
  rep.theorem = "rect";
  rep.inner_kind = basis.kind;
  rep.middle_kind = basis.kind;
  rep.alpha = alpha;
  rep.delta = delta;
  rep.xi = xi;
  rep.middle_alpha = 1.0 - delta;
  rep.outer_alpha = alpha * (1.0 + (1.0 - xi) / std::ldexp(1.0, n));
  rep.slack_cells = slack_cells;
  if (!(rep.outer_alpha < 1))
    fail_config("the raised outer threshold reaches 1; lower alpha or raise xi");
  const HaloResult inner = halo_set(E, basis, alpha, threads);
  if (inner.mask.boundary_touched())
    fail_resolution("enlarge window: the level-alpha halo reaches the window boundary");
  const HaloResult middle = halo_set(E, basis, rep.middle_alpha, threads);
  const HaloResult outer = halo_set(middle.mask, basis, rep.outer_alpha, threads);
  if (outer.mask.boundary_touched())
    fail_resolution("enlarge window: the outer halo reaches the window boundary");
  finish_inclusion(rep, inner.mask, middle.mask, outer.mask);
  return rep;
}

EmbeddingReport verify_rect_composition(const GridMask& E, const Basis& basis, double alpha,
                                        double delta, std::int64_t slack_cells, int threads) {
  if (basis.kind != BasisKind::cubes && basis.kind != BasisKind::strong_rects)
    fail_config("rect composition requires a cube or axis-rectangle basis");
  if (!(alpha > 0 && delta > 0 && alpha < 1 - delta))
    fail_config("rect composition requires 0 < alpha < 1 - delta < 1");
  if (slack_cells < 0) fail_config("the inclusion slack must be nonnegative");
  const int n = E.win.n;
  EmbeddingReport rep;
  rep.theorem = "rect_composition";
  rep.inner_kind = basis.kind;
  rep.middle_kind = basis.kind;
  rep.alpha = alpha;
  rep.delta = delta;
  rep.xi = 1.0 - delta;  // the limit the composition is taken at
  rep.middle_alpha = 1.0 - delta;
  rep.outer_alpha = alpha * (1.0 + delta / std::ldexp(1.0, n));
  rep.slack_cells = slack_cells;
  if (!(rep.outer_alpha < 1))
    fail_config("the raised outer threshold reaches 1; lower alpha or delta");
  const HaloResult inner = halo_set(E, basis, alpha, threads);
  if (inner.mask.boundary_touched())
    fail_resolution("enlarge window: the level-alpha halo reaches the window boundary");
  const HaloResult middle = halo_set(E, basis, rep.middle_alpha, threads);
  const HaloResult outer = halo_set(middle.mask, basis, rep.outer_alpha, threads);
  if (outer.mask.boundary_touched())
    fail_resolution("enlarge window: the outer halo reaches the window boundary");
  finish_inclusion(rep, inner.mask, middle.mask, outer.mask);
  return rep;
}

EmbeddingReport verify_ball_embedding(const GridMask& E, double alpha, double delta, double c_n,
                                      double kappa, std::int64_t slack_cells, int threads) {
  if (!(alpha > 0 && alpha < 1)) fail_config("alpha must lie in (0, 1)");
  if (!(kappa > 0 && kappa < 1)) fail_config("the regime fraction must lie in (0, 1)");
  if (!(delta > 0 && delta <= kappa * (1.0 - alpha) + 1e-15))
    fail_config("ball embedding requires 0 < delta <= kappa (1 - alpha)");
  if (!(c_n > 0)) fail_config("the dimensional constant must be positive");
  if (slack_cells < 0) fail_config("the inclusion slack must be nonnegative");
  const int n = E.win.n;
  const double mn = std::min(alpha, 1.0 - alpha);
  EmbeddingReport rep;
  rep.theorem = "ball";
  rep.inner_kind = BasisKind::balls;
  rep.middle_kind = BasisKind::strong_rects;
  rep.alpha = alpha;
  rep.delta = delta;
  rep.c_n = c_n;
  rep.middle_alpha = 1.0 - delta;
  rep.outer_alpha = alpha * (1.0 + c_n * std::pow(mn, n) * delta);
  rep.slack_cells = slack_cells;
  if (!(rep.outer_alpha < 1))
    fail_config("the raised outer threshold reaches 1; lower the dimensional constant");
  const Basis balls = Basis::make_balls(n);
  const HaloResult inner = halo_set(E, balls, alpha, threads);
  if (inner.mask.boundary_touched())
    fail_resolution("enlarge window: the level-alpha halo reaches the window boundary");
  const HaloResult middle = halo_set(E, Basis::make_strong(n), rep.middle_alpha, threads);
  const HaloResult outer = halo_set(middle.mask, balls, rep.outer_alpha, threads);
  if (outer.mask.boundary_touched())
    fail_resolution("enlarge window: the outer halo reaches the window boundary");
  finish_inclusion(rep, inner.mask, middle.mask, outer.mask);
  return rep;
}

EmbeddingReport verify_convex_embedding(const GridMask& E, const ConvexBody& body, double alpha,
                                        double delta, double c_n, std::int64_t slack_cells,
                                        int threads) {
  const int n = E.win.n;
  if (body.n != n) fail_config("body dimension disagrees with the window");
  if (!(alpha > 0 && alpha < 1)) fail_config("alpha must lie in (0, 1)");
  const double nf = dim_cube_factor(n);
  if (!(delta > 0 && 3.0 * nf * delta <= (1.0 - alpha) * (1.0 + 1e-12)))
    fail_config("convex embedding requires 0 < 3 n^{3n/2} delta <= 1 - alpha");
  if (!(c_n > 0)) fail_config("the dimensional constant must be positive");
  if (slack_cells < 0) fail_config("the inclusion slack must be nonnegative");
  const double mn = std::min(alpha, 1.0 - alpha);
  EmbeddingReport rep;
  rep.theorem = "convex";
  rep.inner_kind = BasisKind::convex;
  rep.middle_kind = BasisKind::convex;
  rep.alpha = alpha;
  rep.delta = delta;
  rep.c_n = c_n;
  rep.middle_alpha = 1.0 - 3.0 * nf * delta;
  rep.outer_alpha = alpha * (1.0 + c_n * std::pow(mn, 2 * n) * delta);
  rep.slack_cells = slack_cells;
  if (!(rep.outer_alpha < 1))
    fail_config("the raised outer threshold reaches 1; lower the dimensional constant");
  const Basis conv = Basis::make_convex(n, body.to_shape());
  const HaloResult inner = halo_set(E, conv, alpha, threads);
  if (inner.mask.boundary_touched())
    fail_resolution("enlarge window: the level-alpha halo reaches the window boundary");
  const HaloResult middle = halo_set(E, conv, rep.middle_alpha, threads);
  const HaloResult outer = halo_set(middle.mask, conv, rep.outer_alpha, threads);
  if (outer.mask.boundary_touched())
    fail_resolution("enlarge window: the outer halo reaches the window boundary");
  finish_inclusion(rep, inner.mask, middle.mask, outer.mask);
  return rep;
}

double rect_union_measure(const std::vector<Rect>& rects) {
  if (rects.empty()) return 0.0;
  const int n = rects.front().n;
  for (const Rect& r : rects)
    if (r.n != n) fail_config("rect union mixes dimensions");
  if (n > 2) fail_config("rect unions support n <= 2");
  auto degenerate = [&](const Rect& r) {
    for (int k = 0; k < r.n; ++k)
      if (!(r.hi[k] > r.lo[k])) return true;
    return false;
  };
  if (n == 1) {
    std::vector<std::pair<double, double>> iv;
    for (const Rect& r : rects)
      if (!degenerate(r)) iv.emplace_back(r.lo[0], r.hi[0]);
    std::sort(iv.begin(), iv.end());
    double total = 0.0, cur_lo = 0.0, cur_hi = 0.0;
    bool open = false;
    for (const auto& [lo, hi] : iv) {
      if (!open || lo > cur_hi) {
        if (open) total += cur_hi - cur_lo;
        cur_lo = lo;
        cur_hi = hi;
        open = true;
      } else {
        cur_hi = std::max(cur_hi, hi);
      }
    }
    if (open) total += cur_hi - cur_lo;
    return total;
  }
  // Coordinate compression on the first axis; merged interval sweep per slab.
  std::vector<double> xs;
  for (const Rect& r : rects) {
    if (degenerate(r)) continue;
    xs.push_back(r.lo[0]);
    xs.push_back(r.hi[0]);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  double area = 0.0;
  std::vector<std::pair<double, double>> iv;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double x0 = xs[i], x1 = xs[i + 1];
    iv.clear();
    for (const Rect& r : rects) {
      if (degenerate(r)) continue;
      if (r.lo[0] <= x0 && r.hi[0] >= x1) iv.emplace_back(r.lo[1], r.hi[1]);
    }
    if (iv.empty()) continue;
    std::sort(iv.begin(), iv.end());
    double len = 0.0, cur_lo = iv.front().first, cur_hi = iv.front().second;
    for (std::size_t j = 1; j < iv.size(); ++j) {
      if (iv[j].first > cur_hi) {
        len += cur_hi - cur_lo;
        cur_lo = iv[j].first;
        cur_hi = iv[j].second;
      } else {
        cur_hi = std::max(cur_hi, iv[j].second);
      }
    }
    len += cur_hi - cur_lo;
    area += len * (x1 - x0);
  }
  return area;
}

VitaliSelection vitali_select(const std::vector<Rect>& rects, double dilation) {
  if (!(dilation >= 1)) fail_config("vitali selection requires dilation >= 1");
  VitaliSelection out;
  if (rects.empty()) {
    out.ratio = 1.0;
    return out;
  }
  std::vector<Rect> dil(rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) dil[i] = rects[i].scaled_concentric(dilation);
  std::vector<std::size_t> order(rects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = rects[a].volume(), vb = rects[b].volume();
    if (va != vb) return va > vb;
    for (int k = 0; k < rects[a].n; ++k)
      if (rects[a].lo[k] != rects[b].lo[k]) return rects[a].lo[k] < rects[b].lo[k];
    for (int k = 0; k < rects[a].n; ++k)
      if (rects[a].hi[k] != rects[b].hi[k]) return rects[a].hi[k] < rects[b].hi[k];
    return a < b;
  });
  for (std::size_t i : order) {
    bool free = true;
    for (std::size_t j : out.chosen) {
      if (open_overlap(dil[i], dil[j])) {
        free = false;
        break;
      }
    }
    if (free) out.chosen.push_back(i);
  }
  std::sort(out.chosen.begin(), out.chosen.end());
  std::vector<Rect> sel;
  sel.reserve(out.chosen.size());
  for (std::size_t i : out.chosen) sel.push_back(dil[i]);
  out.input_union = rect_union_measure(dil);
  out.selected_union = rect_union_measure(sel);
  out.ratio = out.input_union > 0 ? out.selected_union / out.input_union : 1.0;
  return out;
}

ConvexWitnessRecord construct_convex_witnesses(const GridMask& E, const ConvexBody& body,
                                               double alpha, double delta, double c_n) {
  const Window& w = E.win;
  const int n = body.n;
  if (n != w.n) fail_config("body dimension disagrees with the window");
  if (!(c_n > 0)) fail_config("the dimensional constant must be positive");
  const double nf32 = dim_sqrt_factor(n);
  const double nf = dim_cube_factor(n);
  const double shrink_guard = nf32 * kJohnSlack;
  // Normalization: the unit cube sits inside the body, the body inside the
  // (verified) concentric dilate of the unit cube, all inside the window.
  {
    Rect unit;
    unit.n = n;
    for (int k = 0; k < n; ++k) {
      unit.lo[k] = 0.0;
      unit.hi[k] = 1.0;
    }
    if (corners_outside_body(body, unit) > 0)
      fail_config("witness construction requires the unit cube inside the body");
  }
  for (const Point& v : body.hull)
    for (int k = 0; k < n; ++k)
      if (std::abs(v[k] - 0.5) > 0.5 * shrink_guard + 1e-9)
        fail_config("witness construction requires the body inside its dimensional dilate");
  {
    const Rect bb = body.bounding_box();
    for (int k = 0; k < n; ++k)
      if (bb.lo[k] < w.origin[k] - 1e-12 || bb.hi[k] > w.origin[k] + w.extent[k] + 1e-12)
        fail_config("the window does not contain the body");
  }

  ConvexWitnessRecord rec;
  rec.alpha_requested = alpha;
  rec.delta = delta;
  rec.c_n = c_n;
  auto& ineq = rec.inequalities;

  const RowPrefix rp = RowPrefix::build(E);
  const IntegralImage ii = IntegralImage::build(E);
  const BodyAvg bc = body_avg(rp, body);
  if (bc.cells <= 0) fail_resolution("refine grid: the body holds no cell centers");
  rec.alpha = bc.avg;
  const double a = rec.alpha;
  if (!(a > 0 && a < 1)) fail_resolution("refine grid: the body average is degenerate");
  const double eps = 0.5 * std::min(a, 1.0 - a);
  rec.eps = eps;
  const double regime = 0.5 * std::min(1.0 - a / (1.0 - eps), (1.0 - a) / (3.0 * nf));
  if (!(delta > 0 && delta <= regime + 1e-12))
    fail_config(
        "witness regime requires 0 < delta <= (1/2) min(1 - alpha/(1-eps), "
        "n^{-3n/2} (1-alpha)/3)");
  add_record(ineq, "normalized body holds at least unit measure", body.measure(), 1.0);

  // Band-cube family: lattice cubes of dyadic side inside the body, compared
  // on their snapped cell unions.
  const double kap = (n == 1) ? 0.25 : 0.0625;
  int m = 0;
  while (std::ldexp(1.0, -m) > kap * eps) ++m;
  const double side = std::ldexp(1.0, -m);
  double hmax = 0.0;
  for (int k = 0; k < n; ++k) hmax = std::max(hmax, w.h(k));
  if (side < 2.0 * hmax)
    fail_resolution("refine grid: band cubes need at least two cells per side");
  struct FamilyCube {
    IndexBox box;
    Rect rect;
    double avg = 0.0;
  };
  std::vector<FamilyCube> family;
  std::int64_t covered_cells = 0;
  {
    const Rect bb = body.bounding_box();
    Index lo{}, hi{}, it{};
    for (int k = 0; k < n; ++k) {
      lo[k] = static_cast<std::int64_t>(std::floor(bb.lo[k] / side)) - 1;
      hi[k] = static_cast<std::int64_t>(std::ceil(bb.hi[k] / side)) + 1;
      it[k] = lo[k];
    }
    while (true) {
      Rect cube;
      cube.n = n;
      for (int k = 0; k < n; ++k) {
        cube.lo[k] = static_cast<double>(it[k]) * side;
        cube.hi[k] = static_cast<double>(it[k] + 1) * side;
      }
      const IndexBox bx = snap_to_cells(cube, w);
      if (!bx.empty()) {
        const Rect cr = bx.to_rect(w);
        if (corners_outside_body(body, cr) == 0) {
          FamilyCube fc;
          fc.box = bx;
          fc.rect = cr;
          fc.avg = box_average(ii, bx);
          covered_cells += bx.cell_count();
          family.push_back(fc);
        }
      }
      int k = 0;
      for (; k < n; ++k) {
        if (++it[k] < hi[k]) break;
        it[k] = lo[k];
      }
      if (k == n) break;
    }
  }
  if (family.empty()) fail_resolution("refine grid: no band cube fits inside the body");
  const double uncovered =
      1.0 - static_cast<double>(covered_cells) / static_cast<double>(bc.cells);
  add_record(ineq, "cube family covers the body", eps, uncovered);

  const double band_lo = (a - eps) / (1.0 - eps);
  const double band_hi = a / (1.0 - eps);
  std::size_t i_max = 0, i_min = 0;
  for (std::size_t i = 1; i < family.size(); ++i) {
    if (family[i].avg > family[i_max].avg) i_max = i;
    if (family[i].avg < family[i_min].avg) i_min = i;
  }
  add_record(ineq, "a family cube reaches the band floor", family[i_max].avg, band_lo);
  add_record(ineq, "a family cube under the band ceiling", band_hi, family[i_min].avg);

  IndexBox r_box;
  bool r_found = false;
  {
    const double mid = 0.5 * (band_lo + band_hi);
    double best = 0.0;
    for (const FamilyCube& fc : family) {
      if (fc.avg >= band_lo && fc.avg <= band_hi) {
        const double d = std::abs(fc.avg - mid);
        if (!r_found || d < best) {
          r_found = true;
          best = d;
          r_box = fc.box;
        }
      }
    }
  }
  if (!r_found) {
    // Walk the cube origin straight from the fullest family cube to the
    // emptiest one, one cell per step, and land inside the band.
    if (!(family[i_max].avg > band_hi && family[i_min].avg < band_lo))
      fail_resolution("refine grid: the band cube brackets are missing");
    const IndexBox& from = family[i_max].box;
    const IndexBox& to = family[i_min].box;
    Index ext{}, start{}, stop{};
    std::int64_t steps = 0;
    for (int k = 0; k < n; ++k) {
      ext[k] = from.b[k] - from.a[k];
      start[k] = from.a[k];
      stop[k] = std::min(to.a[k], w.res[k] - ext[k]);
      steps = std::max<std::int64_t>(steps, std::llabs(stop[k] - start[k]));
    }
    for (std::int64_t t = 1; t <= steps && !r_found; ++t) {
      IndexBox bx;
      bx.n = n;
      for (int k = 0; k < n; ++k) {
        const double frac =
            static_cast<double>(t) / static_cast<double>(steps) * static_cast<double>(stop[k] - start[k]);
        bx.a[k] = start[k] + std::llround(frac);
        bx.b[k] = bx.a[k] + ext[k];
      }
      const double avg = box_average(ii, bx);
      if (avg >= band_lo && avg <= band_hi) {
        r_box = bx;
        r_found = true;
      }
    }
    if (!r_found) fail_resolution("refine grid: the band cube average jumps over its band");
    if (corners_outside_body(body, r_box.to_rect(w)) > 0)
      fail_resolution("refine grid: the band cube drifted outside the body");
  }
  rec.cube_R = r_box.to_rect(w);
  double side_r = 0.0;
  for (int k = 0; k < n; ++k) side_r = std::max(side_r, rec.cube_R.side(k));
  rec.side_R = side_r;
  const double avg_r = box_average(ii, r_box);
  add_record(ineq, "band cube average floor", avg_r, band_lo);
  add_record(ineq, "band cube average ceiling", band_hi, avg_r);

  // Inner cube: concentric shrink by the closed-form factor, snapped.
  const InnerCubeParams icp = inner_cube_factor(a, eps, n);
  rec.t_o = icp.t;
  const IndexBox rin_box = snap_to_cells(rec.cube_R.scaled_concentric(icp.t), w);
  if (rin_box.empty()) fail_resolution("refine grid: the inner cube collapses");
  for (int k = 0; k < n; ++k)
    if (rin_box.b[k] - rin_box.a[k] < 2)
      fail_resolution("refine grid: the inner cube collapses");
  rec.cube_R_in = rin_box.to_rect(w);
  const std::int64_t cells_r = r_box.cell_count();
  const std::int64_t count_r = ii.count(r_box);
  const std::int64_t cells_in = rin_box.cell_count();
  const std::int64_t count_in = ii.count(rin_box);
  const double avg_in = static_cast<double>(count_in) / static_cast<double>(cells_in);
  add_record(ineq, "inner cube keeps the leftover set", static_cast<double>(count_in),
             static_cast<double>(count_r - (cells_r - cells_in)));
  add_record(ineq, "inner cube average floor", avg_in, 0.5 * band_lo);
  add_record(ineq, "inner cube average ceiling", 0.5 * (1.0 + a / (1.0 - eps)), avg_in);
  add_record(ineq, "inner cube stays below the stopping level", 1.0 - delta, avg_in);
  if (!(avg_in <= 1.0 - delta))
    fail_resolution("refine grid: the inner cube reaches the stopping level");

  // Stopping-time selection of E inside the inner cube at level 1 - delta.
  const CzResult dec = cz_decompose_nonuniform(E, rin_box, 1.0 - delta);
  if (dec.root_selected)
    fail_resolution("refine grid: the stopping time selected the inner cube");
  if (dec.cubes.empty()) fail_resolution("refine grid: the stopping time found no cubes");
  rec.cz_count = static_cast<std::int64_t>(dec.cubes.size());

  const double dil = 4.0 * nf32;
  std::vector<Rect> cube_rects(dec.cubes.size());
  std::vector<bool> escapes(dec.cubes.size());
  bool any_escape = false;
  for (std::size_t j = 0; j < dec.cubes.size(); ++j) {
    cube_rects[j] = dec.cubes[j].box.to_rect(w);
    escapes[j] = !rec.cube_R.contains_rect(cube_rects[j].scaled_concentric(dil));
    any_escape = any_escape || escapes[j];
  }

  const double mn = std::min(a, 1.0 - a);
  const double gain_floor = 0.5 / static_cast<double>(bc.cells);

  if (any_escape) {
    rec.case_taken = 1;
    std::size_t jo = 0;
    std::int64_t best_cells = -1;
    for (std::size_t j = 0; j < dec.cubes.size(); ++j) {
      if (!escapes[j]) continue;
      const std::int64_t c = dec.cubes[j].box.cell_count();
      if (c > best_cells) {
        best_cells = c;
        jo = j;
      }
    }
    const Rect& rj = cube_rects[jo];
    const Rect dil_rj = rj.scaled_concentric(dil);
    int axis = 0;
    for (int k = 0; k < n; ++k) {
      if (dil_rj.lo[k] < rec.cube_R.lo[k] || dil_rj.hi[k] > rec.cube_R.hi[k]) {
        axis = k;
        break;
      }
    }
    const double gap = std::min(rec.cube_R_in.lo[axis] - rec.cube_R.lo[axis],
                                rec.cube_R.hi[axis] - rec.cube_R_in.hi[axis]);
    add_record(ineq, "escaping cube bridges the frame gap", 0.5 * (dil - 1.0) * rj.side(axis),
               gap);

    double sigma = rj.side(0);
    for (int k = 1; k < n; ++k) sigma = std::min(sigma, rj.side(k));
    const ConvexBody small = body_to_cube(body, rj.center_point(), sigma / shrink_guard);
    add_record(ineq, "small body containment violations", 0.0,
               static_cast<double>(points_outside_rect(small.hull, rj, 1e-9)));
    const BodyAvg ss = body_avg(rp, small);
    if (ss.cells <= 0) fail_resolution("refine grid: the small witness body holds no cells");
    add_record(ineq, "small body average floor", ss.avg, 1.0 - nf * delta);
    add_record(ineq, "body average leaves bisection headroom", 1.0 - 6.0 * nf * delta, a);
    const double target = 1.0 - 2.0 * nf * delta;
    if (!(ss.avg >= target))
      fail_resolution("refine grid: the small body average misses its bisection floor");
    const BlendBracket br = bisect_blend(rp, small, body, target, 48);
    const bool lo_closer = std::abs(br.lo_stat.avg - target) <= std::abs(br.hi_stat.avg - target);
    const double t_pick = lo_closer ? br.t_lo : br.t_hi;
    const BodyAvg& ws = lo_closer ? br.lo_stat : br.hi_stat;
    const ConvexBody witness = blend_bodies(small, body, t_pick);
    add_record(ineq, "witness body average at the target", br.jump + 1e-12,
               std::abs(ws.avg - target));
    add_record(ineq, "witness body containment violations", 0.0,
               static_cast<double>(points_outside_body(body, witness.hull)));
    add_record(ineq, "witness body above the middle level", ws.avg, 1.0 - 3.0 * nf * delta);
    add_record(ineq, "witness body vacancy", 1.0 - ws.avg, nf * delta);
    const double gain = (1.0 - ws.avg) * static_cast<double>(ws.cells) /
                        static_cast<double>(bc.cells);
    add_record(ineq, "density transfer is positive", gain, gain_floor);
    add_record(ineq, "implied transfer constant, statement form",
               gain / (std::pow(mn, 2 * n) * delta), 0.0);
    add_record(ineq, "implied transfer constant, per-case form",
               gain / (std::pow(mn, n) * a * delta), 0.0);
    rec.body_out = witness.hull;
  } else {
    rec.case_taken = 2;
    const VitaliSelection vit = vitali_select(cube_rects, dil);
    rec.vitali_count = static_cast<std::int64_t>(vit.chosen.size());
    add_record(ineq, "vitali keeps a fifth of the dilated union", vit.ratio, std::pow(5.0, -n));
    double sum_sel = 0.0;
    for (std::size_t i : vit.chosen) sum_sel += cube_rects[i].volume();
    add_record(ineq, "chosen cubes retain the dilated union",
               std::pow(dil, n) * sum_sel * (1.0 + 1e-12), vit.selected_union);
    add_record(ineq, "dilated family controls the set", vit.input_union,
               static_cast<double>(count_in) * w.cell_measure());

    const double target = 1.0 - delta / nf;
    double max_parent_avg = 0.0, min_small_avg = 1.0, max_big_avg = 0.0;
    double min_family_avg = 1.0, max_family_avg = 0.0, max_jump = 0.0, gain_sum = 0.0;
    std::int64_t small_viol = 0, parent_in_big_viol = 0, big_viol = 0;
    bool first_body = true;
    for (std::size_t idx : vit.chosen) {
      const Rect& rj = cube_rects[idx];
      const Rect dil_rj = rj.scaled_concentric(dil);
      const IndexBox parent = tree_parent_box(rin_box, dec.cubes[idx].box);
      const Rect pr = parent.to_rect(w);
      max_parent_avg = std::max(max_parent_avg, box_average(ii, parent));

      double sig_s = rj.side(0);
      double sig_b = pr.side(0);
      for (int k = 1; k < n; ++k) {
        sig_s = std::min(sig_s, rj.side(k));
        sig_b = std::max(sig_b, pr.side(k));
      }
      const ConvexBody small = body_to_cube(body, rj.center_point(), sig_s / shrink_guard);
      const ConvexBody big = body_to_cube(body, pr.center_point(), sig_b);
      small_viol += points_outside_rect(small.hull, rj, 1e-9);
      parent_in_big_viol += corners_outside_body(big, pr);
      // Floor-half splits leave parents up to one cell wider than twice the
      // cube, so the dilate containment is measured with a one-cell slack.
      big_viol += points_outside_rect(big.hull, dil_rj, hmax + 1e-9);
      const BodyAvg ss = body_avg(rp, small);
      if (ss.cells <= 0) fail_resolution("refine grid: a small witness body holds no cells");
      const BodyAvg bs = body_avg(rp, big);
      if (bs.cells <= 0) fail_resolution("refine grid: a big witness body holds no cells");
      min_small_avg = std::min(min_small_avg, ss.avg);
      max_big_avg = std::max(max_big_avg, bs.avg);

      BodyAvg family_stat = ss;
      ConvexBody family_body = small;
      if (ss.avg > target) {
        if (!(bs.avg <= target))
          fail_resolution("refine grid: a big body average misses its ceiling");
        const BlendBracket br = bisect_blend(rp, small, big, target, 48);
        family_stat = br.hi_stat;
        family_body = blend_bodies(small, big, br.t_hi);
        max_jump = std::max(max_jump, br.jump);
      }
      min_family_avg = std::min(min_family_avg, family_stat.avg);
      max_family_avg = std::max(max_family_avg, family_stat.avg);
      gain_sum += (1.0 - family_stat.avg) * static_cast<double>(family_stat.cells);
      if (first_body) {
        rec.body_out = family_body.hull;
        first_body = false;
      }
    }
    add_record(ineq, "parents stay at the stopping level", 1.0 - delta, max_parent_avg);
    add_record(ineq, "small body containment violations", 0.0,
               static_cast<double>(small_viol));
    add_record(ineq, "parent inside the big body, containment violations", 0.0,
               static_cast<double>(parent_in_big_viol));
    add_record(ineq, "big body containment violations", 0.0, static_cast<double>(big_viol));
    add_record(ineq, "small body average floor", min_small_avg, 1.0 - nf * delta);
    add_record(ineq, "big body average ceiling", target, max_big_avg);
    add_record(ineq, "family bisection jump within the band", nf * delta - delta / nf, max_jump);
    add_record(ineq, "family average sandwich floor", min_family_avg, 1.0 - nf * delta);
    add_record(ineq, "family average sandwich ceiling", target, max_family_avg);
    std::int64_t overlaps = 0;
    for (std::size_t x = 0; x < vit.chosen.size(); ++x)
      for (std::size_t y = x + 1; y < vit.chosen.size(); ++y)
        if (open_overlap(cube_rects[vit.chosen[x]].scaled_concentric(dil),
                         cube_rects[vit.chosen[y]].scaled_concentric(dil)))
          ++overlaps;
    add_record(ineq, "chosen dilates are pairwise disjoint", 0.0,
               static_cast<double>(overlaps));
    const double gain = gain_sum / static_cast<double>(bc.cells);
    add_record(ineq, "density transfer is positive", gain, gain_floor);
    add_record(ineq, "implied transfer constant, statement form",
               gain / (std::pow(mn, 2 * n) * delta), 0.0);
    add_record(ineq, "implied transfer constant, per-case form",
               gain / (std::pow(mn, n) * a * delta), 0.0);
  }

  rec.all_pass = true;
  for (const InequalityRecord& r : rec.inequalities) rec.all_pass = rec.all_pass && r.pass;
  return rec;
}

}  // namespace halolab
