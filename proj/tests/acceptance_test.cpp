// End-to-end acceptance gate: ten checks with pinned tolerances and runtime
// budgets, one PASS/FAIL line each. The binary exits 0 only if every check
// passes. Checks that depend on grids carry an explicit discretization
// contract: a failure at the base resolution must vanish when the resolution
// doubles, otherwise it counts as a real failure.
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "halolab/embedding.hpp"
#include "halolab/experiment.hpp"
#include "halolab/tauberian.hpp"

using namespace halolab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Window line_window(std::int64_t res, double lo, double hi) {
  Window w;
  w.n = 1;
  w.origin = {lo, 0, 0};
  w.extent = {hi - lo, 0, 0};
  w.res = {res, 1, 1};
  return w;
}

Window square_window(std::int64_t res, double lo, double hi) {
  Window w;
  w.n = 2;
  w.origin = {lo, lo, 0};
  w.extent = {hi - lo, hi - lo, 0};
  w.res = {res, res, 1};
  return w;
}

Window cube_window(std::int64_t res, double lo, double hi) {
  Window w;
  w.n = 3;
  w.origin = {lo, lo, lo};
  w.extent = {hi - lo, hi - lo, hi - lo};
  w.res = {res, res, res};
  return w;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- check 1
// One-dimensional sharp constants against the closed form 2/alpha - 1,
// measured by the candidate search over single intervals.

Outcome check_interval_constants() {
  const Window w = line_window(4096, -1.0, 2.0);
  const Basis basis = Basis::make_cubes(1);
  CandidateFamily fam;
  fam.kind = FamilyKind::single_cube;
  fam.min_side = 0.1;
  fam.max_side = 0.4;
  fam.seed = 11;
  Outcome out;
  out.pass = true;
  std::ostringstream d;
  for (const double alpha : {0.5, 0.7, 0.9}) {
    const ConstantEstimate est = estimate_constant(w, basis, alpha, fam, 8);
    const double truth = 2.0 / alpha - 1.0;
    const bool ok = std::abs(est.c_hat - truth) <= 0.02 * truth && !est.window_limited;
    out.pass = out.pass && ok;
    d << "c(" << alpha << ")=" << fmt(est.c_hat) << (ok ? "" : "!=") << " ";
  }
  d << "targets 3 1.857 1.222, tolerance 2%";
  out.detail = d.str();
  return out;
}

// ---------------------------------------------------------------- check 2
// One-dimensional near-threshold exponent: scanning alpha = 1 - 2^-k for
// k = 3..8 and fitting log(c - 1) against log(1 - alpha) must recover an
// exponent near 1.

Outcome check_interval_exponent() {
  const Window w = line_window(16384, -1.0, 2.0);
  CandidateFamily fam;
  fam.kind = FamilyKind::single_cube;
  fam.min_side = 0.3;
  fam.max_side = 0.4;
  fam.seed = 12;
  std::vector<double> grid;
  for (int k = 3; k <= 8; ++k) grid.push_back(1.0 - std::ldexp(1.0, -k));
  const ScanResult sr = scan(w, Basis::make_cubes(1), grid, fam, 3);
  const SolyanikFit fit = solyanik_fit(sr.table, 0.0);
  Outcome out;
  out.pass = fit.p_hat >= 0.85 && fit.p_hat <= 1.15;
  out.detail = "p_hat=" + fmt(fit.p_hat) + " r2=" + fmt(fit.r2) +
               " rows=" + std::to_string(fit.rows_used) + ", target band [0.85, 1.15]";
  return out;
}

// ---------------------------------------------------------------- check 3
// Strong-rectangle halo of the unit square at alpha = 0.8: the measured
// ratio must match 1 + (4/alpha) ln(1/alpha), and at a coarser grid the
// engine must agree cell-for-cell with an exhaustive per-axis oracle (for a
// product set, the best rectangle factorizes into per-axis best intervals).

Outcome check_square_closed_form() {
  const double truth = 1.0 + (4.0 / 0.8) * std::log(1.0 / 0.8);
  const Window w = square_window(512, -1.0, 2.0);
  const GridMask E = rasterize(ShapeSpec::make_rect(Point{0, 0, 0}, Point{1, 1, 0}), w);
  const RatioResult rr = halo_ratio(E, Basis::make_strong(2), 0.8);
  const bool ratio_ok = std::abs(rr.ratio - truth) <= 0.02 * truth && !rr.boundary_touched;

  const Window wc = square_window(128, -1.0, 2.0);
  const GridMask Ec = rasterize(ShapeSpec::make_rect(Point{0, 0, 0}, Point{1, 1, 0}), wc);
  const GridMask engine = halo_set(Ec, Basis::make_strong(2), 0.8).mask;
  const std::int64_t N = wc.res[0];
  std::vector<std::int64_t> on0(static_cast<std::size_t>(N), 0), on1 = on0;
  for (std::int64_t f = 0; f < wc.cells(); ++f) {
    if (!Ec.data[static_cast<std::size_t>(f)]) continue;
    const Index idx = wc.unflat(f);
    on0[static_cast<std::size_t>(idx[0])] = 1;
    on1[static_cast<std::size_t>(idx[1])] = 1;
  }
  // Best covered fraction over every interval containing each coordinate.
  const auto best_fraction = [](const std::vector<std::int64_t>& on) {
    const std::int64_t n = static_cast<std::int64_t>(on.size());
    std::vector<std::int64_t> pre(on.size() + 1, 0);
    for (std::size_t i = 0; i < on.size(); ++i) pre[i + 1] = pre[i] + on[i];
    std::vector<std::pair<std::int64_t, std::int64_t>> best(on.size(), {0, 1});
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t l = 0; l <= i; ++l)
        for (std::int64_t r = i + 1; r <= n; ++r) {
          const std::int64_t c = pre[r] - pre[l];
          auto& b = best[static_cast<std::size_t>(i)];
          if (c * b.second > b.first * (r - l)) b = {c, r - l};
        }
    return best;
  };
  const auto b0 = best_fraction(on0), b1 = best_fraction(on1);
  const Threshold th(0.8);
  GridMask oracle = GridMask::empty(wc);
  for (std::int64_t f = 0; f < wc.cells(); ++f) {
    const Index idx = wc.unflat(f);
    const auto& p = b0[static_cast<std::size_t>(idx[0])];
    const auto& q = b1[static_cast<std::size_t>(idx[1])];
    oracle.set(f, p.first * q.first * Threshold::kDen > th.num * p.second * q.second);
  }
  const bool oracle_ok = engine.same_cells(oracle);

  Outcome out;
  out.pass = ratio_ok && oracle_ok;
  out.detail = "ratio=" + fmt(rr.ratio) + " target=" + fmt(truth) + " (2%), oracle cells " +
               (oracle_ok ? "identical" : "DIFFER") + " at N=128";
  return out;
}

// ------------------------------------------------------- corpus for 4 / 8
// Seeded unions of up to 8 axis rectangles in continuous coordinates, so the
// same sets rasterize at any resolution.

struct RectShape {
  double lo[2], hi[2];
};

std::vector<std::vector<RectShape>> rect_union_corpus(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<std::vector<RectShape>> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int k = 1 + static_cast<int>(uni(rng) * 7.999);
    std::vector<RectShape> shapes;
    for (int j = 0; j < k; ++j) {
      RectShape r;
      for (int ax = 0; ax < 2; ++ax) {
        const double wid = 0.06 + 0.3 * uni(rng);
        r.lo[ax] = 0.2 + (0.6 - wid) * uni(rng);
        r.hi[ax] = r.lo[ax] + wid;
      }
      shapes.push_back(r);
    }
    corpus.push_back(std::move(shapes));
  }
  return corpus;
}

GridMask raster_rect_union(const std::vector<RectShape>& shapes, const Window& w) {
  GridMask m = GridMask::empty(w);
  for (const RectShape& r : shapes)
    rasterize_into(ShapeSpec::make_rect(Point{r.lo[0], r.lo[1], 0}, Point{r.hi[0], r.hi[1], 0}),
                   m);
  return m;
}

// ---------------------------------------------------------------- check 4
// Composition inclusion for the strong basis on 100 seeded rectangle unions:
// the level-alpha halo must land inside the raised-threshold halo of the
// level-xi halo, within one cell of dilation slack. Base grid failures must
// vanish at the doubled grid.

std::vector<std::vector<RectShape>> g_corpus;  // shared with checks 8 and 10

Outcome check_rect_inclusions() {
  g_corpus = rect_union_corpus(100, 1004);
  int pass_base = 0;
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < g_corpus.size(); ++i) {
    const GridMask E = raster_rect_union(g_corpus[i], square_window(256, -1.0, 2.0));
    const EmbeddingReport rep =
        verify_rect_embedding(E, Basis::make_strong(2), 0.6, 0.2, 0.85, 1);
    if (rep.inclusion_holds) {
      ++pass_base;
    } else {
      failed.push_back(i);
    }
  }
  bool retried_ok = true;
  for (const std::size_t i : failed) {
    const GridMask E = raster_rect_union(g_corpus[i], square_window(512, -1.0, 2.0));
    const EmbeddingReport rep =
        verify_rect_embedding(E, Basis::make_strong(2), 0.6, 0.2, 0.85, 1);
    retried_ok = retried_ok && rep.inclusion_holds;
  }
  Outcome out;
  out.pass = failed.empty() || retried_ok;
  out.detail = std::to_string(pass_base) + "/100 at N=256";
  if (!failed.empty())
    out.detail += retried_ok ? ", all failures vanish at N=512"
                             : ", a failure SURVIVES at N=512";
  return out;
}

// ---------------------------------------------------------------- check 5
// Stopping-time selection on 100 seeded sets across dimensions 1..3: the
// recounting validator (disjointness, set coverage, every selected box beats
// the level, every ancestor does not) plus the parent bound: one child per
// maximal parent forms a disjoint family carrying at least 2^-n of the
// selected cells.

Outcome check_stopping_time() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int checked = 0, ok_count = 0;
  std::string first_fail;
  const auto run_instance = [&](const GridMask& E, double xi) {
    const Window& w = E.win;
    IndexBox root;
    root.n = w.n;
    for (int k = 0; k < w.n; ++k) {
      root.a[k] = 0;
      root.b[k] = w.res[k];
    }
    const CzResult dec = cz_decompose(E, root, xi);
    const CzCheck chk = validate_cz(E, dec);
    bool good = chk.ok();
    if (!good && first_fail.empty()) first_fail = chk.detail;

    if (good && !dec.root_selected && !dec.cubes.empty()) {
      const std::vector<DyadicCube> parents = maximal_parents(E, dec);
      // Parents must be pairwise disjoint: paint them and watch for overlap.
      std::vector<std::uint8_t> paint(static_cast<std::size_t>(w.cells()), 0);
      bool disjoint = true;
      for (const DyadicCube& p : parents) {
        Index it = p.box.a;
        while (true) {
          auto& cell = paint[static_cast<std::size_t>(w.flat(it))];
          disjoint = disjoint && cell == 0;
          cell = 1;
          int k = 0;
          for (; k < w.n; ++k) {
            if (++it[k] < p.box.b[k]) break;
            it[k] = p.box.a[k];
          }
          if (k == w.n) break;
        }
      }
      // One selected child per maximal parent; halving is exact on
      // power-of-two roots, so child * 2^n == parent in cells.
      std::map<std::array<std::int64_t, 6>, const DyadicCube*> child_of;
      for (const DyadicCube& c : dec.cubes) {
        const IndexBox pb = tree_parent_box(root, c.box);
        const std::array<std::int64_t, 6> key = {pb.a[0], pb.a[1], pb.a[2],
                                                 pb.b[0], pb.b[1], pb.b[2]};
        child_of.emplace(key, &c);
      }
      std::int64_t representative_cells = 0;
      bool matched = true;
      for (const DyadicCube& p : parents) {
        const std::array<std::int64_t, 6> key = {p.box.a[0], p.box.a[1], p.box.a[2],
                                                 p.box.b[0], p.box.b[1], p.box.b[2]};
        const auto it = child_of.find(key);
        if (it == child_of.end()) {
          matched = false;
          break;
        }
        matched = matched &&
                  it->second->box.cell_count() * (std::int64_t{1} << w.n) == p.box.cell_count();
        representative_cells += it->second->box.cell_count();
      }
      const bool bound_ok =
          matched && representative_cells * (std::int64_t{1} << w.n) >= dec.selected_cells;
      good = disjoint && bound_ok;
      if (!good && first_fail.empty()) first_fail = "parent bound violated";
    }
    ++checked;
    if (good) ++ok_count;
  };

  for (int i = 0; i < 60; ++i) {  // planar random density
    const Window w = square_window(128, 0.0, 1.0);
    GridMask E = GridMask::empty(w);
    for (std::int64_t f = 0; f < w.cells(); ++f) E.set(f, uni(rng) < 0.3);
    run_instance(E, 0.85);
  }
  for (int i = 0; i < 20; ++i) {  // planar rectangle unions
    const Window w = square_window(128, 0.0, 1.0);
    GridMask E = GridMask::empty(w);
    const int k = 3 + static_cast<int>(uni(rng) * 5.999);
    for (int j = 0; j < k; ++j) {
      const double wx = 0.1 + 0.3 * uni(rng), wy = 0.1 + 0.3 * uni(rng);
      const double x = (1.0 - wx) * uni(rng), y = (1.0 - wy) * uni(rng);
      rasterize_into(ShapeSpec::make_rect(Point{x, y, 0}, Point{x + wx, y + wy, 0}), E);
    }
    run_instance(E, 0.5);
  }
  for (int i = 0; i < 10; ++i) {  // one-dimensional random density
    const Window w = line_window(4096, 0.0, 1.0);
    GridMask E = GridMask::empty(w);
    for (std::int64_t f = 0; f < w.cells(); ++f) E.set(f, uni(rng) < 0.35);
    run_instance(E, 0.7);
  }
  for (int i = 0; i < 10; ++i) {  // three-dimensional random density
    const Window w = cube_window(32, 0.0, 1.0);
    GridMask E = GridMask::empty(w);
    for (std::int64_t f = 0; f < w.cells(); ++f) E.set(f, uni(rng) < 0.3);
    run_instance(E, 0.6);
  }

  Outcome out;
  out.pass = ok_count == checked && checked == 100;
  out.detail = std::to_string(ok_count) + "/" + std::to_string(checked) +
               " instances: validator and parent bound";
  if (!first_fail.empty()) out.detail += ", first failure: " + first_fail;
  return out;
}

// ---------------------------------------------------------------- check 6
// Rotated rectangle sandwich for 50 seeded convex polygons, via the shipped
// experiment runner: the inner rectangle must lie in the body and the body in
// the outer dilate, probed with ten thousand membership samples per side.

Outcome check_john_sandwich() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "halolab_acceptance_john";
  fs::remove_all(root);
  fs::create_directories(root);
  RunOptions opts;
  opts.base_dir = root;
  const RunSummary sum = run_experiment_text(
      R"({"kind": "john", "instances": 50, "samples": 10000, "seed": 606, "out": "run"})", opts);
  Outcome out;
  out.pass = sum.pass;
  out.detail = sum.summary + ", bound 2^{3/2} (1+1e-3)";
  fs::remove_all(root);
  return out;
}

// ---------------------------------------------------------------- check 7
// Inner-cube shrink arithmetic: the closed form at (0.5, 0.25, 1) is exactly
// 0.8; the factor stays inside (0, 1) across the legal domain; and on 50
// seeded sets a band cube shrunk by the factor keeps its average inside the
// widened band, with the quantization jump made explicit.

Outcome check_inner_cube() {
  Outcome out;
  const InnerCubeParams p = inner_cube_factor(0.5, 0.25, 1);
  const bool exact_ok = p.t == 0.8 && p.t_pow_n == 0.8;

  bool sweep_ok = true;
  for (int n = 1; n <= 3 && sweep_ok; ++n)
    for (int ia = 1; ia <= 49 && sweep_ok; ++ia)
      for (int ie = 1; ie <= 19 && sweep_ok; ++ie) {
        const double alpha = 0.02 * ia;
        const double eps = 0.05 * ie * std::min(alpha, 1.0 - alpha);
        const InnerCubeParams q = inner_cube_factor(alpha, eps, n);
        sweep_ok = q.t > 0.0 && q.t < 1.0 && q.t_pow_n > 0.5 - 1e-12 && q.t_pow_n < 1.0;
      }

  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int band_ok = 0, instances = 0;
  double worst_jump = 0;
  while (instances < 50) {
    const Window w = square_window(256, 0.0, 1.0);
    GridMask E = GridMask::empty(w);
    const int k = 2 + static_cast<int>(uni(rng) * 2.999);
    for (int j = 0; j < k; ++j) {
      const double wx = 0.2 + 0.3 * uni(rng), wy = 0.2 + 0.3 * uni(rng);
      const double x = 0.15 + (0.7 - wx) * uni(rng), y = 0.15 + (0.7 - wy) * uni(rng);
      rasterize_into(ShapeSpec::make_rect(Point{x, y, 0}, Point{x + wx, y + wy, 0}), E);
    }
    const double alpha = 0.35 + 0.3 * uni(rng);
    const double eps = (0.3 + 0.3 * uni(rng)) * std::min(alpha, 1.0 - alpha);
    const double lo = (alpha - eps) / (1.0 - eps), hi = alpha / (1.0 - eps);
    HomothetySearch hs;
    bool found = false;
    IndexBox rin_box;
    for (int tries = 0; tries < 40 && !found; ++tries) {
      const Point c{0.1 + 0.8 * uni(rng), 0.1 + 0.8 * uni(rng), 0};
      hs = band_cube_search(E, c, lo, hi, 0.3);
      if (!hs.found || hs.quantized) continue;
      rin_box = snap_to_cells(hs.cube.scaled_concentric(inner_cube_factor(alpha, eps, 2).t), w);
      bool nonempty = true;
      for (int ax = 0; ax < 2; ++ax) nonempty = nonempty && rin_box.a[ax] < rin_box.b[ax];
      found = nonempty;
    }
    if (!found) continue;  // draw another configuration; seeds stay deterministic
    ++instances;
    const InnerCubeParams icp = inner_cube_factor(alpha, eps, 2);
    const IntegralImage ii = IntegralImage::build(E);
    const std::int64_t cells_R = hs.box.cell_count(), count_R = ii.count(hs.box);
    const std::int64_t cells_in = rin_box.cell_count(), count_in = ii.count(rin_box);
    const double avg_in = static_cast<double>(count_in) / static_cast<double>(cells_in);
    const double ratio_cells = static_cast<double>(cells_R) / static_cast<double>(cells_in);
    const double inv_tn = 1.0 / icp.t_pow_n;
    const double jump = std::max(0.0, ratio_cells - inv_tn);
    worst_jump = std::max(worst_jump, jump);
    // Exact cell transfer: what the shrunken cube loses is at most the cell
    // difference; then the band floor/ceiling with the jump made explicit.
    const bool transfer = count_in >= count_R - (cells_R - cells_in);
    const bool floor_ok = avg_in >= 0.5 * lo - jump * (1.0 - lo) - 1e-12;
    const bool ceil_ok = avg_in <= 0.5 * (1.0 + hi) + jump * hi + 1e-12;
    if (transfer && floor_ok && ceil_ok) ++band_ok;
  }

  out.pass = exact_ok && sweep_ok && band_ok == 50;
  out.detail = std::string("t(0.5,0.25,1)=") + (exact_ok ? "0.8 exactly" : "WRONG") +
               ", sweep in (0,1): " + (sweep_ok ? "yes" : "NO") + ", band " +
               std::to_string(band_ok) + "/50, worst jump " + fmt(worst_jump);
  return out;
}

// ---------------------------------------------------------------- check 8
// Witness-level product inequality on the same 100 rectangle unions: the
// level-alpha halo measure never exceeds the halo of the level-(1-delta)
// halo at threshold alpha (1 + delta/2^n).

Outcome check_composition_measures() {
  int ok_count = 0;
  for (const auto& shapes : g_corpus) {
    const GridMask E = raster_rect_union(shapes, square_window(256, -1.0, 2.0));
    const EmbeddingReport rep =
        verify_rect_composition(E, Basis::make_strong(2), 0.6, 0.2, 1);
    if (rep.measure_ok) ++ok_count;
  }
  Outcome out;
  out.pass = ok_count == 100;
  out.detail = std::to_string(ok_count) + "/100 measure inequalities at N=256";
  return out;
}

// ---------------------------------------------------------------- check 9
// Convex bodies: 50 seeded hexagons and triangles around the unit square.
// The inclusion verifier must pass with one cell of slack, and the full
// witness construction must record nonnegative slack on every inequality for
// at least 45 of 50; failures of either kind must vanish at the doubled grid.

ConvexBody make_hexagon(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double a = 0.15 + 0.25 * uni(rng), b = 0.15 + 0.25 * uni(rng);
  const double c = 0.15 + 0.25 * uni(rng), d = 0.15 + 0.25 * uni(rng);
  return ConvexBody::from_points(
      2, {Point{-a, 0.5, 0}, Point{0, -b, 0}, Point{1, -b, 0}, Point{1 + c, 0.5, 0},
          Point{1, 1 + d, 0}, Point{0, 1 + d, 0}});
}

ConvexBody make_triangle(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int tries = 0; tries < 64; ++tries) {
    const double ax = 1.78 + 0.12 * uni(rng), ay = 1.78 + 0.12 * uni(rng);
    const double aB = 0.62 + 0.24 * uni(rng), aC = 0.62 + 0.24 * uni(rng);
    const int corner = static_cast<int>(uni(rng) * 3.999);
    const auto flip = [&](Point p) {
      if (corner & 1) p[0] = 1.0 - p[0];
      if (corner & 2) p[1] = 1.0 - p[1];
      return p;
    };
    const ConvexBody body = ConvexBody::from_points(
        2, {flip(Point{ax, ay, 0}), flip(Point{-0.9, aB, 0}), flip(Point{aC, -0.9, 0})});
    bool ok = true;  // unit square inside, vertices inside the dilate frame
    for (const double x : {0.0, 1.0})
      for (const double y : {0.0, 1.0}) ok = ok && body.contains(Point{x, y, 0});
    for (const Point& v : body.hull)
      for (int k = 0; k < 2; ++k) ok = ok && std::abs(v[k] - 0.5) <= 1.41;
    if (ok) return body;
  }
  throw std::runtime_error("triangle generation exhausted its attempts");
}

Outcome check_convex_bodies() {
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double alpha = 0.5, delta = (1.0 - alpha) / 48.0, c2 = 0.005;

  struct Instance {
    ConvexBody body;
    double scale;
  };
  std::vector<Instance> instances;
  for (int i = 0; i < 50; ++i) {
    ConvexBody body = (i % 2 == 0) ? make_hexagon(rng) : make_triangle(rng);
    instances.push_back({std::move(body), 0.57 + 0.08 * uni(rng)});
  }
  // The inclusion halos need room: they are measured on the window
  // [-n^{3/2}, n^{3/2} + 1] so no qualifying body image is cut off. The
  // witness walk never sweeps a global halo, so it runs on a tight window
  // at the fine grid its band cubes need.
  const auto raster_copy = [](const Instance& ins, std::int64_t N, double lo, double hi) {
    return rasterize(ins.body.scaled_about(ins.body.anchor(), ins.scale).to_shape(),
                     square_window(N, lo, hi));
  };
  const double margin = std::pow(2.0, 1.5);

  int incl_base = 0;
  std::vector<std::size_t> incl_failed;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const GridMask E = raster_copy(instances[i], 192, -margin, margin + 1.0);
    const EmbeddingReport rep =
        verify_convex_embedding(E, instances[i].body, alpha, delta, c2, 1);
    if (rep.inclusion_holds) {
      ++incl_base;
    } else {
      incl_failed.push_back(i);
    }
  }
  bool incl_retry_ok = true;
  for (const std::size_t i : incl_failed) {
    const GridMask E = raster_copy(instances[i], 384, -margin, margin + 1.0);
    const EmbeddingReport rep =
        verify_convex_embedding(E, instances[i].body, alpha, delta, c2, 1);
    incl_retry_ok = incl_retry_ok && rep.inclusion_holds;
  }
  const bool inclusion_ok = incl_failed.empty() || incl_retry_ok;

  const auto witness_pass = [&](const Instance& ins, std::int64_t N) {
    try {
      const GridMask E = raster_copy(ins, N, -1.0, 2.0);
      return construct_convex_witnesses(E, ins.body, alpha, delta, c2).all_pass;
    } catch (const LabError&) {
      return false;
    }
  };
  int wit_base = 0;
  std::vector<std::size_t> wit_failed;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (witness_pass(instances[i], 6144)) {
      ++wit_base;
    } else {
      wit_failed.push_back(i);
    }
  }
  bool wit_retry_ok = true;
  for (const std::size_t i : wit_failed)
    wit_retry_ok = wit_retry_ok && witness_pass(instances[i], 12288);
  const bool witness_ok = wit_base >= 45 && wit_retry_ok;

  Outcome out;
  out.pass = inclusion_ok && witness_ok;
  out.detail = "inclusion " + std::to_string(incl_base) + "/50 at N=192" +
               (incl_failed.empty() ? "" : (incl_retry_ok ? " (rest vanish at N=384)"
                                                          : " (a failure SURVIVES doubling)")) +
               ", witnesses " + std::to_string(wit_base) + "/50 at N=6144" +
               (wit_failed.empty() ? "" : (wit_retry_ok ? " (rest vanish at N=12288)"
                                                        : " (a failure SURVIVES doubling)"));
  return out;
}

// --------------------------------------------------------------- check 10
// What the suite does not attempt, plus the substitute guarantees: halo
// measures converge under refinement on a fixed corpus, and the exponent fit
// recovers a planted exponent to 1e-6.

Outcome check_limits_and_substitutes() {
  std::puts(
      "note: searched constants in dimension two and higher are lower-bound envelopes;\n"
      "note: the extremal families that would certify matching upper asymptotics, and\n"
      "note: any improvement of the ball-basis exponent 1/(n+1), are out of reach here\n"
      "note: and are not claimed. The checks below are the substitute guarantees.");

  // Refinement convergence, one-dimensional: random interval unions.
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst_1d = 0;
  for (int i = 0; i < 12; ++i) {
    const int k = 1 + static_cast<int>(uni(rng) * 3.999);
    std::vector<std::pair<double, double>> iv;
    for (int j = 0; j < k; ++j) {
      const double wd = 0.08 + 0.2 * uni(rng);
      const double lo = 0.1 + (0.8 - wd) * uni(rng);
      iv.push_back({lo, lo + wd});
    }
    double m[2];
    int t = 0;
    for (const std::int64_t N : {4096, 8192}) {
      const Window w = line_window(N, -1.0, 2.0);
      GridMask E = GridMask::empty(w);
      for (const auto& p : iv)
        rasterize_into(ShapeSpec::make_rect(Point{p.first, 0, 0}, Point{p.second, 0, 0}), E);
      m[t++] = static_cast<double>(halo_set(E, Basis::make_cubes(1), 0.6).mask.count()) *
               w.cell_measure();
    }
    worst_1d = std::max(worst_1d, std::abs(m[1] - m[0]) / m[0]);
  }

  // Refinement convergence, planar: dyadic-aligned rectangles, so the set
  // itself is identical at both grids and only the halo boundary moves.
  double worst_2d = 0;
  {
    Rect sq;
    sq.n = 2;
    sq.lo = {1.5, 1.5, 0};
    sq.hi = {2.5, 2.5, 0};
    Rect armA = sq, armB = sq;
    armA.lo = {1.25, 1.75, 0};
    armA.hi = {2.75, 2.25, 0};
    armB.lo = {1.75, 1.25, 0};
    armB.hi = {2.25, 2.75, 0};
    const std::vector<std::vector<Rect>> corpus = {{sq}, {armA, armB}, {sq, armA}};
    for (const auto& shapes : corpus) {
      double m[2];
      int t = 0;
      for (const std::int64_t N : {512, 1024}) {
        const Window w = square_window(N, 0.0, 4.0);
        GridMask E = GridMask::empty(w);
        for (const Rect& r : shapes) rasterize_into(ShapeSpec::make_rect(r.lo, r.hi), E);
        m[t++] = static_cast<double>(halo_set(E, Basis::make_strong(2), 0.6).mask.count()) *
                 w.cell_measure();
      }
      worst_2d = std::max(worst_2d, std::abs(m[1] - m[0]) / m[0]);
    }
  }

  // Planted exponent: a synthetic table c = 1 + sqrt(1 - alpha) must fit
  // back to one half at solver precision.
  TauberianTable synth;
  synth.basis = BasisKind::cubes;
  for (int k = 2; k <= 9; ++k) {
    TauberianRow row;
    row.alpha = 1.0 - std::ldexp(1.0, -k);
    row.c_hat = 1.0 + std::sqrt(1.0 - row.alpha);
    row.grid_n = 0;
    synth.rows.push_back(row);
  }
  const SolyanikFit fit = solyanik_fit(synth, 0.0);
  const double perr = std::abs(fit.p_hat - 0.5);

  Outcome out;
  out.pass = worst_1d < 0.01 && worst_2d < 0.01 && perr < 1e-6;
  out.detail = "refinement drift 1d " + fmt(100 * worst_1d) + "% 2d " + fmt(100 * worst_2d) +
               "% (<1%), planted exponent error " + fmt(perr) + " (<1e-6)";
  return out;
}

}  // namespace

int main() {
  struct Check {
    const char* name;
    Outcome (*fn)();
    double budget_s;  // 0 = no pinned budget
  };
  const Check checks[] = {
      {"interval constants track 2/alpha - 1", check_interval_constants, 10},
      {"interval near-threshold exponent", check_interval_exponent, 30},
      {"strong square closed form and oracle", check_square_closed_form, 60},
      {"rectangle-union composition inclusions", check_rect_inclusions, 600},
      {"stopping-time invariants and parent bound", check_stopping_time, 60},
      {"rotated rectangle sandwich", check_john_sandwich, 60},
      {"inner cube arithmetic and band", check_inner_cube, 0},
      {"witness-level product inequality", check_composition_measures, 0},
      {"convex inclusions and proof witnesses", check_convex_bodies, 900},
      {"stated limits and substitute guarantees", check_limits_and_substitutes, 0},
  };
  int failures = 0;
  int idx = 0;
  for (const Check& c : checks) {
    ++idx;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.fn();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      r.pass = false;
      r.detail += " [over the " + fmt(c.budget_s) + "s budget]";
    }
    std::printf("[%2d] %s  %s (%.1fs) %s\n", idx, r.pass ? "PASS" : "FAIL", c.name, secs,
                r.detail.c_str());
    std::fflush(stdout);
    if (!r.pass) ++failures;
  }
  if (failures == 0) {
    std::puts("ACCEPTANCE: all 10 checks passed");
    return 0;
  }
  std::printf("ACCEPTANCE: %d of 10 checks FAILED\n", failures);
  return 1;
}
