#include "halolab/cz.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace halolab {

namespace {

std::int64_t box_cells(const IndexBox& b) {
  std::int64_t c = 1;
  for (int k = 0; k < b.n; ++k) c *= b.b[k] - b.a[k];
  return c;
}

bool box_contains(const IndexBox& outer, const IndexBox& inner) {
  for (int k = 0; k < outer.n; ++k) {
    if (inner.a[k] < outer.a[k] || inner.b[k] > outer.b[k]) return false;
  }
  return true;
}

bool box_equal(const IndexBox& x, const IndexBox& y) {
  for (int k = 0; k < x.n; ++k) {
    if (x.a[k] != y.a[k] || x.b[k] != y.b[k]) return false;
  }
  return true;
}

std::array<std::int64_t, 6> box_key(const IndexBox& b) {
  std::array<std::int64_t, 6> k{0, 0, 0, 0, 0, 0};
  for (int i = 0; i < b.n; ++i) {
    k[static_cast<std::size_t>(i)] = b.a[i];
    k[static_cast<std::size_t>(3 + i)] = b.b[i];
  }
  return k;
}

// Floor-half split along the longest axis-wise extents: every axis with
// extent > 1 splits; the children enumerate in axis-major binary order.
std::vector<IndexBox> split_box(const IndexBox& b) {
  int splittable[kMaxDim];
  int ns = 0;
  for (int k = 0; k < b.n; ++k) {
    if (b.b[k] - b.a[k] > 1) splittable[ns++] = k;
  }
  std::vector<IndexBox> out;
  if (ns == 0) return out;
  const int combos = 1 << ns;
  for (int c = 0; c < combos; ++c) {
    IndexBox child = b;
    bool ok = true;
    for (int i = 0; i < ns; ++i) {
      const int k = splittable[i];
      const std::int64_t mid = b.a[k] + (b.b[k] - b.a[k]) / 2;
      if ((c >> (ns - 1 - i)) & 1) {
        child.a[k] = mid;
      } else {
        child.b[k] = mid;
      }
      ok = ok && child.a[k] < child.b[k];
    }
    if (ok) out.push_back(child);
  }
  return out;
}

void check_root(const GridMask& E, const IndexBox& root, double lambda) {
  if (root.n != E.win.n) fail_config("selection root dimension disagrees with window");
  for (int k = 0; k < root.n; ++k) {
    if (root.a[k] < 0 || root.b[k] > E.win.res[k] || root.a[k] >= root.b[k]) {
      fail_config("selection root must be a nonempty box inside the window");
    }
  }
  if (!(lambda > 0.0 && lambda < 1.0)) fail_config("selection level must lie in (0, 1)");
}

CzResult decompose_impl(const GridMask& E, const IndexBox& root, double lambda) {
  const IntegralImage ii = IntegralImage::build(E);
  const Threshold th(lambda);
  CzResult res;
  res.lambda = lambda;
  res.root = root;

  struct Node {
    IndexBox box;
    int level;
  };
  std::vector<Node> stack;
  stack.push_back({root, 0});
  // Explicit stack in LIFO order visits children reversed; push reversed to
  // keep pre-order output.
  while (!stack.empty()) {
    Node nd = stack.back();
    stack.pop_back();
    const std::int64_t cnt = ii.count(nd.box);
    if (cnt == 0) continue;
    const std::int64_t cells = box_cells(nd.box);
    if (th.exceeds(cnt, cells)) {
      DyadicCube c;
      c.level = nd.level;
      c.box = nd.box;
      c.count = cnt;
      c.avg = static_cast<double>(cnt) / static_cast<double>(cells);
      if (nd.level == 0) res.root_selected = true;
      res.cubes.push_back(std::move(c));
      res.selected_cells += cells;
      res.covered_count += cnt;
      continue;
    }
    std::vector<IndexBox> children = split_box(nd.box);
    for (auto it = children.rbegin(); it != children.rend(); ++it) {
      stack.push_back({*it, nd.level + 1});
    }
  }
  return res;
}

// Re-descends from the root toward `target`, returning the chain of strict
// ancestors (root first). Fails if target is not a tree node.
std::vector<IndexBox> ancestor_chain(const IndexBox& root, const IndexBox& target) {
  std::vector<IndexBox> chain;
  IndexBox cur = root;
  while (!box_equal(cur, target)) {
    chain.push_back(cur);
    std::vector<IndexBox> children = split_box(cur);
    bool stepped = false;
    for (const IndexBox& ch : children) {
      if (box_contains(ch, target)) {
        cur = ch;
        stepped = true;
        break;
      }
    }
    if (!stepped) fail_config("box is not a node of the selection tree");
  }
  return chain;
}

}  // namespace

CzResult cz_decompose(const GridMask& E, const IndexBox& root, double lambda) {
  check_root(E, root, lambda);
  const std::int64_t e0 = root.b[0] - root.a[0];
  for (int k = 0; k < root.n; ++k) {
    const std::int64_t e = root.b[k] - root.a[k];
    if (e != e0) fail_config("dyadic selection requires equal extents per axis");
    if ((e & (e - 1)) != 0) fail_config("dyadic selection requires power-of-two extents");
  }
  return decompose_impl(E, root, lambda);
}

CzResult cz_decompose_nonuniform(const GridMask& E, const IndexBox& root, double lambda) {
  check_root(E, root, lambda);
  return decompose_impl(E, root, lambda);
}

CzCheck validate_cz(const GridMask& E, const CzResult& dec) {
  CzCheck chk;
  const IntegralImage ii = IntegralImage::build(E);
  const Threshold th(dec.lambda);

  // Disjointness via painting.
  GridMask paint = GridMask::empty(E.win);
  chk.disjoint = true;
  for (const DyadicCube& c : dec.cubes) {
    Index idx{};
    for (int k = 0; k < c.box.n; ++k) idx[k] = c.box.a[k];
    // Walk the box.
    while (true) {
      std::uint8_t& cell = paint.data[static_cast<std::size_t>(E.win.flat(idx))];
      if (cell) {
        chk.disjoint = false;
        if (chk.detail.empty()) chk.detail = "selected cubes overlap";
      }
      cell = 1;
      int k = c.box.n - 1;
      while (k >= 0) {
        if (++idx[k] < c.box.b[k]) break;
        idx[k] = c.box.a[k];
        --k;
      }
      if (k < 0) break;
    }
  }

  // Coverage of E within the root.
  chk.covers_set = true;
  {
    Index idx{};
    for (int k = 0; k < dec.root.n; ++k) idx[k] = dec.root.a[k];
    while (true) {
      const std::size_t f = static_cast<std::size_t>(E.win.flat(idx));
      if (E.data[f] && !paint.data[f]) {
        chk.covers_set = false;
        if (chk.detail.empty()) chk.detail = "a set cell escapes the selection";
        break;
      }
      int k = dec.root.n - 1;
      while (k >= 0) {
        if (++idx[k] < dec.root.b[k]) break;
        idx[k] = dec.root.a[k];
        --k;
      }
      if (k < 0) break;
    }
  }

  chk.selected_pass = true;
  chk.ancestors_fail = true;
  for (const DyadicCube& c : dec.cubes) {
    const std::int64_t cnt = ii.count(c.box);
    if (!th.exceeds(cnt, box_cells(c.box))) {
      chk.selected_pass = false;
      if (chk.detail.empty()) chk.detail = "a selected cube does not beat the level";
    }
    for (const IndexBox& anc : ancestor_chain(dec.root, c.box)) {
      if (th.exceeds(ii.count(anc), box_cells(anc))) {
        chk.ancestors_fail = false;
        if (chk.detail.empty()) chk.detail = "an ancestor of a selected cube beats the level";
        break;
      }
    }
  }
  return chk;
}

std::vector<DyadicCube> maximal_parents(const GridMask& E, const CzResult& dec) {
  const IntegralImage ii = IntegralImage::build(E);
  std::set<std::array<std::int64_t, 6>> parent_keys;
  std::vector<DyadicCube> parents;
  for (const DyadicCube& c : dec.cubes) {
    if (c.level == 0) continue;
    std::vector<IndexBox> chain = ancestor_chain(dec.root, c.box);
    const IndexBox& par = chain.back();
    if (parent_keys.insert(box_key(par)).second) {
      DyadicCube p;
      p.level = c.level - 1;
      p.box = par;
      p.count = ii.count(par);
      p.avg = static_cast<double>(p.count) / static_cast<double>(box_cells(par));
      parents.push_back(std::move(p));
    }
  }
  // Drop parents strictly inside another parent: an ancestor of a parent that
  // is itself a parent makes it non-maximal.
  std::vector<DyadicCube> maximal;
  for (const DyadicCube& p : parents) {
    bool dominated = false;
    for (const IndexBox& anc : ancestor_chain(dec.root, p.box)) {
      if (parent_keys.count(box_key(anc))) {
        dominated = true;
        break;
      }
    }
    if (!dominated) maximal.push_back(p);
  }
  std::sort(maximal.begin(), maximal.end(), [](const DyadicCube& x, const DyadicCube& y) {
    return box_key(x.box) < box_key(y.box);
  });
  return maximal;
}

double min_parent_average(const GridMask& E, const CzResult& dec) {
  const IntegralImage ii = IntegralImage::build(E);
  double best = 1.0;
  for (const DyadicCube& c : dec.cubes) {
    if (c.level == 0) continue;
    std::vector<IndexBox> chain = ancestor_chain(dec.root, c.box);
    const IndexBox& par = chain.back();
    best = std::min(best, static_cast<double>(ii.count(par)) / static_cast<double>(box_cells(par)));
  }
  return best;
}

IndexBox tree_parent_box(const IndexBox& root, const IndexBox& cube) {
  if (box_equal(root, cube)) fail_config("the selection root has no tree parent");
  return ancestor_chain(root, cube).back();
}

namespace {

struct CubeProbe {
  bool valid = false;
  IndexBox box;
  std::int64_t count = 0, cells = 0;
  double avg = 0.0;
};

CubeProbe probe(const IntegralImage& ii, const Window& w, const Point& center, double sigma) {
  CubeProbe p;
  Rect r;
  r.n = w.n;
  for (int k = 0; k < w.n; ++k) {
    r.lo[k] = center[k] - sigma;
    r.hi[k] = center[k] + sigma;
  }
  IndexBox b = snap_to_cells(r, w);
  for (int k = 0; k < w.n; ++k) {
    if (b.a[k] >= b.b[k]) return p;
  }
  p.valid = true;
  p.box = b;
  p.count = ii.count(b);
  p.cells = box_cells(b);
  p.avg = static_cast<double>(p.count) / static_cast<double>(p.cells);
  return p;
}

}  // namespace

HomothetySearch band_cube_search(const GridMask& E, const Point& center, double lo, double hi,
                                 double sigma_max) {
  if (!(lo <= hi)) fail_config("band search bounds are reversed");
  if (!(sigma_max > 0.0)) fail_config("band search needs a positive initial half-side");
  const IntegralImage ii = IntegralImage::build(E);
  double maxres = 0;
  for (int k = 0; k < E.win.n; ++k) maxres = std::max(maxres, static_cast<double>(E.win.res[k]));
  const double gamma = 1.0 - 1.0 / (4.0 * maxres);
  double hmin = E.win.h(0);
  for (int k = 1; k < E.win.n; ++k) hmin = std::min(hmin, E.win.h(k));

  HomothetySearch out;
  double prev_avg = -1.0;
  for (double sigma = sigma_max; sigma > 0.25 * hmin; sigma *= gamma) {
    CubeProbe p = probe(ii, E.win, center, sigma);
    ++out.steps;
    if (!p.valid) break;
    if (prev_avg >= 0.0) out.max_jump = std::max(out.max_jump, std::abs(p.avg - prev_avg));
    prev_avg = p.avg;
    if (p.avg >= lo) {
      out.sigma = sigma;
      out.box = p.box;
      out.cube = p.box.to_rect(E.win);
      out.avg = p.avg;
      if (p.avg <= hi) {
        out.found = true;
      } else {
        out.quantized = true;  // the sweep jumped over the band
      }
      return out;
    }
  }
  return out;  // never reached the band
}

HomothetySearch exact_ratio_homothety(const GridMask& E, const Point& center, double sigma_lo,
                                      double sigma_hi, double target, double tol, int iters) {
  if (!(sigma_lo > 0.0 && sigma_hi > sigma_lo)) fail_config("homothety bracket is not ordered");
  const IntegralImage ii = IntegralImage::build(E);
  CubeProbe plo = probe(ii, E.win, center, sigma_lo);
  CubeProbe phi = probe(ii, E.win, center, sigma_hi);
  if (!plo.valid || !phi.valid) fail_config("homothety bracket leaves the window");
  if (!(plo.avg >= target && target >= phi.avg)) {
    fail_config("homothety search requires a bracketing pair of averages");
  }
  HomothetySearch out;
  double a = sigma_lo, b = sigma_hi;
  double fa = plo.avg, fb = phi.avg;
  for (int it = 0; it < iters; ++it) {
    const double m = 0.5 * (a + b);
    CubeProbe pm = probe(ii, E.win, center, m);
    ++out.steps;
    if (pm.avg >= target) {
      a = m;
      fa = pm.avg;
    } else {
      b = m;
      fb = pm.avg;
    }
  }
  out.max_jump = fa - fb;  // residual gap across the crossing
  const bool lo_closer = std::abs(fa - target) <= std::abs(fb - target);
  const double sigma = lo_closer ? a : b;
  CubeProbe pf = probe(ii, E.win, center, sigma);
  out.sigma = sigma;
  out.box = pf.box;
  out.cube = pf.box.to_rect(E.win);
  out.avg = pf.avg;
  out.found = std::abs(pf.avg - target) <= tol;
  out.quantized = !out.found;
  return out;
}

}  // namespace halolab
