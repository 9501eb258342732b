#include "halolab/tauberian.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

namespace halolab {

namespace {

// Fixed seed-splitting rule: every candidate (and every level of a scan)
// draws from a splitmix64 stream keyed by (master, index), so results do not
// depend on evaluation order or thread count.
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Cell box the candidates are confined to; the surrounding ring absorbs the
// halo so moderate levels stay clear of the window boundary.
struct CoreBox {
  Index a{};
  Index b{};
};

CoreBox core_region(const Window& w, double margin) {
  CoreBox core;
  for (int k = 0; k < w.n; ++k) {
    std::int64_t m = static_cast<std::int64_t>(std::floor(margin * static_cast<double>(w.res[k])));
    m = std::max<std::int64_t>(0, std::min(m, (w.res[k] - 2) / 2));
    core.a[k] = m;
    core.b[k] = w.res[k] - m;
  }
  return core;
}

std::int64_t core_min_len(const Window& w, const CoreBox& core) {
  std::int64_t len = core.b[0] - core.a[0];
  for (int k = 1; k < w.n; ++k) len = std::min(len, core.b[k] - core.a[k]);
  return len;
}

struct SideRange {
  std::int64_t lo = 1;
  std::int64_t hi = 1;
};

SideRange side_range(const CandidateFamily& fam, std::int64_t cmin) {
  SideRange r;
  r.lo = std::max<std::int64_t>(1, std::llround(fam.min_side * static_cast<double>(cmin)));
  r.hi = std::max<std::int64_t>(r.lo, std::llround(fam.max_side * static_cast<double>(cmin)));
  r.lo = std::min(r.lo, cmin);
  r.hi = std::min(r.hi, cmin);
  return r;
}

void clamp_box_into(IndexBox& box, const CoreBox& core) {
  for (int k = 0; k < box.n; ++k) {
    std::int64_t side = std::max<std::int64_t>(1, box.b[k] - box.a[k]);
    side = std::min(side, core.b[k] - core.a[k]);
    std::int64_t a = std::clamp(box.a[k], core.a[k], core.b[k] - side);
    box.a[k] = a;
    box.b[k] = a + side;
  }
}

IndexBox random_box(std::mt19937_64& rng, int n, const CoreBox& core, const SideRange& sides) {
  IndexBox box;
  box.n = n;
  std::uniform_int_distribution<std::int64_t> side_dist(sides.lo, sides.hi);
  for (int k = 0; k < n; ++k) {
    const std::int64_t side = std::min(side_dist(rng), core.b[k] - core.a[k]);
    std::uniform_int_distribution<std::int64_t> pos_dist(core.a[k], core.b[k] - side);
    box.a[k] = pos_dist(rng);
    box.b[k] = box.a[k] + side;
  }
  return box;
}

void fill_box(GridMask& m, const IndexBox& box) {
  const int n = m.win.n;
  Index idx = box.a;
  if (box.empty()) return;
  while (true) {
    m.set(m.win.flat(idx), true);
    int axis = n - 1;
    while (axis >= 0) {
      if (++idx[axis] < box.b[axis]) break;
      idx[axis] = box.a[axis];
      --axis;
    }
    if (axis < 0) break;
  }
}

GridMask boxes_to_mask(const Window& w, const std::vector<IndexBox>& boxes) {
  GridMask m = GridMask::empty(w);
  for (const IndexBox& box : boxes) fill_box(m, box);
  return m;
}

std::vector<IndexBox> union_candidate(std::mt19937_64& rng, const Window& w, const CoreBox& core,
                                      const SideRange& sides, int components) {
  std::vector<IndexBox> boxes;
  boxes.reserve(static_cast<std::size_t>(components));
  for (int c = 0; c < components; ++c) boxes.push_back(random_box(rng, w.n, core, sides));
  return boxes;
}

GridMask cluster_candidate(std::mt19937_64& rng, const Window& w, const CoreBox& core,
                           int components) {
  GridMask m = GridMask::empty(w);
  std::normal_distribution<double> offset(0.0, 3.0);
  constexpr int kPointsPerCluster = 24;
  for (int c = 0; c < components; ++c) {
    Index center{};
    for (int k = 0; k < w.n; ++k) {
      std::uniform_int_distribution<std::int64_t> pos(core.a[k], core.b[k] - 1);
      center[k] = pos(rng);
    }
    m.set(w.flat(center), true);
    for (int t = 0; t < kPointsPerCluster; ++t) {
      Index cell{};
      for (int k = 0; k < w.n; ++k) {
        const std::int64_t off = std::llround(offset(rng));
        cell[k] = std::clamp(center[k] + off, core.a[k], core.b[k] - 1);
      }
      m.set(w.flat(cell), true);
    }
  }
  return m;
}

// Hill-climb mutation: translate, rescale, or split one component, Gaussian
// integer steps, everything re-clamped into the core region.
std::vector<IndexBox> mutate(std::mt19937_64& rng, const std::vector<IndexBox>& boxes,
                             const CoreBox& core, double step, int max_components) {
  std::vector<IndexBox> out = boxes;
  std::uniform_int_distribution<std::size_t> pick(0, out.size() - 1);
  std::uniform_int_distribution<int> op_dist(0, 2);
  std::normal_distribution<double> gauss(0.0, step);
  const std::size_t u = pick(rng);
  IndexBox& box = out[u];
  const int n = box.n;
  int op = op_dist(rng);
  if (op == 2 && static_cast<int>(out.size()) >= max_components) op = 0;
  if (op == 0) {  // translate
    for (int k = 0; k < n; ++k) {
      const std::int64_t d = std::llround(gauss(rng));
      box.a[k] += d;
      box.b[k] += d;
    }
  } else if (op == 1) {  // rescale each axis independently
    for (int k = 0; k < n; ++k) {
      const std::int64_t d = std::llround(gauss(rng));
      box.b[k] = std::max(box.a[k] + 1, box.b[k] + d);
    }
  } else {  // split along the longest axis, then nudge one half
    int axis = 0;
    for (int k = 1; k < n; ++k)
      if (box.b[k] - box.a[k] > box.b[axis] - box.a[axis]) axis = k;
    if (box.b[axis] - box.a[axis] >= 2) {
      IndexBox half = box;
      const std::int64_t mid = box.a[axis] + (box.b[axis] - box.a[axis]) / 2;
      box.b[axis] = mid;
      half.a[axis] = mid;
      for (int k = 0; k < n; ++k) {
        const std::int64_t d = std::llround(gauss(rng));
        half.a[k] += d;
        half.b[k] += d;
      }
      clamp_box_into(half, core);
      out.push_back(half);
    } else {
      for (int k = 0; k < n; ++k) {
        const std::int64_t d = std::llround(gauss(rng));
        box.a[k] += d;
        box.b[k] += d;
      }
    }
  }
  clamp_box_into(out[u], core);
  return out;
}

}  // namespace

std::string family_kind_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::single_cube: return "single_cube";
    case FamilyKind::cube_union: return "cube_union";
    case FamilyKind::random_clusters: return "random_clusters";
    case FamilyKind::perturbation_search: return "perturbation_search";
  }
  return "unknown";
}

void CandidateFamily::validate() const {
  if (components < 1) fail_config("candidate families need at least one component");
  if (!(min_side > 0 && min_side <= max_side && max_side <= 1.0))
    fail_config("component sides must satisfy 0 < min_side <= max_side <= 1");
  if (!(core_margin >= 0 && core_margin <= 0.45))
    fail_config("the core margin must lie in [0, 0.45]");
  if (restarts < 1) fail_config("the search needs at least one restart");
  if (!(step_cells > 0)) fail_config("the mutation step must be positive");
}

ConstantEstimate estimate_constant(const Window& w, const Basis& basis, double alpha,
                                   const CandidateFamily& family, std::int64_t budget,
                                   int threads) {
  w.validate();
  basis.validate(w);
  family.validate();
  if (!(alpha > 0 && alpha < 1)) fail_config("the tauberian level must lie in (0, 1)");
  if (budget < 1) fail_config("the candidate budget must be positive");

  const CoreBox core = core_region(w, family.core_margin);
  const SideRange sides = side_range(family, core_min_len(w, core));

  ConstantEstimate best;
  best.c_hat = -1.0;
  std::int64_t evals = 0;
  const auto consider = [&](const GridMask& mask) {
    const RatioResult rr = halo_ratio(mask, basis, alpha, threads);
    if (rr.ratio > best.c_hat) {
      best.c_hat = rr.ratio;
      best.witness = mask;
      best.witness_id = evals;
      best.window_limited = rr.boundary_touched;
      best.clamped = rr.clamped;
    }
    ++evals;
    return rr.ratio;
  };

  switch (family.kind) {
    case FamilyKind::single_cube: {
      // Deterministic side ladder, centered; no randomness needed.
      for (std::int64_t i = 0; i < budget; ++i) {
        const double t = budget == 1 ? 1.0
                                     : static_cast<double>(i) / static_cast<double>(budget - 1);
        const std::int64_t side =
            sides.lo + std::llround(t * static_cast<double>(sides.hi - sides.lo));
        IndexBox box;
        box.n = w.n;
        for (int k = 0; k < w.n; ++k) {
          const std::int64_t s = std::min(side, core.b[k] - core.a[k]);
          box.a[k] = core.a[k] + (core.b[k] - core.a[k] - s) / 2;
          box.b[k] = box.a[k] + s;
        }
        consider(boxes_to_mask(w, {box}));
      }
      break;
    }
    case FamilyKind::cube_union: {
      for (std::int64_t i = 0; i < budget; ++i) {
        std::mt19937_64 rng(derive_seed(family.seed, static_cast<std::uint64_t>(i)));
        consider(boxes_to_mask(w, union_candidate(rng, w, core, sides, family.components)));
      }
      break;
    }
    case FamilyKind::random_clusters: {
      for (std::int64_t i = 0; i < budget; ++i) {
        std::mt19937_64 rng(derive_seed(family.seed, static_cast<std::uint64_t>(i)));
        consider(cluster_candidate(rng, w, core, family.components));
      }
      break;
    }
    case FamilyKind::perturbation_search: {
      const int restarts = family.restarts;
      const std::int64_t iters = std::max<std::int64_t>(1, budget / restarts);
      const int max_components = 2 * family.components;
      for (int r = 0; r < restarts; ++r) {
        std::mt19937_64 rng(derive_seed(family.seed, 0x70000000ULL + static_cast<std::uint64_t>(r)));
        std::vector<IndexBox> cur =
            union_candidate(rng, w, core, sides, family.components);
        double cur_ratio = consider(boxes_to_mask(w, cur));
        for (std::int64_t it = 1; it < iters; ++it) {
          const std::vector<IndexBox> prop = mutate(rng, cur, core, family.step_cells,
                                                    max_components);
          const double ratio = consider(boxes_to_mask(w, prop));
          if (ratio > cur_ratio) {  // strict improvement only
            cur = prop;
            cur_ratio = ratio;
          }
        }
      }
      break;
    }
  }
  best.n_candidates = evals;
  return best;
}

ScanResult scan(const Window& w, const Basis& basis, const std::vector<double>& alpha_grid,
                const CandidateFamily& family, std::int64_t budget, int threads) {
  if (alpha_grid.empty()) fail_config("the level grid must be nonempty");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (!(alpha_grid[i] > 0 && alpha_grid[i] < 1))
      fail_config("every level must lie in (0, 1)");
    if (i > 0 && !(alpha_grid[i] > alpha_grid[i - 1]))
      fail_config("the level grid must be strictly increasing");
  }
  std::int64_t grid_n = 0;
  for (int k = 0; k < w.n; ++k) grid_n = std::max(grid_n, w.res[k]);

  // Distinct witness ids across levels: per-level evaluation indices are
  // offset by a stride no level can exceed.
  const std::int64_t id_stride = budget + family.restarts + 1;

  ScanResult out;
  out.table.basis = basis.kind;
  std::vector<GridMask> level_witness;
  level_witness.reserve(alpha_grid.size());
  std::vector<std::size_t> winning_level(alpha_grid.size());
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    CandidateFamily fam = family;
    fam.seed = derive_seed(family.seed, 0x5CA00000ULL + static_cast<std::uint64_t>(i));
    const ConstantEstimate est =
        estimate_constant(w, basis, alpha_grid[i], fam, budget, threads);
    TauberianRow row;
    row.alpha = alpha_grid[i];
    row.c_hat = est.c_hat;
    row.witness_id = static_cast<std::int64_t>(i) * id_stride + est.witness_id;
    row.n_candidates = est.n_candidates;
    row.grid_n = grid_n;
    const double wm = est.witness.measure();
    row.noise_floor = wm > 0 ? 10.0 * w.cell_measure() / wm : 0.0;
    row.window_limited = est.window_limited;
    out.table.rows.push_back(row);
    level_witness.push_back(est.witness);
    winning_level[i] = i;
  }

  // Non-increasing envelope: each raw value is a lower bound and the true
  // constant is non-increasing in the level, so carrying the max from the
  // right keeps every row a valid lower bound.
  for (std::size_t i = out.table.rows.size(); i-- > 1;) {
    const std::size_t j = i - 1;
    if (out.table.rows[i].c_hat > out.table.rows[j].c_hat) {
      out.table.rows[j].c_hat = out.table.rows[i].c_hat;
      out.table.rows[j].witness_id = out.table.rows[i].witness_id;
      out.table.rows[j].noise_floor = out.table.rows[i].noise_floor;
      out.table.rows[j].window_limited = out.table.rows[i].window_limited;
      winning_level[j] = winning_level[i];
    }
  }
  out.table.monotone = true;

  for (std::size_t i = 0; i < out.table.rows.size(); ++i) {
    const std::int64_t id = out.table.rows[i].witness_id;
    if (std::find(out.witness_ids.begin(), out.witness_ids.end(), id) == out.witness_ids.end()) {
      out.witness_ids.push_back(id);
      out.witnesses.push_back(level_witness[winning_level[i]]);
    }
  }
  return out;
}

std::string table_to_csv(const TauberianTable& table) {
  std::ostringstream os;
  os << "alpha,c_hat,witness_id,n_candidates,grid_n\n";
  os << std::setprecision(17);
  for (const TauberianRow& r : table.rows) {
    os << r.alpha << ',' << r.c_hat << ',' << r.witness_id << ',' << r.n_candidates << ','
       << r.grid_n << '\n';
  }
  return os.str();
}

double halo_function(const TauberianTable& table, double alpha) {
  if (!(alpha >= 0)) fail_config("the halo function is defined for alpha >= 0");
  if (alpha <= 1.0) return alpha;
  if (table.rows.empty()) fail_config("the halo function needs a nonempty table above 1");
  const double a = 1.0 / alpha;
  const double lo = table.rows.front().alpha;
  const double hi = table.rows.back().alpha;
  constexpr double kTol = 1e-12;
  if (a < lo - kTol || a > hi + kTol)
    fail_config("the halo function query falls outside the tabulated levels");
  const double ac = std::clamp(a, lo, hi);
  for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
    const TauberianRow& r0 = table.rows[i];
    const TauberianRow& r1 = table.rows[i + 1];
    if (ac <= r1.alpha) {
      const double span = r1.alpha - r0.alpha;
      if (!(span > 0)) return r0.c_hat;
      const double t = (ac - r0.alpha) / span;
      return r0.c_hat + t * (r1.c_hat - r0.c_hat);
    }
  }
  return table.rows.back().c_hat;
}

SolyanikFit solyanik_fit(const TauberianTable& table, double alpha_min) {
  std::vector<double> xs, ys;
  for (const TauberianRow& r : table.rows) {
    if (r.alpha < alpha_min - 1e-15) continue;
    if (r.window_limited) continue;
    if (!(r.alpha < 1.0)) continue;
    if (!(r.c_hat - 1.0 > r.noise_floor)) continue;
    xs.push_back(std::log(1.0 - r.alpha));
    ys.push_back(std::log(r.c_hat - 1.0));
  }
  if (xs.size() < 4)
    fail_resolution(
        "the exponent fit needs at least 4 rows above the noise floor; extend the level grid or "
        "refine the window");
  const double nn = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= nn;
  my /= nn;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0)) fail_config("the exponent fit needs at least two distinct levels");
  SolyanikFit fit;
  fit.p_hat = sxy / sxx;
  fit.log_c = my - fit.p_hat * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.log_c + fit.p_hat * xs[i]);
    ss_res += e * e;
  }
  fit.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  fit.rows_used = static_cast<std::int64_t>(xs.size());
  fit.alpha_min = alpha_min;
  return fit;
}

double holder_quotient(const TauberianTable& table, double p, double a, double b) {
  if (!(p > 0)) fail_config("the Holder exponent must be positive");
  if (!(a < b)) fail_config("the Holder interval must be nondegenerate");
  std::vector<const TauberianRow*> nodes;
  for (const TauberianRow& r : table.rows)
    if (r.alpha >= a - 1e-15 && r.alpha <= b + 1e-15) nodes.push_back(&r);
  if (nodes.size() < 2)
    fail_config("the Holder quotient needs at least two nodes inside the interval");
  double sup = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      const double dx = std::fabs(nodes[i]->alpha - nodes[j]->alpha);
      if (!(dx > 0)) continue;
      const double q = std::fabs(nodes[i]->c_hat - nodes[j]->c_hat) / std::pow(dx, p);
      sup = std::max(sup, q);
    }
  }
  return sup;
}

}  // namespace halolab
