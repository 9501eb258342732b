#include "halolab/maximal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <limits>

#include "halolab/parallel.hpp"

namespace halolab {

Threshold::Threshold(double a) {
  alpha = a;
  num = static_cast<std::int64_t>(std::ceil((a + 1e-12) * static_cast<double>(kDen)));
}

std::string basis_kind_name(BasisKind k) {
  switch (k) {
    case BasisKind::cubes: return "cubes";
    case BasisKind::balls: return "balls";
    case BasisKind::strong_rects: return "strong_rects";
    case BasisKind::convex: return "convex";
  }
  return "?";
}

Basis Basis::make_cubes(int n) {
  Basis b;
  b.kind = BasisKind::cubes;
  b.n = n;
  return b;
}
Basis Basis::make_balls(int n) {
  Basis b;
  b.kind = BasisKind::balls;
  b.n = n;
  return b;
}
Basis Basis::make_strong(int n) {
  Basis b;
  b.kind = BasisKind::strong_rects;
  b.n = n;
  return b;
}
Basis Basis::make_convex(int n, ShapeSpec body) {
  Basis b;
  b.kind = BasisKind::convex;
  b.n = n;
  b.body = std::move(body);
  return b;
}

void Basis::validate(const Window& w) const {
  if (n != w.n) fail_config("basis dimension disagrees with window");
  if (size_stride < 1) fail_config("basis size stride must be >= 1");
  if (max_size_cells < 0) fail_config("basis size cap must be nonnegative");
  if (kind == BasisKind::balls) {
    for (int k = 1; k < n; ++k) {
      if (std::abs(w.h(k) - w.h(0)) > 1e-12 * w.h(0)) fail_config("ball basis requires square cells");
    }
  }
  if (kind == BasisKind::convex) {
    if (n > 2) fail_config("convex homothecy basis supports n <= 2");
    if (body.type != ShapeSpec::Type::polytope || body.vertices.empty()) {
      fail_config("convex homothecy basis requires a polytope body");
    }
    if (scale_ratio != 0.0 && scale_ratio <= 1.0) fail_config("convex scale ratio must exceed 1");
  }
}

namespace {

constexpr std::int64_t kDen = Threshold::kDen;

// Applies fn(base_flat, stride, length) for every 1D line along `axis`.
template <typename Fn>
void for_each_line(const Window& w, int axis, Fn&& fn) {
  const std::int64_t nk = w.res[axis];
  std::int64_t stride = 1;
  for (int j = axis + 1; j < w.n; ++j) stride *= w.res[j];
  const std::int64_t lines = w.cells() / nk;
  for (std::int64_t line = 0; line < lines; ++line) {
    std::int64_t rem = line;
    std::int64_t coords[kMaxDim] = {0, 0, 0};
    for (int j = w.n - 1; j >= 0; --j) {
      if (j == axis) continue;
      coords[j] = rem % w.res[j];
      rem /= w.res[j];
    }
    coords[axis] = 0;
    std::int64_t base = 0;
    for (int j = 0; j < w.n; ++j) base = base * w.res[j] + coords[j];
    fn(base, stride, nk);
  }
}

// Max height/size such that an element of `cells_per_len` cells per unit
// length can still pass: num * cells >= ecnt * kDen means impossible.
std::int64_t pass_cell_cap(std::int64_t ecnt, std::int64_t num) {
  // Largest c with num * c < ecnt * kDen.
  return (ecnt * kDen - 1) / num;
}

// ---------------------------------------------------------------------------
// Strong rectangles. Per (n-1)-dimensional band, a line of column counts P
// turns membership of cell j in some passing interval into
//   max{G[y] : y > j} > min{G[x] : x <= j},   G[k] = P[k]*2^30 - num*H*k,
// because G[y] > G[x] is exactly the strict threshold test for [x, y).
// ---------------------------------------------------------------------------

// cover[j] |= banded pass for the current band; returns true if any cover.
void line_cover(const std::vector<std::int64_t>& P, std::int64_t C, std::int64_t num_cells_per_len,
                std::vector<std::int64_t>& G, std::vector<std::int64_t>& SM, std::vector<std::uint8_t>& cover) {
  for (std::int64_t k = 0; k <= C; ++k) G[static_cast<std::size_t>(k)] = P[static_cast<std::size_t>(k)] * kDen - num_cells_per_len * k;
  SM[static_cast<std::size_t>(C)] = G[static_cast<std::size_t>(C)];
  for (std::int64_t k = C - 1; k >= 0; --k) {
    SM[static_cast<std::size_t>(k)] = std::max(G[static_cast<std::size_t>(k)], SM[static_cast<std::size_t>(k + 1)]);
  }
  std::int64_t pm = G[0];
  for (std::int64_t j = 0; j < C; ++j) {
    cover[static_cast<std::size_t>(j)] = SM[static_cast<std::size_t>(j + 1)] > pm ? 1 : 0;
    pm = std::min(pm, G[static_cast<std::size_t>(j + 1)]);
  }
}

GridMask halo_strong_1d(const GridMask& E, const Threshold& th) {
  const std::int64_t C = E.win.res[0];
  std::vector<std::int64_t> P(static_cast<std::size_t>(C) + 1, 0);
  for (std::int64_t j = 0; j < C; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + (E.data[static_cast<std::size_t>(j)] ? 1 : 0);
  std::vector<std::int64_t> G(static_cast<std::size_t>(C) + 1), SM(static_cast<std::size_t>(C) + 1);
  std::vector<std::uint8_t> cover(static_cast<std::size_t>(C));
  line_cover(P, C, th.num, G, SM, cover);
  GridMask halo = GridMask::empty(E.win);
  std::copy(cover.begin(), cover.end(), halo.data.begin());
  return halo;
}

GridMask halo_strong_2d(const GridMask& E, const Threshold& th) {
  const std::int64_t R = E.win.res[0], C = E.win.res[1];
  const std::int64_t ecnt = E.count();
  const std::int64_t hcap = std::min<std::int64_t>(R, pass_cell_cap(ecnt, th.num));
  GridMask halo = GridMask::empty(E.win);
  std::vector<std::int64_t> colcnt(static_cast<std::size_t>(C)), P(static_cast<std::size_t>(C) + 1, 0);
  std::vector<std::int64_t> G(static_cast<std::size_t>(C) + 1), SM(static_cast<std::size_t>(C) + 1);
  std::vector<std::uint8_t> cover(static_cast<std::size_t>(C));
  std::vector<std::int64_t> best(static_cast<std::size_t>(C)), reach(static_cast<std::size_t>(C), -1);
  for (std::int64_t r1 = 0; r1 < R; ++r1) {
    std::fill(colcnt.begin(), colcnt.end(), 0);
    std::fill(best.begin(), best.end(), std::int64_t{-1});
    const std::int64_t r2max = std::min(R - 1, r1 + hcap - 1);
    for (std::int64_t r2 = r1; r2 <= r2max; ++r2) {
      const std::uint8_t* row = E.data.data() + r2 * C;
      for (std::int64_t j = 0; j < C; ++j) colcnt[static_cast<std::size_t>(j)] += row[j];
      const std::int64_t H = r2 - r1 + 1;
      for (std::int64_t j = 0; j < C; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + colcnt[static_cast<std::size_t>(j)];
      line_cover(P, C, th.num * H, G, SM, cover);
      for (std::int64_t j = 0; j < C; ++j) {
        if (cover[static_cast<std::size_t>(j)]) best[static_cast<std::size_t>(j)] = r2;
      }
    }
    std::uint8_t* out = halo.data.data() + r1 * C;
    for (std::int64_t j = 0; j < C; ++j) {
      reach[static_cast<std::size_t>(j)] = std::max(reach[static_cast<std::size_t>(j)], best[static_cast<std::size_t>(j)]);
      if (reach[static_cast<std::size_t>(j)] >= r1) out[j] = 1;
    }
  }
  return halo;
}

GridMask halo_strong_3d(const GridMask& E, const Threshold& th) {
  const std::int64_t N0 = E.win.res[0], N1 = E.win.res[1], N2 = E.win.res[2];
  const std::int64_t ecnt = E.count();
  const std::int64_t cap = pass_cell_cap(ecnt, th.num);
  GridMask halo = GridMask::empty(E.win);
  std::vector<std::int64_t> A(static_cast<std::size_t>(N1 * N2));
  std::vector<std::int64_t> colcnt(static_cast<std::size_t>(N2)), P(static_cast<std::size_t>(N2) + 1, 0);
  std::vector<std::int64_t> G(static_cast<std::size_t>(N2) + 1), SM(static_cast<std::size_t>(N2) + 1);
  std::vector<std::uint8_t> cover(static_cast<std::size_t>(N2));
  std::vector<std::int64_t> bestB(static_cast<std::size_t>(N2));
  std::vector<std::int64_t> M2b(static_cast<std::size_t>(N2));
  std::vector<std::uint8_t> slabcover(static_cast<std::size_t>(N1 * N2));
  std::vector<std::int64_t> bestA(static_cast<std::size_t>(N1 * N2));
  std::vector<std::int64_t> M2a(static_cast<std::size_t>(N1 * N2), -1);
  for (std::int64_t r1a = 0; r1a < N0; ++r1a) {
    std::fill(A.begin(), A.end(), 0);
    std::fill(bestA.begin(), bestA.end(), std::int64_t{-1});
    const std::int64_t r2a_max = std::min(N0 - 1, r1a + cap - 1);
    for (std::int64_t r2a = r1a; r2a <= r2a_max; ++r2a) {
      const std::uint8_t* plane = E.data.data() + r2a * N1 * N2;
      for (std::int64_t t = 0; t < N1 * N2; ++t) A[static_cast<std::size_t>(t)] += plane[t];
      const std::int64_t Ha = r2a - r1a + 1;
      std::fill(slabcover.begin(), slabcover.end(), 0);
      const std::int64_t hbcap = std::min(N1, cap / Ha);
      for (std::int64_t r1b = 0; r1b < N1; ++r1b) {
        std::fill(colcnt.begin(), colcnt.end(), 0);
        std::fill(bestB.begin(), bestB.end(), std::int64_t{-1});
        const std::int64_t r2b_max = std::min(N1 - 1, r1b + hbcap - 1);
        for (std::int64_t r2b = r1b; r2b <= r2b_max; ++r2b) {
          const std::int64_t* arow = A.data() + r2b * N2;
          for (std::int64_t j = 0; j < N2; ++j) colcnt[static_cast<std::size_t>(j)] += arow[j];
          const std::int64_t Hb = r2b - r1b + 1;
          for (std::int64_t j = 0; j < N2; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + colcnt[static_cast<std::size_t>(j)];
          line_cover(P, N2, th.num * Ha * Hb, G, SM, cover);
          for (std::int64_t j = 0; j < N2; ++j) {
            if (cover[static_cast<std::size_t>(j)]) bestB[static_cast<std::size_t>(j)] = r2b;
          }
        }
        if (r1b == 0) std::fill(M2b.begin(), M2b.end(), std::int64_t{-1});
        std::uint8_t* srow = slabcover.data() + r1b * N2;
        for (std::int64_t j = 0; j < N2; ++j) {
          M2b[static_cast<std::size_t>(j)] = std::max(M2b[static_cast<std::size_t>(j)], bestB[static_cast<std::size_t>(j)]);
          if (M2b[static_cast<std::size_t>(j)] >= r1b) srow[j] = 1;
        }
      }
      for (std::int64_t t = 0; t < N1 * N2; ++t) {
        if (slabcover[static_cast<std::size_t>(t)]) bestA[static_cast<std::size_t>(t)] = r2a;
      }
    }
    std::uint8_t* out = halo.data.data() + r1a * N1 * N2;
    for (std::int64_t t = 0; t < N1 * N2; ++t) {
      M2a[static_cast<std::size_t>(t)] = std::max(M2a[static_cast<std::size_t>(t)], bestA[static_cast<std::size_t>(t)]);
      if (M2a[static_cast<std::size_t>(t)] >= r1a) out[t] = 1;
    }
  }
  return halo;
}

// Exact per-cell supremum over intervals of one weighted line: for each x the
// running best over y > j is folded backward, giving max over intervals
// containing j in O(C^2) divisions per band.
void line_field(const std::vector<std::int64_t>& P, std::int64_t C, std::int64_t cells_per_len, std::vector<double>& f) {
  std::fill(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(C), -1.0);
  for (std::int64_t x = 0; x < C; ++x) {
    const std::int64_t Px = P[static_cast<std::size_t>(x)];
    double acc = -1.0;
    for (std::int64_t j = C - 1; j >= x; --j) {
      const std::int64_t cnt = P[static_cast<std::size_t>(j + 1)] - Px;
      const double v = static_cast<double>(cnt) / static_cast<double>(cells_per_len * (j + 1 - x));
      if (v > acc) acc = v;
      if (acc > f[static_cast<std::size_t>(j)]) f[static_cast<std::size_t>(j)] = acc;
    }
  }
}

std::vector<double> field_strong_1d(const GridMask& E) {
  const std::int64_t C = E.win.res[0];
  std::vector<std::int64_t> P(static_cast<std::size_t>(C) + 1, 0);
  for (std::int64_t j = 0; j < C; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + (E.data[static_cast<std::size_t>(j)] ? 1 : 0);
  std::vector<double> f(static_cast<std::size_t>(C));
  line_field(P, C, 1, f);
  return f;
}

std::vector<double> field_strong_2d(const GridMask& E, int threads) {
  const std::int64_t R = E.win.res[0], C = E.win.res[1];
  std::vector<double> field(static_cast<std::size_t>(R * C), 0.0);
  const int max_chunks = 8;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(max_chunks));
  run_chunked(R, threads, max_chunks, [&](int chunk, std::int64_t r1_begin, std::int64_t r1_end) {
    std::vector<double>& acc = partial[static_cast<std::size_t>(chunk)];
    acc.assign(static_cast<std::size_t>(R * C), 0.0);
    std::vector<std::int64_t> colcnt(static_cast<std::size_t>(C)), P(static_cast<std::size_t>(C) + 1, 0);
    std::vector<double> fband(static_cast<std::size_t>(C));
    std::vector<double> FF(static_cast<std::size_t>(R * C));
    for (std::int64_t r1 = r1_begin; r1 < r1_end; ++r1) {
      std::fill(colcnt.begin(), colcnt.end(), 0);
      for (std::int64_t r2 = r1; r2 < R; ++r2) {
        const std::uint8_t* row = E.data.data() + r2 * C;
        for (std::int64_t j = 0; j < C; ++j) colcnt[static_cast<std::size_t>(j)] += row[j];
        for (std::int64_t j = 0; j < C; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + colcnt[static_cast<std::size_t>(j)];
        line_field(P, C, r2 - r1 + 1, fband);
        std::copy(fband.begin(), fband.end(), FF.begin() + static_cast<std::ptrdiff_t>(r2 * C));
      }
      // Suffix max over r2 then fold into rows r >= r1.
      for (std::int64_t r2 = R - 2; r2 >= r1; --r2) {
        double* cur = FF.data() + r2 * C;
        const double* nxt = FF.data() + (r2 + 1) * C;
        for (std::int64_t j = 0; j < C; ++j) cur[j] = std::max(cur[j], nxt[j]);
      }
      for (std::int64_t r = r1; r < R; ++r) {
        double* out = acc.data() + r * C;
        const double* suf = FF.data() + r * C;
        for (std::int64_t j = 0; j < C; ++j) out[j] = std::max(out[j], suf[j]);
      }
    }
  });
  for (auto& acc : partial) {
    if (acc.empty()) continue;
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::max(field[i], acc[i]);
  }
  return field;
}

std::vector<double> field_strong_3d(const GridMask& E) {
  const std::int64_t N0 = E.win.res[0], N1 = E.win.res[1], N2 = E.win.res[2];
  std::vector<double> field(static_cast<std::size_t>(N0 * N1 * N2), 0.0);
  std::vector<std::int64_t> A(static_cast<std::size_t>(N1 * N2));
  std::vector<std::int64_t> colcnt(static_cast<std::size_t>(N2)), P(static_cast<std::size_t>(N2) + 1, 0);
  std::vector<double> fband(static_cast<std::size_t>(N2));
  for (std::int64_t r1a = 0; r1a < N0; ++r1a) {
    std::fill(A.begin(), A.end(), 0);
    for (std::int64_t r2a = r1a; r2a < N0; ++r2a) {
      const std::uint8_t* plane = E.data.data() + r2a * N1 * N2;
      for (std::int64_t t = 0; t < N1 * N2; ++t) A[static_cast<std::size_t>(t)] += plane[t];
      const std::int64_t Ha = r2a - r1a + 1;
      for (std::int64_t r1b = 0; r1b < N1; ++r1b) {
        std::fill(colcnt.begin(), colcnt.end(), 0);
        for (std::int64_t r2b = r1b; r2b < N1; ++r2b) {
          const std::int64_t* arow = A.data() + r2b * N2;
          for (std::int64_t j = 0; j < N2; ++j) colcnt[static_cast<std::size_t>(j)] += arow[j];
          for (std::int64_t j = 0; j < N2; ++j) P[static_cast<std::size_t>(j + 1)] = P[static_cast<std::size_t>(j)] + colcnt[static_cast<std::size_t>(j)];
          line_field(P, N2, Ha * (r2b - r1b + 1), fband);
          for (std::int64_t i0 = r1a; i0 <= r2a; ++i0) {
            for (std::int64_t i1 = r1b; i1 <= r2b; ++i1) {
              double* out = field.data() + (i0 * N1 + i1) * N2;
              for (std::int64_t j = 0; j < N2; ++j) out[j] = std::max(out[j], fband[static_cast<std::size_t>(j)]);
            }
          }
        }
      }
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// Cubes: per side s the corner map (count of the s-cube anchored at each cell
// corner) is thresholded / valued, then swept to covered cells by a separable
// corner filter with window [x-s+1, x] along every axis.
// ---------------------------------------------------------------------------

void corner_or_filter(const Window& w, std::int64_t s, std::vector<std::uint8_t>& buf) {
  std::vector<std::int64_t> pre;
  for (int axis = 0; axis < w.n; ++axis) {
    for_each_line(w, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t len) {
      pre.assign(static_cast<std::size_t>(len) + 1, 0);
      for (std::int64_t i = 0; i < len; ++i) {
        pre[static_cast<std::size_t>(i + 1)] = pre[static_cast<std::size_t>(i)] + (buf[static_cast<std::size_t>(base + i * stride)] ? 1 : 0);
      }
      for (std::int64_t x = len - 1; x >= 0; --x) {
        std::int64_t a = std::max<std::int64_t>(0, x - s + 1);
        buf[static_cast<std::size_t>(base + x * stride)] = pre[static_cast<std::size_t>(x + 1)] > pre[static_cast<std::size_t>(a)] ? 1 : 0;
      }
    });
  }
}

void corner_max_filter(const Window& w, std::int64_t s, std::vector<double>& buf) {
  std::vector<double> line;
  for (int axis = 0; axis < w.n; ++axis) {
    for_each_line(w, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t len) {
      line.resize(static_cast<std::size_t>(len));
      for (std::int64_t i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = buf[static_cast<std::size_t>(base + i * stride)];
      std::deque<std::int64_t> dq;
      for (std::int64_t x = 0; x < len; ++x) {
        while (!dq.empty() && line[static_cast<std::size_t>(dq.back())] <= line[static_cast<std::size_t>(x)]) dq.pop_back();
        dq.push_back(x);
        if (dq.front() < x - s + 1) dq.pop_front();
        buf[static_cast<std::size_t>(base + x * stride)] = line[static_cast<std::size_t>(dq.front())];
      }
    });
  }
}

std::int64_t cube_side_cap(const Basis& basis, const Window& w, bool& clamped) {
  std::int64_t cap = w.res[0];
  for (int k = 1; k < w.n; ++k) cap = std::min(cap, w.res[k]);
  if (basis.max_size_cells > 0) {
    if (basis.max_size_cells > cap) clamped = true;
    cap = std::min(cap, basis.max_size_cells);
  }
  return cap;
}

void cube_corner_counts(const IntegralImage& ii, std::int64_t s, std::vector<std::int64_t>& out) {
  const Window& w = ii.win;
  const std::int64_t total = w.cells();
  out.assign(static_cast<std::size_t>(total), 0);
  IndexBox box;
  box.n = w.n;
  Index corner_max{};
  for (int k = 0; k < w.n; ++k) corner_max[k] = w.res[k] - s + 1;
  Index idx{};
  // Iterate valid corners only; everything else stays 0.
  bool any = true;
  for (int k = 0; k < w.n; ++k) any = any && corner_max[k] > 0;
  if (!any) return;
  while (true) {
    for (int k = 0; k < w.n; ++k) {
      box.a[k] = idx[k];
      box.b[k] = idx[k] + s;
    }
    out[static_cast<std::size_t>(w.flat(idx))] = ii.count(box);
    int k = w.n - 1;
    while (k >= 0) {
      if (++idx[k] < corner_max[k]) break;
      idx[k] = 0;
      --k;
    }
    if (k < 0) break;
  }
}

GridMask halo_cubes(const GridMask& E, const Basis& basis, const Threshold& th, int threads, bool& clamped) {
  const Window& w = E.win;
  const IntegralImage ii = IntegralImage::build(E);
  const std::int64_t ecnt = ii.count_all();
  const std::int64_t cap = cube_side_cap(basis, w, clamped);
  std::vector<std::int64_t> sides;
  for (std::int64_t s = 1; s <= cap; s += basis.size_stride) {
    std::int64_t cells = 1;
    for (int k = 0; k < w.n; ++k) cells *= s;
    if (th.num * cells >= ecnt * kDen) break;  // cannot pass at this or any larger size
    sides.push_back(s);
  }
  GridMask halo = GridMask::empty(w);
  const int max_chunks = 8;
  std::vector<GridMask> partial(static_cast<std::size_t>(max_chunks));
  run_chunked(static_cast<std::int64_t>(sides.size()), threads, max_chunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    GridMask acc = GridMask::empty(w);
    std::vector<std::int64_t> counts;
    std::vector<std::uint8_t> pass(static_cast<std::size_t>(w.cells()));
    for (std::int64_t si = b; si < e; ++si) {
      const std::int64_t s = sides[static_cast<std::size_t>(si)];
      std::int64_t cells = 1;
      for (int k = 0; k < w.n; ++k) cells *= s;
      cube_corner_counts(ii, s, counts);
      for (std::size_t i = 0; i < pass.size(); ++i) pass[i] = th.exceeds(counts[i], cells) ? 1 : 0;
      corner_or_filter(w, s, pass);
      for (std::size_t i = 0; i < pass.size(); ++i) acc.data[i] |= pass[i];
    }
    partial[static_cast<std::size_t>(chunk)] = std::move(acc);
  });
  for (auto& acc : partial) {
    if (!acc.data.empty()) halo.unite(acc);
  }
  return halo;
}

std::vector<double> field_cubes(const GridMask& E, const Basis& basis, int threads, bool& clamped) {
  const Window& w = E.win;
  const IntegralImage ii = IntegralImage::build(E);
  const std::int64_t cap = cube_side_cap(basis, w, clamped);
  std::vector<std::int64_t> sides;
  for (std::int64_t s = 1; s <= cap; s += basis.size_stride) sides.push_back(s);
  std::vector<double> field(static_cast<std::size_t>(w.cells()), 0.0);
  const int max_chunks = 8;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(max_chunks));
  run_chunked(static_cast<std::int64_t>(sides.size()), threads, max_chunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    std::vector<double> acc(static_cast<std::size_t>(w.cells()), 0.0);
    std::vector<std::int64_t> counts;
    std::vector<double> vals(static_cast<std::size_t>(w.cells()));
    for (std::int64_t si = b; si < e; ++si) {
      const std::int64_t s = sides[static_cast<std::size_t>(si)];
      std::int64_t cells = 1;
      for (int k = 0; k < w.n; ++k) cells *= s;
      cube_corner_counts(ii, s, counts);
      for (std::size_t i = 0; i < vals.size(); ++i) {
        vals[i] = counts[i] > 0 ? static_cast<double>(counts[i]) / static_cast<double>(cells) : -1.0;
      }
      // Valid corners with zero count still denote real cubes (average 0);
      // mark them 0 so covered cells get a defined value.
      Index corner_max{};
      bool any = true;
      for (int k = 0; k < w.n; ++k) {
        corner_max[k] = w.res[k] - s + 1;
        any = any && corner_max[k] > 0;
      }
      if (!any) continue;
      Index idx{};
      while (true) {
        std::size_t f = static_cast<std::size_t>(w.flat(idx));
        if (vals[f] < 0.0) vals[f] = 0.0;
        int k = w.n - 1;
        while (k >= 0) {
          if (++idx[k] < corner_max[k]) break;
          idx[k] = 0;
          --k;
        }
        if (k < 0) break;
      }
      corner_max_filter(w, s, vals);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = std::max(acc[i], vals[i]);
    }
    partial[static_cast<std::size_t>(chunk)] = std::move(acc);
  });
  for (auto& acc : partial) {
    if (acc.empty()) continue;
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::max(field[i], acc[i]);
  }
  return field;
}

// ---------------------------------------------------------------------------
// Footprint engine (balls, convex homothecies). A footprint is the fixed set
// of cell offsets covered by one element anchored at a cell center, stored as
// spans over the last axis. Counting uses row prefix sums; covering/valuing
// cells uses the reflected spans.
// ---------------------------------------------------------------------------

struct Span {
  std::int64_t off0 = 0;  // axis 0 offset (n >= 2)
  std::int64_t off1 = 0;  // axis 1 offset (n == 3)
  std::int64_t lo = 0, hi = 0;  // inclusive cell range on the last axis
};

struct Footprint {
  std::vector<Span> spans;
  std::int64_t cells = 0;
  std::int64_t off_min[2] = {0, 0}, off_max[2] = {0, 0};  // leading-axis offset hull
  std::int64_t lo_min = 0, hi_max = 0;
};

void finalize_footprint(Footprint& fp) {
  fp.cells = 0;
  bool first = true;
  for (const Span& sp : fp.spans) {
    fp.cells += sp.hi - sp.lo + 1;
    if (first) {
      fp.off_min[0] = fp.off_max[0] = sp.off0;
      fp.off_min[1] = fp.off_max[1] = sp.off1;
      fp.lo_min = sp.lo;
      fp.hi_max = sp.hi;
      first = false;
    } else {
      fp.off_min[0] = std::min(fp.off_min[0], sp.off0);
      fp.off_max[0] = std::max(fp.off_max[0], sp.off0);
      fp.off_min[1] = std::min(fp.off_min[1], sp.off1);
      fp.off_max[1] = std::max(fp.off_max[1], sp.off1);
      fp.lo_min = std::min(fp.lo_min, sp.lo);
      fp.hi_max = std::max(fp.hi_max, sp.hi);
    }
  }
}

std::int64_t isqrt_floor(std::int64_t v) {
  if (v < 0) return -1;
  std::int64_t r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

// Open ball of radius r cells: offsets with |d|^2 < r^2.
Footprint ball_footprint(int n, std::int64_t r) {
  Footprint fp;
  const std::int64_t r2 = r * r;
  if (n == 1) {
    fp.spans.push_back({0, 0, -(r - 1), r - 1});
  } else if (n == 2) {
    for (std::int64_t dy = -(r - 1); dy <= r - 1; ++dy) {
      std::int64_t rem = r2 - dy * dy - 1;
      std::int64_t hw = isqrt_floor(rem);
      fp.spans.push_back({dy, 0, -hw, hw});
    }
  } else {
    for (std::int64_t dz = -(r - 1); dz <= r - 1; ++dz) {
      for (std::int64_t dy = -(r - 1); dy <= r - 1; ++dy) {
        std::int64_t rem = r2 - dz * dz - dy * dy - 1;
        if (rem < 0) continue;
        std::int64_t hw = isqrt_floor(rem);
        fp.spans.push_back({dz, dy, -hw, hw});
      }
    }
  }
  finalize_footprint(fp);
  return fp;
}

struct HullBody {
  int n = 1;
  std::vector<Point> hull;  // ccw, deduped (n == 2); raw vertices for n == 1
  Point anchor{};           // vertex centroid of the hull
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;  // of hull - anchor
};

HullBody make_hull_body(const ShapeSpec& body, int n) {
  HullBody hb;
  hb.n = n;
  if (n == 1) {
    double mn = body.vertices[0][0], mx = body.vertices[0][0];
    for (const Point& v : body.vertices) {
      mn = std::min(mn, v[0]);
      mx = std::max(mx, v[0]);
    }
    hb.anchor = {0.5 * (mn + mx), 0, 0};
    hb.xmin = mn - hb.anchor[0];
    hb.xmax = mx - hb.anchor[0];
    hb.hull = {{mn, 0, 0}, {mx, 0, 0}};
    return hb;
  }
  std::vector<Point> hull = convex_hull_2d(body.vertices);
  if (hull.size() < 3) fail_config("convex body is degenerate");
  Point c{};
  for (const Point& v : hull) {
    c[0] += v[0];
    c[1] += v[1];
  }
  c[0] /= static_cast<double>(hull.size());
  c[1] /= static_cast<double>(hull.size());
  hb.anchor = c;
  hb.hull = hull;
  hb.xmin = hb.xmax = hull[0][0] - c[0];
  hb.ymin = hb.ymax = hull[0][1] - c[1];
  for (const Point& v : hull) {
    hb.xmin = std::min(hb.xmin, v[0] - c[0]);
    hb.xmax = std::max(hb.xmax, v[0] - c[0]);
    hb.ymin = std::min(hb.ymin, v[1] - c[1]);
    hb.ymax = std::max(hb.ymax, v[1] - c[1]);
  }
  return hb;
}

// Closed scaled body s*(hull - anchor); spans hold cells whose center offset
// lies inside. Scanline over rows of cell centers.
Footprint convex_footprint(const HullBody& hb, double s, const Window& w) {
  Footprint fp;
  if (hb.n == 1) {
    const double h = w.h(0);
    std::int64_t lo = static_cast<std::int64_t>(std::ceil(s * hb.xmin / h));
    std::int64_t hi = static_cast<std::int64_t>(std::floor(s * hb.xmax / h));
    if (lo <= hi) fp.spans.push_back({0, 0, lo, hi});
    finalize_footprint(fp);
    return fp;
  }
  const double h0 = w.h(0), h1 = w.h(1);
  // Rows follow axis 0 (coordinate 0); spans run along axis 1.
  const std::int64_t d0_lo = static_cast<std::int64_t>(std::ceil(s * hb.xmin / h0));
  const std::int64_t d0_hi = static_cast<std::int64_t>(std::floor(s * hb.xmax / h0));
  const std::size_t m = hb.hull.size();
  for (std::int64_t d0 = d0_lo; d0 <= d0_hi; ++d0) {
    const double y = static_cast<double>(d0) * h0;
    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      double py = s * (hb.hull[i][0] - hb.anchor[0]);
      double px = s * (hb.hull[i][1] - hb.anchor[1]);
      double qy = s * (hb.hull[(i + 1) % m][0] - hb.anchor[0]);
      double qx = s * (hb.hull[(i + 1) % m][1] - hb.anchor[1]);
      if ((py < y && qy < y) || (py > y && qy > y)) continue;
      if (py == qy) {
        xlo = std::min(xlo, std::min(px, qx));
        xhi = std::max(xhi, std::max(px, qx));
      } else {
        double t = (y - py) / (qy - py);
        if (t < 0 || t > 1) continue;
        double x = px + t * (qx - px);
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
      }
    }
    if (!(xlo <= xhi)) continue;
    std::int64_t lo = static_cast<std::int64_t>(std::ceil(xlo / h1));
    std::int64_t hi = static_cast<std::int64_t>(std::floor(xhi / h1));
    if (lo <= hi) fp.spans.push_back({d0, 0, lo, hi});
  }
  finalize_footprint(fp);
  return fp;
}

struct FitBox {
  std::int64_t a[3] = {0, 0, 0};
  std::int64_t b[3] = {0, 0, 0};  // half-open anchor ranges, last axis last
  bool empty = false;
};

FitBox footprint_fit(const Footprint& fp, const Window& w) {
  FitBox fit;
  const int n = w.n;
  std::int64_t off_lo[3] = {0, 0, 0}, off_hi[3] = {0, 0, 0};
  if (n >= 2) {
    off_lo[0] = fp.off_min[0];
    off_hi[0] = fp.off_max[0];
  }
  if (n == 3) {
    off_lo[1] = fp.off_min[1];
    off_hi[1] = fp.off_max[1];
  }
  off_lo[n - 1] = fp.lo_min;
  off_hi[n - 1] = fp.hi_max;
  for (int k = 0; k < n; ++k) {
    fit.a[k] = std::max<std::int64_t>(0, -off_lo[k]);
    fit.b[k] = std::min<std::int64_t>(w.res[k], w.res[k] - off_hi[k]);
    if (fit.a[k] >= fit.b[k]) fit.empty = true;
  }
  return fit;
}

// Count sweep: pass[anchor] = 1 iff the element at that anchor beats the
// threshold; vals (optional) receives the element averages for the field.
void footprint_counts(const RowPrefix& rp, const Footprint& fp, const FitBox& fit, const Threshold* th,
                      std::vector<std::uint8_t>* pass, std::vector<double>* vals) {
  const Window& w = rp.win;
  const int n = w.n;
  std::int64_t a0 = 0, b0 = 1, a1 = 0, b1 = 1;
  if (n >= 2) {
    a0 = fit.a[0];
    b0 = fit.b[0];
  }
  if (n == 3) {
    a1 = fit.a[1];
    b1 = fit.b[1];
  }
  const std::int64_t aj = fit.a[n - 1], bj = fit.b[n - 1];
  for (std::int64_t i0 = a0; i0 < b0; ++i0) {
    for (std::int64_t i1 = a1; i1 < b1; ++i1) {
      for (std::int64_t j = aj; j < bj; ++j) {
        std::int64_t cnt = 0;
        for (const Span& sp : fp.spans) {
          Index row{};
          if (n == 2) {
            row[0] = i0 + sp.off0;
          } else if (n == 3) {
            row[0] = i0 + sp.off0;
            row[1] = i1 + sp.off1;
          }
          cnt += rp.span(row, j + sp.lo, j + sp.hi + 1);
        }
        Index idx{};
        if (n >= 2) idx[0] = i0;
        if (n == 3) idx[1] = i1;
        idx[n - 1] = j;
        const std::int64_t f = w.flat(idx);
        if (pass) (*pass)[static_cast<std::size_t>(f)] = th->exceeds(cnt, fp.cells) ? 1 : 0;
        if (vals) (*vals)[static_cast<std::size_t>(f)] = static_cast<double>(cnt) / static_cast<double>(fp.cells);
      }
    }
  }
}

// OR the cells covered by passing anchors into halo (reflected spans).
void footprint_cover(const GridMask& pass, const Footprint& fp, GridMask& halo) {
  const Window& w = pass.win;
  const int n = w.n;
  const std::int64_t C = w.res[n - 1];
  const RowPrefix rp = RowPrefix::build(pass);
  const std::int64_t rows0 = (n >= 2) ? w.res[0] : 1;
  const std::int64_t rows1 = (n == 3) ? w.res[1] : 1;
  for (const Span& sp : fp.spans) {
    for (std::int64_t x0 = 0; x0 < rows0; ++x0) {
      const std::int64_t z0 = x0 - sp.off0;
      if (n >= 2 && (z0 < 0 || z0 >= w.res[0])) continue;
      for (std::int64_t x1 = 0; x1 < rows1; ++x1) {
        const std::int64_t z1 = x1 - sp.off1;
        if (n == 3 && (z1 < 0 || z1 >= w.res[1])) continue;
        Index zrow{};
        if (n >= 2) zrow[0] = z0;
        if (n == 3) zrow[1] = z1;
        Index xrow{};
        if (n >= 2) xrow[0] = x0;
        if (n == 3) xrow[1] = x1;
        xrow[n - 1] = 0;
        std::uint8_t* out = halo.data.data() + w.flat(xrow);
        for (std::int64_t j = 0; j < C; ++j) {
          if (out[j]) continue;
          if (rp.span(zrow, j - sp.hi, j - sp.lo + 1) > 0) out[j] = 1;
        }
      }
    }
  }
}

// Sliding max of anchor values over reflected spans into the field buffer.
void footprint_value_scatter(const std::vector<double>& vals, const Footprint& fp, const Window& w, std::vector<double>& field) {
  const int n = w.n;
  const std::int64_t C = w.res[n - 1];
  const std::int64_t rows0 = (n >= 2) ? w.res[0] : 1;
  const std::int64_t rows1 = (n == 3) ? w.res[1] : 1;
  std::deque<std::int64_t> dq;
  for (const Span& sp : fp.spans) {
    for (std::int64_t x0 = 0; x0 < rows0; ++x0) {
      const std::int64_t z0 = x0 - sp.off0;
      if (n >= 2 && (z0 < 0 || z0 >= w.res[0])) continue;
      for (std::int64_t x1 = 0; x1 < rows1; ++x1) {
        const std::int64_t z1 = x1 - sp.off1;
        if (n == 3 && (z1 < 0 || z1 >= w.res[1])) continue;
        Index zrow{}, xrow{};
        if (n >= 2) {
          zrow[0] = z0;
          xrow[0] = x0;
        }
        if (n == 3) {
          zrow[1] = z1;
          xrow[1] = x1;
        }
        const double* src = vals.data() + w.flat(zrow);
        double* out = field.data() + w.flat(xrow);
        // Anchor window for cell j is [j - hi, j - lo]; slide j ascending.
        dq.clear();
        std::int64_t zpushed = 0;
        for (std::int64_t j = 0; j < C; ++j) {
          const std::int64_t wlo = j - sp.hi, whi = j - sp.lo;
          while (zpushed <= std::min(whi, C - 1)) {
            if (src[zpushed] >= 0.0) {
              while (!dq.empty() && src[dq.back()] <= src[zpushed]) dq.pop_back();
              dq.push_back(zpushed);
            }
            ++zpushed;
          }
          while (!dq.empty() && dq.front() < wlo) dq.pop_front();
          if (!dq.empty() && src[dq.front()] > out[j]) out[j] = src[dq.front()];
        }
      }
    }
  }
}

std::int64_t ball_radius_cap(const Basis& basis, const Window& w, bool& clamped) {
  std::int64_t cap = (w.res[0] + 1) / 2;
  for (int k = 1; k < w.n; ++k) cap = std::min(cap, (w.res[k] + 1) / 2);
  if (basis.max_size_cells > 0) {
    if (basis.max_size_cells > cap) clamped = true;
    cap = std::min(cap, basis.max_size_cells);
  }
  return cap;
}

GridMask halo_footprints(const GridMask& E, const Window& w, const std::vector<Footprint>& fps,
                         const Threshold& th, int threads) {
  const RowPrefix rp = RowPrefix::build(E);
  GridMask halo = GridMask::empty(w);
  const int max_chunks = 8;
  std::vector<GridMask> partial(static_cast<std::size_t>(max_chunks));
  run_chunked(static_cast<std::int64_t>(fps.size()), threads, max_chunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    GridMask acc = GridMask::empty(w);
    GridMask pass = GridMask::empty(w);
    for (std::int64_t i = b; i < e; ++i) {
      const Footprint& fp = fps[static_cast<std::size_t>(i)];
      FitBox fit = footprint_fit(fp, w);
      if (fit.empty) continue;
      std::fill(pass.data.begin(), pass.data.end(), 0);
      footprint_counts(rp, fp, fit, &th, &pass.data, nullptr);
      footprint_cover(pass, fp, acc);
    }
    partial[static_cast<std::size_t>(chunk)] = std::move(acc);
  });
  for (auto& acc : partial) {
    if (!acc.data.empty()) halo.unite(acc);
  }
  return halo;
}

std::vector<double> field_footprints(const GridMask& E, const Window& w, const std::vector<Footprint>& fps, int threads) {
  const RowPrefix rp = RowPrefix::build(E);
  std::vector<double> field(static_cast<std::size_t>(w.cells()), 0.0);
  const int max_chunks = 8;
  std::vector<std::vector<double>> partial(static_cast<std::size_t>(max_chunks));
  run_chunked(static_cast<std::int64_t>(fps.size()), threads, max_chunks, [&](int chunk, std::int64_t b, std::int64_t e) {
    std::vector<double> acc(static_cast<std::size_t>(w.cells()), 0.0);
    std::vector<double> vals(static_cast<std::size_t>(w.cells()));
    for (std::int64_t i = b; i < e; ++i) {
      const Footprint& fp = fps[static_cast<std::size_t>(i)];
      FitBox fit = footprint_fit(fp, w);
      if (fit.empty) continue;
      std::fill(vals.begin(), vals.end(), -1.0);  // -1 marks "no element anchored here"
      footprint_counts(rp, fp, fit, nullptr, nullptr, &vals);
      footprint_value_scatter(vals, fp, w, acc);
    }
    partial[static_cast<std::size_t>(chunk)] = std::move(acc);
  });
  for (auto& acc : partial) {
    if (acc.empty()) continue;
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::max(field[i], acc[i]);
  }
  return field;
}

std::vector<Footprint> ball_footprints(const GridMask& E, const Basis& basis, const Threshold* th, bool& clamped) {
  const Window& w = E.win;
  std::int64_t cap = ball_radius_cap(basis, w, clamped);
  const std::int64_t ecnt = E.count();
  std::vector<Footprint> fps;
  for (std::int64_t r = 1; r <= cap; r += basis.size_stride) {
    Footprint fp = ball_footprint(w.n, r);
    if (th && th->num * fp.cells >= ecnt * kDen) break;  // ball area monotone in r
    fps.push_back(std::move(fp));
  }
  return fps;
}

std::vector<Footprint> convex_footprints(const GridMask& E, const Basis& basis, const Threshold* th, bool& clamped) {
  const Window& w = E.win;
  const HullBody hb = make_hull_body(basis.body, w.n);
  const std::int64_t ecnt = E.count();
  double maxres = 0;
  for (int k = 0; k < w.n; ++k) maxres = std::max(maxres, static_cast<double>(w.res[k]));
  const double ratio = basis.scale_ratio > 1.0 ? basis.scale_ratio : 1.0 + 1.0 / maxres;
  // Smallest scale: body bounding radius about half a cell.
  double r_inf = std::max({std::abs(hb.xmin), std::abs(hb.xmax), std::abs(hb.ymin), std::abs(hb.ymax)});
  double hmin = w.h(0);
  for (int k = 1; k < w.n; ++k) hmin = std::min(hmin, w.h(k));
  double s = hmin / (2.0 * r_inf);
  std::vector<Footprint> fps;
  while (true) {
    Footprint fp = convex_footprint(hb, s, w);
    s *= ratio;
    if (fp.cells == 0) continue;
    std::int64_t extent = std::max(fp.off_max[0] - fp.off_min[0] + 1, fp.hi_max - fp.lo_min + 1);
    if (basis.max_size_cells > 0 && extent > basis.max_size_cells) {
      clamped = true;
      break;
    }
    FitBox fit = footprint_fit(fp, w);
    if (fit.empty) break;  // larger scales cannot fit either
    if (th && th->num * fp.cells >= ecnt * kDen) continue;  // cannot pass, but larger jitter may differ; scale count is bounded
    fps.push_back(std::move(fp));
    if (s > 1e12) break;
  }
  return fps;
}

}  // namespace

MaximalField maximal_field(const GridMask& E, const Basis& basis, int threads) {
  E.win.validate();
  basis.validate(E.win);
  if (E.count() == 0) fail_config("maximal field requires a nonempty set");
  MaximalField out;
  out.win = E.win;
  out.kind = basis.kind;
  bool clamped = false;
  switch (basis.kind) {
    case BasisKind::strong_rects:
      if (E.win.n == 1) {
        out.values = field_strong_1d(E);
      } else if (E.win.n == 2) {
        out.values = field_strong_2d(E, threads);
      } else {
        out.values = field_strong_3d(E);
      }
      break;
    case BasisKind::cubes:
      out.values = field_cubes(E, basis, threads, clamped);
      break;
    case BasisKind::balls: {
      auto fps = ball_footprints(E, basis, nullptr, clamped);
      out.values = field_footprints(E, E.win, fps, threads);
      break;
    }
    case BasisKind::convex: {
      auto fps = convex_footprints(E, basis, nullptr, clamped);
      out.values = field_footprints(E, E.win, fps, threads);
      break;
    }
  }
  out.clamped = clamped;
  return out;
}

HaloResult halo_set(const GridMask& E, const Basis& basis, double alpha, int threads) {
  E.win.validate();
  basis.validate(E.win);
  if (E.count() == 0) fail_config("halo set requires a nonempty set");
  if (!(alpha > 0.0 && alpha < 1.0)) fail_config("alpha must lie in (0, 1)");
  const Threshold th(alpha);
  HaloResult out;
  out.mask = GridMask::empty(E.win);
  bool clamped = false;
  switch (basis.kind) {
    case BasisKind::strong_rects:
      if (E.win.n == 1) {
        out.mask = halo_strong_1d(E, th);
      } else if (E.win.n == 2) {
        out.mask = halo_strong_2d(E, th);
      } else {
        out.mask = halo_strong_3d(E, th);
      }
      break;
    case BasisKind::cubes:
      out.mask = halo_cubes(E, basis, th, threads, clamped);
      break;
    case BasisKind::balls: {
      auto fps = ball_footprints(E, basis, &th, clamped);
      out.mask = halo_footprints(E, E.win, fps, th, threads);
      break;
    }
    case BasisKind::convex: {
      auto fps = convex_footprints(E, basis, &th, clamped);
      out.mask = halo_footprints(E, E.win, fps, th, threads);
      break;
    }
  }
  out.clamped = clamped;
  return out;
}

RatioResult halo_ratio(const GridMask& E, const Basis& basis, double alpha, int threads) {
  HaloResult h = halo_set(E, basis, alpha, threads);
  RatioResult r;
  r.halo_measure = h.mask.measure();
  r.set_measure = E.measure();
  r.ratio = r.halo_measure / r.set_measure;
  r.boundary_touched = h.mask.boundary_touched();
  r.clamped = h.clamped;
  return r;
}

}  // namespace halolab
