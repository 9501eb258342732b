#include "halolab/grid.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace halolab {
namespace {

using nlohmann::json;

// Applies fn to every index of the res-shaped box, last axis fastest.
template <typename Fn>
void for_each_index(int n, const Index& res, Fn&& fn) {
  Index idx{};
  while (true) {
    fn(idx);
    int k = n - 1;
    while (k >= 0) {
      if (++idx[k] < res[k]) break;
      idx[k] = 0;
      --k;
    }
    if (k < 0) return;
  }
}

std::int64_t checked_cells(const Window& w) {
  std::int64_t total = 1;
  for (int k = 0; k < w.n; ++k) total *= w.res[k];
  return total;
}

}  // namespace

double Window::cell_measure() const {
  double m = 1.0;
  for (int k = 0; k < n; ++k) m *= h(k);
  return m;
}

std::int64_t Window::cells() const { return checked_cells(*this); }

std::int64_t Window::flat(const Index& idx) const {
  std::int64_t f = 0;
  for (int k = 0; k < n; ++k) f = f * res[k] + idx[k];
  return f;
}

Index Window::unflat(std::int64_t flat) const {
  Index idx{};
  for (int k = n - 1; k >= 0; --k) {
    idx[k] = flat % res[k];
    flat /= res[k];
  }
  return idx;
}

bool Window::operator==(const Window& o) const {
  if (n != o.n) return false;
  for (int k = 0; k < n; ++k) {
    if (origin[k] != o.origin[k] || extent[k] != o.extent[k] || res[k] != o.res[k]) return false;
  }
  return true;
}

void Window::validate() const {
  if (n < 1 || n > kMaxDim) fail_config("window dimension must be 1, 2, or 3");
  std::int64_t total = 1;
  for (int k = 0; k < n; ++k) {
    if (res[k] <= 0) fail_config("window resolution must be positive on every axis");
    if (!(extent[k] > 0.0)) fail_config("window extent must be positive on every axis");
    total *= res[k];
    if (total >= (std::int64_t{1} << 30)) fail_config("window exceeds 2^30 cells");
  }
}

double Rect::volume() const {
  double v = 1.0;
  for (int k = 0; k < n; ++k) v *= side(k);
  return v;
}

bool Rect::contains_point(const Point& x) const {
  for (int k = 0; k < n; ++k) {
    if (!(lo[k] <= x[k] && x[k] < hi[k])) return false;
  }
  return true;
}

bool Rect::contains_rect(const Rect& r) const {
  for (int k = 0; k < n; ++k) {
    if (r.lo[k] < lo[k] || r.hi[k] > hi[k]) return false;
  }
  return true;
}

Point Rect::center_point() const {
  Point c{};
  for (int k = 0; k < n; ++k) c[k] = 0.5 * (lo[k] + hi[k]);
  return c;
}

Rect Rect::scaled_concentric(double t) const {
  Rect out = *this;
  for (int k = 0; k < n; ++k) {
    double c = 0.5 * (lo[k] + hi[k]);
    out.lo[k] = c + t * (lo[k] - c);
    out.hi[k] = c + t * (hi[k] - c);
  }
  return out;
}

bool IndexBox::empty() const {
  for (int k = 0; k < n; ++k) {
    if (a[k] >= b[k]) return true;
  }
  return false;
}

std::int64_t IndexBox::cell_count() const {
  if (empty()) return 0;
  std::int64_t c = 1;
  for (int k = 0; k < n; ++k) c *= b[k] - a[k];
  return c;
}

bool IndexBox::contains(const IndexBox& inner) const {
  if (inner.empty()) return true;
  for (int k = 0; k < n; ++k) {
    if (inner.a[k] < a[k] || inner.b[k] > b[k]) return false;
  }
  return true;
}

Rect IndexBox::to_rect(const Window& w) const {
  Rect r;
  r.n = n;
  for (int k = 0; k < n; ++k) {
    r.lo[k] = w.origin[k] + static_cast<double>(a[k]) * w.h(k);
    r.hi[k] = w.origin[k] + static_cast<double>(b[k]) * w.h(k);
  }
  return r;
}

IndexBox snap_to_cells(const Rect& r, const Window& w) {
  IndexBox box;
  box.n = w.n;
  for (int k = 0; k < w.n; ++k) {
    double hk = w.h(k);
    // First cell whose center is >= lo, first whose center is >= hi.
    std::int64_t a = static_cast<std::int64_t>(std::ceil((r.lo[k] - w.origin[k]) / hk - 0.5));
    std::int64_t b = static_cast<std::int64_t>(std::ceil((r.hi[k] - w.origin[k]) / hk - 0.5));
    box.a[k] = std::clamp<std::int64_t>(a, 0, w.res[k]);
    box.b[k] = std::clamp<std::int64_t>(b, 0, w.res[k]);
  }
  return box;
}

GridMask GridMask::empty(const Window& w) {
  w.validate();
  GridMask m;
  m.win = w;
  m.data.assign(static_cast<std::size_t>(w.cells()), 0);
  return m;
}

std::int64_t GridMask::count() const {
  std::int64_t c = 0;
  for (std::uint8_t v : data) c += v;
  return c;
}

bool GridMask::boundary_touched() const {
  const std::int64_t total = win.cells();
  for (std::int64_t f = 0; f < total; ++f) {
    if (!data[static_cast<std::size_t>(f)]) continue;
    Index idx = win.unflat(f);
    for (int k = 0; k < win.n; ++k) {
      if (idx[k] == 0 || idx[k] == win.res[k] - 1) return true;
    }
  }
  return false;
}

GridMask& GridMask::unite(const GridMask& o) {
  if (!(win == o.win)) fail_config("mask windows differ");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] |= o.data[i];
  return *this;
}

GridMask& GridMask::intersect(const GridMask& o) {
  if (!(win == o.win)) fail_config("mask windows differ");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] &= o.data[i];
  return *this;
}

GridMask& GridMask::subtract(const GridMask& o) {
  if (!(win == o.win)) fail_config("mask windows differ");
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = data[i] & static_cast<std::uint8_t>(~o.data[i]);
  return *this;
}

bool GridMask::same_cells(const GridMask& o) const {
  return win == o.win && data == o.data;
}

GridMask dilate_chebyshev(const GridMask& m, std::int64_t slack) {
  if (slack < 0) fail_config("dilation slack must be nonnegative");
  if (slack == 0) return m;
  GridMask out = m;
  // Separable sliding OR, one axis at a time.
  for (int k = 0; k < m.win.n; ++k) {
    GridMask next = GridMask::empty(m.win);
    const std::int64_t nk = m.win.res[k];
    // Stride of axis k in the flat layout.
    std::int64_t stride = 1;
    for (int j = k + 1; j < m.win.n; ++j) stride *= m.win.res[j];
    const std::int64_t total = m.win.cells();
    const std::int64_t lines = total / nk;
    std::vector<std::int64_t> pre(static_cast<std::size_t>(nk) + 1);
    for (std::int64_t line = 0; line < lines; ++line) {
      // Base flat index of this line: distribute `line` over the other axes.
      std::int64_t rem = line, base = 0, mult = 1;
      // Rebuild base by iterating axes from fastest to slowest, skipping k.
      std::int64_t coords[kMaxDim];
      for (int j = m.win.n - 1; j >= 0; --j) {
        if (j == k) continue;
        coords[j] = rem % m.win.res[j];
        rem /= m.win.res[j];
      }
      coords[k] = 0;
      mult = 1;
      for (int j = m.win.n - 1; j >= 0; --j) {
        base += coords[j] * mult;
        mult *= m.win.res[j];
      }
      pre[0] = 0;
      for (std::int64_t i = 0; i < nk; ++i) {
        pre[static_cast<std::size_t>(i) + 1] = pre[static_cast<std::size_t>(i)] + (out.data[static_cast<std::size_t>(base + i * stride)] ? 1 : 0);
      }
      for (std::int64_t i = 0; i < nk; ++i) {
        std::int64_t a = std::max<std::int64_t>(0, i - slack);
        std::int64_t b = std::min<std::int64_t>(nk, i + slack + 1);
        if (pre[static_cast<std::size_t>(b)] > pre[static_cast<std::size_t>(a)]) {
          next.data[static_cast<std::size_t>(base + i * stride)] = 1;
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

SubsetReport subset_within(const GridMask& a, const GridMask& b, std::int64_t slack) {
  if (!(a.win == b.win)) fail_config("subset_within requires identical windows");
  GridMask grown = dilate_chebyshev(b, slack);
  SubsetReport rep;
  const std::int64_t total = a.win.cells();
  for (std::int64_t f = 0; f < total; ++f) {
    if (a.data[static_cast<std::size_t>(f)] && !grown.data[static_cast<std::size_t>(f)]) {
      if (rep.violations == 0) rep.first = a.win.unflat(f);
      ++rep.violations;
    }
  }
  return rep;
}

IntegralImage IntegralImage::build(const GridMask& m) {
  IntegralImage ii;
  ii.win = m.win;
  const int n = m.win.n;
  Index dims{};
  std::int64_t total = 1;
  for (int k = 0; k < n; ++k) {
    dims[k] = m.win.res[k] + 1;
    total *= dims[k];
  }
  ii.sums.assign(static_cast<std::size_t>(total), 0);
  auto flat_dims = [&](const Index& idx) {
    std::int64_t f = 0;
    for (int k = 0; k < n; ++k) f = f * dims[k] + idx[k];
    return f;
  };
  for_each_index(n, m.win.res, [&](const Index& idx) {
    if (!m.data[static_cast<std::size_t>(m.win.flat(idx))]) return;
    Index shifted = idx;
    for (int k = 0; k < n; ++k) shifted[k] += 1;
    ii.sums[static_cast<std::size_t>(flat_dims(shifted))] = 1;
  });
  // In-place prefix along each axis.
  for (int k = 0; k < n; ++k) {
    std::int64_t stride = 1;
    for (int j = k + 1; j < n; ++j) stride *= dims[j];
    for_each_index(n, dims, [&](const Index& idx) {
      if (idx[k] == 0) return;
      std::int64_t f = flat_dims(idx);
      ii.sums[static_cast<std::size_t>(f)] += ii.sums[static_cast<std::size_t>(f - stride)];
    });
  }
  return ii;
}

std::int64_t IntegralImage::count(const IndexBox& box) const {
  if (box.empty()) return 0;
  const int n = win.n;
  Index dims{};
  for (int k = 0; k < n; ++k) dims[k] = win.res[k] + 1;
  auto flat_dims = [&](const Index& idx) {
    std::int64_t f = 0;
    for (int k = 0; k < n; ++k) f = f * dims[k] + idx[k];
    return f;
  };
  std::int64_t sum = 0;
  for (int corner = 0; corner < (1 << n); ++corner) {
    Index idx{};
    int lows = 0;
    for (int k = 0; k < n; ++k) {
      if (corner & (1 << k)) {
        idx[k] = box.a[k];
        ++lows;
      } else {
        idx[k] = box.b[k];
      }
    }
    std::int64_t v = sums[static_cast<std::size_t>(flat_dims(idx))];
    sum += (lows % 2 == 0) ? v : -v;
  }
  return sum;
}

std::int64_t IntegralImage::count_all() const {
  IndexBox all;
  all.n = win.n;
  for (int k = 0; k < win.n; ++k) {
    all.a[k] = 0;
    all.b[k] = win.res[k];
  }
  return count(all);
}

RowPrefix RowPrefix::build(const GridMask& m) {
  RowPrefix rp;
  rp.win = m.win;
  const int n = m.win.n;
  const std::int64_t last = m.win.res[n - 1];
  const std::int64_t rows = m.win.cells() / last;
  rp.pref.assign(static_cast<std::size_t>(rows * (last + 1)), 0);
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t in_base = r * last;
    const std::int64_t out_base = r * (last + 1);
    std::int64_t acc = 0;
    for (std::int64_t j = 0; j < last; ++j) {
      acc += m.data[static_cast<std::size_t>(in_base + j)] ? 1 : 0;
      rp.pref[static_cast<std::size_t>(out_base + j + 1)] = acc;
    }
  }
  return rp;
}

std::int64_t RowPrefix::span(const Index& idx, std::int64_t j0, std::int64_t j1) const {
  const int n = win.n;
  const std::int64_t last = win.res[n - 1];
  j0 = std::clamp<std::int64_t>(j0, 0, last);
  j1 = std::clamp<std::int64_t>(j1, 0, last);
  if (j0 >= j1) return 0;
  std::int64_t row = 0;
  for (int k = 0; k < n - 1; ++k) row = row * win.res[k] + idx[k];
  const std::int64_t base = row * (last + 1);
  return pref[static_cast<std::size_t>(base + j1)] - pref[static_cast<std::size_t>(base + j0)];
}

ShapeSpec ShapeSpec::make_rect(const Point& lo, const Point& hi) {
  ShapeSpec s;
  s.type = Type::rect;
  s.lo = lo;
  s.hi = hi;
  return s;
}

ShapeSpec ShapeSpec::make_ball(const Point& c, double r) {
  ShapeSpec s;
  s.type = Type::ball;
  s.center = c;
  s.radius = r;
  return s;
}

ShapeSpec ShapeSpec::make_polytope(std::vector<Point> vertices) {
  ShapeSpec s;
  s.type = Type::polytope;
  s.vertices = std::move(vertices);
  return s;
}

ShapeSpec ShapeSpec::make_union(std::vector<ShapeSpec> parts) {
  ShapeSpec s;
  s.type = Type::union_set;
  s.parts = std::move(parts);
  return s;
}

// Lower+upper convex hull of 2D points, counterclockwise, no duplicates.
std::vector<Point> convex_hull_2d(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& p, const Point& q) {
    return p[0] < q[0] || (p[0] == q[0] && p[1] < q[1]);
  });
  pts.erase(std::unique(pts.begin(), pts.end(), [](const Point& p, const Point& q) {
              return p[0] == q[0] && p[1] == q[1];
            }),
            pts.end());
  const std::size_t m = pts.size();
  if (m < 3) return pts;
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Point> hull(2 * m);
  std::size_t k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = m - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool point_in_hull_2d(const std::vector<Point>& hull, double x, double y) {
  if (hull.empty()) return false;
  if (hull.size() == 1) return x == hull[0][0] && y == hull[0][1];
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % hull.size()];
    double c = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
    if (c < 0) return false;  // hull is counterclockwise; inside is left of every edge
  }
  return true;
}

bool ShapeSpec::contains(const Point& x, int n) const {
  switch (type) {
    case Type::rect: {
      for (int k = 0; k < n; ++k) {
        if (!(lo[k] <= x[k] && x[k] < hi[k])) return false;
      }
      return true;
    }
    case Type::ball: {
      double d2 = 0.0;
      for (int k = 0; k < n; ++k) {
        double d = x[k] - center[k];
        d2 += d * d;
      }
      return d2 < radius * radius;
    }
    case Type::polytope: {
      if (vertices.empty()) return false;
      if (n == 1) {
        double mn = vertices[0][0], mx = vertices[0][0];
        for (const Point& v : vertices) {
          mn = std::min(mn, v[0]);
          mx = std::max(mx, v[0]);
        }
        return mn <= x[0] && x[0] <= mx;
      }
      if (n == 2) return point_in_hull_2d(convex_hull_2d(vertices), x[0], x[1]);
      fail_config("polytope membership supports n <= 2");
    }
    case Type::union_set: {
      for (const ShapeSpec& p : parts) {
        if (p.contains(x, n)) return true;
      }
      return false;
    }
  }
  return false;
}

double ShapeSpec::exact_measure(int n) const {
  switch (type) {
    case Type::rect: {
      double v = 1.0;
      for (int k = 0; k < n; ++k) v *= hi[k] - lo[k];
      return v;
    }
    case Type::ball: {
      if (n == 1) return 2.0 * radius;
      if (n == 2) return M_PI * radius * radius;
      return 4.0 / 3.0 * M_PI * radius * radius * radius;
    }
    case Type::polytope: {
      if (n == 1) {
        double mn = vertices[0][0], mx = vertices[0][0];
        for (const Point& v : vertices) {
          mn = std::min(mn, v[0]);
          mx = std::max(mx, v[0]);
        }
        return mx - mn;
      }
      if (n == 2) {
        std::vector<Point> hull = convex_hull_2d(vertices);
        double a = 0.0;
        for (std::size_t i = 0; i < hull.size(); ++i) {
          const Point& p = hull[i];
          const Point& q = hull[(i + 1) % hull.size()];
          a += p[0] * q[1] - q[0] * p[1];
        }
        return 0.5 * std::abs(a);
      }
      fail_config("polytope measure supports n <= 2");
    }
    case Type::union_set:
      fail_config("unions have no closed-form measure; rasterize instead");
  }
  return 0.0;
}

void ShapeSpec::bounding_box(int n, Point& lo_out, Point& hi_out) const {
  switch (type) {
    case Type::rect:
      lo_out = lo;
      hi_out = hi;
      return;
    case Type::ball:
      for (int k = 0; k < n; ++k) {
        lo_out[k] = center[k] - radius;
        hi_out[k] = center[k] + radius;
      }
      return;
    case Type::polytope: {
      for (int k = 0; k < n; ++k) {
        lo_out[k] = std::numeric_limits<double>::infinity();
        hi_out[k] = -std::numeric_limits<double>::infinity();
      }
      for (const Point& v : vertices) {
        for (int k = 0; k < n; ++k) {
          lo_out[k] = std::min(lo_out[k], v[k]);
          hi_out[k] = std::max(hi_out[k], v[k]);
        }
      }
      return;
    }
    case Type::union_set: {
      for (int k = 0; k < n; ++k) {
        lo_out[k] = std::numeric_limits<double>::infinity();
        hi_out[k] = -std::numeric_limits<double>::infinity();
      }
      for (const ShapeSpec& p : parts) {
        Point plo{}, phi{};
        p.bounding_box(n, plo, phi);
        for (int k = 0; k < n; ++k) {
          lo_out[k] = std::min(lo_out[k], plo[k]);
          hi_out[k] = std::max(hi_out[k], phi[k]);
        }
      }
      return;
    }
  }
}

void rasterize_into(const ShapeSpec& s, GridMask& m) {
  const Window& w = m.win;
  const int n = w.n;
  if (s.type == ShapeSpec::Type::union_set) {
    for (const ShapeSpec& p : s.parts) rasterize_into(p, m);
    return;
  }
  if (s.type == ShapeSpec::Type::rect) {
    Rect r;
    r.n = n;
    r.lo = s.lo;
    r.hi = s.hi;
    IndexBox box = snap_to_cells(r, w);
    if (box.empty()) return;
    Index res_box{};
    for (int k = 0; k < n; ++k) res_box[k] = box.b[k] - box.a[k];
    for_each_index(n, res_box, [&](const Index& off) {
      Index idx{};
      for (int k = 0; k < n; ++k) idx[k] = box.a[k] + off[k];
      m.data[static_cast<std::size_t>(w.flat(idx))] = 1;
    });
    return;
  }
  // Ball / polytope: per-cell membership over the bounding box.
  Point blo{}, bhi{};
  s.bounding_box(n, blo, bhi);
  IndexBox box;
  box.n = n;
  for (int k = 0; k < n; ++k) {
    double hk = w.h(k);
    box.a[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((blo[k] - w.origin[k]) / hk)) - 1, 0, w.res[k]);
    box.b[k] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::ceil((bhi[k] - w.origin[k]) / hk)) + 1, 0, w.res[k]);
  }
  if (box.empty()) return;
  // Hoist the hull for polytopes so membership is O(edges) per cell.
  std::vector<Point> hull;
  if (s.type == ShapeSpec::Type::polytope && n == 2) hull = convex_hull_2d(s.vertices);
  Index res_box{};
  for (int k = 0; k < n; ++k) res_box[k] = box.b[k] - box.a[k];
  for_each_index(n, res_box, [&](const Index& off) {
    Index idx{};
    Point c{};
    for (int k = 0; k < n; ++k) {
      idx[k] = box.a[k] + off[k];
      c[k] = w.center(k, idx[k]);
    }
    bool inside = false;
    if (s.type == ShapeSpec::Type::polytope && n == 2) {
      inside = point_in_hull_2d(hull, c[0], c[1]);
    } else {
      inside = s.contains(c, n);
    }
    if (inside) m.data[static_cast<std::size_t>(w.flat(idx))] = 1;
  });
}

GridMask rasterize(const ShapeSpec& s, const Window& w) {
  GridMask m = GridMask::empty(w);
  rasterize_into(s, m);
  return m;
}

std::string window_to_json(const Window& w) {
  json j;
  j["n"] = w.n;
  j["origin"] = std::vector<double>(w.origin.begin(), w.origin.begin() + w.n);
  j["extent"] = std::vector<double>(w.extent.begin(), w.extent.begin() + w.n);
  j["resolution"] = std::vector<std::int64_t>(w.res.begin(), w.res.begin() + w.n);
  return j.dump();
}

Window window_from_json(const std::string& text) {
  json j = json::parse(text);
  Window w;
  w.n = j.at("n").get<int>();
  if (w.n < 1 || w.n > kMaxDim) fail_config("window dimension must be 1, 2, or 3");
  auto o = j.at("origin").get<std::vector<double>>();
  auto e = j.at("extent").get<std::vector<double>>();
  auto r = j.at("resolution").get<std::vector<std::int64_t>>();
  if (static_cast<int>(o.size()) != w.n || static_cast<int>(e.size()) != w.n || static_cast<int>(r.size()) != w.n) {
    fail_config("window arrays must have length n");
  }
  for (int k = 0; k < w.n; ++k) {
    w.origin[k] = o[static_cast<std::size_t>(k)];
    w.extent[k] = e[static_cast<std::size_t>(k)];
    w.res[k] = r[static_cast<std::size_t>(k)];
  }
  w.validate();
  return w;
}

namespace {

void write_pgm(const GridMask& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_config("cannot open " + path + " for writing");
  out << "P5\n# window " << window_to_json(m.win) << "\n"
      << m.win.res[1] << " " << m.win.res[0] << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(m.win.res[1]));
  for (std::int64_t i = 0; i < m.win.res[0]; ++i) {
    for (std::int64_t j = 0; j < m.win.res[1]; ++j) {
      row[static_cast<std::size_t>(j)] = m.data[static_cast<std::size_t>(i * m.win.res[1] + j)] ? 255 : 0;
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

GridMask read_pgm(std::ifstream& in) {
  std::string magic;
  in >> magic;
  if (magic != "P5") fail_config("mask file is not binary PGM");
  std::string window_json;
  // Skip whitespace/comments; the window comment is required for round trips.
  std::string tok;
  std::int64_t dims[2] = {-1, -1};
  int maxval = -1;
  int want = 0;
  while (want < 3 && in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      std::string line = tok + rest;
      auto pos = line.find("window ");
      if (pos != std::string::npos) window_json = line.substr(pos + 7);
      continue;
    }
    if (want < 2) {
      dims[want] = std::stoll(tok);
    } else {
      maxval = std::stoi(tok);
    }
    ++want;
  }
  if (maxval != 255 || window_json.empty()) fail_config("PGM mask missing maxval 255 or window comment");
  in.get();  // single whitespace after maxval
  Window w = window_from_json(window_json);
  if (w.n != 2 || w.res[1] != dims[0] || w.res[0] != dims[1]) fail_config("PGM dimensions disagree with window comment");
  GridMask m = GridMask::empty(w);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w.cells()));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) fail_config("truncated PGM mask");
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

std::string bits_sidecar_path(const std::string& json_path) {
  auto pos = json_path.rfind('.');
  std::string stem = (pos == std::string::npos) ? json_path : json_path.substr(0, pos);
  return stem + ".bits";
}

}  // namespace

void write_mask(const GridMask& m, const std::string& path) {
  if (m.win.n == 2) {
    write_pgm(m, path);
    return;
  }
  std::string bits_path = bits_sidecar_path(path);
  json j = json::parse(window_to_json(m.win));
  auto slash = bits_path.rfind('/');
  j["bits"] = (slash == std::string::npos) ? bits_path : bits_path.substr(slash + 1);
  j["bit_order"] = "row-major, axis 0 slowest, 8 cells per byte, LSB first";
  std::ofstream out(path);
  if (!out) fail_config("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  std::ofstream bits(bits_path, std::ios::binary);
  if (!bits) fail_config("cannot open " + bits_path + " for writing");
  const std::int64_t total = m.win.cells();
  std::vector<unsigned char> packed(static_cast<std::size_t>((total + 7) / 8), 0);
  for (std::int64_t f = 0; f < total; ++f) {
    if (m.data[static_cast<std::size_t>(f)]) packed[static_cast<std::size_t>(f / 8)] |= static_cast<unsigned char>(1u << (f % 8));
  }
  bits.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
}

GridMask read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_config("cannot open " + path);
  char head[2] = {0, 0};
  in.read(head, 2);
  in.seekg(0);
  if (head[0] == 'P' && head[1] == '5') return read_pgm(in);
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str());
  Window w = window_from_json(ss.str());
  std::string bits_name = j.at("bits").get<std::string>();
  auto slash = path.rfind('/');
  std::string bits_path = (slash == std::string::npos) ? bits_name : path.substr(0, slash + 1) + bits_name;
  std::ifstream bits(bits_path, std::ios::binary);
  if (!bits) fail_config("cannot open bit sidecar " + bits_path);
  const std::int64_t total = w.cells();
  std::vector<unsigned char> packed(static_cast<std::size_t>((total + 7) / 8));
  bits.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!bits) fail_config("truncated bit sidecar " + bits_path);
  GridMask m = GridMask::empty(w);
  for (std::int64_t f = 0; f < total; ++f) {
    if (packed[static_cast<std::size_t>(f / 8)] & (1u << (f % 8))) m.data[static_cast<std::size_t>(f)] = 1;
  }
  return m;
}

void write_field_file(const Window& w, const std::vector<double>& values, const std::string& json_path) {
  if (static_cast<std::int64_t>(values.size()) != w.cells()) fail_config("field size disagrees with window");
  std::string data_path = json_path;
  auto pos = data_path.rfind('.');
  data_path = (pos == std::string::npos ? data_path : data_path.substr(0, pos)) + ".f64";
  json j = json::parse(window_to_json(w));
  j["dtype"] = "float64";
  auto slash = data_path.rfind('/');
  j["data"] = (slash == std::string::npos) ? data_path : data_path.substr(slash + 1);
  j["order"] = "row-major, axis 0 slowest, little-endian";
  std::ofstream out(json_path);
  if (!out) fail_config("cannot open " + json_path + " for writing");
  out << j.dump(2) << "\n";
  std::ofstream data(data_path, std::ios::binary);
  if (!data) fail_config("cannot open " + data_path + " for writing");
  data.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

}  // namespace halolab
