#include "halolab/convex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace halolab {

ConvexBody ConvexBody::from_points(int n, std::vector<Point> pts) {
  if (n < 1 || n > 2) fail_config("convex bodies support n <= 2");
  if (pts.empty()) fail_config("convex body needs at least one point");
  ConvexBody b;
  b.n = n;
  if (n == 1) {
    double mn = pts[0][0], mx = pts[0][0];
    for (const Point& p : pts) {
      mn = std::min(mn, p[0]);
      mx = std::max(mx, p[0]);
    }
    if (!(mx > mn)) fail_config("convex body is degenerate");
    b.hull = {{mn, 0, 0}, {mx, 0, 0}};
    return b;
  }
  b.hull = convex_hull_2d(std::move(pts));
  if (b.hull.size() < 3) fail_config("convex body is degenerate");
  return b;
}

double ConvexBody::measure() const {
  if (n == 1) return hull[1][0] - hull[0][0];
  double a = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point& p = hull[i];
    const Point& q = hull[(i + 1) % hull.size()];
    a += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * a;  // ccw hull: positive
}

Rect ConvexBody::bounding_box() const {
  Rect r;
  r.n = n;
  for (int k = 0; k < n; ++k) {
    r.lo[k] = std::numeric_limits<double>::infinity();
    r.hi[k] = -std::numeric_limits<double>::infinity();
  }
  for (const Point& p : hull) {
    for (int k = 0; k < n; ++k) {
      r.lo[k] = std::min(r.lo[k], p[k]);
      r.hi[k] = std::max(r.hi[k], p[k]);
    }
  }
  return r;
}

Point ConvexBody::anchor() const {
  Point c{};
  for (const Point& p : hull) {
    for (int k = 0; k < n; ++k) c[k] += p[k];
  }
  for (int k = 0; k < n; ++k) c[k] /= static_cast<double>(hull.size());
  return c;
}

bool ConvexBody::contains(const Point& p) const {
  if (n == 1) return hull[0][0] <= p[0] && p[0] <= hull[1][0];
  return point_in_hull_2d(hull, p[0], p[1]);
}

ShapeSpec ConvexBody::to_shape() const {
  return ShapeSpec::make_polytope(hull);
}

ConvexBody ConvexBody::scaled_about(const Point& c, double s) const {
  ConvexBody out = *this;
  for (Point& p : out.hull) {
    for (int k = 0; k < n; ++k) p[k] = c[k] + s * (p[k] - c[k]);
  }
  if (s < 0) out = from_points(n, out.hull);  // re-orient
  return out;
}

ConvexBody ConvexBody::translated(const Point& t) const {
  ConvexBody out = *this;
  for (Point& p : out.hull) {
    for (int k = 0; k < n; ++k) p[k] += t[k];
  }
  return out;
}

Point AffineMap::apply(const Point& x) const {
  Eigen::Vector3d v(x[0], x[1], x[2]);
  Eigen::Vector3d y = A * v + b;
  return {y[0], y[1], y[2]};
}

AffineMap AffineMap::inverse() const {
  AffineMap inv;
  inv.n = n;
  inv.A = A.inverse();
  inv.b = -inv.A * b;
  return inv;
}

ConvexBody AffineMap::apply(const ConvexBody& body) const {
  std::vector<Point> pts;
  pts.reserve(body.hull.size());
  for (const Point& p : body.hull) pts.push_back(apply(p));
  return ConvexBody::from_points(body.n, std::move(pts));
}

double Ellipsoid::quadratic(const Point& p) const {
  Eigen::Vector3d v(p[0], p[1], p[2]);
  Eigen::Vector3d d = v - c;
  return d.dot(A * d);
}

bool Ellipsoid::contains(const Point& p, double slack) const {
  return quadratic(p) <= 1.0 + slack;
}

Ellipsoid mvee(const std::vector<Point>& pts, int n, double eps, int max_iter) {
  if (n < 1 || n > 2) fail_config("enclosing ellipsoids support n <= 2");
  if (!(eps > 0)) fail_config("ellipsoid tolerance must be positive");
  Ellipsoid e;
  e.n = n;
  if (n == 1) {
    double mn = pts[0][0], mx = pts[0][0];
    for (const Point& p : pts) {
      mn = std::min(mn, p[0]);
      mx = std::max(mx, p[0]);
    }
    if (!(mx > mn)) fail_config("ellipsoid of a degenerate point set");
    const double r = 0.5 * (mx - mn);
    e.c[0] = 0.5 * (mn + mx);
    e.A(0, 0) = 1.0 / (r * r);
    return e;
  }
  const int m = static_cast<int>(pts.size());
  if (m < 3) fail_config("ellipsoid of a degenerate point set");
  Eigen::MatrixXd Q(3, m);
  for (int j = 0; j < m; ++j) {
    Q(0, j) = pts[static_cast<std::size_t>(j)][0];
    Q(1, j) = pts[static_cast<std::size_t>(j)][1];
    Q(2, j) = 1.0;
  }
  Eigen::VectorXd u = Eigen::VectorXd::Constant(m, 1.0 / m);
  const double d1 = 3.0;  // lifted dimension
  for (int it = 0; it < max_iter; ++it) {
    Eigen::Matrix3d X = Q * u.asDiagonal() * Q.transpose();
    Eigen::Matrix3d Xi = X.inverse();
    double kappa = -1;
    int jmax = 0;
    for (int j = 0; j < m; ++j) {
      const double Mj = Q.col(j).dot(Xi * Q.col(j));
      if (Mj > kappa) {
        kappa = Mj;
        jmax = j;
      }
    }
    if (kappa <= (1.0 + eps) * d1) break;
    const double step = (kappa - d1) / (d1 * (kappa - 1.0));
    u *= (1.0 - step);
    u[jmax] += step;
  }
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (int j = 0; j < m; ++j) c += u[j] * Q.col(j).head<2>();
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  for (int j = 0; j < m; ++j) S += u[j] * Q.col(j).head<2>() * Q.col(j).head<2>().transpose();
  S -= c * c.transpose();
  const double det = S.determinant();
  if (!(det > 1e-300)) fail_config("ellipsoid of a degenerate point set");
  Eigen::Matrix2d A2 = S.inverse() / 2.0;
  e.c.head<2>() = c;
  e.A.topLeftCorner<2, 2>() = A2;
  e.A(2, 2) = 1.0;
  // Post-scale for exact containment of every input point.
  double worst = 0;
  for (const Point& p : pts) worst = std::max(worst, e.quadratic(p));
  if (worst > 0) e.A.topLeftCorner<2, 2>() /= worst;
  return e;
}

std::vector<Point> RectFrame::corners() const {
  std::vector<Point> out;
  const int m = 1 << n;
  for (int c = 0; c < m; ++c) {
    Eigen::Vector3d local = Eigen::Vector3d::Zero();
    for (int k = 0; k < n; ++k) local[k] = ((c >> k) & 1) ? half[k] : -half[k];
    Eigen::Vector3d p = rot * local;
    out.push_back({center[0] + p[0], center[1] + p[1], center[2] + p[2]});
  }
  return out;
}

RectFrame RectFrame::scaled(double s) const {
  RectFrame out = *this;
  for (int k = 0; k < n; ++k) out.half[k] = half[k] * s;
  return out;
}

double RectFrame::measure() const {
  double v = 1;
  for (int k = 0; k < n; ++k) v *= 2.0 * half[k];
  return v;
}

JohnResult john_rectangle(const ConvexBody& body, double eps) {
  JohnResult res;
  if (body.n == 1) {
    res.rect.n = 1;
    res.rect.center = {0.5 * (body.hull[0][0] + body.hull[1][0]), 0, 0};
    res.rect.half[0] = 0.5 * (body.hull[1][0] - body.hull[0][0]);
    res.outer = mvee(body.hull, 1, eps);
    res.outer_factor = 1.0;
    return res;
  }
  res.outer = mvee(body.hull, 2, eps);
  Eigen::Matrix2d A2 = res.outer.A.topLeftCorner<2, 2>();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(A2);
  Eigen::Matrix2d V = eig.eigenvectors();
  if (V.determinant() < 0) V.col(1) = -V.col(1);
  const double d = 2.0;
  double axes[2];
  for (int k = 0; k < 2; ++k) axes[k] = 1.0 / std::sqrt(eig.eigenvalues()[k]);

  RectFrame r;
  r.n = 2;
  r.rot.topLeftCorner<2, 2>() = V;
  r.center = {res.outer.c[0], res.outer.c[1], 0};
  for (int k = 0; k < 2; ++k) r.half[k] = axes[k] / ((1.0 + eps) * d * std::sqrt(d));

  // The inscribed rectangle is a theorem for the exact rounding; chase
  // floating-point residue with escalating shrinks and record what was used.
  const double shrinks[] = {1.0, 1.0 - 1e-12, 1.0 - 1e-9, 1.0 - 1e-6, 1.0 - 1e-4, 1.0 - 1e-2};
  bool ok = false;
  for (double s : shrinks) {
    RectFrame cand = r.scaled(s);
    ok = true;
    for (const Point& corner : cand.corners()) ok = ok && body.contains(corner);
    if (ok) {
      res.rect = cand;
      res.shrink_applied = s;
      break;
    }
  }
  if (!ok) fail_config("ellipsoid rounding produced a rectangle escaping the body");

  double factor = 0;
  for (const Point& v : body.hull) {
    Eigen::Vector2d y = V.transpose() * (Eigen::Vector2d(v[0], v[1]) - Eigen::Vector2d(res.outer.c[0], res.outer.c[1]));
    for (int k = 0; k < 2; ++k) factor = std::max(factor, std::abs(y[k]) / res.rect.half[k]);
  }
  res.outer_factor = factor;
  return res;
}

Normalization normalize_to_unit_cube(const ConvexBody& body, double eps) {
  JohnResult jr = john_rectangle(body, eps);
  Normalization out;
  out.outer_factor = jr.outer_factor;
  AffineMap t;
  t.n = body.n;
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  for (int k = 0; k < body.n; ++k) D(k, k) = 1.0 / (2.0 * jr.rect.half[k]);
  t.A = D * jr.rect.rot.transpose();
  Eigen::Vector3d c(jr.rect.center[0], jr.rect.center[1], jr.rect.center[2]);
  t.b = -t.A * c;
  for (int k = 0; k < body.n; ++k) t.b[k] += 0.5;
  out.map = t;
  out.normalized = t.apply(body);
  // The sandwich rectangle maps onto [0,1]^n, so the image must contain it.
  const int m = 1 << body.n;
  for (int cidx = 0; cidx < m; ++cidx) {
    Point p{};
    for (int k = 0; k < body.n; ++k) p[k] = ((cidx >> k) & 1) ? 1.0 : 0.0;
    if (!out.normalized.contains(p)) fail_config("normalization lost the unit cube");
  }
  return out;
}

DyadicApprox dyadic_approximation(const ConvexBody& body, double eps, const Window& w) {
  return dyadic_approximation(body, eps, w, body.n == 1 ? 0.25 : 0.0625);
}

DyadicApprox dyadic_approximation(const ConvexBody& body, double eps, const Window& w,
                                  double kappa) {
  if (!(eps > 0 && eps < 1)) fail_config("approximation accuracy must lie in (0, 1)");
  if (body.n != w.n) fail_config("body dimension disagrees with window");
  if (!(kappa > 0 && kappa <= 1)) fail_config("the side constant must lie in (0, 1]");
  int m = 0;
  while (std::ldexp(1.0, -m) > kappa * eps) ++m;
  const double side = std::ldexp(1.0, -m);
  double hmax = w.h(0);
  for (int k = 1; k < w.n; ++k) hmax = std::max(hmax, w.h(k));
  if (side < hmax) {
    fail_resolution("refine grid: dyadic approximation side is below the cell size");
  }

  DyadicApprox out;
  out.m = m;
  out.side = side;
  out.body_measure = body.measure();
  out.mask = GridMask::empty(w);

  Rect bb = body.bounding_box();
  std::int64_t lo[2] = {0, 0}, hi[2] = {0, 0};
  for (int k = 0; k < body.n; ++k) {
    lo[k] = static_cast<std::int64_t>(std::floor(bb.lo[k] / side)) - 1;
    hi[k] = static_cast<std::int64_t>(std::ceil(bb.hi[k] / side)) + 1;
  }
  const std::int64_t j_lo = body.n == 2 ? lo[1] : 0;
  const std::int64_t j_hi = body.n == 2 ? hi[1] : 1;
  for (std::int64_t i = lo[0]; i < hi[0]; ++i) {
    for (std::int64_t j = j_lo; j < j_hi; ++j) {
      bool inside = true;
      for (int cidx = 0; cidx < (1 << body.n) && inside; ++cidx) {
        Point corner{};
        corner[0] = (static_cast<double>(i) + ((cidx >> 0) & 1)) * side;
        if (body.n == 2) corner[1] = (static_cast<double>(j) + ((cidx >> 1) & 1)) * side;
        inside = body.contains(corner);
      }
      if (!inside) continue;
      ++out.n_cubes;
      Rect cube;
      cube.n = body.n;
      cube.lo[0] = static_cast<double>(i) * side;
      cube.hi[0] = (static_cast<double>(i) + 1) * side;
      if (body.n == 2) {
        cube.lo[1] = static_cast<double>(j) * side;
        cube.hi[1] = (static_cast<double>(j) + 1) * side;
      }
      IndexBox box = snap_to_cells(cube, w);
      bool empty = false;
      for (int k = 0; k < w.n; ++k) empty = empty || box.a[k] >= box.b[k];
      if (empty) continue;
      Index idx{};
      for (int k = 0; k < w.n; ++k) idx[k] = box.a[k];
      while (true) {
        out.mask.data[static_cast<std::size_t>(w.flat(idx))] = 1;
        int k = w.n - 1;
        while (k >= 0) {
          if (++idx[k] < box.b[k]) break;
          idx[k] = box.a[k];
          --k;
        }
        if (k < 0) break;
      }
    }
  }
  out.covered_measure = static_cast<double>(out.n_cubes) * std::pow(side, body.n);
  out.uncovered_fraction = 1.0 - out.covered_measure / out.body_measure;
  return out;
}

InnerCubeParams inner_cube_factor(double alpha, double eps, int n) {
  if (!(alpha > 0 && alpha < 1)) fail_config("alpha must lie in (0, 1)");
  if (!(eps > 0 && eps < std::min(alpha, 1.0 - alpha))) {
    fail_config("band width must lie in (0, min(alpha, 1 - alpha))");
  }
  const double a = (1.0 - eps + alpha) / alpha;
  const double b = (2.0 - eps - alpha) / (1.0 - alpha);
  const double inv_tn = 0.5 * std::min(a, b);
  InnerCubeParams p;
  p.t_pow_n = 1.0 / inv_tn;
  p.t = std::pow(p.t_pow_n, 1.0 / n);
  return p;
}

namespace {

// Cell count and coverage of E over anchor + s * (hull - anchor), by
// scanline over absolute cell-center rows, clamped to the window.
void scaled_body_count(const RowPrefix& rp, const ConvexBody& body, const Point& anchor, double s,
                       std::int64_t& count, std::int64_t& cells) {
  count = 0;
  cells = 0;
  const Window& w = rp.win;
  std::vector<Point> sh;
  sh.reserve(body.hull.size());
  for (const Point& v : body.hull) {
    Point p{};
    for (int k = 0; k < body.n; ++k) p[k] = anchor[k] + s * (v[k] - anchor[k]);
    sh.push_back(p);
  }
  if (body.n == 1) {
    const double xlo = sh[0][0], xhi = sh[1][0];
    std::int64_t js = static_cast<std::int64_t>(std::ceil((xlo - w.origin[0]) / w.h(0) - 0.5));
    std::int64_t je = static_cast<std::int64_t>(std::floor((xhi - w.origin[0]) / w.h(0) - 0.5));
    js = std::max<std::int64_t>(js, 0);
    je = std::min<std::int64_t>(je, w.res[0] - 1);
    if (js > je) return;
    Index row{};
    count = rp.span(row, js, je + 1);
    cells = je - js + 1;
    return;
  }
  // Rows follow window axis 0, so the scanline fixes coordinate 0 and spans
  // coordinate 1 within each row.
  double rmin = sh[0][0], rmax = sh[0][0];
  for (const Point& p : sh) {
    rmin = std::min(rmin, p[0]);
    rmax = std::max(rmax, p[0]);
  }
  std::int64_t i_lo = static_cast<std::int64_t>(std::ceil((rmin - w.origin[0]) / w.h(0) - 0.5));
  std::int64_t i_hi = static_cast<std::int64_t>(std::floor((rmax - w.origin[0]) / w.h(0) - 0.5));
  i_lo = std::max<std::int64_t>(i_lo, 0);
  i_hi = std::min<std::int64_t>(i_hi, w.res[0] - 1);
  const std::size_t mh = sh.size();
  for (std::int64_t i = i_lo; i <= i_hi; ++i) {
    const double x0 = w.origin[0] + (static_cast<double>(i) + 0.5) * w.h(0);
    double xlo = std::numeric_limits<double>::infinity();
    double xhi = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < mh; ++t) {
      const Point& p = sh[t];
      const Point& q = sh[(t + 1) % mh];
      if ((p[0] < x0 && q[0] < x0) || (p[0] > x0 && q[0] > x0)) continue;
      if (p[0] == q[0]) {
        xlo = std::min(xlo, std::min(p[1], q[1]));
        xhi = std::max(xhi, std::max(p[1], q[1]));
      } else {
        const double tt = (x0 - p[0]) / (q[0] - p[0]);
        if (tt < 0 || tt > 1) continue;
        const double x = p[1] + tt * (q[1] - p[1]);
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
      }
    }
    if (!(xlo <= xhi)) continue;
    std::int64_t js = static_cast<std::int64_t>(std::ceil((xlo - w.origin[1]) / w.h(1) - 0.5));
    std::int64_t je = static_cast<std::int64_t>(std::floor((xhi - w.origin[1]) / w.h(1) - 0.5));
    js = std::max<std::int64_t>(js, 0);
    je = std::min<std::int64_t>(je, w.res[1] - 1);
    if (js > je) continue;
    Index row{};
    row[0] = i;
    count += rp.span(row, js, je + 1);
    cells += je - js + 1;
  }
}

}  // namespace

BodyScaleSearch body_scale_average(const GridMask& E, const ConvexBody& body, const Point& anchor,
                                   double s) {
  const RowPrefix rp = RowPrefix::build(E);
  BodyScaleSearch out;
  out.s = s;
  scaled_body_count(rp, body, anchor, s, out.count, out.cells);
  out.avg = out.cells > 0 ? static_cast<double>(out.count) / static_cast<double>(out.cells) : 0.0;
  out.found = out.cells > 0;
  return out;
}

BodyScaleSearch body_scale_band_search(const GridMask& E, const ConvexBody& body,
                                       const Point& anchor, double lo, double hi, double s_max) {
  if (!(lo <= hi)) fail_config("band search bounds are reversed");
  if (!(s_max > 0)) fail_config("band search needs a positive initial scale");
  const RowPrefix rp = RowPrefix::build(E);
  double maxres = 0;
  for (int k = 0; k < E.win.n; ++k) maxres = std::max(maxres, static_cast<double>(E.win.res[k]));
  const double gamma = 1.0 - 1.0 / (4.0 * maxres);
  Rect bb = body.bounding_box();
  double extent = 0;
  for (int k = 0; k < body.n; ++k) {
    extent = std::max(extent, std::max(std::abs(bb.lo[k] - anchor[k]), std::abs(bb.hi[k] - anchor[k])));
  }
  double hmin = E.win.h(0);
  for (int k = 1; k < E.win.n; ++k) hmin = std::min(hmin, E.win.h(k));

  BodyScaleSearch out;
  double prev = -1;
  for (double s = s_max; s * extent > 0.25 * hmin; s *= gamma) {
    std::int64_t count = 0, cells = 0;
    scaled_body_count(rp, body, anchor, s, count, cells);
    ++out.steps;
    if (cells == 0) continue;
    const double avg = static_cast<double>(count) / static_cast<double>(cells);
    if (prev >= 0) out.max_jump = std::max(out.max_jump, std::abs(avg - prev));
    prev = avg;
    if (avg >= lo) {
      out.s = s;
      out.avg = avg;
      out.count = count;
      out.cells = cells;
      if (avg <= hi) {
        out.found = true;
      } else {
        out.quantized = true;
      }
      return out;
    }
  }
  return out;
}

BodyScaleSearch body_scale_ratio_search(const GridMask& E, const ConvexBody& body,
                                        const Point& anchor, double s_lo, double s_hi,
                                        double target, double tol, int iters) {
  if (!(s_lo > 0 && s_hi > s_lo)) fail_config("homothety bracket is not ordered");
  const RowPrefix rp = RowPrefix::build(E);
  auto avg_at = [&](double s, std::int64_t& count, std::int64_t& cells) {
    scaled_body_count(rp, body, anchor, s, count, cells);
    return cells > 0 ? static_cast<double>(count) / static_cast<double>(cells) : 0.0;
  };
  std::int64_t cnt, cls;
  double fa = avg_at(s_lo, cnt, cls);
  double fb = avg_at(s_hi, cnt, cls);
  if (!(fa >= target && target >= fb)) {
    fail_config("homothety search requires a bracketing pair of averages");
  }
  BodyScaleSearch out;
  double a = s_lo, b = s_hi;
  for (int it = 0; it < iters; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = avg_at(m, cnt, cls);
    ++out.steps;
    if (fm >= target) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  out.max_jump = fa - fb;
  const bool lo_closer = std::abs(fa - target) <= std::abs(fb - target);
  out.s = lo_closer ? a : b;
  out.avg = avg_at(out.s, out.count, out.cells);
  out.found = std::abs(out.avg - target) <= tol;
  out.quantized = !out.found;
  return out;
}

void body_cells_at_scale(const RowPrefix& rp, const ConvexBody& body, const Point& anchor,
                         double s, std::int64_t& count, std::int64_t& cells) {
  scaled_body_count(rp, body, anchor, s, count, cells);
}

}  // namespace halolab
