#include "halolab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

#include "halolab/convex.hpp"
#include "halolab/cz.hpp"
#include "halolab/embedding.hpp"
#include "halolab/tauberian.hpp"

namespace halolab {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_config("cannot open file for checksumming: " + path.string());
  std::uint64_t h = 14695981039346656037ULL;
  char buf[65536];
  while (is) {
    is.read(buf, sizeof buf);
    const std::streamsize got = is.gcount();
    if (got > 0) h = fnv1a64(buf, static_cast<std::size_t>(got), h);
  }
  return h;
}

namespace {

constexpr const char* kArtifactVersion = "1.0.0";

// Same fixed splitting rule as the candidate engine; duplicated here on
// purpose so the two stay individually frozen.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(master ^ mix64(index + 0x632be59bd9b4e019ULL));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

// Shortest round-trip decimal form, the same the JSON writer uses, so CSV
// and JSON artifacts agree byte for byte across reruns.
std::string num(double v) { return json(v).dump(); }

// ---------------------------------------------------------------- JSON utils

const json& need(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null())
    fail_config(std::string("config is missing required field \"") + key + "\"");
  return *it;
}

double as_num(const json& v, const char* what) {
  if (!v.is_number()) fail_config(std::string("config field \"") + what + "\" must be a number");
  return v.get<double>();
}

double need_num(const json& j, const char* key) { return as_num(need(j, key), key); }

double opt_num(const json& j, const char* key, double dflt) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? dflt : as_num(*it, key);
}

std::int64_t need_int(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail_config(std::string("config field \"") + key + "\" must be an integer");
  return v.get<std::int64_t>();
}

std::int64_t opt_int(const json& j, const char* key, std::int64_t dflt) {
  return j.contains(key) && !j[key].is_null() ? need_int(j, key) : dflt;
}

bool opt_bool(const json& j, const char* key, bool dflt) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return dflt;
  if (!it->is_boolean()) fail_config(std::string("config field \"") + key + "\" must be a boolean");
  return it->get<bool>();
}

std::string opt_str(const json& j, const char* key, const std::string& dflt) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return dflt;
  if (!it->is_string()) fail_config(std::string("config field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::uint64_t opt_u64(const json& j, const char* key, std::uint64_t dflt) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return dflt;
  if (!it->is_number_integer() && !it->is_number_unsigned())
    fail_config(std::string("config field \"") + key + "\" must be an integer");
  return it->get<std::uint64_t>();
}

Point parse_point(const json& arr, int n, const char* what) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != n)
    fail_config(std::string("config field \"") + what + "\" must be an array of length " +
                std::to_string(n));
  Point p{};
  for (int k = 0; k < n; ++k) p[k] = as_num(arr[static_cast<std::size_t>(k)], what);
  return p;
}

Window parse_window(const json& cfg) {
  const json& wj = need(cfg, "window");
  Window w;
  w.n = static_cast<int>(need_int(wj, "n"));
  if (w.n < 1 || w.n > kMaxDim) fail_config("window dimension must lie in [1, 3]");
  w.origin = parse_point(need(wj, "origin"), w.n, "window.origin");
  const Point ext = parse_point(need(wj, "extent"), w.n, "window.extent");
  w.extent = ext;
  const json& rj = need(wj, "resolution");
  if (!rj.is_array() || static_cast<int>(rj.size()) != w.n)
    fail_config("config field \"window.resolution\" must be an array of length n");
  for (int k = 0; k < w.n; ++k) {
    if (!rj[static_cast<std::size_t>(k)].is_number_integer() &&
        !rj[static_cast<std::size_t>(k)].is_number_unsigned())
      fail_config("window resolutions must be integers");
    w.res[k] = rj[static_cast<std::size_t>(k)].get<std::int64_t>();
  }
  for (int k = w.n; k < kMaxDim; ++k) w.res[k] = 1;
  w.validate();
  return w;
}

int point_dim(const json& arr, const char* what) {
  if (!arr.is_array() || arr.empty() || arr.size() > static_cast<std::size_t>(kMaxDim))
    fail_config(std::string("config field \"") + what + "\" must be a short coordinate array");
  return static_cast<int>(arr.size());
}

ShapeSpec parse_shape(const json& j) {
  if (!j.is_object()) fail_config("shape specs must be JSON objects");
  const std::string type = opt_str(j, "type", "");
  if (type == "rect") {
    const int n = point_dim(need(j, "lo"), "lo");
    return ShapeSpec::make_rect(parse_point(need(j, "lo"), n, "lo"),
                                parse_point(need(j, "hi"), n, "hi"));
  }
  if (type == "ball") {
    const int n = point_dim(need(j, "center"), "center");
    return ShapeSpec::make_ball(parse_point(need(j, "center"), n, "center"),
                                need_num(j, "radius"));
  }
  if (type == "polytope") {
    const json& vj = need(j, "vertices");
    if (!vj.is_array() || vj.empty()) fail_config("polytopes need a nonempty vertex list");
    const int n = point_dim(vj[0], "vertices");
    std::vector<Point> vs;
    for (const json& v : vj) vs.push_back(parse_point(v, n, "vertices"));
    return ShapeSpec::make_polytope(std::move(vs));
  }
  if (type == "union") {
    const json& pj = need(j, "parts");
    if (!pj.is_array() || pj.empty()) fail_config("unions need a nonempty parts list");
    std::vector<ShapeSpec> parts;
    for (const json& p : pj) parts.push_back(parse_shape(p));
    return ShapeSpec::make_union(std::move(parts));
  }
  fail_config("shape type must be rect, ball, polytope, or union");
}

Basis parse_basis(const json& cfg, int n) {
  const json& bj = need(cfg, "basis");
  const std::string kind = opt_str(bj, "kind", "cubes");
  Basis b;
  if (kind == "cubes") {
    b = Basis::make_cubes(n);
  } else if (kind == "balls") {
    b = Basis::make_balls(n);
  } else if (kind == "strong_rects") {
    b = Basis::make_strong(n);
  } else if (kind == "convex") {
    const json& body = need(bj, "body");
    ShapeSpec spec = body.contains("type") ? parse_shape(body)
                                           : parse_shape(json{{"type", "polytope"},
                                                              {"vertices", need(body, "vertices")}});
    b = Basis::make_convex(n, std::move(spec));
  } else {
    fail_config("basis kind must be cubes, balls, strong_rects, or convex");
  }
  b.max_size_cells = opt_int(bj, "max_size_cells", 0);
  b.size_stride = opt_int(bj, "size_stride", 1);
  b.scale_ratio = opt_num(bj, "scale_ratio", 0.0);
  return b;
}

CandidateFamily parse_family(const json& cfg, std::uint64_t seed) {
  CandidateFamily fam;
  fam.seed = seed;
  const auto it = cfg.find("family");
  if (it == cfg.end()) return fam;
  const json& fj = *it;
  const std::string kind = opt_str(fj, "kind", "single_cube");
  if (kind == "single_cube") {
    fam.kind = FamilyKind::single_cube;
  } else if (kind == "cube_union") {
    fam.kind = FamilyKind::cube_union;
  } else if (kind == "random_clusters") {
    fam.kind = FamilyKind::random_clusters;
  } else if (kind == "perturbation_search") {
    fam.kind = FamilyKind::perturbation_search;
  } else {
    fail_config("family kind must be single_cube, cube_union, random_clusters, or "
                "perturbation_search");
  }
  fam.components = static_cast<int>(opt_int(fj, "components", fam.components));
  fam.min_side = opt_num(fj, "min_side", fam.min_side);
  fam.max_side = opt_num(fj, "max_side", fam.max_side);
  fam.core_margin = opt_num(fj, "core_margin", fam.core_margin);
  fam.restarts = static_cast<int>(opt_int(fj, "restarts", fam.restarts));
  fam.step_cells = opt_num(fj, "step_cells", fam.step_cells);
  return fam;
}

std::vector<double> parse_levels(const json& cfg) {
  std::vector<double> levels;
  if (cfg.contains("alphas")) {
    const json& aj = cfg["alphas"];
    if (!aj.is_array() || aj.empty()) fail_config("\"alphas\" must be a nonempty array");
    for (const json& a : aj) levels.push_back(as_num(a, "alphas"));
  } else if (cfg.contains("alpha_geometric")) {
    const json& gj = cfg["alpha_geometric"];
    if (!gj.is_array() || gj.size() != 2) fail_config("\"alpha_geometric\" must be [k_min, k_max]");
    const std::int64_t k0 = gj[0].get<std::int64_t>(), k1 = gj[1].get<std::int64_t>();
    if (k0 < 1 || k1 < k0) fail_config("\"alpha_geometric\" must satisfy 1 <= k_min <= k_max");
    for (std::int64_t k = k0; k <= k1; ++k) levels.push_back(1.0 - std::ldexp(1.0, -static_cast<int>(k)));
  } else if (cfg.contains("alpha")) {
    levels.push_back(need_num(cfg, "alpha"));
  } else {
    fail_config("config needs \"alpha\", \"alphas\", or \"alpha_geometric\"");
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (const double a : levels)
    if (!(a > 0 && a < 1)) fail_config("every level must lie in (0, 1)");
  return levels;
}

// ------------------------------------------------------ corpus generators

// Union of up to max_rects random axis rectangles confined to the central
// band of the window (margin kept per end so halos stay off the boundary).
ShapeSpec random_rect_union(std::mt19937_64& rng, const Window& w, int max_rects,
                            double core_margin) {
  std::uniform_int_distribution<int> count_dist(1, max_rects);
  const int k = count_dist(rng);
  std::vector<ShapeSpec> parts;
  for (int r = 0; r < k; ++r) {
    Point lo{}, hi{};
    for (int ax = 0; ax < w.n; ++ax) {
      const double a = w.origin[ax] + core_margin * w.extent[ax];
      const double b = w.origin[ax] + (1.0 - core_margin) * w.extent[ax];
      const double wmin = std::max(3.0 * w.h(ax), 0.02 * w.extent[ax]);
      const double wmax = std::max(wmin, 0.6 * (b - a));
      const double width = std::uniform_real_distribution<double>(wmin, wmax)(rng);
      const double start = std::uniform_real_distribution<double>(a, std::max(a, b - width))(rng);
      lo[ax] = start;
      hi[ax] = start + width;
    }
    parts.push_back(ShapeSpec::make_rect(lo, hi));
  }
  return ShapeSpec::make_union(std::move(parts));
}

// Random convex polygon with a vertex count in [vmin, vmax]: angle-sorted
// points on radii in [0.4, 1] around the center, re-sampled until the hull
// keeps enough vertices.
ConvexBody random_polygon(std::mt19937_64& rng, int vmin, int vmax, const Point& center,
                          double scale) {
  std::uniform_int_distribution<int> count_dist(vmin, vmax);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    const int m = count_dist(rng);
    std::vector<double> angles(static_cast<std::size_t>(m));
    for (double& a : angles) a = 2.0 * M_PI * unit(rng);
    std::sort(angles.begin(), angles.end());
    std::vector<Point> pts;
    for (const double a : angles) {
      const double r = scale * (0.4 + 0.6 * unit(rng));
      pts.push_back(Point{center[0] + r * std::cos(a), center[1] + r * std::sin(a), 0});
    }
    ConvexBody body = ConvexBody::from_points(2, pts);
    if (static_cast<int>(body.hull.size()) >= vmin) return body;
  }
  fail_config("could not sample a convex polygon with the requested vertex count");
}

// ------------------------------------------------------------- output stage

struct OutCtx {
  fs::path dir;
  std::vector<std::string> files;

  void write_text(const std::string& name, const std::string& content) {
    std::ofstream os(dir / name, std::ios::binary);
    os << content;
    if (!os) fail_config("cannot write output file: " + (dir / name).string());
    files.push_back(name);
  }
  void note(const std::vector<fs::path>& written) {
    for (const fs::path& p : written) files.push_back(p.filename().string());
  }
};

struct RunCtx {
  json cfg;
  int threads = 1;
  std::uint64_t seed = 1;
  fs::path base_dir;
  OutCtx out;
  bool pass = true;
  std::string summary;
};

GridMask rasterize_set(const json& cfg, const Window& w) {
  const GridMask E = rasterize(parse_shape(need(cfg, "set")), w);
  if (E.count() == 0) fail_resolution("refine grid: the configured set rasterizes to no cells");
  return E;
}

json window_json(const Window& w) {
  json out;
  out["n"] = w.n;
  json o = json::array(), e = json::array(), r = json::array();
  for (int k = 0; k < w.n; ++k) {
    o.push_back(w.origin[k]);
    e.push_back(w.extent[k]);
    r.push_back(w.res[k]);
  }
  out["origin"] = o;
  out["extent"] = e;
  out["resolution"] = r;
  return out;
}

// ------------------------------------------------------------------ runners

void run_halo(RunCtx& c) {
  const Window w = parse_window(c.cfg);
  const Basis basis = parse_basis(c.cfg, w.n);
  const GridMask E = rasterize_set(c.cfg, w);
  const std::vector<double> levels = parse_levels(c.cfg);
  c.out.note(save_mask(E, c.out.dir / "set"));

  std::ostringstream csv;
  csv << "alpha,ratio,halo_measure,set_measure,boundary_touched,clamped\n";
  double last_ratio = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const HaloResult h = halo_set(E, basis, levels[i], c.threads);
    const double halo_measure = h.mask.measure();
    const double set_measure = E.measure();
    last_ratio = halo_measure / set_measure;
    csv << num(levels[i]) << ',' << num(last_ratio) << ',' << num(halo_measure) << ','
        << num(set_measure) << ',' << (h.mask.boundary_touched() ? 1 : 0) << ','
        << (h.clamped ? 1 : 0) << '\n';
    char name[32];
    std::snprintf(name, sizeof name, "halo_%03zu", i);
    c.out.note(save_mask(h.mask, c.out.dir / name));
  }
  c.out.write_text("halo.csv", csv.str());
  if (opt_bool(c.cfg, "dump_field", false)) {
    const MaximalField f = maximal_field(E, basis, c.threads);
    c.out.note(save_field(f, c.out.dir / "field"));
  }
  c.summary = std::to_string(levels.size()) + " levels on " + basis_kind_name(basis.kind) +
              "; ratio at alpha=" + num(levels.back()) + " is " + num(last_ratio);
}

void run_czdec(RunCtx& c) {
  const Window w = parse_window(c.cfg);
  const GridMask E = rasterize_set(c.cfg, w);
  const double xi = need_num(c.cfg, "xi");
  IndexBox root;
  root.n = w.n;
  if (c.cfg.contains("root")) {
    const json& rj = c.cfg["root"];
    Rect r;
    r.n = w.n;
    r.lo = parse_point(need(rj, "lo"), w.n, "root.lo");
    r.hi = parse_point(need(rj, "hi"), w.n, "root.hi");
    root = snap_to_cells(r, w);
    if (root.empty()) fail_config("the decomposition root snaps to no cells");
  } else {
    for (int k = 0; k < w.n; ++k) {
      root.a[k] = 0;
      root.b[k] = w.res[k];
    }
  }
  std::string split = opt_str(c.cfg, "split", "auto");
  if (split == "auto") {
    bool dyadic = true;
    const std::int64_t ext0 = root.b[0] - root.a[0];
    for (int k = 0; k < w.n; ++k) {
      const std::int64_t ext = root.b[k] - root.a[k];
      dyadic = dyadic && ext == ext0 && (ext & (ext - 1)) == 0;
    }
    split = dyadic ? "dyadic" : "floor_half";
  }
  CzResult dec;
  if (split == "dyadic") {
    dec = cz_decompose(E, root, xi);
  } else if (split == "floor_half") {
    dec = cz_decompose_nonuniform(E, root, xi);
  } else {
    fail_config("split must be auto, dyadic, or floor_half");
  }
  const CzCheck chk = validate_cz(E, dec);

  json out;
  out["xi"] = xi;
  out["split"] = split;
  out["window"] = window_json(w);
  out["root"] = {{"a", std::vector<std::int64_t>(root.a.begin(), root.a.begin() + w.n)},
                 {"b", std::vector<std::int64_t>(root.b.begin(), root.b.begin() + w.n)}};
  out["root_selected"] = dec.root_selected;
  json cubes = json::array();
  GridMask selected = GridMask::empty(w);
  for (const DyadicCube& q : dec.cubes) {
    json cj;
    json addr = json::array();
    addr.push_back(q.level);
    for (int k = 0; k < w.n; ++k) addr.push_back(q.box.a[k]);
    cj["address"] = addr;
    cj["box_a"] = std::vector<std::int64_t>(q.box.a.begin(), q.box.a.begin() + w.n);
    cj["box_b"] = std::vector<std::int64_t>(q.box.b.begin(), q.box.b.begin() + w.n);
    cj["count"] = q.count;
    cj["avg"] = q.avg;
    cubes.push_back(cj);
    Index idx = q.box.a;
    while (true) {
      selected.set(w.flat(idx), true);
      int ax = w.n - 1;
      while (ax >= 0) {
        if (++idx[ax] < q.box.b[ax]) break;
        idx[ax] = q.box.a[ax];
        --ax;
      }
      if (ax < 0) break;
    }
  }
  out["cubes"] = cubes;
  out["selected_cells"] = dec.selected_cells;
  out["covered_count"] = dec.covered_count;
  double min_parent = 0;
  if (!dec.cubes.empty() && !dec.root_selected) {
    min_parent = min_parent_average(E, dec);
    out["min_parent_average"] = min_parent;
  }
  out["validation"] = {{"disjoint", chk.disjoint},
                       {"covers_set", chk.covers_set},
                       {"selected_pass", chk.selected_pass},
                       {"ancestors_fail", chk.ancestors_fail},
                       {"detail", chk.detail}};
  c.out.write_text("czdec.json", out.dump(2) + "\n");
  c.out.note(save_mask(selected, c.out.dir / "selected"));

  std::ostringstream csv;
  csv << "cubes,selected_cells,covered_count,min_parent_average,ok\n";
  csv << dec.cubes.size() << ',' << dec.selected_cells << ',' << dec.covered_count << ','
      << num(min_parent) << ',' << (chk.ok() ? 1 : 0) << '\n';
  c.out.write_text("czdec.csv", csv.str());
  c.pass = chk.ok();
  c.summary = std::to_string(dec.cubes.size()) + " cubes at xi=" + num(xi) +
              (chk.ok() ? "; checks pass" : "; CHECKS FAIL: " + chk.detail);
}

void run_john(RunCtx& c) {
  const int instances = static_cast<int>(opt_int(c.cfg, "instances", 50));
  const int vmin = static_cast<int>(opt_int(c.cfg, "vertices_min", 5));
  const int vmax = static_cast<int>(opt_int(c.cfg, "vertices_max", 12));
  const int samples = static_cast<int>(opt_int(c.cfg, "samples", 10000));
  if (instances < 1 || samples < 1) fail_config("instances and samples must be positive");
  if (vmin < 3 || vmax < vmin) fail_config("vertex counts must satisfy 3 <= min <= max");
  const double bound = opt_num(c.cfg, "factor_bound", std::pow(2.0, 1.5) * (1.0 + 1e-3));
  // The rounding guarantees outer factors up to n^{3/2}(1 + ellipsoid eps),
  // so the ellipsoid is solved tighter than the factor bound being checked.
  const double mvee_eps = opt_num(c.cfg, "mvee_eps", 5e-4);

  std::ostringstream csv, jsonl;
  csv << "instance,n_vertices,outer_factor,inner_violations,outer_violations\n";
  std::int64_t total_violations = 0;
  double max_factor = 0;
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
    const ConvexBody body = random_polygon(rng, vmin, vmax, Point{0, 0, 0}, 1.0);
    const JohnResult jr = john_rectangle(body, mvee_eps);
    max_factor = std::max(max_factor, jr.outer_factor);

    // Membership sampling: rect points must land in the body, body points in
    // the dilated rect. The rect side is shrunk a hair to dodge exact ties.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::int64_t inner_bad = 0, outer_bad = 0;
    const Eigen::Matrix3d rot_t = jr.rect.rot.transpose();
    const Rect bb = body.bounding_box();
    for (int s = 0; s < samples; ++s) {
      Point local{};
      for (int k = 0; k < 2; ++k)
        local[k] = (2.0 * unit(rng) - 1.0) * jr.rect.half[k] * (1.0 - 1e-9);
      Point p{};
      for (int r = 0; r < 2; ++r)
        p[r] = jr.rect.center[r] + jr.rect.rot(r, 0) * local[0] + jr.rect.rot(r, 1) * local[1];
      if (!body.contains(p)) ++inner_bad;
    }
    for (int s = 0; s < samples; ++s) {
      Point p{};
      int tries = 0;
      while (true) {
        for (int k = 0; k < 2; ++k)
          p[k] = bb.lo[k] + unit(rng) * (bb.hi[k] - bb.lo[k]);
        if (body.contains(p)) break;
        if (++tries > 10000) fail_config("degenerate body: rejection sampling found no points");
      }
      for (int k = 0; k < 2; ++k) {
        const double lk = rot_t(k, 0) * (p[0] - jr.rect.center[0]) +
                          rot_t(k, 1) * (p[1] - jr.rect.center[1]);
        if (std::fabs(lk) > bound * jr.rect.half[k] * (1.0 + 1e-9)) {
          ++outer_bad;
          break;
        }
      }
    }
    total_violations += inner_bad + outer_bad;
    csv << i << ',' << body.hull.size() << ',' << num(jr.outer_factor) << ',' << inner_bad << ','
        << outer_bad << '\n';
    json line;
    line["instance"] = i;
    json verts = json::array();
    for (const Point& v : body.hull) verts.push_back({v[0], v[1]});
    line["vertices"] = verts;
    line["outer_factor"] = jr.outer_factor;
    line["inner_violations"] = inner_bad;
    line["outer_violations"] = outer_bad;
    jsonl << line.dump() << '\n';
  }
  c.out.write_text("john.csv", csv.str());
  c.out.write_text("john.jsonl", jsonl.str());
  c.pass = total_violations == 0 && max_factor <= bound + 1e-9;
  c.summary = std::to_string(instances) + " bodies; max outer factor " + num(max_factor) + "; " +
              std::to_string(total_violations) + " violations";
}

json report_json(const EmbeddingReport& r) {
  json line;
  line["theorem"] = r.theorem;
  line["inner_basis"] = basis_kind_name(r.inner_kind);
  line["middle_basis"] = basis_kind_name(r.middle_kind);
  line["alpha"] = r.alpha;
  line["delta"] = r.delta;
  line["xi"] = r.xi;
  line["c_n"] = r.c_n;
  line["middle_alpha"] = r.middle_alpha;
  line["outer_alpha"] = r.outer_alpha;
  line["inclusion_holds"] = r.inclusion_holds;
  line["slack_cells"] = r.slack_cells;
  line["violation_cells"] = r.violation_cells;
  line["violations_at_zero"] = r.violations_at_zero;
  line["inner_measure"] = r.inner_measure;
  line["middle_measure"] = r.middle_measure;
  line["outer_measure"] = r.outer_measure;
  line["measure_ok"] = r.measure_ok;
  return line;
}

void run_embed(RunCtx& c) {
  const Window w = parse_window(c.cfg);
  const std::string theorem = opt_str(c.cfg, "theorem", "rect");
  const double alpha = need_num(c.cfg, "alpha");
  const double delta = need_num(c.cfg, "delta");
  const std::int64_t slack = opt_int(c.cfg, "slack_cells", 1);

  std::vector<ShapeSpec> shapes;
  if (c.cfg.contains("shapes")) {
    const json& sj = c.cfg["shapes"];
    if (!sj.is_array() || sj.empty()) fail_config("\"shapes\" must be a nonempty array");
    for (const json& s : sj) shapes.push_back(parse_shape(s));
  } else {
    const int instances = static_cast<int>(opt_int(c.cfg, "instances", 100));
    const int max_rects = static_cast<int>(opt_int(c.cfg, "max_rects", 8));
    const double core_margin = opt_num(c.cfg, "core_margin", 0.4);
    if (instances < 1 || max_rects < 1) fail_config("instances and max_rects must be positive");
    if (!(core_margin > 0 && core_margin < 0.5))
      fail_config("the corpus core margin must lie in (0, 0.5)");
    for (int i = 0; i < instances; ++i) {
      std::mt19937_64 rng(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
      shapes.push_back(random_rect_union(rng, w, max_rects, core_margin));
    }
  }

  std::ostringstream jsonl;
  std::int64_t passes = 0;
  std::int64_t max_violations = 0;
  double min_margin = 0;
  bool first = true;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const GridMask E = rasterize(shapes[i], w);
    if (E.count() == 0) fail_resolution("refine grid: a corpus set rasterizes to no cells");
    EmbeddingReport rep;
    if (theorem == "rect") {
      const Basis basis = parse_basis(c.cfg, w.n);
      rep = verify_rect_embedding(E, basis, alpha, delta, need_num(c.cfg, "xi"), slack, c.threads);
    } else if (theorem == "rect_composition") {
      const Basis basis = parse_basis(c.cfg, w.n);
      rep = verify_rect_composition(E, basis, alpha, delta, slack, c.threads);
    } else if (theorem == "ball") {
      rep = verify_ball_embedding(E, alpha, delta, need_num(c.cfg, "c_n"),
                                  opt_num(c.cfg, "kappa", 0.125), slack, c.threads);
    } else if (theorem == "convex") {
      const json& body = need(c.cfg, "body");
      const ShapeSpec spec = body.contains("type")
                                 ? parse_shape(body)
                                 : parse_shape(json{{"type", "polytope"},
                                                    {"vertices", need(body, "vertices")}});
      if (spec.type != ShapeSpec::Type::polytope)
        fail_config("the convex verifier needs a polytope body");
      rep = verify_convex_embedding(E, ConvexBody::from_points(w.n, spec.vertices), alpha, delta,
                                    need_num(c.cfg, "c_n"), slack, c.threads);
    } else {
      fail_config("theorem must be rect, rect_composition, ball, or convex");
    }
    if (rep.inclusion_holds) ++passes;
    max_violations = std::max(max_violations, rep.violation_cells);
    const double margin = rep.outer_measure - rep.inner_measure;
    min_margin = first ? margin : std::min(min_margin, margin);
    first = false;
    json line = report_json(rep);
    line["instance"] = i;
    jsonl << line.dump() << '\n';
  }
  c.out.write_text("embed.jsonl", jsonl.str());
  std::ostringstream csv;
  csv << "theorem,instances,passes,failures,slack_cells,max_violation_cells,min_measure_margin\n";
  csv << theorem << ',' << shapes.size() << ',' << passes << ','
      << (static_cast<std::int64_t>(shapes.size()) - passes) << ',' << slack << ','
      << max_violations << ',' << num(min_margin) << '\n';
  c.out.write_text("embed.csv", csv.str());
  c.pass = passes == static_cast<std::int64_t>(shapes.size());
  c.summary = theorem + ": " + std::to_string(passes) + "/" + std::to_string(shapes.size()) +
              " inclusions hold";
}

void run_tauberian(RunCtx& c) {
  const Window w = parse_window(c.cfg);
  const Basis basis = parse_basis(c.cfg, w.n);
  const CandidateFamily fam = parse_family(c.cfg, c.seed);
  const std::vector<double> levels = parse_levels(c.cfg);
  const std::int64_t budget = opt_int(c.cfg, "budget", 64);
  const ScanResult sc = scan(w, basis, levels, fam, budget, c.threads);

  c.out.write_text("table.csv", table_to_csv(sc.table));
  json tj;
  tj["basis"] = basis_kind_name(sc.table.basis);
  tj["n"] = w.n;
  tj["monotone"] = sc.table.monotone;
  tj["window"] = window_json(w);
  json rows = json::array();
  for (const TauberianRow& r : sc.table.rows) {
    rows.push_back({{"alpha", r.alpha},
                    {"c_hat", r.c_hat},
                    {"witness_id", r.witness_id},
                    {"n_candidates", r.n_candidates},
                    {"grid_n", r.grid_n},
                    {"noise_floor", r.noise_floor},
                    {"window_limited", r.window_limited}});
  }
  tj["rows"] = rows;
  c.out.write_text("table.json", tj.dump(2) + "\n");
  for (std::size_t k = 0; k < sc.witnesses.size(); ++k) {
    c.out.note(save_mask(sc.witnesses[k],
                         c.out.dir / ("witness_" + std::to_string(sc.witness_ids[k]))));
  }
  c.summary = std::to_string(levels.size()) + " levels on " + basis_kind_name(basis.kind) +
              "; c(" + num(levels.back()) + ") = " + num(sc.table.rows.back().c_hat);
}

TauberianTable load_table(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_config("cannot open table: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  TauberianTable t;
  if (path.extension() == ".json") {
    const json tj = json::parse(buf.str(), nullptr, false);
    if (tj.is_discarded()) fail_config("table file is not valid JSON: " + path.string());
    t.monotone = opt_bool(tj, "monotone", false);
    const std::string bn = opt_str(tj, "basis", "cubes");
    for (const BasisKind k : {BasisKind::cubes, BasisKind::balls, BasisKind::strong_rects,
                              BasisKind::convex})
      if (basis_kind_name(k) == bn) t.basis = k;
    for (const json& rj : need(tj, "rows")) {
      TauberianRow r;
      r.alpha = need_num(rj, "alpha");
      r.c_hat = need_num(rj, "c_hat");
      r.witness_id = opt_int(rj, "witness_id", 0);
      r.n_candidates = opt_int(rj, "n_candidates", 0);
      r.grid_n = opt_int(rj, "grid_n", 0);
      r.noise_floor = opt_num(rj, "noise_floor", 0.0);
      r.window_limited = opt_bool(rj, "window_limited", false);
      t.rows.push_back(r);
    }
  } else {
    std::string line;
    if (!std::getline(buf, line) || line != "alpha,c_hat,witness_id,n_candidates,grid_n")
      fail_config("table CSV must start with the alpha,c_hat,witness_id,n_candidates,grid_n "
                  "header");
    while (std::getline(buf, line)) {
      if (line.empty()) continue;
      TauberianRow r;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      if (!(ls >> r.alpha >> r.c_hat >> r.witness_id >> r.n_candidates >> r.grid_n))
        fail_config("malformed table CSV row: " + line);
      t.rows.push_back(r);
    }
  }
  if (t.rows.empty()) fail_config("the table has no rows: " + path.string());
  return t;
}

void run_fit(RunCtx& c) {
  fs::path table_path = fs::path(opt_str(c.cfg, "table", ""));
  if (table_path.empty()) fail_config("config is missing required field \"table\"");
  if (table_path.is_relative()) table_path = c.base_dir / table_path;
  const TauberianTable table = load_table(table_path);
  const double alpha_min = opt_num(c.cfg, "alpha_min", 0.0);
  const SolyanikFit fit = solyanik_fit(table, alpha_min);

  json out;
  out["p_hat"] = fit.p_hat;
  out["log_c"] = fit.log_c;
  out["r2"] = fit.r2;
  out["rows_used"] = fit.rows_used;
  out["alpha_min"] = fit.alpha_min;
  out["basis"] = basis_kind_name(table.basis);
  const int n = static_cast<int>(opt_int(c.cfg, "n", 0));
  if (n > 0) {
    out["n"] = n;
    out["target_cube_exponent"] = 1.0 / n;
    out["target_ball_exponent"] = 1.0 / (n + 1);
  }
  if (c.cfg.contains("holder")) {
    const json& hj = c.cfg["holder"];
    const double q = holder_quotient(table, need_num(hj, "p"), need_num(hj, "a"),
                                     need_num(hj, "b"));
    out["holder"] = {{"p", need_num(hj, "p")},
                     {"a", need_num(hj, "a")},
                     {"b", need_num(hj, "b")},
                     {"quotient", q}};
  }
  c.out.write_text("fit.json", out.dump(2) + "\n");
  c.summary = "p_hat = " + num(fit.p_hat) + " over " + std::to_string(fit.rows_used) +
              " rows, r2 = " + num(fit.r2);
}

void run_calibrate(RunCtx& c) {
  const std::string target = opt_str(c.cfg, "target", "c_n");
  if (target == "c_n") {
    const Window w = parse_window(c.cfg);
    const std::string theorem = opt_str(c.cfg, "theorem", "ball");
    if (theorem != "ball" && theorem != "convex")
      fail_config("c_n calibration supports the ball and convex verifiers");
    const double alpha = need_num(c.cfg, "alpha");
    const double delta = need_num(c.cfg, "delta");
    const std::int64_t slack = opt_int(c.cfg, "slack_cells", 1);
    const int instances = static_cast<int>(opt_int(c.cfg, "instances", 20));
    const int iterations = static_cast<int>(opt_int(c.cfg, "iterations", 20));
    const int max_rects = static_cast<int>(opt_int(c.cfg, "max_rects", 4));
    const double core_margin = opt_num(c.cfg, "core_margin", 0.4);
    if (instances < 1 || iterations < 1) fail_config("instances and iterations must be positive");

    std::vector<GridMask> corpus;
    for (int i = 0; i < instances; ++i) {
      std::mt19937_64 rng(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
      corpus.push_back(rasterize(random_rect_union(rng, w, max_rects, core_margin), w));
      if (corpus.back().count() == 0)
        fail_resolution("refine grid: a corpus set rasterizes to no cells");
    }
    ConvexBody body;
    if (theorem == "convex") {
      const json& bj = need(c.cfg, "body");
      const ShapeSpec spec = bj.contains("type")
                                 ? parse_shape(bj)
                                 : parse_shape(json{{"type", "polytope"},
                                                    {"vertices", need(bj, "vertices")}});
      body = ConvexBody::from_points(w.n, spec.vertices);
    }
    const double kappa = opt_num(c.cfg, "kappa", 0.125);
    const double mn = std::min(alpha, 1.0 - alpha);
    const double pow_mn = theorem == "ball" ? std::pow(mn, w.n) : std::pow(mn, 2 * w.n);
    // Degeneracy ceiling: the raised outer threshold must stay below 1.
    const double c_max = 0.999 * (1.0 / alpha - 1.0) / (pow_mn * delta);

    json probes = json::array();
    const auto probe = [&](double cval) {
      for (const GridMask& E : corpus) {
        try {
          const EmbeddingReport rep =
              theorem == "ball"
                  ? verify_ball_embedding(E, alpha, delta, cval, kappa, slack, c.threads)
                  : verify_convex_embedding(E, body, alpha, delta, cval, slack, c.threads);
          if (!rep.inclusion_holds) return false;
        } catch (const LabError&) {
          return false;
        }
      }
      return true;
    };

    double lo = 0.0, hi = c_max;
    const double seed_c = c_max * std::ldexp(1.0, -20);
    const bool any = probe(seed_c);
    probes.push_back({{"c", seed_c}, {"pass", any}});
    if (any) {
      lo = seed_c;
      for (int it = 0; it < iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        const bool ok = probe(mid);
        probes.push_back({{"c", mid}, {"pass", ok}});
        (ok ? lo : hi) = mid;
      }
    }
    json out;
    out["target"] = "c_n";
    out["theorem"] = theorem;
    out["alpha"] = alpha;
    out["delta"] = delta;
    out["instances"] = instances;
    out["value"] = lo;
    out["ceiling"] = c_max;
    out["probes"] = probes;
    c.out.write_text("calibrate.json", out.dump(2) + "\n");
    c.pass = lo > 0;
    c.summary = "largest passing c_n = " + num(lo) + " (" + theorem + ", " +
                std::to_string(instances) + " instances)";
    return;
  }
  if (target == "kappa") {
    const Window w = parse_window(c.cfg);
    if (w.n != 2) fail_config("kappa calibration sweeps planar bodies");
    const int instances = static_cast<int>(opt_int(c.cfg, "instances", 10));
    std::vector<double> eps_list = {0.2, 0.1, 0.05};
    if (c.cfg.contains("eps_list")) {
      eps_list.clear();
      for (const json& e : c.cfg["eps_list"]) eps_list.push_back(as_num(e, "eps_list"));
      if (eps_list.empty()) fail_config("\"eps_list\" must be nonempty");
    }
    Point center{};
    double min_ext = w.extent[0];
    for (int k = 0; k < w.n; ++k) {
      center[k] = w.origin[k] + 0.5 * w.extent[k];
      min_ext = std::min(min_ext, w.extent[k]);
    }
    std::vector<ConvexBody> bodies;
    for (int i = 0; i < instances; ++i) {
      std::mt19937_64 rng(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
      bodies.push_back(random_polygon(rng, 5, 12, center, 0.25 * min_ext));
    }
    json sweeps = json::array();
    double largest_passing = 0;
    for (int j = 0; j <= 8; ++j) {
      const double kappa = std::ldexp(1.0, -j);
      bool all = true;
      for (const ConvexBody& b : bodies) {
        for (const double eps : eps_list) {
          try {
            const DyadicApprox ap = dyadic_approximation(b, eps, w, kappa);
            if (!(ap.uncovered_fraction <= eps)) {
              all = false;
              break;
            }
          } catch (const LabError&) {
            all = false;
            break;
          }
        }
        if (!all) break;
      }
      sweeps.push_back({{"kappa", kappa}, {"pass", all}});
      if (all && largest_passing == 0) largest_passing = kappa;
    }
    json out;
    out["target"] = "kappa";
    out["n"] = w.n;
    out["instances"] = instances;
    out["eps_list"] = eps_list;
    out["largest_passing"] = largest_passing;
    out["value"] = 0.5 * largest_passing;  // halved for margin
    out["sweeps"] = sweeps;
    c.out.write_text("calibrate.json", out.dump(2) + "\n");
    c.pass = largest_passing > 0;
    c.summary = "largest passing kappa = " + num(largest_passing) + ", shipped value " +
                num(0.5 * largest_passing);
    return;
  }
  fail_config("calibrate target must be c_n or kappa");
}

// ------------------------------------------------------------ orchestration

const std::vector<std::string> kKinds = {"halo",      "czdec", "john",     "embed",
                                         "tauberian", "fit",   "calibrate"};

std::string canonical_hash(json cfg) {
  // The thread count and output path must not affect results, so they are
  // excluded from the determinism hash.
  cfg.erase("threads");
  cfg.erase("out");
  const std::string dump = cfg.dump();
  return hex64(fnv1a64(dump.data(), dump.size()));
}

}  // namespace

std::vector<fs::path> save_mask(const GridMask& m, const fs::path& stem) {
  std::vector<fs::path> written;
  const Window& w = m.win;
  if (w.n == 2) {
    fs::path p = stem;
    p += ".pgm";
    std::ofstream os(p, std::ios::binary);
    os << "P5\n# window n=2 origin=" << num(w.origin[0]) << ',' << num(w.origin[1])
       << " extent=" << num(w.extent[0]) << ',' << num(w.extent[1]) << "\n"
       << w.res[1] << ' ' << w.res[0] << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w.res[1]));
    for (std::int64_t i = 0; i < w.res[0]; ++i) {
      for (std::int64_t j = 0; j < w.res[1]; ++j)
        row[static_cast<std::size_t>(j)] = m.at(i * w.res[1] + j) ? 255 : 0;
      os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) fail_config("cannot write mask file: " + p.string());
    written.push_back(p);
    return written;
  }
  fs::path hp = stem;
  hp += ".json";
  {
    json header = {{"n", w.n}};
    json o = json::array(), e = json::array(), r = json::array();
    for (int k = 0; k < w.n; ++k) {
      o.push_back(w.origin[k]);
      e.push_back(w.extent[k]);
      r.push_back(w.res[k]);
    }
    header["origin"] = o;
    header["extent"] = e;
    header["resolution"] = r;
    std::ofstream os(hp, std::ios::binary);
    os << header.dump(2) << "\n";
    if (!os) fail_config("cannot write mask header: " + hp.string());
  }
  written.push_back(hp);
  fs::path bp = stem;
  bp += ".bits";
  {
    const std::int64_t cells = w.cells();
    std::vector<unsigned char> bytes(static_cast<std::size_t>((cells + 7) / 8), 0);
    for (std::int64_t f = 0; f < cells; ++f)
      if (m.at(f)) bytes[static_cast<std::size_t>(f >> 3)] |= static_cast<unsigned char>(1u << (f & 7));
    std::ofstream os(bp, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail_config("cannot write mask bits: " + bp.string());
  }
  written.push_back(bp);
  return written;
}

GridMask load_mask(const fs::path& stem) {
  fs::path p = stem;
  if (!fs::exists(p) || fs::is_directory(p)) {
    fs::path pgm = stem;
    pgm += ".pgm";
    fs::path js = stem;
    js += ".json";
    if (fs::exists(pgm)) {
      p = pgm;
    } else if (fs::exists(js)) {
      p = js;
    } else {
      fail_config("no mask file at " + stem.string());
    }
  }
  if (p.extension() == ".pgm") {
    std::ifstream is(p, std::ios::binary);
    std::string magic;
    is >> magic;
    if (magic != "P5") fail_config("mask PGM must be binary P5: " + p.string());
    Window w;
    w.n = 2;
    w.origin = {0, 0, 0};
    bool have_geom = false;
    // Skip whitespace/comments; a "# window ..." comment restores geometry.
    std::int64_t dims[3] = {0, 0, 0};
    int got = 0;
    while (got < 3) {
      is >> std::ws;
      if (is.peek() == '#') {
        std::string comment;
        std::getline(is, comment);
        double o0, o1, e0, e1;
        if (std::sscanf(comment.c_str(), "# window n=2 origin=%lf,%lf extent=%lf,%lf", &o0, &o1,
                        &e0, &e1) == 4) {
          w.origin = {o0, o1, 0};
          w.extent = {e0, e1, 0};
          have_geom = true;
        }
        continue;
      }
      if (!(is >> dims[got])) fail_config("malformed PGM header: " + p.string());
      ++got;
    }
    if (dims[2] != 255) fail_config("mask PGM maxval must be 255: " + p.string());
    w.res = {dims[1], dims[0], 1};  // height rows of width columns
    if (!have_geom) w.extent = {static_cast<double>(w.res[0]), static_cast<double>(w.res[1]), 0};
    w.validate();
    is.get();  // single whitespace after maxval
    GridMask m = GridMask::empty(w);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w.cells()));
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!is) fail_config("mask PGM truncated: " + p.string());
    for (std::int64_t f = 0; f < w.cells(); ++f)
      m.set(f, bytes[static_cast<std::size_t>(f)] != 0);
    return m;
  }
  std::ifstream is(p, std::ios::binary);
  std::stringstream buf;
  buf << is.rdbuf();
  const json header = json::parse(buf.str(), nullptr, false);
  if (header.is_discarded()) fail_config("mask header is not valid JSON: " + p.string());
  Window w;
  w.n = static_cast<int>(need_int(header, "n"));
  w.origin = parse_point(need(header, "origin"), w.n, "origin");
  w.extent = parse_point(need(header, "extent"), w.n, "extent");
  const json& rj = need(header, "resolution");
  for (int k = 0; k < w.n; ++k) w.res[k] = rj[static_cast<std::size_t>(k)].get<std::int64_t>();
  for (int k = w.n; k < kMaxDim; ++k) w.res[k] = 1;
  w.validate();
  fs::path bp = p;
  bp.replace_extension(".bits");
  std::ifstream bits(bp, std::ios::binary);
  if (!bits) fail_config("missing mask bit sidecar: " + bp.string());
  const std::int64_t cells = w.cells();
  std::vector<unsigned char> bytes(static_cast<std::size_t>((cells + 7) / 8));
  bits.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!bits) fail_config("mask bit sidecar truncated: " + bp.string());
  GridMask m = GridMask::empty(w);
  for (std::int64_t f = 0; f < cells; ++f)
    m.set(f, (bytes[static_cast<std::size_t>(f >> 3)] >> (f & 7)) & 1u);
  return m;
}

std::vector<fs::path> save_field(const MaximalField& f, const fs::path& stem) {
  std::vector<fs::path> written;
  const Window& w = f.win;
  fs::path hp = stem;
  hp += ".json";
  {
    json header = window_json(w);
    header["kind"] = basis_kind_name(f.kind);
    header["clamped"] = f.clamped;
    std::ofstream os(hp, std::ios::binary);
    os << header.dump(2) << "\n";
    if (!os) fail_config("cannot write field header: " + hp.string());
  }
  written.push_back(hp);
  fs::path dp = stem;
  dp += ".f64";
  {
    std::ofstream os(dp, std::ios::binary);
    os.write(reinterpret_cast<const char*>(f.values.data()),
             static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!os) fail_config("cannot write field values: " + dp.string());
  }
  written.push_back(dp);
  return written;
}

RunSummary run_experiment_text(const std::string& config_json, const RunOptions& opts) {
  json cfg = json::parse(config_json, nullptr, false);
  if (cfg.is_discarded()) fail_config("config is not valid JSON");
  if (!cfg.is_object()) fail_config("config must be a JSON object");

  std::string kind = opt_str(cfg, "kind", "");
  if (kind.empty()) kind = opts.expected_kind;
  if (kind.empty()) fail_config("config needs a \"kind\"");
  if (!opts.expected_kind.empty() && kind != opts.expected_kind)
    fail_config("the subcommand runs kind \"" + opts.expected_kind + "\" but the config says \"" +
                kind + "\"");
  if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
    fail_config("kind must be one of halo, czdec, john, embed, tauberian, fit, calibrate");
  cfg["kind"] = kind;
  if (opts.seed) cfg["seed"] = *opts.seed;

  RunCtx ctx;
  ctx.cfg = cfg;
  ctx.seed = opt_u64(cfg, "seed", 1);
  ctx.threads = opts.threads > 0 ? opts.threads : static_cast<int>(opt_int(cfg, "threads", 1));
  if (ctx.threads < 1) fail_config("the thread count must be positive");
  ctx.base_dir = opts.base_dir.empty() ? fs::current_path() : opts.base_dir;

  fs::path out = !opts.out_override.empty() ? opts.out_override
                                            : fs::path(opt_str(cfg, "out", ""));
  if (out.empty()) fail_config("an output directory is required (config \"out\" or --out)");
  if (out.is_relative()) out = ctx.base_dir / out;
  out = out.lexically_normal();
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  fs::path staging = out.parent_path() / (out.filename().string() + ".staging");
  fs::remove_all(staging);
  fs::create_directories(staging);
  ctx.out.dir = staging;

  const auto t0 = std::chrono::steady_clock::now();
  if (kind == "halo") run_halo(ctx);
  else if (kind == "czdec") run_czdec(ctx);
  else if (kind == "john") run_john(ctx);
  else if (kind == "embed") run_embed(ctx);
  else if (kind == "tauberian") run_tauberian(ctx);
  else if (kind == "fit") run_fit(ctx);
  else run_calibrate(ctx);
  const auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t0)
                           .count();

  json manifest;
  manifest["artifact_version"] = kArtifactVersion;
  manifest["kind"] = kind;
  manifest["config"] = cfg;
  manifest["config_hash"] = canonical_hash(cfg);
  manifest["pass"] = ctx.pass;
  manifest["summary"] = ctx.summary;
  json outputs = json::array();
  for (const std::string& name : ctx.out.files) {
    const fs::path p = staging / name;
    outputs.push_back({{"file", name},
                       {"bytes", static_cast<std::int64_t>(fs::file_size(p))},
                       {"fnv1a64", hex64(fnv1a64_file(p))}});
  }
  manifest["outputs"] = outputs;
  manifest["wall_ms"] = wall_ms;  // timing only; not part of the output checksums
  {
    std::ofstream os(staging / "manifest.json", std::ios::binary);
    os << manifest.dump(2) << "\n";
    if (!os) fail_config("cannot write manifest");
  }
  ctx.out.files.push_back("manifest.json");

  fs::remove_all(out);
  fs::rename(staging, out);

  RunSummary sum;
  sum.kind = kind;
  sum.out_dir = out;
  sum.pass = ctx.pass;
  sum.summary = ctx.summary;
  sum.files = ctx.out.files;
  return sum;
}

RunSummary run_experiment_file(const fs::path& config_path, const RunOptions& opts) {
  std::ifstream is(config_path, std::ios::binary);
  if (!is) fail_config("cannot open config file: " + config_path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  RunOptions local = opts;
  if (local.base_dir.empty()) {
    local.base_dir = config_path.parent_path();
    if (local.base_dir.empty()) local.base_dir = fs::current_path();
  }
  return run_experiment_text(buf.str(), local);
}

RunSummary run_report(const fs::path& dir) {
  if (!fs::exists(dir) || !fs::is_directory(dir))
    fail_config("report directory does not exist: " + dir.string());
  std::vector<fs::path> run_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      run_dirs.push_back(entry.path());
  std::sort(run_dirs.begin(), run_dirs.end());
  if (run_dirs.empty()) fail_config("no manifests found under " + dir.string());

  struct Entry {
    std::string name, kind, summary;
    bool pass = false;
    json manifest;
  };
  std::vector<Entry> entries;
  for (const fs::path& rd : run_dirs) {
    std::ifstream is(rd / "manifest.json", std::ios::binary);
    std::stringstream buf;
    buf << is.rdbuf();
    const json mf = json::parse(buf.str(), nullptr, false);
    if (mf.is_discarded()) fail_config("corrupt manifest: " + (rd / "manifest.json").string());
    Entry e;
    e.name = rd.filename().string();
    e.kind = opt_str(mf, "kind", "?");
    e.summary = opt_str(mf, "summary", "");
    e.pass = opt_bool(mf, "pass", false);
    e.manifest = mf;
    entries.push_back(std::move(e));
  }

  std::ostringstream txt, csv;
  csv << "run,kind,pass,summary\n";
  std::size_t passing = 0;
  std::map<std::string, std::vector<const Entry*>> by_kind;
  for (const Entry& e : entries) {
    by_kind[e.kind].push_back(&e);
    if (e.pass) ++passing;
    csv << e.name << ',' << e.kind << ',' << (e.pass ? 1 : 0) << ",\"" << e.summary << "\"\n";
  }
  txt << "experiment report: " << passing << "/" << entries.size() << " runs passing\n";
  for (const auto& [kind, list] : by_kind) {
    txt << "\n[" << kind << "]\n";
    for (const Entry* e : list)
      txt << "  " << e->name << ": " << (e->pass ? "pass" : "FAIL") << " - " << e->summary << "\n";
    if (kind == "fit") {
      txt << "  fitted exponents vs targets (cubes/rects 1/n, balls 1/(n+1)):\n";
      for (const Entry* e : list) {
        std::ifstream fis(dir / e->name / "fit.json", std::ios::binary);
        if (!fis) continue;
        std::stringstream fb;
        fb << fis.rdbuf();
        const json fj = json::parse(fb.str(), nullptr, false);
        if (fj.is_discarded()) continue;
        txt << "    " << e->name << ": p_hat=" << num(opt_num(fj, "p_hat", 0))
            << " r2=" << num(opt_num(fj, "r2", 0));
        if (fj.contains("target_cube_exponent"))
          txt << " target_1_over_n=" << num(opt_num(fj, "target_cube_exponent", 0))
              << " target_1_over_n_plus_1=" << num(opt_num(fj, "target_ball_exponent", 0));
        txt << "\n";
      }
    }
    if (kind == "embed") {
      std::int64_t inst = 0, ok = 0;
      for (const Entry* e : list) {
        // Parse "theorem: k/m inclusions hold" out of the stored summary.
        std::int64_t k = 0, m = 0;
        const std::string& s = e->summary;
        const auto colon = s.find(": ");
        const auto slash = s.find('/', colon);
        const auto space = s.find(' ', slash);
        if (colon != std::string::npos && slash != std::string::npos &&
            space != std::string::npos) {
          k = std::atoll(s.substr(colon + 2, slash - colon - 2).c_str());
          m = std::atoll(s.substr(slash + 1, space - slash - 1).c_str());
        }
        inst += m;
        ok += k;
      }
      if (inst > 0)
        txt << "  embedding pass rate: " << ok << "/" << inst << " instances\n";
    }
  }

  std::ofstream tos(dir / "report.txt", std::ios::binary);
  tos << txt.str();
  std::ofstream cos(dir / "report.csv", std::ios::binary);
  cos << csv.str();
  if (!tos || !cos) fail_config("cannot write report files");

  RunSummary sum;
  sum.kind = "report";
  sum.out_dir = dir;
  sum.pass = passing == entries.size();
  sum.summary = std::to_string(passing) + "/" + std::to_string(entries.size()) + " runs passing";
  sum.files = {"report.txt", "report.csv"};
  return sum;
}

}  // namespace halolab
