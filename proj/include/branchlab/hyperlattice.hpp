#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "common.hpp"

namespace branchlab {

using P4 = std::array<double, 4>;  // (x0, x1, x2, x3) on x0^2 - |x|^2 = tau^2
using V3 = std::array<double, 3>;

namespace hyper {

inline double dot(const V3& a, const V3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline V3 sub(const V3& a, const V3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline V3 axpy(const V3& a, double t, const V3& d) { return {a[0] + t * d[0], a[1] + t * d[1], a[2] + t * d[2]}; }
inline V3 cross(const V3& a, const V3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const V3& a) { return std::sqrt(dot(a, a)); }
inline V3 spatial(const P4& x) { return {x[1], x[2], x[3]}; }

}  // namespace hyper

inline double minkowski(const P4& a, const P4& b) { return a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]; }

inline double proper_distance(const P4& a, const P4& b, double tau) {
  return tau * std::acosh(std::max(1.0, minkowski(a, b) / (tau * tau)));
}

inline P4 lift(const V3& x, double tau) {
  return {std::sqrt(tau * tau + hyper::dot(x, x)), x[0], x[1], x[2]};
}

inline V3 klein(const P4& x) { return {x[1] / x[0], x[2] / x[0], x[3] / x[0]}; }

inline P4 from_klein(const V3& k, double tau) {
  const double x0 = tau / std::sqrt(1.0 - hyper::dot(k, k));
  return {x0, x0 * k[0], x0 * k[1], x0 * k[2]};
}

// Boost sending the apex (tau,0,0,0) to P, applied to v.
inline P4 boost_from_apex(const P4& P, const P4& v, double tau) {
  const double g = P[0] / tau;
  const V3 u{P[1] / tau, P[2] / tau, P[3] / tau}, x = hyper::spatial(v);
  const double ux = hyper::dot(u, x);
  const V3 y = hyper::axpy(hyper::axpy(x, v[0], u), ux / (g + 1), u);
  return {g * v[0] + ux, y[0], y[1], y[2]};
}

// Invariant volume measure restricted to |x| < sigma tau: radial density r^2 / sqrt(1 + r^2/tau^2).
template <class Rng>
P4 sample_hyperboloid_point(double tau, double sigma, Rng& rng) {
  if (!(tau > 0) || sigma < 0) throw Error(ErrorKind::invalid_argument, "need tau > 0 and sigma >= 0");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  double r;
  do r = sigma * tau * std::cbrt(U(rng));
  while (U(rng) * std::sqrt(1 + r * r / (tau * tau)) > 1.0);
  V3 d{N(rng), N(rng), N(rng)};
  const double dn = hyper::norm(d);
  return lift({r * d[0] / dn, r * d[1] / dn, r * d[2] / dn}, tau);
}

inline double radial_cdf(double r, double tau, double sigma) {
  auto g = [](double u) { return 0.5 * (u * std::sqrt(1 + u * u) - std::asinh(u)); };
  return g(std::clamp(r / tau, 0.0, sigma)) / g(sigma);
}

inline double ball_volume(double tau, double sigma) {
  return 4 * constants::pi * tau * tau * tau * 0.5 * (sigma * std::sqrt(1 + sigma * sigma) - std::asinh(sigma));
}

// Kolmogorov–Smirnov: sup |F_n - F| and the asymptotic survival Q_KS with the usual small-n correction.
template <class F>
double ks_statistic(std::vector<double> xs, F cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double D = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = cdf(xs[i]);
    D = std::max({D, (i + 1) / n - c, c - i / n});
  }
  return D;
}

inline double ks_pvalue(double D, double n_eff) {
  const double s = std::sqrt(n_eff), lam = (s + 0.12 + 0.11 / s) * D;
  if (lam < 1e-3) return 1.0;
  double q = 0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lam * lam);
    q += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(q, 0.0, 1.0);
}

struct HyperLattice {
  double tau = 1.0, sigma = 0.6, rho = 0.1;
  std::vector<P4> points;
  std::vector<std::pair<int, int>> adjacency;
  std::uint64_t seed = 0;
  std::vector<std::string> log;

  double klein_radius() const { return sigma / std::sqrt(1 + sigma * sigma); }
  bool in_domain(const P4& x) const { return hyper::dot(hyper::spatial(x), hyper::spatial(x)) < sigma * sigma * tau * tau; }
};

// Uniform spatial hash. A proper distance d between domain points bounds the spatial distance by d sqrt(1+sigma^2).
class PointGrid {
 public:
  PointGrid(const HyperLattice& L) : L_(&L), h_(L.rho * std::sqrt(1 + L.sigma * L.sigma)) {
    for (std::size_t i = 0; i < L.points.size(); ++i) insert(static_cast<int>(i));
  }
  void insert(int i) { cells_[key(hyper::spatial(L_->points[i]))].push_back(i); }

  // every point within proper distance d of x (plus some farther ones)
  std::vector<int> near(const P4& x, double d) const {
    const auto [a, b, c] = key(hyper::spatial(x));
    const int w = static_cast<int>(std::ceil(d / L_->rho - 1e-12));
    std::vector<int> out;
    for (int i = a - w; i <= a + w; ++i)
      for (int j = b - w; j <= b + w; ++j)
        for (int k = c - w; k <= c + w; ++k)
          if (auto it = cells_.find({i, j, k}); it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
  }

  // nearest center and its distance; falls back to a full scan when nothing lies within 2 rho
  std::pair<int, double> nearest(const P4& x) const {
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    auto scan = [&](const std::vector<int>& idx) {
      for (int i : idx)
        if (double d = proper_distance(x, L_->points[i], L_->tau); d < bd) bd = d, best = i;
    };
    scan(near(x, 2 * L_->rho));
    if (bd > 2 * L_->rho) {
      std::vector<int> all(L_->points.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      scan(all);
    }
    return {best, bd};
  }

  bool covered(const P4& x, double d) const {
    for (int i : near(x, d))
      if (proper_distance(x, L_->points[i], L_->tau) <= d) return true;
    return false;
  }

 private:
  std::tuple<int, int, int> key(const V3& x) const {
    return {static_cast<int>(std::floor(x[0] / h_)), static_cast<int>(std::floor(x[1] / h_)),
            static_cast<int>(std::floor(x[2] / h_))};
  }
  const HyperLattice* L_;
  double h_;
  std::map<std::tuple<int, int, int>, std::vector<int>> cells_;
};

// Voronoi cell in Klein coordinates: a convex polytope bounded by bisector planes n.k <= c.
struct Face {
  int label;  // neighbour index, or -1 for the clipping box
  V3 n;
  double c;
  std::vector<V3> v;

  double area() const {
    V3 s{0, 0, 0};
    for (std::size_t i = 0; i < v.size(); ++i) {
      const V3 x = hyper::cross(v[i], v[(i + 1) % v.size()]);
      s = hyper::axpy(s, 1.0, x);
    }
    return 0.5 * std::abs(hyper::dot(s, n)) / hyper::norm(n);
  }

  // Euclidean distance from the Klein origin to the polygon
  double origin_distance() const {
    const double nn = hyper::norm(n);
    const V3 foot = hyper::axpy({0, 0, 0}, c / (nn * nn), n);
    bool inside = true;
    double sign = 0;
    for (std::size_t i = 0; i < v.size() && inside; ++i) {
      const V3 e = hyper::sub(v[(i + 1) % v.size()], v[i]);
      const double s = hyper::dot(hyper::cross(e, hyper::sub(foot, v[i])), n);
      if (sign == 0) sign = s;
      inside = s * sign >= 0;
    }
    if (inside) return std::abs(c) / nn;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const V3 a = v[i], e = hyper::sub(v[(i + 1) % v.size()], a);
      const double t = std::clamp(-hyper::dot(a, e) / hyper::dot(e, e), 0.0, 1.0);
      best = std::min(best, hyper::norm(hyper::axpy(a, t, e)));
    }
    return best;
  }
};

struct Cell {
  int center = -1;
  std::vector<Face> faces;
  bool interior = false;       // every vertex inside the sampled ball
  std::vector<V3> extremes;    // extreme points of cell ∩ closed ball (Klein)
  double max_extent = 0;       // farthest proper distance from the center over cell ∩ ball

  std::vector<V3> vertices() const {
    std::vector<V3> out;
    for (auto& f : faces)
      for (auto& p : f.v) {
        bool dup = false;
        for (auto& q : out) dup = dup || hyper::norm(hyper::sub(p, q)) < 1e-12;
        if (!dup) out.push_back(p);
      }
    return out;
  }
  bool contains(const V3& k, double tol = 0) const {
    for (auto& f : faces)
      if (hyper::dot(f.n, k) > f.c + tol) return false;
    return true;
  }
};

namespace detail {

inline void clip(Cell& cell, const V3& n, double c, int label) {
  constexpr double eps = 1e-13;
  bool cuts = false;
  for (auto& f : cell.faces)
    for (auto& p : f.v) cuts = cuts || hyper::dot(n, p) > c + eps;
  if (!cuts) return;
  std::vector<Face> kept;
  std::vector<V3> cut;
  for (auto& f : cell.faces) {
    std::vector<V3> out;
    for (std::size_t i = 0; i < f.v.size(); ++i) {
      const V3 &a = f.v[i], &b = f.v[(i + 1) % f.v.size()];
      const double da = hyper::dot(n, a) - c, db = hyper::dot(n, b) - c;
      if (da <= eps) {
        out.push_back(a);
        if (da >= -eps) cut.push_back(a);
      }
      if ((da <= eps) != (db <= eps) && std::abs(da - db) > 0) {
        const V3 p = hyper::axpy(a, da / (da - db), hyper::sub(b, a));
        out.push_back(p);
        cut.push_back(p);
      }
    }
    if (out.size() >= 3) kept.push_back({f.label, f.n, f.c, std::move(out)});
  }
  std::vector<V3> pts;
  for (auto& p : cut) {
    bool dup = false;
    for (auto& q : pts) dup = dup || hyper::norm(hyper::sub(p, q)) < 1e-12;
    if (!dup) pts.push_back(p);
  }
  if (pts.size() >= 3) {
    V3 g{0, 0, 0};
    for (auto& p : pts) g = hyper::axpy(g, 1.0 / pts.size(), p);
    const V3 a = std::abs(n[0]) < 0.9 * hyper::norm(n) ? V3{1, 0, 0} : V3{0, 1, 0};
    V3 u = hyper::cross(n, a);
    u = hyper::axpy({0, 0, 0}, 1 / hyper::norm(u), u);
    V3 w = hyper::cross(n, u);
    std::sort(pts.begin(), pts.end(), [&](const V3& p, const V3& q) {
      const V3 dp = hyper::sub(p, g), dq = hyper::sub(q, g);
      return std::atan2(hyper::dot(dp, w), hyper::dot(dp, u)) < std::atan2(hyper::dot(dq, w), hyper::dot(dq, u));
    });
    kept.push_back({label, n, c, std::move(pts)});
  }
  cell.faces = std::move(kept);
}

inline Cell clip_cell(const HyperLattice& L, int i, const std::vector<int>& cand) {
  Cell cell;
  cell.center = i;
  const double b = L.klein_radius() * (1 + 1e-6);
  for (int ax = 0; ax < 3; ++ax)
    for (double s : {-1.0, 1.0}) {
      V3 n{0, 0, 0};
      n[ax] = s;
      Face f{-1, n, b, {}};
      const int a1 = (ax + 1) % 3, a2 = (ax + 2) % 3;
      for (auto [p, q] : std::array<std::pair<double, double>, 4>{{{-b, -b}, {b, -b}, {b, b}, {-b, b}}}) {
        V3 v{0, 0, 0};
        v[ax] = s * b;
        v[a1] = p;
        v[a2] = q;
        f.v.push_back(v);
      }
      cell.faces.push_back(std::move(f));
    }
  const P4& x = L.points[i];
  std::vector<std::pair<double, int>> order;
  for (int j : cand)
    if (j != i) order.emplace_back(proper_distance(x, L.points[j], L.tau), j);
  std::sort(order.begin(), order.end());
  for (auto [d, j] : order) {
    const P4& y = L.points[j];
    clip(cell, {y[1] - x[1], y[2] - x[2], y[3] - x[3]}, y[0] - x[0], j);
  }
  // Distance from the center is quasi-convex in Klein coordinates, so its maximum over cell ∩ ball sits at
  // a vertex inside the ball or on the sphere part: edge crossings, the far point of each face circle, or the
  // point opposite the center.
  const double kb = L.klein_radius();
  cell.interior = true;
  for (auto& v : cell.vertices()) {
    const bool inside = hyper::dot(v, v) < kb * kb;
    cell.interior = cell.interior && inside;
    if (inside) cell.extremes.push_back(v);
  }
  if (!cell.interior) {
    const V3 cx = hyper::spatial(x);
    const double cn = hyper::norm(cx);
    auto on_sphere = [&](const V3& k) {
      if (cell.contains(k, 1e-12)) cell.extremes.push_back(hyper::axpy({0, 0, 0}, 1 - 1e-12, k));
    };
    if (cn > 0) on_sphere(hyper::axpy({0, 0, 0}, -kb / cn, cx));
    for (auto& f : cell.faces) {
      for (std::size_t e = 0; e < f.v.size(); ++e) {
        const V3 a = f.v[e], d = hyper::sub(f.v[(e + 1) % f.v.size()], a);
        const double A = hyper::dot(d, d), B = 2 * hyper::dot(a, d), C = hyper::dot(a, a) - kb * kb, disc = B * B - 4 * A * C;
        if (A == 0 || disc < 0) continue;
        for (double t : {(-B - std::sqrt(disc)) / (2 * A), (-B + std::sqrt(disc)) / (2 * A)})
          if (t >= 0 && t <= 1) on_sphere(hyper::axpy(a, t, d));
      }
      const double nn = hyper::norm(f.n), off = f.c / nn;
      if (std::abs(off) >= kb || cn == 0) continue;
      const V3 nh = hyper::axpy({0, 0, 0}, 1 / nn, f.n);
      const V3 p = hyper::axpy(hyper::axpy({0, 0, 0}, -1 / cn, cx), hyper::dot(cx, nh) / cn, nh);
      const double pn = hyper::norm(p);
      if (pn < 1e-14) continue;
      on_sphere(hyper::axpy(hyper::axpy({0, 0, 0}, off, nh), std::sqrt(kb * kb - off * off) / pn, p));
    }
  }
  for (auto& k : cell.extremes) cell.max_extent = std::max(cell.max_extent, proper_distance(x, from_klein(k, L.tau), L.tau));
  return cell;
}

}  // namespace detail

// Cell of center i. Candidates start at 2 rho and grow to twice the cell's extent inside the ball, after which
// no farther center can cut that part of the cell.
inline Cell voronoi_cell(const HyperLattice& L, const PointGrid& G, int i) {
  double R = 2 * L.rho;
  for (;;) {
    Cell c = detail::clip_cell(L, i, G.near(L.points[i], R));
    if (2 * c.max_extent <= R + 1e-12) return c;
    R = 2 * c.max_extent * (1 + 1e-9);
  }
}

// A facet counts when it meets the sampled ball; parts outside the ball are not covered by the lattice.
inline bool is_facet(const HyperLattice& L, const Face& f) {
  return f.label >= 0 && f.area() > 1e-14 && f.origin_distance() < L.klein_radius();
}

inline std::vector<std::pair<int, int>> neighbor_graph(const HyperLattice& L) {
  PointGrid G(L);
  std::set<std::pair<int, int>> adj;
  for (std::size_t i = 0; i < L.points.size(); ++i)
    for (auto& f : voronoi_cell(L, G, static_cast<int>(i)).faces)
      if (is_facet(L, f)) adj.insert(std::minmax(static_cast<int>(i), f.label));
  return {adj.begin(), adj.end()};
}

inline std::vector<int> degrees(const HyperLattice& L) {
  std::vector<int> d(L.points.size(), 0);
  for (auto [a, b] : L.adjacency) ++d[a], ++d[b];
  return d;
}

struct FillOptions {
  int probes = 100000;
  int dart_failures = 2000;  // consecutive rejections that end the dart-throwing phase
};

namespace detail {

// New point drawn from the invariant measure inside the hyperbolic ball of radius r around v.
template <class Rng>
P4 draw_near(const HyperLattice& L, const P4& v, double r, Rng& rng) {
  const P4 a = sample_hyperboloid_point(L.tau, std::sinh(r / L.tau), rng);
  return boost_from_apex(v, a, L.tau);
}

template <class Rng>
int fill_holes(HyperLattice& L, Rng& rng, const FillOptions& opt) {
  PointGrid G(L);
  int added = 0;
  auto add = [&](const P4& p) {
    L.points.push_back(p);
    G.insert(static_cast<int>(L.points.size()) - 1);
    ++added;
  };
  for (;;) {
    // holes at extreme points of the cells
    int round = 0;
    const int n0 = static_cast<int>(L.points.size());
    for (int i = 0; i < n0; ++i) {
      const Cell c = voronoi_cell(L, G, i);
      if (c.max_extent <= L.rho) continue;
      for (auto& k : c.extremes) {
        const P4 v = from_klein(k, L.tau);
        if (G.covered(v, L.rho)) continue;
        const double gap = G.nearest(v).second - L.rho;
        P4 p = v;
        for (int t = 0; t < 100; ++t) {
          const P4 q = draw_near(L, v, gap, rng);
          if (L.in_domain(q) && !G.covered(q, L.rho)) {
            p = q;
            break;
          }
        }
        add(p);
        ++round;
      }
    }
    if (round) continue;
    // safety net against round-off in the extreme-point search
    for (int t = 0; t < opt.probes; ++t) {
      const P4 q = sample_hyperboloid_point(L.tau, L.sigma, rng);
      if (!G.covered(q, L.rho)) add(q), ++round;
    }
    if (!round) break;
  }
  return added;
}

}  // namespace detail

inline HyperLattice build_random_lattice(double tau, double sigma, double rho, std::uint64_t seed,
                                         const FillOptions& opt = {}) {
  if (!(tau > 0 && sigma > 0 && rho > 0)) throw Error(ErrorKind::invalid_argument, "tau, sigma, rho must be positive");
  if (rho > 0.5 * sigma * tau) throw Error(ErrorKind::invalid_argument, "rho must be small against sigma tau");
  HyperLattice L;
  L.tau = tau;
  L.sigma = sigma;
  L.rho = rho;
  L.seed = seed;
  std::mt19937_64 rng(seed);
  PointGrid G(L);
  for (int fails = 0; fails < opt.dart_failures;) {
    const P4 p = sample_hyperboloid_point(tau, sigma, rng);
    if (G.covered(p, rho)) {
      ++fails;
      continue;
    }
    L.points.push_back(p);
    G.insert(static_cast<int>(L.points.size()) - 1);
    fails = 0;
  }
  const std::size_t darts = L.points.size();
  const int filled = detail::fill_holes(L, rng, opt);
  L.log.push_back("darts " + std::to_string(darts) + ", hole fills " + std::to_string(filled));
  L.adjacency = neighbor_graph(L);
  return L;
}

// Rescale to tau + delta, then fill any hole with invariant-measure draws.
inline HyperLattice evolve_lattice(const HyperLattice& L, double delta, const FillOptions& opt = {}) {
  if (delta < 0) throw Error(ErrorKind::invalid_argument, "delta must be >= 0");
  if (delta > L.rho / 10) throw Error(ErrorKind::invalid_argument, "delta above rho/10 per step");
  if (delta == 0) return L;
  HyperLattice out = L;
  const double f = 1 + delta / L.tau;
  for (auto& p : out.points)
    for (auto& c : p) c *= f;
  out.tau = L.tau + delta;
  std::uint64_t bits;
  std::memcpy(&bits, &out.tau, sizeof bits);
  std::seed_seq sq{L.seed, static_cast<std::uint64_t>(L.points.size()), bits};
  std::mt19937_64 rng(sq);
  const int filled = detail::fill_holes(out, rng, opt);
  out.log.push_back("tau " + std::to_string(out.tau) + ", hole fills " + std::to_string(filled));
  out.adjacency = neighbor_graph(out);
  return out;
}

inline double min_pair_distance(const HyperLattice& L) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < L.points.size(); ++i)
    for (std::size_t j = i + 1; j < L.points.size(); ++j) d = std::min(d, proper_distance(L.points[i], L.points[j], L.tau));
  return d;
}

// Largest distance from a probe to its nearest center over n invariant-measure probes.
inline double probe_cover_radius(const HyperLattice& L, int n, std::uint64_t seed) {
  PointGrid G(L);
  std::mt19937_64 rng(seed);
  double worst = 0;
  for (int t = 0; t < n; ++t) worst = std::max(worst, G.nearest(sample_hyperboloid_point(L.tau, L.sigma, rng)).second);
  return worst;
}

// Monte Carlo hyperbolic volume of an interior cell: Klein volume element tau^3 (1-|k|^2)^-2 over the polytope.
inline double cell_volume_mc(const Cell& c, double tau, int samples, std::mt19937_64& rng) {
  V3 lo{1, 1, 1}, hi{-1, -1, -1};
  for (auto& v : c.vertices())
    for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], v[a]), hi[a] = std::max(hi[a], v[a]);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double acc = 0;
  for (int s = 0; s < samples; ++s) {
    const V3 k{lo[0] + (hi[0] - lo[0]) * U(rng), lo[1] + (hi[1] - lo[1]) * U(rng), lo[2] + (hi[2] - lo[2]) * U(rng)};
    if (c.contains(k)) {
      const double w = 1 - hyper::dot(k, k);
      acc += 1 / (w * w);
    }
  }
  return tau * tau * tau * acc / samples * (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
}

struct GeodesicWalk {
  std::vector<int> cells;     // in traversal order
  std::vector<double> exits;  // Klein segment parameter where each cell is left (last entry 1)
};

// Geodesic of proper length lambda from P with unit direction dir (given in P's rest frame).
inline std::pair<P4, P4> geodesic_endpoints(const HyperLattice& L, const P4& P, const V3& dir, double lambda) {
  const double dn = hyper::norm(dir);
  if (!(dn > 0) || lambda < 0) throw Error(ErrorKind::invalid_argument, "need a direction and lambda >= 0");
  const P4 U = boost_from_apex(P, {0, dir[0] / dn, dir[1] / dn, dir[2] / dn}, L.tau);
  const double s = lambda / L.tau;
  P4 E;
  for (int a = 0; a < 4; ++a) E[a] = std::cosh(s) * P[a] + L.tau * std::sinh(s) * U[a];
  return {P, E};
}

inline GeodesicWalk geodesic_walk(const HyperLattice& L, const P4& P, const V3& dir, double lambda) {
  const auto [A4, B4] = geodesic_endpoints(L, P, dir, lambda);
  if (!L.in_domain(A4) || !L.in_domain(B4)) throw Error(ErrorKind::geodesic_exits, "geodesic leaves the ball");
  PointGrid G(L);
  const V3 A = klein(A4), D = hyper::sub(klein(B4), A);
  GeodesicWalk w;
  int c = G.nearest(A4).first;
  double t = 0;
  for (;;) {
    w.cells.push_back(c);
    const P4& x = L.points[c];
    double best = 1.0;
    int next = -1;
    for (int j : G.near(x, 2 * L.rho)) {
      if (j == c) continue;
      const P4& y = L.points[j];
      const V3 n{y[1] - x[1], y[2] - x[2], y[3] - x[3]};
      const double nd = hyper::dot(n, D);
      if (nd <= 0) continue;
      const double tj = (y[0] - x[0] - hyper::dot(n, A)) / nd;
      if (tj > t && tj < best) best = tj, next = j;
    }
    w.exits.push_back(best);
    if (next < 0) break;
    c = next;
    t = best;
  }
  return w;
}

inline int geodesic_crossings(const HyperLattice& L, const P4& P, const V3& dir, double lambda) {
  return static_cast<int>(geodesic_walk(L, P, dir, lambda).cells.size());
}

// Longest geodesic from P along dir that stays inside the ball.
inline double geodesic_exit_length(const HyperLattice& L, const P4& P, const V3& dir) {
  const auto [A4, B4] = geodesic_endpoints(L, P, dir, L.tau);
  const V3 A = klein(A4), D = hyper::sub(klein(B4), A);
  const double kb = L.klein_radius(), a = hyper::dot(D, D), b = 2 * hyper::dot(A, D), c = hyper::dot(A, A) - kb * kb;
  const double t = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
  return proper_distance(A4, from_klein(hyper::axpy(A, t, D), L.tau), L.tau);
}

struct LatticeStats {
  std::size_t points = 0, edges = 0, interior_cells = 0;
  double min_distance = 0, max_extent = 0, mean_degree = 0;
  int max_degree = 0;
};

inline LatticeStats lattice_stats(const HyperLattice& L) {
  LatticeStats s;
  s.points = L.points.size();
  s.edges = L.adjacency.size();
  s.min_distance = min_pair_distance(L);
  const auto d = degrees(L);
  for (int x : d) s.max_degree = std::max(s.max_degree, x), s.mean_degree += x;
  if (!d.empty()) s.mean_degree /= d.size();
  PointGrid G(L);
  for (std::size_t i = 0; i < L.points.size(); ++i) {
    const Cell c = voronoi_cell(L, G, static_cast<int>(i));
    s.interior_cells += c.interior;
    s.max_extent = std::max(s.max_extent, c.max_extent);
  }
  return s;
}

}  // namespace branchlab
