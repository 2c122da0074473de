#pragma once

#include <deque>
#include <iomanip>
#include <optional>
#include <sstream>

#include "fock.hpp"
#include "kspace.hpp"

namespace branchlab {

// ---------------------------------------------------------------------------
// Closed-form bounds

struct BoundValue {
  double value = 0.0;
  bool in_range = false;  // m > 4 and n > 1, where the lower bound is derived
};

inline BoundValue lower_bound_formula(int m, int n, double V, int q) {
  if (m < 1 || n < 1 || V < 0 || q < 0) throw Error(ErrorKind::invalid_argument, "lower bound needs m,n >= 1 and V,q >= 0");
  if (m == 1) return {0.0, false};  // a single term is a product state
  const double v = std::sqrt(m * V / 192.0) / constants::pi + constants::pi / std::sqrt(192.0) * q / std::sqrt(double(n));
  return {v, m > 4 && n > 1};
}

inline double upper_bound_formula(int m, int n, double V, double r) {
  if (m < 0 || n < 0 || V < 0 || r < 0) throw Error(ErrorKind::invalid_argument, "upper bound needs nonnegative inputs");
  const double mn = double(m) * n;
  return constants::c2 * std::sqrt(mn * V) + constants::c3 * mn + constants::c4 * std::sqrt(mn) * r;
}

// ---------------------------------------------------------------------------
// Step helpers

struct AngledHop {
  GeneratorElement gen;
  double angle = 0.0;
};

// One step out of hops with individual angles: theta = max angle, blocks scaled by angle/theta.
inline TrajectoryStep make_step(const std::vector<AngledHop>& hops) {
  TrajectoryStep s;
  double th = 0;
  for (auto& h : hops) th = std::max(th, std::abs(h.angle));
  s.theta = th;
  if (th == 0) return s;
  for (auto& h : hops) {
    GeneratorElement g = h.gen;
    g.block *= h.angle / th;
    s.gens.push_back(std::move(g));
  }
  check_disjoint(s.gens);
  return s;
}

inline std::set<Coord> support(const Trajectory& t) {
  std::set<Coord> s;
  for (auto& st : t.steps)
    for (auto& g : st.gens) {
      s.insert(g.x);
      s.insert(g.y);
    }
  return s;
}

// Runs two trajectories on disjoint supports side by side, re-timed on normalized
// arclength so their instantaneous norms keep a fixed ratio: cost = sqrt(A^2 + B^2).
inline Trajectory parallel_compose(const Trajectory& a, const Trajectory& b) {
  auto sa = support(a), sb = support(b);
  for (auto& c : sa)
    if (sb.count(c)) throw Error(ErrorKind::overlap, "parallel composition needs disjoint supports");
  const double A = a.cost(), Bc = b.cost();
  if (A == 0) return b;
  if (Bc == 0) return a;
  auto marks = [](const Trajectory& t, double tot) {
    std::vector<double> m{0.0};
    double acc = 0;
    for (auto& s : t.steps) {
      acc += s.cost();
      m.push_back(acc / tot);
    }
    m.back() = 1.0;
    return m;
  };
  const auto ma = marks(a, A), mb = marks(b, Bc);
  std::vector<double> cuts(ma.begin(), ma.end());
  cuts.insert(cuts.end(), mb.begin(), mb.end());
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(), [](double x, double y) { return std::abs(x - y) < 1e-15; }), cuts.end());

  // piece of trajectory t covering normalized arclength [u0,u1]: (step index, angle)
  auto piece = [](const Trajectory& t, const std::vector<double>& m, double u0, double u1) -> std::optional<std::pair<std::size_t, double>> {
    const double mid = 0.5 * (u0 + u1);
    for (std::size_t k = 0; k + 1 < m.size(); ++k)
      if (mid >= m[k] && mid <= m[k + 1]) {
        const double w = m[k + 1] - m[k];
        if (w <= 0) return std::nullopt;
        return std::make_pair(k, t.steps[k].theta * (u1 - u0) / w);
      }
    return std::nullopt;
  };
  Trajectory out;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double u0 = cuts[c], u1 = cuts[c + 1];
    if (u1 - u0 < 1e-15) continue;
    TrajectoryStep s;
    s.theta = 1.0;
    for (auto [t, m] : {std::pair{&a, &ma}, std::pair{&b, &mb}}) {
      auto p = piece(*t, *m, u0, u1);
      if (!p) continue;
      for (auto g : t->steps[p->first].gens) {
        g.block *= p->second;
        s.gens.push_back(std::move(g));
      }
    }
    check_disjoint(s.gens);
    out.steps.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Desk-scale layout of the entangled family: mn cubes of edge d on a grid in the
// x1-x2 plane (spacing d+1), with free space above for the split grid.

struct DeskLayout {
  Lattice lattice;
  EntangledStateSpec spec;
};

inline DeskLayout make_desk_layout(int m, int n, int d, std::vector<std::vector<int>> spins = {},
                                   std::vector<cplx> phases = {}, int q = 0) {
  if (m < 1 || n < 1 || d < 1) throw Error(ErrorKind::invalid_argument, "layout needs m, n, d >= 1");
  const int mn = m * n;
  const int cols = static_cast<int>(std::ceil(std::sqrt(double(mn))));
  const int rows = (mn + cols - 1) / cols;
  const int ext = std::max({cols * (d + 1) - 1, rows * (d + 1) - 1, d + 1, m, n});
  const int B = (ext + 1) / 2;
  DeskLayout out;
  out.lattice = build_lattice(B);
  auto& s = out.spec;
  s.m = m;
  s.n = n;
  s.q = q;
  s.regions.assign(m, std::vector<Region>(n));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const int k = i * n + j;
      s.regions[i][j] = Region{{-B + (k % cols) * (d + 1), -B + (k / cols) * (d + 1), -B}, d};
    }
  s.spins = spins.empty() ? std::vector<std::vector<int>>(m, std::vector<int>(n, 1)) : spins;
  if (phases.empty())
    for (int i = 0; i < m; ++i) s.phases.push_back(std::polar(1.0, 0.7 * i));
  else
    s.phases = phases;
  validate_spec(s, &out.lattice);
  return out;
}

// ---------------------------------------------------------------------------
// Split: n up-fermions on row 0 to (1/sqrt m) sum_i |term i>. For n >= 2 term i sits on row i,
// columns i..i+n-1; every hop changes both of its sites, so each new row is shifted by one column.

inline Coord grid_point(const Coord& x00, int i, int j) { return {x00[0] + i, x00[1] + j, x00[2]}; }

inline Coord split_site(const Coord& x00, int n, int i, int j) { return grid_point(x00, i, j + (n > 1 ? i : 0)); }

// far corner of the sites the split touches
inline Coord split_extent(const Coord& x00, int m, int n) {
  return grid_point(x00, m - 1, n > 1 ? m + n - 2 : 0);
}

inline void check_grid(const Lattice& L, const Coord& x00, int m, int n) {
  if (!L.contains(x00) || !L.contains(split_extent(x00, m, n)))
    throw Error(ErrorKind::grid_collision, "split grid leaves the lattice");
}

inline StateVector split_reference_state(const Lattice& L, const Coord& x00, int n, int n_b = 2) {
  std::vector<FermionWavefunction> ps;
  for (int j = 0; j < n; ++j) ps.push_back(point_wavefunction(L, split_site(x00, n, 0, j), 1));
  return make_product_state(L, ps, {}, n_b);
}

inline Trajectory build_split_trajectory(const Lattice& L, int m, int n, const Coord& x00, int n_b = 2) {
  if (m < 1 || n < 1) throw Error(ErrorKind::invalid_argument, "split needs m,n >= 1");
  check_grid(L, x00, m, n);
  Trajectory t;
  const double half = constants::pi / 2;
  const int E = 0, UP = LocalSpace::site_state(true, false, 0), DN = LocalSpace::site_state(false, true, 0),
            UD = LocalSpace::site_state(true, true, 0);
  auto hop = [&](const Coord& x, const Coord& y, int ax, int ay, int bx, int by) {
    return hop_generator(x, y, local_index(n_b, ax, ay), local_index(n_b, bx, by), 0.0, n_b);
  };
  for (int i = 0; i + 1 < m; ++i) {
    const double th = std::asin(std::sqrt((m - i - 1.0) / (m - i)));
    auto row = [&](int j) { return grid_point(x00, i, j + i); };
    auto below = [&](int j) { return grid_point(x00, i + 1, j + i); };
    if (n == 1) {
      t.steps.push_back({{move_generator(grid_point(x00, i, 0), 1, grid_point(x00, i + 1, 0), 1, 0.0, n_b)}, th});
      continue;
    }
    // The staying row is all up. The leaving branch gets a doubly occupied site that walks right;
    // it leaves a down spin behind at every column, so only that branch matches the later hops.
    t.steps.push_back({{hop(row(0), row(1), UP, UP, E, UD)}, th});
    for (int j = 1; j + 1 < n; ++j) t.steps.push_back({{hop(row(j), row(j + 1), UD, UP, DN, UD)}, half});
    t.steps.push_back({{hop(row(n - 1), row(n), UD, E, DN, UP)}, half});
    for (int j = 1; j < n; ++j) t.steps.push_back({{move_generator(row(j), -1, below(j), 1, 0.0, n_b)}, half});
    t.steps.push_back({{move_generator(row(n), 1, below(n), 1, 0.0, n_b)}, half});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reposition: vertex-disjoint paths from the grid to the cube centers.

struct Routing {
  std::vector<std::vector<std::vector<Coord>>> paths;  // [i][j], vertex lists start..target
  int r = 0;
  Coord x00{};
};

namespace detail {

inline std::optional<std::vector<Coord>> bfs_path(const Lattice& L, const Coord& from, const Coord& to,
                                                  const std::vector<char>& blocked) {
  const int s = L.index(from), g = L.index(to);
  if (s == g) return std::vector<Coord>{from};
  std::vector<int> prev(static_cast<std::size_t>(L.size()), -1);
  std::deque<int> q{s};
  prev[s] = s;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    if (u == g) break;
    for (int v : L.neighbors(u)) {
      if (prev[v] != -1 || (blocked[v] && v != g)) continue;
      prev[v] = u;
      q.push_back(v);
    }
  }
  if (prev[g] == -1) return std::nullopt;
  std::vector<Coord> path;
  for (int v = g; v != s; v = prev[v]) path.push_back(L.coord(v));
  path.push_back(from);
  std::reverse(path.begin(), path.end());
  return path;
}

inline std::optional<Routing> route(const Lattice& L, const EntangledStateSpec& s, const Coord& x00) {
  std::vector<char> blocked(static_cast<std::size_t>(L.size()), 0);
  std::vector<std::tuple<int, int, int>> order;
  for (int i = 0; i < s.m; ++i)
    for (int j = 0; j < s.n; ++j) {
      const Coord a = split_site(x00, s.n, i, j), b = s.regions[i][j].center();
      const int ia = L.index(a), ib = L.index(b);
      if (blocked[ia] || (blocked[ib] && ia != ib)) return std::nullopt;  // shared endpoints
      blocked[ia] = blocked[ib] = 1;
      order.emplace_back(-manhattan(a, b), i, j);
    }
  std::sort(order.begin(), order.end());
  Routing R;
  R.x00 = x00;
  R.paths.assign(s.m, std::vector<std::vector<Coord>>(s.n));
  for (auto [neg, i, j] : order) {
    const Coord a = split_site(x00, s.n, i, j), b = s.regions[i][j].center();
    blocked[L.index(a)] = 0;
    auto p = bfs_path(L, a, b, blocked);
    if (!p) return std::nullopt;
    for (auto& c : *p) blocked[L.index(c)] = 1;
    R.r = std::max(R.r, static_cast<int>(p->size()) - 1);
    R.paths[i][j] = std::move(*p);
  }
  return R;
}

}  // namespace detail

// Chooses the split-grid base point minimizing the longest path; ties go to the first in site order.
inline Routing find_routing(const Lattice& L, const EntangledStateSpec& s, std::optional<Coord> x00 = std::nullopt) {
  if (x00) {
    check_grid(L, *x00, s.m, s.n);
    auto r = detail::route(L, s, *x00);
    if (!r) throw Error(ErrorKind::router_failure, "no vertex-disjoint path family from the given grid");
    return *r;
  }
  std::vector<std::pair<int, int>> cand;
  for (int k = 0; k < L.size(); ++k) {
    const Coord c = L.coord(k);
    if (!L.contains(split_extent(c, s.m, s.n))) continue;
    int lb = 0;
    for (int i = 0; i < s.m; ++i)
      for (int j = 0; j < s.n; ++j) lb = std::max(lb, manhattan(split_site(c, s.n, i, j), s.regions[i][j].center()));
    cand.emplace_back(lb, k);
  }
  std::stable_sort(cand.begin(), cand.end());
  std::optional<Routing> best;
  for (auto [lb, k] : cand) {
    if (best && lb >= best->r) break;
    auto r = detail::route(L, s, L.coord(k));
    if (r && (!best || r->r < best->r)) best = r;
  }
  if (!best) throw Error(ErrorKind::router_failure, "no vertex-disjoint path family found for any grid position");
  return *best;
}

inline Trajectory build_reposition_trajectory(const Lattice& L, const EntangledStateSpec& s, const Routing& R,
                                              int n_b = 2) {
  const double half = constants::pi / 2;
  std::vector<std::vector<AngledHop>> steps(static_cast<std::size_t>(R.r));
  for (int i = 0; i < s.m; ++i) {
    int carrier = -1;
    for (int j = s.n - 1; j >= 0 && carrier < 0; --j)
      if (R.paths[i][j].size() > 1) carrier = j;
    if (carrier < 0 && std::abs(s.phases[i] - cplx(1, 0)) > 1e-15)
      throw Error(ErrorKind::router_failure, "term phase needs at least one nonempty path");
    for (int j = 0; j < s.n; ++j) {
      const auto& p = R.paths[i][j];
      const int len = static_cast<int>(p.size()) - 1;
      if (len == 0 && s.spins[i][j] != 1)
        throw Error(ErrorKind::router_failure, "spin flip needs a path of length >= 1");
      for (int k = 0; k < len; ++k) {
        const bool last = k + 1 == len;
        const int spin_to = last ? s.spins[i][j] : 1;
        const double phi = (last && j == carrier) ? std::arg(s.phases[i]) : 0.0;
        steps[k].push_back({move_generator(p[k], 1, p[k + 1], spin_to, phi, n_b), half});
      }
    }
  }
  Trajectory t;
  for (auto& st : steps) t.steps.push_back(make_step(st));
  return t;
}

// ---------------------------------------------------------------------------
// Fan-out: recursive box halving, axis 1 then 2 then 3 per level.

struct FanoutPlan {
  std::vector<std::vector<AngledHop>> steps;  // for one particle, spin +1, cube corner at origin
  std::vector<int> level_of_step;
};

namespace detail {

struct Box {
  std::array<int, 3> lo, hi;
  Coord pos;
};

inline Coord shifted(Coord c, int ax, int by) {
  c[ax] += by;
  return c;
}

inline FanoutPlan fanout_plan(int d, int spin, const Coord& corner, int n_b) {
  FanoutPlan plan;
  std::vector<Box> boxes{{{corner[0], corner[1], corner[2]},
                          {corner[0] + d, corner[1] + d, corner[2] + d},
                          {corner[0] + (d - 1) / 2, corner[1] + (d - 1) / 2, corner[2] + (d - 1) / 2}}};
  const double half = constants::pi / 2;
  int level = 0;
  auto unfinished = [&] {
    for (auto& b : boxes)
      for (int a = 0; a < 3; ++a)
        if (b.hi[a] - b.lo[a] > 1) return true;
    return false;
  };
  while (unfinished()) {
    ++level;
    for (int ax = 0; ax < 3; ++ax) {
      std::vector<AngledHop> split;
      std::vector<std::vector<AngledHop>> moves;
      std::vector<Box> next;
      for (auto& b : boxes) {
        const int Lx = b.hi[ax] - b.lo[ax];
        if (Lx <= 1) {
          next.push_back(b);
          continue;
        }
        const int c = b.lo[ax] + (Lx - 1) / 2;
        Box A = b, Bx = b;
        A.hi[ax] = c + 1;
        Bx.lo[ax] = c + 1;
        const int nA = A.hi[ax] - A.lo[ax], nB = Bx.hi[ax] - Bx.lo[ax];
        split.push_back({move_generator(b.pos, spin, shifted(b.pos, ax, 1), spin, 0.0, n_b),
                         std::asin(std::sqrt(double(nB) / Lx))});
        A.pos = b.pos;
        Bx.pos = shifted(b.pos, ax, 1);
        const int ca = A.lo[ax] + (nA - 1) / 2, cb = Bx.lo[ax] + (nB - 1) / 2;
        // A walks down to its center, B walks up; on opposite sides of the cut, so never the same sites
        for (int k = 0; A.pos[ax] > ca; ++k) {
          if (static_cast<int>(moves.size()) <= k) moves.emplace_back();
          moves[k].push_back({move_generator(A.pos, spin, shifted(A.pos, ax, -1), spin, 0.0, n_b), half});
          A.pos[ax] -= 1;
        }
        for (int k = 0; Bx.pos[ax] < cb; ++k) {
          if (static_cast<int>(moves.size()) <= k) moves.emplace_back();
          moves[k].push_back({move_generator(Bx.pos, spin, shifted(Bx.pos, ax, 1), spin, 0.0, n_b), half});
          Bx.pos[ax] += 1;
        }
        next.push_back(A);
        next.push_back(Bx);
      }
      if (!split.empty()) {
        plan.steps.push_back(split);
        plan.level_of_step.push_back(level);
      }
      for (auto& mv : moves) {
        plan.steps.push_back(mv);
        plan.level_of_step.push_back(level);
      }
      boxes = std::move(next);
    }
  }
  return plan;
}

}  // namespace detail

struct FanoutResult {
  Trajectory trajectory;
  std::vector<double> level_costs;  // cost per halving level
};

// Spreads point-localized particles at the centers of equal cubes over the cubes, all in parallel.
inline FanoutResult build_fanout(const std::vector<Region>& cubes, const std::vector<int>& spins, int n_b = 2) {
  FanoutResult res;
  if (cubes.empty()) return res;
  const int d = cubes[0].d;
  for (auto& c : cubes)
    if (c.d != d) throw Error(ErrorKind::invalid_argument, "parallel fan-out needs equal cubes");
  std::vector<FanoutPlan> plans;
  for (std::size_t k = 0; k < cubes.size(); ++k) plans.push_back(detail::fanout_plan(d, spins[k], cubes[k].corner, n_b));
  const std::size_t ns = plans[0].steps.size();
  for (std::size_t s = 0; s < ns; ++s) {
    std::vector<AngledHop> all;
    for (auto& p : plans) all.insert(all.end(), p.steps[s].begin(), p.steps[s].end());
    res.trajectory.steps.push_back(make_step(all));
    const int lvl = plans[0].level_of_step[s];
    if (static_cast<int>(res.level_costs.size()) < lvl) res.level_costs.resize(static_cast<std::size_t>(lvl), 0.0);
    res.level_costs[static_cast<std::size_t>(lvl - 1)] += res.trajectory.steps.back().cost();
  }
  return res;
}

inline FanoutResult build_fanout_trajectory(const Region& cube, int spin = 1, int n_b = 2) {
  return build_fanout({cube}, {spin}, n_b);
}

// ---------------------------------------------------------------------------
// Constructive interval

struct ComplexityInterval {
  double lower = 0.0;
  bool lower_in_range = false;
  double upper = 0.0;          // cost of the witness
  double upper_formula = 0.0;  // closed-form bound at the routed r
  int r = 0;
  std::optional<Trajectory> witness;
  StateVector reference;  // product state the witness starts from
  double fidelity = 0.0;
  double split_cost = 0.0, reposition_cost = 0.0, fanout_cost = 0.0;
  Coord base_point{};
};

inline void require_disjoint_cubes(const EntangledStateSpec& s) {
  std::vector<Region> all;
  for (auto& row : s.regions) all.insert(all.end(), row.begin(), row.end());
  for (std::size_t a = 0; a < all.size(); ++a)
    for (std::size_t b = a + 1; b < all.size(); ++b)
      if (all[a].intersects(all[b])) throw Error(ErrorKind::overlap, "constructive witness needs pairwise disjoint cubes");
}

inline ComplexityInterval constructive_complexity(const Lattice& L, const EntangledStateSpec& s, int n_b = 2,
                                                  std::optional<Coord> x00 = std::nullopt, bool verify = true) {
  validate_spec(s, &L);
  require_disjoint_cubes(s);
  const Routing R = find_routing(L, s, x00);
  ComplexityInterval out;
  out.base_point = R.x00;
  out.r = R.r;
  const Trajectory split = build_split_trajectory(L, s.m, s.n, R.x00, n_b);
  const Trajectory repo = build_reposition_trajectory(L, s, R, n_b);
  std::vector<Region> cubes;
  std::vector<int> spins;
  for (int i = 0; i < s.m; ++i)
    for (int j = 0; j < s.n; ++j) {
      cubes.push_back(s.regions[i][j]);
      spins.push_back(s.spins[i][j]);
    }
  const Trajectory fan = build_fanout(cubes, spins, n_b).trajectory;
  out.split_cost = split.cost();
  out.reposition_cost = repo.cost();
  out.fanout_cost = fan.cost();
  out.witness = concat(concat(split, repo), fan);
  out.upper = out.witness->cost();
  out.upper_formula = upper_bound_formula(s.m, s.n, s.volume(), R.r);
  const auto lb = lower_bound_formula(s.m, s.n, s.volume(), s.q);
  out.lower = lb.value;
  out.lower_in_range = lb.in_range;
  out.reference = split_reference_state(L, R.x00, s.n, n_b);
  if (verify) {
    const auto target = make_entangled_state(L, s, n_b);
    out.fidelity = fidelity(apply_trajectory(L, out.reference, *out.witness), target);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schmidt rotation lower bound

// Disjoint sets E of 2n sites, one site from each of 2n distinct same-spin regions, all of
// one parity; regions are taken round-robin over terms so each term contributes once when m >= 2n.
inline std::vector<std::vector<int>> build_E_sets(const Lattice& L, const EntangledStateSpec& s) {
  std::map<int, std::vector<std::pair<int, int>>> by_spin;  // spin -> (i,j), i-major within each j
  for (int j = 0; j < s.n; ++j)
    for (int i = 0; i < s.m; ++i) by_spin[s.spins[i][j]].emplace_back(i, j);
  auto& regs = by_spin[1].size() >= by_spin[-1].size() ? by_spin[1] : by_spin[-1];
  const std::size_t need = 2 * static_cast<std::size_t>(s.n);
  if (regs.size() < need) return {};
  int count[2] = {0, 0};
  for (auto [i, j] : regs)
    for (auto& c : s.regions[i][j].sites()) ++count[Lattice::parity(c)];
  const int par = count[0] >= count[1] ? 0 : 1;
  std::vector<std::vector<Coord>> pool;
  for (auto [i, j] : regs) {
    std::vector<Coord> p;
    for (auto& c : s.regions[i][j].sites())
      if (Lattice::parity(c) == par) p.push_back(c);
    pool.push_back(p);
  }
  const int target = std::max(1, s.m * s.volume() / 8);
  std::vector<std::vector<int>> out;
  std::vector<std::size_t> used(pool.size(), 0);
  std::size_t cursor = 0;
  while (static_cast<int>(out.size()) < target) {
    std::vector<int> E;
    std::set<std::size_t> regions_used;
    for (std::size_t tries = 0; E.size() < need && tries < pool.size(); ++tries) {
      const std::size_t r = (cursor + tries) % pool.size();
      if (regions_used.count(r) || used[r] >= pool[r].size()) continue;
      const int site = L.index(pool[r][used[r]]);
      E.push_back(site);
      regions_used.insert(r);
    }
    if (E.size() < need) break;
    for (std::size_t r : regions_used) ++used[r];
    out.push_back(E);
    cursor = (cursor + need) % pool.size();
  }
  return out;
}

struct RotationBound {
  double bound = 0.0;
  std::vector<double> per_set;  // accumulated rotation angle of each E
  double cost = 0.0;            // trajectory cost, for comparison
};

inline void check_E_sets(const Lattice& L, const std::vector<std::vector<int>>& E) {
  std::set<int> seen;
  for (auto& e : E) {
    if (e.empty()) throw Error(ErrorKind::invalid_argument, "empty E set");
    const int par = Lattice::parity(L.coord(e[0]));
    for (int x : e) {
      if (Lattice::parity(L.coord(x)) != par) throw Error(ErrorKind::invalid_argument, "E set mixes sublattice parities");
      if (!seen.insert(x).second) throw Error(ErrorKind::overlap, "E sets overlap");
    }
  }
}

inline double spectrum_angle(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return std::acos(std::clamp(dot, -1.0, 1.0));
}

// (1/sqrt(12n)) sum_E of the rotation angle of the sector-sorted Schmidt spectrum across E,
// measured on sub-steps no costlier than max_substep_cost.
inline RotationBound schmidt_rotation_bound(const Lattice& L, const Trajectory& t, const StateVector& start,
                                            const std::vector<std::vector<int>>& E, int n,
                                            double max_substep_cost = 0.05) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "fermion count n must be >= 1");
  check_E_sets(L, E);
  RotationBound res;
  res.per_set.assign(E.size(), 0.0);
  res.cost = t.cost();
  std::vector<std::vector<double>> lam;
  std::vector<std::set<Coord>> Ec(E.size());
  for (std::size_t l = 0; l < E.size(); ++l) {
    lam.push_back(flatten(sector_spectrum(L, start, E[l])));
    for (int x : E[l]) Ec[l].insert(L.coord(x));
  }
  StateVector cur = start;
  for (auto& step : t.steps) {
    std::vector<std::size_t> touched;
    for (std::size_t l = 0; l < E.size(); ++l)
      for (auto& g : step.gens)
        if (Ec[l].count(g.x) || Ec[l].count(g.y)) {
          touched.push_back(l);
          break;
        }
    if (touched.empty()) {
      cur = apply_step(L, cur, step);
      continue;
    }
    const int K = std::max(1, static_cast<int>(std::ceil(step.cost() / max_substep_cost)));
    for (int k = 0; k < K; ++k) {
      cur = apply_step(L, cur, step, 1.0 / K);
      for (std::size_t l : touched) {
        auto nl = flatten(sector_spectrum(L, cur, E[l]));
        res.per_set[l] += spectrum_angle(lam[l], nl);
        lam[l] = std::move(nl);
      }
    }
  }
  double sum = 0;
  for (double v : res.per_set) sum += v;
  res.bound = sum / std::sqrt(12.0 * n);
  return res;
}

// ---------------------------------------------------------------------------
// Report

struct ReportRow {
  int m, n, V, q, r;
  double lower, upper, witness_cost, fidelity;
};

inline ReportRow complexity_report_row(int m, int n, int d, int q = 0) {
  auto lay = make_desk_layout(m, n, d, {}, {}, q);
  auto ci = constructive_complexity(lay.lattice, lay.spec);
  return {m, n, d * d * d, q, ci.r, ci.lower, ci.upper_formula, ci.upper, ci.fidelity};
}

inline std::string complexity_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "m,n,V,q,r,lower,upper,witness_cost,fidelity\n";
  os << std::setprecision(12);
  for (auto& r : rows)
    os << r.m << ',' << r.n << ',' << r.V << ',' << r.q << ',' << r.r << ',' << r.lower << ',' << r.upper << ','
       << r.witness_cost << ',' << r.fidelity << '\n';
  return os.str();
}

}  // namespace branchlab
