#pragma once

#include <functional>
#include <limits>
#include <random>
#include <string>

#include "complexity.hpp"

namespace branchlab {

// Which end of a complexity interval enters Q.
enum class CProxy { upper, lower, midpoint };

inline const char* to_string(CProxy p) {
  switch (p) {
    case CProxy::upper: return "upper";
    case CProxy::lower: return "lower";
    default: return "midpoint";
  }
}

struct CInterval {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  double value(CProxy p) const {
    switch (p) {
      case CProxy::upper: return upper;
      case CProxy::lower: return lower;
      default: return 0.5 * (lower + upper);
    }
  }
  static CInterval exact(double c) { return {c, c}; }
};

struct Branch {
  std::optional<StateVector> state;  // absent when the branch is only labelled (plane waves)
  std::string label;
  double weight = 0.0;
  CInterval C;
};

inline double entropy_term(double w) { return w > 0 ? w * std::log(w) : 0.0; }

// Q = sum w C^2 - b sum w ln w
inline double net_complexity(const std::vector<Branch>& branches, double b, CProxy proxy, double tol = 1e-9) {
  if (!(b > 0)) throw Error(ErrorKind::invalid_argument, "b must be positive");
  for (std::size_t i = 0; i < branches.size(); ++i)
    for (std::size_t j = i + 1; j < branches.size(); ++j) {
      const auto &a = branches[i].state, &c = branches[j].state;
      if (!a || !c) continue;
      if (std::abs(a->inner(*c)) > tol * std::max(1.0, a->norm() * c->norm()))
        throw Error(ErrorKind::non_orthogonal, "branches are not orthogonal");
    }
  double q = 0;
  for (auto& br : branches) {
    const double c = br.C.value(proxy);
    if (br.weight > 0) q += br.weight * c * c;
    q -= b * entropy_term(br.weight);
  }
  return q;
}

struct SplitTest {
  bool split = false;
  double margin = 0.0;  // lhs - rhs
};

inline SplitTest split_condition(double Cp, double C0, double C1, double rho, double b) {
  if (!(rho > 0 && rho < 1)) throw Error(ErrorKind::invalid_argument, "rho must lie in (0,1)");
  if (Cp < 0 || C0 < 0 || C1 < 0) throw Error(ErrorKind::invalid_argument, "complexities must be nonnegative");
  const double lhs = Cp * Cp - rho * C0 * C0 - (1 - rho) * C1 * C1;
  const double rhs = -b * (rho * std::log(rho) + (1 - rho) * std::log(1 - rho));
  return {lhs > rhs, lhs - rhs};
}

// ---------------------------------------------------------------------------
// Threshold volume: large root of c0^2 s = 1 + ln(c1'^2 n s)

struct Threshold {
  double s = 0.0;
  double mV_star = 0.0;
  double residual = 0.0;
};

inline double threshold_residual(double s, int n) {
  return constants::c0 * constants::c0 * s - 1.0 - std::log(constants::c1p * constants::c1p * n * s);
}

inline Threshold branching_threshold(int n, double b) {
  if (n < 1 || !(b > 0)) throw Error(ErrorKind::invalid_argument, "threshold needs n >= 1 and b > 0");
  // f is convex with its minimum at 1/c0^2; the large root lies to the right of it
  double lo = 1.0 / (constants::c0 * constants::c0), hi = 2 * lo;
  if (threshold_residual(lo, n) >= 0) throw Error(ErrorKind::no_bracket, "threshold equation has no sign change");
  for (int k = 0; threshold_residual(hi, n) <= 0; ++k) {
    if (k > 200) throw Error(ErrorKind::no_bracket, "could not bracket the threshold root");
    lo = hi;
    hi *= 2;
  }
  for (int k = 0; k < 60 && hi - lo > 1e-6 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (threshold_residual(mid, n) > 0 ? hi : lo) = mid;
  }
  double s = 0.5 * (lo + hi);
  for (int k = 0; k < 50; ++k) {
    const double f = threshold_residual(s, n);
    if (std::abs(f) < 1e-13) break;
    s -= f / (constants::c0 * constants::c0 - 1.0 / s);
  }
  return {s, s * b, threshold_residual(s, n)};
}

// Grouped-branch bound c1'^2 m n V / r + b ln r and its integer minimizer over r in [1, r_max].
inline double grouped_bound_Q(int m, int n, double V, double b, double r) {
  return constants::c1p * constants::c1p * m * n * V / r + b * std::log(r);
}
inline double optimal_group_count(int m, int n, double V, double b) { return constants::c1p * constants::c1p * m * n * V / b; }
inline int brute_force_group_count(int m, int n, double V, double b, int r_max) {
  int best = 1;
  for (int r = 2; r <= r_max; ++r)
    if (grouped_bound_Q(m, n, V, b, r) < grouped_bound_Q(m, n, V, b, best)) best = r;
  return best;
}

// Certified split of the entangled family: lower-proxy Q of the whole state beats the best upper-proxy grouping.
inline bool certified_family_split(int m, int n, double V, double b) {
  const double q_single = constants::c0 * constants::c0 * m * V;
  const double r = std::max(1.0, optimal_group_count(m, n, V, b));
  return q_single > grouped_bound_Q(m, n, V, b, r);
}

// ---------------------------------------------------------------------------
// Decomposition families

enum class Family { single, point_basis, plane_waves, term_groupings };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::single: return "single";
    case Family::point_basis: return "point-basis";
    case Family::plane_waves: return "plane-waves";
    default: return "term-groupings";
  }
}

// Interval for g terms of the entangled family: one term is a product state; otherwise the lower formula
// and the grouped asymptotic form c1' sqrt(g n V).
inline CInterval group_interval(int g, int n, double V, int q = 0) {
  if (g <= 1) return CInterval::exact(0.0);
  return {lower_bound_formula(g, n, V, q).value, constants::c1p * std::sqrt(double(g) * n * V)};
}

struct BranchDecomposition {
  Family family = Family::single;
  std::vector<Branch> branches;
  double b = 0.0;
  CProxy proxy = CProxy::upper;
  double Q_value = 0.0, Q_lower = 0.0, Q_upper = 0.0;
};

struct FamilyReport {
  Family family;
  std::size_t branch_count = 0;
  double Q_value = 0.0, Q_lower = 0.0, Q_upper = 0.0;
};

struct BranchOptimum {
  BranchDecomposition best;
  std::vector<FamilyReport> reports;
  bool b_marginal = false;  // argmin differs between the lower and upper proxies
};

namespace detail {

inline BranchDecomposition finish(Family f, std::vector<Branch> br, double b, CProxy p) {
  BranchDecomposition d;
  d.family = f;
  d.b = b;
  d.proxy = p;
  d.branches = std::move(br);
  d.Q_value = net_complexity(d.branches, b, p);
  d.Q_lower = net_complexity(d.branches, b, CProxy::lower);
  d.Q_upper = net_complexity(d.branches, b, CProxy::upper);
  return d;
}

inline CInterval single_interval(const StateVector& st, const Lattice& L, const EntangledStateSpec* spec) {
  if (is_product_state(st)) return CInterval::exact(0.0);
  if (spec && fidelity(st, make_entangled_state(L, *spec, st.n_b)) > 1 - 1e-9)
    return group_interval(spec->m, spec->n, spec->volume(), spec->q);
  return {};
}

inline std::vector<Branch> point_branches(const StateVector& st) {
  std::vector<Branch> out;
  const double n2 = st.norm2();
  for (auto& [c, a] : st.amps) {
    StateVector s;
    s.B = st.B;
    s.n_b = st.n_b;
    s.amps[c] = a;
    out.push_back({s, "", std::norm(a) / n2, CInterval::exact(0.0)});
  }
  return out;
}

inline double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Amplitudes in the periodic plane-wave basis, k = 2 pi kappa / (2B); fermion states only.
inline std::vector<double> plane_wave_weights(const Lattice& L, const StateVector& st) {
  auto sector = st.fermion_sector();
  if (!sector) throw Error(ErrorKind::inapplicable, "plane-wave family needs a fixed fermion number");
  for (auto& [c, a] : st.amps)
    if (!c.b.empty()) throw Error(ErrorKind::inapplicable, "plane-wave family is fermion-only");
  const int n = *sector, N = L.size(), modes = 2 * N;
  if (binomial(modes, n) * double(st.amps.size()) > 5e7)
    throw Error(ErrorKind::dimension_blowup, "plane-wave transform too large");
  const int e = L.edge();
  // <k,s|x,s> = exp(-i k.x)/sqrt N
  auto overlap = [&](int kmode, uint32_t xmode) -> cplx {
    if (kmode % 2 != static_cast<int>(xmode % 2)) return 0.0;
    const Coord& kc = L.coord(kmode / 2);
    const Coord& x = L.coord(site_of_mode(xmode));
    double ph = 0;
    for (int a = 0; a < 3; ++a) ph += 2 * constants::pi * (kc[a] + L.B) * x[a] / e;
    return std::polar(1.0 / std::sqrt(double(N)), -ph);
  };
  std::vector<double> w;
  std::vector<int> K(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) K[i] = i;
  const double n2 = st.norm2();
  while (true) {
    cplx amp = 0;
    for (auto& [c, a] : st.amps) {
      Eigen::MatrixXcd M(n, n);
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) M(r, s) = overlap(K[r], c.f[s]);
      amp += (n == 0 ? cplx(1) : M.determinant()) * a;
    }
    if (std::norm(amp) > 1e-28) w.push_back(std::norm(amp) / n2);
    int i = n - 1;
    while (i >= 0 && K[i] == modes - n + i) --i;
    if (i < 0) break;
    ++K[i];
    for (int j = i + 1; j < n; ++j) K[j] = K[j - 1] + 1;
  }
  return w;
}

}  // namespace detail

// Exact minimizer of Q inside each requested family; ties go to fewer branches.
inline BranchOptimum optimize_branches(const Lattice& L, const StateVector& st, const std::vector<Family>& families,
                                       double b, CProxy proxy = CProxy::upper,
                                       const EntangledStateSpec* spec = nullptr) {
  if (st.amps.empty()) throw Error(ErrorKind::zero_wavefunction, "empty state");
  std::vector<BranchDecomposition> cand;
  for (Family f : families) {
    switch (f) {
      case Family::single:
        cand.push_back(detail::finish(f, {{st, "whole", 1.0, detail::single_interval(st, L, spec)}}, b, proxy));
        break;
      case Family::point_basis: cand.push_back(detail::finish(f, detail::point_branches(st), b, proxy)); break;
      case Family::plane_waves: {
        std::vector<Branch> br;
        int k = 0;
        for (double w : detail::plane_wave_weights(L, st))
          br.push_back({std::nullopt, "k" + std::to_string(k++), w, CInterval::exact(0.0)});
        cand.push_back(detail::finish(f, std::move(br), b, proxy));
        break;
      }
      case Family::term_groupings: {
        if (!spec) throw Error(ErrorKind::inapplicable, "term groupings need the entangled-state spec");
        if (fidelity(st, make_entangled_state(L, *spec, st.n_b)) < 1 - 1e-9)
          throw Error(ErrorKind::inapplicable, "state is not the given entangled family");
        std::optional<BranchDecomposition> best;
        for (int r = 1; r <= spec->m; ++r) {
          std::vector<Branch> br;
          int start = 0;
          for (int g = 0; g < r; ++g) {
            const int size = spec->m / r + (g < spec->m % r ? 1 : 0);
            StateVector part = vacuum_state(st.B, st.n_b);
            part.amps.clear();
            for (int i = start; i < start + size; ++i)
              part += make_term_state(L, *spec, i, st.n_b).scaled(spec->phases[i] / std::sqrt(double(spec->m)));
            br.push_back({part, "terms " + std::to_string(start) + ".." + std::to_string(start + size - 1),
                          part.norm2() / st.norm2(), group_interval(size, spec->n, spec->volume(), spec->q)});
            start += size;
          }
          auto d = detail::finish(f, std::move(br), b, proxy);
          if (!best || d.Q_value < best->Q_value - 1e-12) best = std::move(d);
        }
        cand.push_back(std::move(*best));
        break;
      }
    }
  }
  if (cand.empty()) throw Error(ErrorKind::invalid_argument, "no decomposition family requested");
  auto argmin = [&](auto key) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < cand.size(); ++i) {
      const double a = key(cand[i]), c = key(cand[k]);
      const bool tie = std::abs(a - c) <= 1e-12 || (std::isinf(a) && std::isinf(c));
      const auto ni = cand[i].branches.size(), nk = cand[k].branches.size();
      if (a < c - 1e-12 || (tie && (ni < nk || (ni == nk && cand[i].family < cand[k].family)))) k = i;
    }
    return k;
  };
  BranchOptimum out;
  const std::size_t k = argmin([](const BranchDecomposition& d) { return d.Q_value; });
  const std::size_t kl = argmin([](const BranchDecomposition& d) { return d.Q_lower; });
  const std::size_t ku = argmin([](const BranchDecomposition& d) { return d.Q_upper; });
  out.b_marginal = cand[kl].branches.size() != cand[ku].branches.size() || cand[kl].family != cand[ku].family;
  for (auto& d : cand) out.reports.push_back({d.family, d.branches.size(), d.Q_value, d.Q_lower, d.Q_upper});
  out.best = cand[k];
  return out;
}

// ---------------------------------------------------------------------------
// Branch tree

using History = std::vector<std::pair<int, int>>;  // (event id, bit); event -1 is the null event

struct BranchNode {
  int id = 0;
  int parent = -1;
  std::vector<int> children;
  std::vector<int> atoms;  // indices into BranchTree::atoms
  double weight = 0.0;
  int split_event = -1;    // event that split this node
  double t_created = 0.0;
  History history;
};

struct SplitEvent {
  int id = 0;
  double t = 0.0;
  int parent_id = -1;
  std::array<int, 2> child_ids{};
  double rho = 0.0, margin = 0.0, Q_before = 0.0, Q_after = 0.0;
  double margin_other = 0.0;  // same split under the other bracket
  bool b_marginal = false;
};

struct ProxySample {
  double t;
  int node;
  double C_lower, C_upper;
};

// Complexity interval of the state made of a group of atoms.
using AtomProxy = std::function<CInterval(const std::vector<StateVector>&)>;
// Trajectory advancing every atom from t to t + dt.
using Stepper = std::function<Trajectory(int step, double t)>;

struct BranchTree {
  std::vector<BranchNode> nodes;
  std::vector<SplitEvent> events;
  std::vector<StateVector> atoms;                  // current (final) atom states
  std::vector<double> times;                       // recorded times, times[0] = 0
  std::vector<std::vector<StateVector>> snapshots;  // atom states at each recorded time
  std::vector<ProxySample> series;
  std::vector<std::string> log;
  std::vector<std::pair<int, double>> persistence;  // (event id, re-evaluated margin) after the commit
  AtomProxy proxy_fn;
  CProxy proxy = CProxy::lower;
  double b = 0.0;
  std::uint64_t seed = 0;

  const BranchNode& root() const { return nodes.front(); }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (auto& n : nodes)
      if (n.children.empty()) out.push_back(n.id);
    return out;
  }

  StateVector node_state(int id, std::size_t snapshot) const {
    const auto& src = snapshots.at(snapshot);
    StateVector s = src.at(0).scaled(0.0);
    s.amps.clear();
    for (int a : nodes[id].atoms) s += src[a];
    return s;
  }
  StateVector node_state(int id) const { return node_state(id, snapshots.size() - 1); }

  std::vector<StateVector> atoms_of(const std::vector<int>& idx, std::size_t snapshot) const {
    std::vector<StateVector> out;
    for (int a : idx) out.push_back(snapshots.at(snapshot).at(a));
    return out;
  }
};

struct EvolveOptions {
  double dt = 1.0;
  double t_max = 1.0;
  CProxy proxy = CProxy::lower;
  int max_atoms = 12;  // bipartitions are enumerated exhaustively up to this many atoms
};

inline double atoms_norm2(const std::vector<StateVector>& atoms) {
  StateVector s = atoms.at(0).scaled(0.0);
  s.amps.clear();
  for (auto& a : atoms) s += a;
  return s.norm2();
}

// Entangled-family proxy: a single atom is a product state; a group of g atoms of n particles is treated as
// a g-term family of volume V_eff = n / sum_x rho(x)^2 (rho = site density of a normalized atom, averaged).
inline AtomProxy family_proxy(int n, int q = 0) {
  return [n, q](const std::vector<StateVector>& atoms) {
    const int g = static_cast<int>(atoms.size());
    if (g <= 1) return CInterval::exact(0.0);
    double inv = 0, wsum = 0;
    for (auto& a : atoms) {
      const double w = a.norm2();
      std::map<uint32_t, double> rho;
      for (auto& [c, amp] : a.amps)
        for (uint32_t m : c.f) rho[site_of_mode(m)] += std::norm(amp) / w;
      double s2 = 0;
      for (auto& [site, r] : rho) s2 += r * r;
      inv += w * s2;
      wsum += w;
    }
    const double V = n / (inv / wsum);
    return group_interval(g, n, V, q);
  };
}

inline BranchTree evolve_tree(const Lattice& L, const std::vector<StateVector>& atoms, const Stepper& stepper, double b,
                              const EvolveOptions& opt, AtomProxy proxy_fn, std::uint64_t seed = 0) {
  if (atoms.empty()) throw Error(ErrorKind::invalid_argument, "need at least one atom");
  if (!(b > 0) || !(opt.dt > 0)) throw Error(ErrorKind::invalid_argument, "b and dt must be positive");
  BranchTree T;
  T.atoms = atoms;
  T.proxy_fn = std::move(proxy_fn);
  T.proxy = opt.proxy;
  T.b = b;
  T.seed = seed;
  const double total = atoms_norm2(atoms);
  for (auto& a : T.atoms) a = a.scaled(1.0 / std::sqrt(total));
  BranchNode root;
  root.weight = 1.0;
  root.history = {{-1, 0}};
  for (int i = 0; i < static_cast<int>(atoms.size()); ++i) root.atoms.push_back(i);
  T.nodes.push_back(root);
  const CProxy other = opt.proxy == CProxy::lower ? CProxy::upper : CProxy::lower;

  auto record = [&](double t) {
    T.times.push_back(t);
    T.snapshots.push_back(T.atoms);
    for (int id : T.leaves()) {
      auto C = T.proxy_fn(T.atoms_of(T.nodes[id].atoms, T.snapshots.size() - 1));
      T.series.push_back({t, id, C.lower, C.upper});
    }
  };
  record(0.0);
  double t = 0;
  for (int k = 0; t + opt.dt <= opt.t_max + 1e-12; ++k) {
    const Trajectory step = stepper(k, t);
    for (auto& a : T.atoms) a = apply_trajectory(L, a, step);
    t = (k + 1) * opt.dt;
    const std::vector<int> leaves = T.leaves();  // leaves created below are first evaluated next step
    record(t);
    const std::size_t snap = T.snapshots.size() - 1;
    // persistence: re-evaluate committed splits with the current children
    for (auto& e : T.events) {
      const auto &c0 = T.nodes[e.child_ids[0]], &c1 = T.nodes[e.child_ids[1]];
      const auto& p = T.nodes[e.parent_id];
      const double Cp = T.proxy_fn(T.atoms_of(p.atoms, snap)).value(opt.proxy);
      const double C0 = T.proxy_fn(T.atoms_of(c0.atoms, snap)).value(opt.proxy);
      const double C1 = T.proxy_fn(T.atoms_of(c1.atoms, snap)).value(opt.proxy);
      T.persistence.emplace_back(e.id, split_condition(Cp, C0, C1, e.rho, b).margin);
    }
    for (int id : leaves) {
      const std::vector<int> at = T.nodes[id].atoms;
      const int g = static_cast<int>(at.size());
      if (g < 2) continue;
      if (g > opt.max_atoms) {
        T.log.push_back("t=" + std::to_string(t) + " node " + std::to_string(id) + ": too many atoms for bipartitions");
        continue;
      }
      const auto parentC = T.proxy_fn(T.atoms_of(at, snap));
      const double wp = atoms_norm2(T.atoms_of(at, snap));
      struct Best {
        std::uint64_t mask;
        SplitTest test;
        double rho, C0, C1, margin_other;
      };
      std::optional<Best> best;
      for (std::uint64_t mask = 1; mask < (1ull << (g - 1)); ++mask) {
        // atom 0 always sits in child 0; mask bit j-1 moves atom j to child 1
        std::vector<int> a0{at[0]}, a1;
        for (int j = 1; j < g; ++j) ((mask >> (j - 1)) & 1 ? a1 : a0).push_back(at[j]);
        const auto s0 = T.atoms_of(a0, snap), s1 = T.atoms_of(a1, snap);
        const double rho = atoms_norm2(s0) / wp;
        if (!(rho > 1e-15 && rho < 1 - 1e-15)) continue;
        const auto C0 = T.proxy_fn(s0), C1 = T.proxy_fn(s1);
        const auto test = split_condition(parentC.value(opt.proxy), C0.value(opt.proxy), C1.value(opt.proxy), rho, b);
        if (!test.split) continue;
        if (!best || test.margin > best->test.margin + 1e-12) {
          const double mo = split_condition(std::min(parentC.value(other), 1e150), std::min(C0.value(other), 1e150),
                                            std::min(C1.value(other), 1e150), rho, b)
                                .margin;
          best = Best{mask, test, rho, C0.value(opt.proxy), C1.value(opt.proxy), mo};
        }
      }
      if (!best) continue;
      SplitEvent e;
      e.id = static_cast<int>(T.events.size());
      e.t = t;
      e.parent_id = id;
      e.rho = best->rho;
      e.margin = best->test.margin;
      e.margin_other = best->margin_other;
      e.b_marginal = (e.margin_other > 0) != (e.margin > 0);
      const double Cp = parentC.value(opt.proxy);
      e.Q_before = Cp * Cp;
      e.Q_after = e.Q_before - e.margin;
      for (int bit = 0; bit < 2; ++bit) {
        BranchNode c;
        c.id = static_cast<int>(T.nodes.size());
        c.parent = id;
        c.t_created = t;
        if (bit == 0) c.atoms.push_back(at[0]);
        for (int j = 1; j < g; ++j)
          if ((((best->mask >> (j - 1)) & 1) != 0) == (bit == 1)) c.atoms.push_back(at[j]);
        c.weight = T.nodes[id].weight * (bit == 0 ? best->rho : 1 - best->rho);
        c.history = T.nodes[id].history;
        c.history.emplace_back(e.id, bit);
        e.child_ids[bit] = c.id;
        T.nodes[id].children.push_back(c.id);
        T.nodes.push_back(std::move(c));
      }
      T.nodes[id].split_event = e.id;
      T.events.push_back(e);
    }
  }
  return T;
}

// Root-to-leaf path, each child chosen with probability weight/parent weight.
template <class Rng>
std::vector<int> born_sample(const BranchTree& T, Rng& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<int> path{0};
  int cur = 0;
  while (!T.nodes[cur].children.empty()) {
    const auto& ch = T.nodes[cur].children;
    const double u = U(rng) * T.nodes[cur].weight;
    double acc = 0;
    int pick = ch.back();
    for (int c : ch) {
      acc += T.nodes[c].weight;
      if (u < acc) {
        pick = c;
        break;
      }
    }
    path.push_back(pick);
    cur = pick;
  }
  return path;
}

inline std::vector<int> born_sample(const BranchTree& T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return born_sample(T, rng);
}

}  // namespace branchlab
