#pragma once

#include <random>

#include "branching.hpp"

namespace branchlab {

inline History root_history() { return {{-1, 0}}; }

inline void check_history(const History& s) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k].second != 0 && s[k].second != 1) throw Error(ErrorKind::inconsistent_history, "branch bits are 0 or 1");
    if (k > 0 && s[k].first <= s[k - 1].first) throw Error(ErrorKind::out_of_order, "event ids must strictly increase");
  }
}

inline History extend_history(const History& s, int event_id, int bit) {
  if (bit != 0 && bit != 1) throw Error(ErrorKind::invalid_argument, "branch bit must be 0 or 1");
  if (!s.empty() && event_id <= s.back().first)
    throw Error(ErrorKind::out_of_order, "event " + std::to_string(event_id) + " is not later than the history");
  History out = s;
  out.emplace_back(event_id, bit);
  return out;
}

// s ∪ s' when the bits agree on shared events, nullopt (empty cylinder) otherwise.
inline std::optional<History> intersect_cylinders(const History& a, const History& b) {
  std::map<int, int> m(a.begin(), a.end());
  for (auto [e, bit] : b) {
    auto [it, fresh] = m.emplace(e, bit);
    if (!fresh && it->second != bit) return std::nullopt;
  }
  return History(m.begin(), m.end());
}

// One flipped event per history.
inline std::vector<History> complement_decomposition(const History& s) {
  if (s.empty()) throw Error(ErrorKind::invalid_argument, "complement needs a nonempty history");
  std::vector<History> out;
  for (auto [e, bit] : s) out.push_back({{e, 1 - bit}});
  return out;
}

inline bool contains_all(const History& h, const History& s) {
  for (auto& p : s)
    if (std::find(h.begin(), h.end(), p) == h.end()) return false;
  return true;
}

// Component of psi_w along phi: the branch a recombined state contributes to a new split.
inline StateVector recombination_projection(const StateVector& psi_w, const StateVector& phi) {
  const double n2 = phi.norm2();
  if (n2 == 0) throw Error(ErrorKind::zero_wavefunction, "cannot project on the zero vector");
  return phi.scaled(phi.inner(psi_w) / n2);
}

struct HistoryMeasure {
  const BranchTree* tree = nullptr;
  std::map<History, double> cache;

  explicit HistoryMeasure(const BranchTree& t) : tree(&t) {}

  // mu[v(s)] = squared norm of the sum of leaves whose history contains s
  double operator()(const History& s) {
    check_history(s);
    std::set<int> known{-1};
    for (auto& e : tree->events) known.insert(e.id);
    for (auto& [e, bit] : s)
      if (!known.count(e)) throw Error(ErrorKind::inconsistent_history, "unknown event " + std::to_string(e));
    if (auto it = cache.find(s); it != cache.end()) return it->second;
    StateVector chi = tree->atoms.at(0).scaled(0.0);
    chi.amps.clear();
    for (int id : tree->leaves())
      if (contains_all(tree->nodes[id].history, s)) chi += tree->node_state(id);
    const double mu = chi.norm2();
    cache.emplace(s, mu);
    return mu;
  }
};

inline double cylinder_measure(HistoryMeasure& hm, const History& s) { return hm(s); }

// Leaf-complete history drawn with probability mu of its cylinder.
template <class Rng>
History sample_all_time_history(HistoryMeasure& hm, Rng& rng) {
  const auto leaves = hm.tree->leaves();
  std::vector<double> w;
  for (int id : leaves) w.push_back(hm(hm.tree->nodes[id].history));
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return hm.tree->nodes[leaves[pick(rng)]].history;
}

inline History sample_all_time_history(HistoryMeasure& hm, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_all_time_history(hm, rng);
}

struct Replay {
  std::vector<double> taus;
  std::optional<int> open_entry;  // index into the history whose Delta never reached 0
};

// tau_n = first recorded time after tau_{n-1} with Delta_n >= 0, for each event of the history.
inline Replay replay_times(const BranchTree& T, const History& h, double b) {
  check_history(h);
  if (!T.proxy_fn) throw Error(ErrorKind::invalid_argument, "tree carries no complexity proxy");
  Replay out;
  int node = 0;
  double prev = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const auto [e, bit] = h[k];
    if (e < 0) continue;
    if (e >= static_cast<int>(T.events.size()) || T.events[e].parent_id != node)
      throw Error(ErrorKind::inconsistent_history, "history does not follow the tree");
    const int next = T.events[e].child_ids[bit], sib = T.events[e].child_ids[1 - bit];
    std::optional<double> tau;
    for (std::size_t s = 0; s < T.times.size() && !tau; ++s) {
      if (T.times[s] <= prev) continue;
      const auto pa = T.atoms_of(T.nodes[node].atoms, s), ca = T.atoms_of(T.nodes[next].atoms, s),
                 sa = T.atoms_of(T.nodes[sib].atoms, s);
      const double rho = atoms_norm2(ca) / atoms_norm2(pa);
      const double Cn = T.proxy_fn(pa).value(T.proxy), Cc = T.proxy_fn(ca).value(T.proxy),
                   Cs = T.proxy_fn(sa).value(T.proxy);
      const double delta =
          Cn * Cn - rho * Cc * Cc - (1 - rho) * Cs * Cs + b * rho * std::log(rho) + b * (1 - rho) * std::log(1 - rho);
      if (delta >= 0) tau = T.times[s];
    }
    if (!tau) {
      out.open_entry = static_cast<int>(k);
      return out;
    }
    out.taus.push_back(*tau);
    prev = *tau;
    node = next;
  }
  return out;
}

inline Replay replay_times(const HistoryMeasure& hm, const History& h, double b) { return replay_times(*hm.tree, h, b); }

// Random tree with one single-configuration atom per leaf; event ids follow breadth-first creation so they
// increase along every path. Used to exercise the measure laws on arbitrary shapes.
inline BranchTree random_tree(int max_depth, std::uint64_t seed, double p_split = 0.75) {
  if (max_depth < 0 || max_depth > 10) throw Error(ErrorKind::invalid_argument, "depth must lie in [0,10]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  BranchTree T;
  BranchNode root;
  root.weight = 1.0;
  root.history = root_history();
  T.nodes.push_back(root);
  std::vector<int> depth{0};
  for (std::size_t q = 0; q < T.nodes.size(); ++q) {
    const int id = static_cast<int>(q);
    if (depth[q] >= max_depth || (id > 0 && U(rng) > p_split)) continue;
    SplitEvent e;
    e.id = static_cast<int>(T.events.size());
    e.t = depth[q] + 1.0;
    e.parent_id = id;
    e.rho = 0.05 + 0.9 * U(rng);
    for (int bit = 0; bit < 2; ++bit) {
      BranchNode c;
      c.id = static_cast<int>(T.nodes.size());
      c.parent = id;
      c.t_created = e.t;
      c.weight = T.nodes[id].weight * (bit == 0 ? e.rho : 1 - e.rho);
      c.history = extend_history(T.nodes[id].history, e.id, bit);
      e.child_ids[bit] = c.id;
      T.nodes[id].children.push_back(c.id);
      T.nodes.push_back(std::move(c));
      depth.push_back(depth[q] + 1);
    }
    T.nodes[id].split_event = e.id;
    T.events.push_back(e);
  }
  // one fermion on a distinct mode per leaf, random phase
  const int B = 4;
  int next_mode = 0;
  for (auto& n : T.nodes)
    if (n.children.empty()) {
      StateVector s;
      s.B = B;
      Config c;
      c.f.push_back(static_cast<uint32_t>(next_mode++));
      s.amps[c] = std::polar(std::sqrt(n.weight), 2 * constants::pi * U(rng));
      n.atoms.push_back(static_cast<int>(T.atoms.size()));
      T.atoms.push_back(s);
    }
  for (int id = static_cast<int>(T.nodes.size()) - 1; id >= 0; --id)
    for (int c : T.nodes[id].children)
      T.nodes[id].atoms.insert(T.nodes[id].atoms.end(), T.nodes[c].atoms.begin(), T.nodes[c].atoms.end());
  T.times = {0.0};
  T.snapshots = {T.atoms};
  T.seed = seed;
  return T;
}

}  // namespace branchlab
