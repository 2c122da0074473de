#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "lattice.hpp"

namespace branchlab {

// Fermion mode index: site-major, spin +1 before -1.
inline uint32_t mode_of(int site, int spin) { return 2u * static_cast<uint32_t>(site) + (spin > 0 ? 0u : 1u); }
inline int site_of_mode(uint32_t m) { return static_cast<int>(m / 2); }
inline int spin_of_mode(uint32_t m) { return (m % 2 == 0) ? 1 : -1; }

// Basis configuration. The fermion part stands for c+_{f[0]} c+_{f[1]} ... |0> with f ascending.
struct Config {
  std::vector<uint32_t> f;
  std::vector<std::pair<uint32_t, uint8_t>> b;  // (site, count > 0), ascending site

  auto operator<=>(const Config&) const = default;
  bool operator==(const Config&) const = default;

  int fermion_count() const { return static_cast<int>(f.size()); }
  bool has_mode(uint32_t m) const { return std::binary_search(f.begin(), f.end(), m); }
  int boson_count(uint32_t site) const {
    auto it = std::lower_bound(b.begin(), b.end(), std::make_pair(site, uint8_t{0}));
    return (it != b.end() && it->first == site) ? it->second : 0;
  }
  int bosons_total() const {
    int s = 0;
    for (auto& [site, c] : b) s += c;
    return s;
  }
};

inline constexpr double prune_tol = 1e-14;

struct StateVector {
  int B = 1;
  int n_b = 2;
  std::map<Config, cplx> amps;

  double norm2() const {
    double s = 0;
    for (auto& [c, a] : amps) s += std::norm(a);
    return s;
  }
  double norm() const { return std::sqrt(norm2()); }

  // N if every config carries N fermions, nullopt for a mixed or empty state
  std::optional<int> fermion_sector() const {
    std::optional<int> n;
    for (auto& [c, a] : amps) {
      if (!n) n = c.fermion_count();
      else if (*n != c.fermion_count()) return std::nullopt;
    }
    return n;
  }

  void add(const Config& c, cplx v) {
    auto [it, inserted] = amps.try_emplace(c, v);
    if (!inserted) it->second += v;
  }

  void prune(double tol = prune_tol) {
    for (auto it = amps.begin(); it != amps.end();) {
      if (std::abs(it->second) <= tol) it = amps.erase(it);
      else ++it;
    }
  }

  bool same_space(const StateVector& o) const { return B == o.B && n_b == o.n_b; }

  cplx inner(const StateVector& o) const {  // <this|o>
    cplx s = 0;
    const auto& small = amps.size() <= o.amps.size() ? amps : o.amps;
    const bool this_small = &small == &amps;
    for (auto& [c, a] : small) {
      const auto& other = this_small ? o.amps : amps;
      auto it = other.find(c);
      if (it == other.end()) continue;
      s += this_small ? std::conj(a) * it->second : std::conj(it->second) * a;
    }
    return s;
  }

  StateVector scaled(cplx s) const {
    StateVector r = *this;
    for (auto& [c, a] : r.amps) a *= s;
    return r;
  }

  StateVector& operator+=(const StateVector& o) {
    for (auto& [c, a] : o.amps) add(c, a);
    prune();
    return *this;
  }

  StateVector normalized() const {
    const double n = norm();
    if (n == 0) throw Error(ErrorKind::numerical, "cannot normalize the zero vector");
    return scaled(1.0 / n);
  }
};

inline StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
inline StateVector operator-(StateVector a, const StateVector& b) { return a += b.scaled(-1.0); }

inline double fidelity(const StateVector& a, const StateVector& b) {
  return std::norm(a.inner(b)) / (a.norm2() * b.norm2());
}

inline StateVector vacuum_state(int B, int n_b) {
  StateVector s;
  s.B = B;
  s.n_b = n_b;
  s.amps[Config{}] = 1.0;
  return s;
}

// c+_m applied to an ascending-ordered config: sign (-1)^{#occupied modes below m}
inline std::optional<std::pair<Config, int>> create_fermion(const Config& c, uint32_t m) {
  auto it = std::lower_bound(c.f.begin(), c.f.end(), m);
  if (it != c.f.end() && *it == m) return std::nullopt;
  const int below = static_cast<int>(it - c.f.begin());
  Config out = c;
  out.f.insert(out.f.begin() + below, m);
  return std::make_pair(std::move(out), (below % 2) ? -1 : 1);
}

inline Config with_boson_count(const Config& c, uint32_t site, int count) {
  Config out = c;
  auto it = std::lower_bound(out.b.begin(), out.b.end(), std::make_pair(site, uint8_t{0}));
  if (it != out.b.end() && it->first == site) {
    if (count == 0) out.b.erase(it);
    else it->second = static_cast<uint8_t>(count);
  } else if (count > 0) {
    out.b.insert(it, {site, static_cast<uint8_t>(count)});
  }
  return out;
}

// (left ops)(right ops)|0> with disjoint mode sets, rewritten in the ascending basis.
inline std::pair<Config, int> ordered_product(const Config& left, const Config& right) {
  Config out;
  out.f.reserve(left.f.size() + right.f.size());
  std::merge(left.f.begin(), left.f.end(), right.f.begin(), right.f.end(), std::back_inserter(out.f));
  long swaps = 0;
  for (uint32_t m : left.f) swaps += std::lower_bound(right.f.begin(), right.f.end(), m) - right.f.begin();
  out.b.reserve(left.b.size() + right.b.size());
  std::merge(left.b.begin(), left.b.end(), right.b.begin(), right.b.end(), std::back_inserter(out.b));
  return {std::move(out), (swaps % 2) ? -1 : 1};
}

// Single-particle wavefunctions: fermion over modes (size 2*sites), boson over sites.
using FermionWavefunction = std::vector<cplx>;
using BosonWavefunction = std::vector<cplx>;

// d+(p_0) d+(p_1) ... d+(p_{n-1}) b+(q_0) ... |0>, list order = operator order from the left.
inline StateVector make_product_state(const Lattice& L, const std::vector<FermionWavefunction>& fermions,
                                      const std::vector<BosonWavefunction>& bosons = {}, int n_b = 2) {
  if (n_b < 1) throw Error(ErrorKind::invalid_argument, "boson cutoff n_b must be >= 1");
  const std::size_t nmodes = 2 * static_cast<std::size_t>(L.size());
  StateVector st = vacuum_state(L.B, n_b);
  for (const auto& q : bosons) {
    if (q.size() != static_cast<std::size_t>(L.size()))
      throw Error(ErrorKind::invalid_argument, "boson wavefunction size must equal site count");
    if (std::all_of(q.begin(), q.end(), [](cplx v) { return std::abs(v) == 0.0; }))
      throw Error(ErrorKind::zero_wavefunction, "boson wavefunction is identically zero");
    StateVector next = vacuum_state(L.B, n_b);
    next.amps.clear();
    for (auto& [c, a] : st.amps)
      for (std::size_t s = 0; s < q.size(); ++s) {
        if (q[s] == 0.0) continue;
        const int cur = c.boson_count(static_cast<uint32_t>(s));
        const cplx v = a * q[s] * std::sqrt(static_cast<double>(cur + 1));
        if (cur + 1 >= n_b) {
          if (std::abs(v) > prune_tol) throw Error(ErrorKind::boson_cutoff, "boson occupation exceeds cutoff n_b");
          continue;
        }
        next.add(with_boson_count(c, static_cast<uint32_t>(s), cur + 1), v);
      }
    next.prune();
    st = std::move(next);
  }
  for (auto it = fermions.rbegin(); it != fermions.rend(); ++it) {
    const auto& p = *it;
    if (p.size() != nmodes) throw Error(ErrorKind::invalid_argument, "fermion wavefunction size must be 2*sites");
    if (std::all_of(p.begin(), p.end(), [](cplx v) { return std::abs(v) == 0.0; }))
      throw Error(ErrorKind::zero_wavefunction, "fermion wavefunction is identically zero");
    StateVector next = vacuum_state(L.B, n_b);
    next.amps.clear();
    for (auto& [c, a] : st.amps)
      for (std::size_t m = 0; m < nmodes; ++m) {
        if (p[m] == 0.0) continue;
        auto r = create_fermion(c, static_cast<uint32_t>(m));
        if (!r) continue;
        next.add(r->first, a * p[m] * static_cast<double>(r->second));
      }
    next.prune();
    st = std::move(next);
  }
  return st;
}

// Axis-aligned cube with lower corner `corner` and edge d.
struct Region {
  Coord corner{0, 0, 0};
  int d = 1;

  int volume() const { return d * d * d; }
  Coord center() const { return {corner[0] + (d - 1) / 2, corner[1] + (d - 1) / 2, corner[2] + (d - 1) / 2}; }
  bool contains(const Coord& c) const {
    for (int a = 0; a < 3; ++a)
      if (c[a] < corner[a] || c[a] >= corner[a] + d) return false;
    return true;
  }
  bool intersects(const Region& o) const {
    for (int a = 0; a < 3; ++a)
      if (corner[a] + d <= o.corner[a] || o.corner[a] + o.d <= corner[a]) return false;
    return true;
  }
  std::vector<Coord> sites() const {
    std::vector<Coord> out;
    for (int x = 0; x < d; ++x)
      for (int y = 0; y < d; ++y)
        for (int z = 0; z < d; ++z) out.push_back({corner[0] + x, corner[1] + y, corner[2] + z});
    return out;
  }
};

struct EntangledStateSpec {
  int m = 1;
  int n = 1;
  std::vector<std::vector<Region>> regions;  // [i][j]
  std::vector<std::vector<int>> spins;       // [i][j] in {+1,-1}
  std::vector<cplx> phases;                  // zeta_i
  int q = 0;

  int volume() const { return regions.empty() || regions[0].empty() ? 0 : regions[0][0].volume(); }
};

inline void validate_spec(const EntangledStateSpec& s, const Lattice* L = nullptr) {
  if (s.m < 1 || s.n < 1) throw Error(ErrorKind::invalid_argument, "m and n must be >= 1");
  if (static_cast<int>(s.regions.size()) != s.m || static_cast<int>(s.spins.size()) != s.m ||
      static_cast<int>(s.phases.size()) != s.m)
    throw Error(ErrorKind::invalid_argument, "spec arrays must have m rows");
  if (s.q < 0) throw Error(ErrorKind::invalid_argument, "gap count q must be nonnegative");
  const int V = s.volume();
  for (int i = 0; i < s.m; ++i) {
    if (std::abs(std::abs(s.phases[i]) - 1.0) > 1e-12) throw Error(ErrorKind::invalid_argument, "phases must be unit complex");
    if (static_cast<int>(s.regions[i].size()) != s.n || static_cast<int>(s.spins[i].size()) != s.n)
      throw Error(ErrorKind::invalid_argument, "each term needs n regions and spins");
    for (int j = 0; j < s.n; ++j) {
      if (s.spins[i][j] != 1 && s.spins[i][j] != -1) throw Error(ErrorKind::invalid_argument, "spin must be +1 or -1");
      if (s.regions[i][j].d < 1 || s.regions[i][j].volume() != V)
        throw Error(ErrorKind::invalid_argument, "all regions must have the same volume V");
      if (L)
        for (auto& c : s.regions[i][j].sites())
          if (!L->contains(c)) throw Error(ErrorKind::lattice_mismatch, "region leaves the lattice");
      for (int k = 0; k < j; ++k)
        if (s.spins[i][j] == s.spins[i][k] && s.regions[i][j].intersects(s.regions[i][k]))
          throw Error(ErrorKind::overlap, "same-spin regions of one term overlap");
    }
  }
}

inline FermionWavefunction uniform_wavefunction(const Lattice& L, const Region& r, int spin) {
  FermionWavefunction p(2 * static_cast<std::size_t>(L.size()), 0.0);
  const double a = 1.0 / std::sqrt(static_cast<double>(r.volume()));
  for (auto& c : r.sites()) p[mode_of(L.index(c), spin)] = a;
  return p;
}

inline FermionWavefunction point_wavefunction(const Lattice& L, const Coord& c, int spin) {
  FermionWavefunction p(2 * static_cast<std::size_t>(L.size()), 0.0);
  p[mode_of(L.index(c), spin)] = 1.0;
  return p;
}

inline StateVector make_term_state(const Lattice& L, const EntangledStateSpec& s, int i, int n_b = 2) {
  std::vector<FermionWavefunction> ps;
  for (int j = 0; j < s.n; ++j) ps.push_back(uniform_wavefunction(L, s.regions[i][j], s.spins[i][j]));
  return make_product_state(L, ps, {}, n_b);
}

// m^{-1/2} sum_i zeta_i |p_i>, renormalized when cross-term overlaps break orthogonality
inline StateVector make_entangled_state(const Lattice& L, const EntangledStateSpec& s, int n_b = 2) {
  validate_spec(s, &L);
  StateVector out = vacuum_state(L.B, n_b);
  out.amps.clear();
  for (int i = 0; i < s.m; ++i) out += make_term_state(L, s, i, n_b).scaled(s.phases[i] / std::sqrt(double(s.m)));
  return out.normalized();
}

// ---------------------------------------------------------------------------
// Bipartition of a state: A = fermion modes at region sites (plus bosons there when requested).

struct Bipartition {
  std::vector<char> in_region;  // per site
  bool region_bosons = true;

  std::pair<Config, Config> split(const Config& c, int& sign) const {
    Config a, r;
    for (uint32_t m : c.f) (in_region[site_of_mode(m)] ? a.f : r.f).push_back(m);
    for (auto& bb : c.b) ((region_bosons && in_region[bb.first]) ? a.b : r.b).push_back(bb);
    long swaps = 0;
    for (uint32_t m : a.f) swaps += std::lower_bound(r.f.begin(), r.f.end(), m) - r.f.begin();
    sign = (swaps % 2) ? -1 : 1;
    return {std::move(a), std::move(r)};
  }
};

inline Bipartition make_bipartition(const Lattice& L, const std::vector<int>& region_sites, bool region_bosons) {
  Bipartition bp;
  bp.in_region.assign(static_cast<std::size_t>(L.size()), 0);
  bp.region_bosons = region_bosons;
  for (int s : region_sites) {
    if (s < 0 || s >= L.size()) throw Error(ErrorKind::lattice_mismatch, "region site out of range");
    bp.in_region[s] = 1;
  }
  return bp;
}

struct SchmidtDecomposition {
  std::vector<int> region;
  std::vector<double> values;
  std::vector<int> left_fermions;
  std::vector<StateVector> left, right;
};

namespace detail {

struct Blocks {
  // per left fermion number: row configs, col configs, coefficient matrix
  struct Block {
    std::map<Config, int> rows, cols;
    std::vector<std::tuple<int, int, cplx>> entries;
  };
  std::map<int, Block> blocks;
};

inline Blocks collect_blocks(const StateVector& st, const Bipartition& bp, bool by_sector) {
  Blocks out;
  for (auto& [c, a] : st.amps) {
    int sign = 1;
    auto [lc, rc] = bp.split(c, sign);
    const int key = by_sector ? lc.fermion_count() : 0;
    auto& blk = out.blocks[key];
    auto [ri, rnew] = blk.rows.try_emplace(lc, static_cast<int>(blk.rows.size()));
    auto [ci, cnew] = blk.cols.try_emplace(rc, static_cast<int>(blk.cols.size()));
    blk.entries.emplace_back(ri->second, ci->second, a * static_cast<double>(sign));
  }
  return out;
}

inline Eigen::MatrixXcd dense(const Blocks::Block& b) {
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(static_cast<long>(b.rows.size()), static_cast<long>(b.cols.size()));
  for (auto& [r, c, v] : b.entries) M(r, c) += v;
  return M;
}

}  // namespace detail

inline void check_region(const Lattice& L, const std::vector<int>& region) {
  std::set<int> u(region.begin(), region.end());
  if (u.empty() || static_cast<int>(u.size()) >= L.size())
    throw Error(ErrorKind::invalid_argument, "region must be a nonempty proper subset of sites");
}

inline SchmidtDecomposition schmidt_decompose(const Lattice& L, const StateVector& st, const std::vector<int>& region,
                                              bool region_bosons = true) {
  check_region(L, region);
  const Bipartition bp = make_bipartition(L, region, region_bosons);
  const bool by_sector = st.fermion_sector().has_value();
  auto blocks = detail::collect_blocks(st, bp, by_sector);

  struct Item {
    double v;
    int nf;
    StateVector l, r;
  };
  std::vector<Item> items;
  for (auto& [key, blk] : blocks.blocks) {
    Eigen::MatrixXcd M = detail::dense(blk);
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    std::vector<const Config*> rowc(blk.rows.size()), colc(blk.cols.size());
    for (auto& [c, i] : blk.rows) rowc[i] = &c;
    for (auto& [c, i] : blk.cols) colc[i] = &c;
    for (long k = 0; k < svd.singularValues().size(); ++k) {
      const double v = svd.singularValues()(k);
      if (v <= 1e-15) continue;
      Item it{v, key, vacuum_state(st.B, st.n_b), vacuum_state(st.B, st.n_b)};
      it.l.amps.clear();
      it.r.amps.clear();
      for (long i = 0; i < M.rows(); ++i)
        if (std::abs(svd.matrixU()(i, k)) > prune_tol) it.l.amps[*rowc[i]] = svd.matrixU()(i, k);
      for (long j = 0; j < M.cols(); ++j)
        if (std::abs(svd.matrixV()(j, k)) > prune_tol) it.r.amps[*colc[j]] = std::conj(svd.matrixV()(j, k));
      if (!by_sector) it.nf = -1;
      items.push_back(std::move(it));
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.v > b.v; });
  SchmidtDecomposition d;
  d.region = region;
  const double nrm = st.norm();
  for (auto& it : items) {
    d.values.push_back(it.v / nrm);
    d.left_fermions.push_back(it.nf);
    d.left.push_back(std::move(it.l));
    d.right.push_back(std::move(it.r));
  }
  return d;
}

// (left)(right)|0> for states living on complementary mode sets
inline StateVector join_product(const StateVector& left, const StateVector& right) {
  StateVector out = vacuum_state(left.B, left.n_b);
  out.amps.clear();
  for (auto& [lc, la] : left.amps)
    for (auto& [rc, ra] : right.amps) {
      auto [c, sgn] = ordered_product(lc, rc);
      out.add(c, la * ra * static_cast<double>(sgn));
    }
  out.prune();
  return out;
}

inline StateVector schmidt_reconstruct(const SchmidtDecomposition& d) {
  if (d.values.empty()) throw Error(ErrorKind::numerical, "empty decomposition");
  StateVector out = join_product(d.left[0], d.right[0]).scaled(d.values[0]);
  for (std::size_t k = 1; k < d.values.size(); ++k) out += join_product(d.left[k], d.right[k]).scaled(d.values[k]);
  return out;
}

// Schmidt values grouped by left fermion number, each group sorted descending and
// zero-padded to the sector dimension binom(2|region|, k). Bosons at region sites go right.
inline std::vector<std::vector<double>> sector_spectrum(const Lattice& L, const StateVector& st,
                                                        const std::vector<int>& region) {
  const Bipartition bp = make_bipartition(L, region, false);
  auto blocks = detail::collect_blocks(st, bp, true);
  const int modes = 2 * static_cast<int>(region.size());
  std::vector<std::vector<double>> out(static_cast<std::size_t>(modes) + 1);
  auto binom = [](int nn, int k) {
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (nn - k + i) / i;
    return static_cast<std::size_t>(std::llround(r));
  };
  const double nrm2 = st.norm2();
  for (int k = 0; k <= modes; ++k) out[k].assign(binom(modes, k), 0.0);
  for (auto& [k, blk] : blocks.blocks) {
    Eigen::MatrixXcd M = detail::dense(blk);
    // direct SVD: square roots of Gram eigenvalues would lift 1e-16 noise to 1e-8
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(M);
    std::vector<double> vals;
    const double nrm = std::sqrt(nrm2);
    for (long i = 0; i < svd.singularValues().size(); ++i) vals.push_back(svd.singularValues()(i) / nrm);
    std::sort(vals.rbegin(), vals.rend());
    for (std::size_t i = 0; i < vals.size() && i < out[k].size(); ++i) out[k][i] = vals[i];
  }
  return out;
}

inline std::vector<double> flatten(const std::vector<std::vector<double>>& v) {
  std::vector<double> out;
  for (auto& s : v) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// Slater-determinant test via the one-body density matrix (idempotent iff a fermion product state).
// States carrying bosons count as products only when they are a single configuration.
inline bool is_product_state(const StateVector& st, double tol = 1e-9) {
  if (st.amps.empty()) return false;
  if (st.amps.size() == 1) return true;
  auto sector = st.fermion_sector();
  if (!sector) return false;
  for (auto& [c, a] : st.amps)
    if (!c.b.empty()) return false;
  std::map<uint32_t, int> idx;
  for (auto& [c, a] : st.amps)
    for (uint32_t m : c.f) idx.try_emplace(m, 0);
  int k = 0;
  for (auto& [m, i] : idx) i = k++;
  std::vector<uint32_t> modes;
  for (auto& [m, i] : idx) modes.push_back(m);
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(k, k);
  const double nrm2 = st.norm2();
  for (auto& [c, a] : st.amps) {
    for (std::size_t jj = 0; jj < c.f.size(); ++jj) {
      const uint32_t j = c.f[jj];
      Config rem = c;
      rem.f.erase(rem.f.begin() + static_cast<long>(jj));
      const int sj = (jj % 2) ? -1 : 1;  // c_j sign
      for (uint32_t i : modes) {
        auto r = create_fermion(rem, i);
        if (!r) continue;
        auto it = st.amps.find(r->first);
        if (it == st.amps.end()) continue;
        // <psi| c+_i c_j |psi>
        g(idx[i], idx[j]) += std::conj(it->second) * a * static_cast<double>(sj * r->second);
      }
    }
  }
  g /= nrm2;
  return std::abs((g * g).trace() - g.trace()) < tol * std::max(1.0, double(*sector));
}

}  // namespace branchlab
