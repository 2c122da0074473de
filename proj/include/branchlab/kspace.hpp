#pragma once

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "fock.hpp"

namespace branchlab {

// Local basis of one site: bit0 = spin up, bit1 = spin down, bits>=2 boson count.
struct LocalSpace {
  int n_b = 2;
  int site_dim() const { return 4 * n_b; }
  int dim() const { return site_dim() * site_dim(); }
  int index(int sx, int sy) const { return sx * site_dim() + sy; }
  int site_x(int a) const { return a / site_dim(); }
  int site_y(int a) const { return a % site_dim(); }
  static int fermions(int s) { return std::popcount(static_cast<unsigned>(s & 3)); }
  static int bosons(int s) { return s >> 2; }
  int pair_fermions(int a) const { return fermions(site_x(a)) + fermions(site_y(a)); }
  int pair_bosons(int a) const { return bosons(site_x(a)) + bosons(site_y(a)); }
  static int site_state(bool up, bool dn, int bos) { return (up ? 1 : 0) | (dn ? 2 : 0) | (bos << 2); }
};

struct GeneratorElement {
  Coord x{}, y{};
  Eigen::MatrixXcd block;
  int n_b = 2;

  double norm2() const { return block.squaredNorm(); }  // Tr f^2 for Hermitian f
  double norm() const { return std::sqrt(norm2()); }
};

inline Eigen::MatrixXcd partial_trace_x(const Eigen::MatrixXcd& f, int d) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
  for (int sx = 0; sx < d; ++sx) out += f.block(sx * d, sx * d, d, d);
  return out;
}

inline Eigen::MatrixXcd partial_trace_y(const Eigen::MatrixXcd& f, int d) {
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) out(a, b) = f.block(a * d, b * d, d, d).trace();
  return out;
}

inline Eigen::MatrixXcd kron(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B) {
  Eigen::MatrixXcd out(A.rows() * B.rows(), A.cols() * B.cols());
  for (long i = 0; i < A.rows(); ++i)
    for (long j = 0; j < A.cols(); ++j) out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return out;
}

// Orthogonal projection onto operators with vanishing partial traces.
inline Eigen::MatrixXcd project_partial_trace_free(const Eigen::MatrixXcd& f, int d) {
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(d, d);
  const Eigen::MatrixXcd ty = partial_trace_y(f, d);  // acts on x
  const Eigen::MatrixXcd tx = partial_trace_x(f, d);  // acts on y
  const cplx tr = f.trace();
  return f - kron(ty, I) / double(d) - kron(I, tx) / double(d) +
         tr * Eigen::MatrixXcd::Identity(d * d, d * d) / double(d * d);
}

inline GeneratorElement validate_generator(const Coord& x, const Coord& y, const Eigen::MatrixXcd& block, int n_b = 2,
                                           double tol = 1e-12) {
  LocalSpace ls{n_b};
  if (block.rows() != ls.dim() || block.cols() != ls.dim())
    throw Error(ErrorKind::invalid_argument, "block dimension does not match the truncated two-site space");
  if (manhattan(x, y) != 1) throw Error(ErrorKind::invalid_argument, "generator pair is not a nearest-neighbor pair");
  if ((block - block.adjoint()).cwiseAbs().maxCoeff() > tol) throw Error(ErrorKind::non_hermitian, "generator is not Hermitian");
  const int d = ls.site_dim();
  if (partial_trace_x(block, d).cwiseAbs().maxCoeff() > tol || partial_trace_y(block, d).cwiseAbs().maxCoeff() > tol)
    throw Error(ErrorKind::partial_trace, "generator partial traces do not vanish");
  for (int a = 0; a < ls.dim(); ++a)
    for (int b = 0; b < ls.dim(); ++b)
      if (ls.pair_fermions(a) != ls.pair_fermions(b) && std::abs(block(a, b)) > tol)
        throw Error(ErrorKind::number_violation, "generator does not commute with N_xy");
  return GeneratorElement{x, y, block, n_b};
}

// f = -i e^{i phi}|b><a| + i e^{-i phi}|a><b|, so exp(i theta f)|a> = cos(theta)|a> + sin(theta) e^{i phi}|b>.
inline GeneratorElement hop_generator(const Coord& x, const Coord& y, int a, int b, double phi = 0.0, int n_b = 2) {
  LocalSpace ls{n_b};
  Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(ls.dim(), ls.dim());
  const cplx I(0, 1);
  f(b, a) = -I * std::exp(I * phi);
  f(a, b) = I * std::exp(-I * phi);
  return validate_generator(x, y, f, n_b);
}

// Convenience: local basis index from occupation of the two sites.
inline int local_index(int n_b, int sx, int sy) { return LocalSpace{n_b}.index(sx, sy); }

// Moves one fermion of spin s_from at x to spin s_to at y (both sites otherwise empty).
inline GeneratorElement move_generator(const Coord& x, int s_from, const Coord& y, int s_to, double phi = 0.0,
                                       int n_b = 2) {
  const int a = local_index(n_b, LocalSpace::site_state(s_from > 0, s_from < 0, 0), 0);
  const int b = local_index(n_b, 0, LocalSpace::site_state(s_to > 0, s_to < 0, 0));
  return hop_generator(x, y, a, b, phi, n_b);
}

struct TrajectoryStep {
  std::vector<GeneratorElement> gens;
  double theta = 0.0;

  double generator_norm() const {
    double s = 0;
    for (auto& g : gens) s += g.norm2();
    return std::sqrt(s);
  }
  double cost() const { return std::abs(theta) * generator_norm(); }
};

inline void check_disjoint(const std::vector<GeneratorElement>& gens) {
  std::set<Coord> used;
  for (auto& g : gens)
    for (auto& c : {g.x, g.y})
      if (!used.insert(c).second) throw Error(ErrorKind::overlap, "generator pairs within a step overlap");
}

inline double generator_norm(const std::vector<GeneratorElement>& gens) {
  check_disjoint(gens);
  double s = 0;
  for (auto& g : gens) s += g.norm2();
  return std::sqrt(s);
}

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  double cost() const {
    double c = 0;
    for (auto& s : steps) c += s.cost();
    return c;
  }
  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
};

inline Trajectory concat(const Trajectory& a, const Trajectory& b) {
  Trajectory t = a;
  t.steps.insert(t.steps.end(), b.steps.begin(), b.steps.end());
  return t;
}

inline Trajectory reverse(const Trajectory& t) {
  Trajectory r;
  for (auto it = t.steps.rbegin(); it != t.steps.rend(); ++it) {
    TrajectoryStep s = *it;
    s.theta = -s.theta;
    r.steps.push_back(std::move(s));
  }
  return r;
}

inline Eigen::MatrixXcd step_unitary(const Eigen::MatrixXcd& f, double theta) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(f);
  const cplx I(0, 1);
  Eigen::VectorXcd ph(es.eigenvalues().size());
  for (long i = 0; i < ph.size(); ++i) ph(i) = std::exp(I * theta * es.eigenvalues()(i));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

namespace detail {

// sign of rewriting (local ops, x before y)(rest ascending)|0> in the ascending basis
inline int local_sign(const std::vector<uint32_t>& rest, int xs, int ys, int fx, int fy) {
  long cnt = 0;
  auto count_below = [&](uint32_t m) { return std::lower_bound(rest.begin(), rest.end(), m) - rest.begin(); };
  for (int k = 0; k < 2; ++k) {
    if (fx & (1 << k)) cnt += count_below(mode_of(xs, k == 0 ? 1 : -1));
    if (fy & (1 << k)) cnt += count_below(mode_of(ys, k == 0 ? 1 : -1));
  }
  if (xs > ys) cnt += static_cast<long>(std::popcount(unsigned(fx)) * std::popcount(unsigned(fy)));
  return (cnt % 2) ? -1 : 1;
}

}  // namespace detail

// Applies a two-site operator M (local basis, x factor first) to a state.
inline StateVector apply_two_site(const Lattice& L, const StateVector& st, const Coord& x, const Coord& y,
                                  const Eigen::MatrixXcd& M) {
  LocalSpace ls{st.n_b};
  if (M.rows() != ls.dim()) throw Error(ErrorKind::lattice_mismatch, "operator block does not match the state's boson cutoff");
  if (L.B != st.B) throw Error(ErrorKind::lattice_mismatch, "state lives on a different lattice");
  const int xs = L.index(x), ys = L.index(y);
  const int d = ls.dim();
  std::vector<std::vector<std::pair<int, cplx>>> col(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      if (std::abs(M(b, a)) > 1e-15) col[a].emplace_back(b, M(b, a));

  const uint32_t xm[2] = {mode_of(xs, 1), mode_of(xs, -1)};
  const uint32_t ym[2] = {mode_of(ys, 1), mode_of(ys, -1)};
  StateVector out = st;
  out.amps.clear();
  for (auto& [c, amp] : st.amps) {
    const int fx = (c.has_mode(xm[0]) ? 1 : 0) | (c.has_mode(xm[1]) ? 2 : 0);
    const int fy = (c.has_mode(ym[0]) ? 1 : 0) | (c.has_mode(ym[1]) ? 2 : 0);
    const int bx = c.boson_count(static_cast<uint32_t>(xs)), by = c.boson_count(static_cast<uint32_t>(ys));
    const int a = ls.index(fx | (bx << 2), fy | (by << 2));
    Config rest = c;
    std::erase_if(rest.f, [&](uint32_t m) { return m == xm[0] || m == xm[1] || m == ym[0] || m == ym[1]; });
    const int eps = detail::local_sign(rest.f, xs, ys, fx, fy);
    for (auto& [b, v] : col[a]) {
      const int sx = ls.site_x(b), sy = ls.site_y(b);
      const int nfx = sx & 3, nfy = sy & 3;
      Config nc = rest;
      for (int k = 0; k < 2; ++k) {
        if (nfx & (1 << k)) nc.f.push_back(xm[k]);
        if (nfy & (1 << k)) nc.f.push_back(ym[k]);
      }
      std::sort(nc.f.begin(), nc.f.end());
      nc = with_boson_count(nc, static_cast<uint32_t>(xs), LocalSpace::bosons(sx));
      nc = with_boson_count(nc, static_cast<uint32_t>(ys), LocalSpace::bosons(sy));
      const int eps2 = detail::local_sign(rest.f, xs, ys, nfx, nfy);
      out.add(nc, v * amp * static_cast<double>(eps * eps2));
    }
  }
  out.prune();
  return out;
}

inline StateVector apply_generator(const Lattice& L, const StateVector& st, const GeneratorElement& g) {
  return apply_two_site(L, st, g.x, g.y, g.block);
}

inline void check_step_lattice(const Lattice& L, const StateVector& st, const TrajectoryStep& s) {
  for (auto& g : s.gens) {
    if (!L.contains(g.x) || !L.contains(g.y)) throw Error(ErrorKind::lattice_mismatch, "trajectory pair outside the lattice");
    if (g.n_b != st.n_b) throw Error(ErrorKind::lattice_mismatch, "trajectory boson cutoff differs from the state's");
  }
}

// exp(i * fraction * theta * k) for one step; pairs are disjoint so the factors commute.
inline StateVector apply_step(const Lattice& L, const StateVector& st, const TrajectoryStep& s, double fraction = 1.0) {
  check_disjoint(s.gens);
  check_step_lattice(L, st, s);
  StateVector cur = st;
  for (auto& g : s.gens) cur = apply_two_site(L, cur, g.x, g.y, step_unitary(g.block, fraction * s.theta));
  return cur;
}

inline StateVector apply_trajectory(const Lattice& L, const StateVector& st, const Trajectory& t) {
  if (L.B != st.B) throw Error(ErrorKind::lattice_mismatch, "state lives on a different lattice");
  StateVector cur = st;
  for (auto& s : t.steps) cur = apply_step(L, cur, s);
  return cur;
}

// Random Hermitian generator conserving pair fermion and boson number, projected to zero partial traces.
template <class Rng>
GeneratorElement random_generator(const Coord& x, const Coord& y, int n_b, Rng& rng, double scale = 1.0) {
  LocalSpace ls{n_b};
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(ls.dim(), ls.dim());
  for (int a = 0; a < ls.dim(); ++a)
    for (int b = 0; b <= a; ++b) {
      if (ls.pair_fermions(a) != ls.pair_fermions(b) || ls.pair_bosons(a) != ls.pair_bosons(b)) continue;
      const cplx v = (a == b) ? cplx(g(rng), 0) : cplx(g(rng), g(rng));
      f(a, b) = v;
      f(b, a) = std::conj(v);
    }
  f = project_partial_trace_free(f, ls.site_dim());
  f = 0.5 * (f + f.adjoint());
  const double nrm = f.norm();
  if (nrm > 0) f *= scale / nrm;
  return GeneratorElement{x, y, f, n_b};
}

// ---------------------------------------------------------------------------
// Lie closure of the generator space on a two-site system, per fermion sector.

struct LieClosureReport {
  std::vector<int> sector_dims;
  int generator_dim = 0;
  int closure_dim = 0;
  int su_bound = 0;       // sum (d_n^2 - 1) + rank of generator sector traces
  int full_dim = 0;       // sum d_n^2
  std::vector<int> sector_projection_dim;
  std::vector<int> sector_traceless_dim;
  std::vector<bool> contains_su;
};

namespace detail {

struct SectorLayout {
  std::vector<std::vector<int>> idx;  // basis indices per sector
  std::vector<int> offset;            // vector offset per sector
  int D = 0;
};

inline SectorLayout sector_layout(const LocalSpace& ls) {
  SectorLayout s;
  s.idx.resize(5);
  for (int a = 0; a < ls.dim(); ++a) s.idx[ls.pair_fermions(a)].push_back(a);
  for (auto& v : s.idx) {
    s.offset.push_back(s.D);
    s.D += static_cast<int>(v.size() * v.size());
  }
  return s;
}

using Blocks5 = std::vector<Eigen::MatrixXcd>;

inline Eigen::VectorXd vec(const SectorLayout& s, const Blocks5& B) {
  Eigen::VectorXd v(s.D);
  const double r2 = std::sqrt(2.0);
  for (std::size_t n = 0; n < B.size(); ++n) {
    int k = s.offset[n];
    const long d = B[n].rows();
    for (long i = 0; i < d; ++i) v(k++) = B[n](i, i).real();
    for (long i = 0; i < d; ++i)
      for (long j = i + 1; j < d; ++j) {
        v(k++) = r2 * B[n](i, j).real();
        v(k++) = r2 * B[n](i, j).imag();
      }
  }
  return v;
}

inline Blocks5 unvec(const SectorLayout& s, const Eigen::VectorXd& v) {
  Blocks5 B;
  const double r2 = std::sqrt(2.0);
  for (std::size_t n = 0; n < s.idx.size(); ++n) {
    const long d = static_cast<long>(s.idx[n].size());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(d, d);
    int k = s.offset[n];
    for (long i = 0; i < d; ++i) M(i, i) = v(k++);
    for (long i = 0; i < d; ++i)
      for (long j = i + 1; j < d; ++j) {
        const cplx z(v(k) / r2, v(k + 1) / r2);
        k += 2;
        M(i, j) = z;
        M(j, i) = std::conj(z);
      }
    B.push_back(M);
  }
  return B;
}

inline Eigen::MatrixXcd to_full(const SectorLayout& s, const Blocks5& B, int dim) {
  Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(dim, dim);
  for (std::size_t n = 0; n < B.size(); ++n)
    for (std::size_t i = 0; i < s.idx[n].size(); ++i)
      for (std::size_t j = 0; j < s.idx[n].size(); ++j) M(s.idx[n][i], s.idx[n][j]) = B[n](long(i), long(j));
  return M;
}

inline Blocks5 from_full(const SectorLayout& s, const Eigen::MatrixXcd& M) {
  Blocks5 B;
  for (auto& ix : s.idx) {
    Eigen::MatrixXcd b(long(ix.size()), long(ix.size()));
    for (std::size_t i = 0; i < ix.size(); ++i)
      for (std::size_t j = 0; j < ix.size(); ++j) b(long(i), long(j)) = M(ix[i], ix[j]);
    B.push_back(b);
  }
  return B;
}

// appends v to the orthonormal columns of Q if it adds a new direction
inline bool try_append(Eigen::MatrixXd& Q, int& k, Eigen::VectorXd v, double tol = 1e-9) {
  const double n0 = v.norm();
  if (n0 == 0) return false;
  for (int pass = 0; pass < 2; ++pass)
    if (k > 0) v -= Q.leftCols(k) * (Q.leftCols(k).transpose() * v);
  const double n1 = v.norm();
  if (n1 <= tol * n0) return false;
  Q.col(k++) = v / n1;
  return true;
}

}  // namespace detail

inline LieClosureReport lie_closure_sectors(int site_count, int n_b, int guard = 10000) {
  if (site_count < 1 || site_count > 2) throw Error(ErrorKind::invalid_argument, "Lie closure runs on 1 or 2 sites");
  if (n_b < 1 || n_b > 2) throw Error(ErrorKind::invalid_argument, "Lie closure supports n_b in {1,2}");
  LieClosureReport rep;
  if (site_count == 1) {
    const std::vector<int> one = {1, 2, 1};
    for (int v : one) rep.sector_dims.push_back(v * n_b);
    for (int dn : rep.sector_dims) {
      rep.full_dim += dn * dn;
      rep.sector_projection_dim.push_back(0);
      rep.sector_traceless_dim.push_back(0);
      rep.contains_su.push_back(dn <= 1);
    }
    return rep;
  }
  LocalSpace ls{n_b};
  const auto lay = detail::sector_layout(ls);
  const int D = lay.D;
  for (auto& v : lay.idx) rep.sector_dims.push_back(static_cast<int>(v.size()));
  for (int dn : rep.sector_dims) rep.full_dim += dn * dn;
  if (rep.full_dim > guard) throw Error(ErrorKind::dimension_blowup, "closure basis would exceed the guard");

  // projector onto partial-trace-free operators, in the orthonormal vec basis
  Eigen::MatrixXd P(D, D);
  for (int e = 0; e < D; ++e) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(D);
    u(e) = 1.0;
    auto full = detail::to_full(lay, detail::unvec(lay, u), ls.dim());
    P.col(e) = detail::vec(lay, detail::from_full(lay, project_partial_trace_free(full, ls.site_dim())));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (P + P.transpose()));
  std::vector<Eigen::VectorXd> G;
  for (long i = 0; i < D; ++i)
    if (es.eigenvalues()(i) > 0.5) G.push_back(es.eigenvectors().col(i));
  rep.generator_dim = static_cast<int>(G.size());

  // sector-trace map restricted to the generator space
  Eigen::MatrixXd T(5, rep.generator_dim);
  for (int g = 0; g < rep.generator_dim; ++g) {
    auto B = detail::unvec(lay, G[g]);
    for (int n = 0; n < 5; ++n) T(n, g) = B[n].trace().real();
  }
  const int trace_rank = rep.generator_dim ? static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(T).setThreshold(1e-9).rank()) : 0;
  for (int dn : rep.sector_dims) rep.su_bound += dn * dn - 1;
  rep.su_bound += trace_rank;

  Eigen::MatrixXd Q(D, D);
  int k = 0;
  for (auto& g : G) detail::try_append(Q, k, g);
  std::vector<detail::Blocks5> Gb;
  for (auto& g : G) Gb.push_back(detail::unvec(lay, g));
  const cplx I(0, 1);
  for (int i = 0; i < k && k < rep.su_bound; ++i) {
    const auto A = detail::unvec(lay, Q.col(i));
    for (std::size_t g = 0; g < Gb.size() && k < rep.su_bound; ++g) {
      detail::Blocks5 C(5);
      for (int n = 0; n < 5; ++n) C[n] = I * (A[n] * Gb[g][n] - Gb[g][n] * A[n]);
      detail::try_append(Q, k, detail::vec(lay, C));
      if (k > guard) throw Error(ErrorKind::dimension_blowup, "closure exceeded the basis guard");
    }
  }
  rep.closure_dim = k;

  for (int n = 0; n < 5; ++n) {
    const long dn = rep.sector_dims[n];
    const long len = dn * dn;
    Eigen::MatrixXd proj(len, std::max(k, 1));
    proj.setZero();
    Eigen::MatrixXd trless(len, std::max(k, 1));
    trless.setZero();
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd seg = Q.col(c).segment(lay.offset[n], len);
      proj.col(c) = seg;
      Eigen::VectorXd t = seg;
      const double tr = seg.head(dn).sum();
      for (long i = 0; i < dn; ++i) t(i) -= tr / double(dn);
      trless.col(c) = t;
    }
    const int pr = k ? static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(proj).setThreshold(1e-9).rank()) : 0;
    const int tr = k ? static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(trless).setThreshold(1e-9).rank()) : 0;
    rep.sector_projection_dim.push_back(pr);
    rep.sector_traceless_dim.push_back(tr);
    rep.contains_su.push_back(tr == dn * dn - 1);
  }
  return rep;
}

}  // namespace branchlab
