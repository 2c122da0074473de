#pragma once

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <iomanip>
#include <sstream>
#include <vector>

#include "branching.hpp"
#include "complexity.hpp"

namespace branchlab {

// ---------------------------------------------------------------------------
// Spreading two-fermion system

// Internal relative wavefunction: spin singlet times a smooth bump exp(-1/(1-|x|^2/r^2)) on a box^3 torus.
struct PhiDescriptor {
  std::string kind = "bump";
  double range = 4.0;
  int box = 16;
};

struct TwoFermionConfig {
  double R0 = 10.0, M = 1.0, b = 1e4;
  PhiDescriptor phi;
};

inline void validate(const TwoFermionConfig& c) {
  if (!(c.R0 > 0 && c.M > 0 && c.b > 0)) throw Error(ErrorKind::config, "R0, M, b must be positive");
  if (c.phi.kind != "bump") throw Error(ErrorKind::config, "unknown phi kind '" + c.phi.kind + "'");
  if (!(c.phi.range > 0) || c.phi.box < 2 || c.phi.range >= c.phi.box / 2.0)
    throw Error(ErrorKind::config, "phi range must be positive and fit inside half the box");
  if (c.phi.range >= c.R0) throw Error(ErrorKind::config, "phi range must be much smaller than R0");
}

// 16 pi^{-1/2} int_0^inf u^4 exp(-u^2) du, the Gaussian centre-of-mass entropy term.
inline double s0_quadrature() {
  boost::math::quadrature::exp_sinh<double> q;
  double err = 0, l1 = 0;
  const double v = q.integrate([](double u) { return u > 40 ? 0.0 : std::pow(u, 4) * std::exp(-u * u); }, 0.0,
                               std::numeric_limits<double>::infinity(), 1e-14, &err, &l1);
  if (!(err < 1e-10)) throw Error(ErrorKind::numerical, "S0 quadrature did not converge");
  return 16.0 / std::sqrt(constants::pi) * v;
}

inline double bump(double r2, double range) {
  const double u = r2 / (range * range);
  return u < 1 ? std::exp(-1.0 / (1.0 - u)) : 0.0;
}

// Momentum-space Shannon entropy of phi: -sum_{p,s0,s1} P ln P with P = |phi_hat|^2 normalized.
inline double s1_entropy(const PhiDescriptor& phi) {
  const int B = phi.box;
  std::vector<cplx> a(static_cast<std::size_t>(B) * B * B);
  auto at = [B](int i, int j, int k) { return (static_cast<std::size_t>(i) * B + j) * B + k; };
  auto wrap = [B](int i) { return i < B / 2 ? i : i - B; };
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < B; ++j)
      for (int k = 0; k < B; ++k)
        a[at(i, j, k)] = bump(double(wrap(i) * wrap(i) + wrap(j) * wrap(j) + wrap(k) * wrap(k)), phi.range);
  // separable DFT, one axis at a time
  std::vector<cplx> w(B);
  for (int p = 0; p < B; ++p) w[p] = std::polar(1.0, -2 * constants::pi * p / B);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<cplx> out(a.size());
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j)
        for (int p = 0; p < B; ++p) {
          cplx s = 0;
          for (int x = 0; x < B; ++x) {
            const std::size_t src = axis == 0 ? at(x, i, j) : axis == 1 ? at(i, x, j) : at(i, j, x);
            s += a[src] * w[(static_cast<long>(p) * x) % B];
          }
          out[axis == 0 ? at(p, i, j) : axis == 1 ? at(i, p, j) : at(i, j, p)] = s;
        }
    a.swap(out);
  }
  double tot = 0;
  for (auto& z : a) tot += std::norm(z);
  double S = 0;
  for (auto& z : a) {
    const double P = std::norm(z) / tot;
    if (P > 0) S -= P * std::log(P);
  }
  return S + std::log(2.0);  // singlet: two spin components of equal weight
}

inline double spread_radius(double R0, double M, double t) { return std::sqrt(R0 * R0 + t * t / (16 * M * M * R0 * R0)); }

inline double two_fermion_c_lower(double R) {
  return std::sqrt(2.0) * std::pow(R, 1.5) / (std::sqrt(3.0) * std::pow(constants::pi, 0.25));
}

struct TwoFermionSample {
  double t, R, C_lower, C_upper, Q_unsplit_lower;
};

struct TwoFermionReport {
  double S0 = 0, S1 = 0, Q_planewave = 0, R_star = 0, t_star = 0, t_star_numeric = 0;
  bool split_at_start = false;
  std::vector<TwoFermionSample> curve;
};

inline TwoFermionReport run_two_fermion(const TwoFermionConfig& c, int samples = 101) {
  validate(c);
  TwoFermionReport r;
  r.S0 = s0_quadrature();
  r.S1 = s1_entropy(c.phi);
  r.Q_planewave = c.b * (r.S0 + r.S1);
  // C_lower(R)^2 = 2 R^3 / (3 sqrt(pi)) crosses Q_planewave at R_star
  r.R_star = std::cbrt(1.5 * std::sqrt(constants::pi) * r.Q_planewave);
  r.split_at_start = r.R_star <= c.R0;
  r.t_star = r.split_at_start ? 0.0 : 4 * c.M * c.R0 * std::sqrt(r.R_star * r.R_star - c.R0 * c.R0);
  auto gap = [&](double t) { return std::pow(two_fermion_c_lower(spread_radius(c.R0, c.M, t)), 2) - r.Q_planewave; };
  if (r.split_at_start) {
    r.t_star_numeric = 0;
  } else {
    double hi = 1.0;
    for (int k = 0; gap(hi) <= 0; ++k) {
      if (k > 200) throw Error(ErrorKind::numerical, "no bracket for the crossing time");
      hi *= 2;
    }
    std::uintmax_t it = 200;
    auto [lo, up] = boost::math::tools::toms748_solve(gap, 0.0, hi, boost::math::tools::eps_tolerance<double>(50), it);
    r.t_star_numeric = 0.5 * (lo + up);
  }
  const double t_end = r.t_star > 0 ? 2 * r.t_star : 16 * c.M * c.R0 * c.R0;
  for (int k = 0; k < samples; ++k) {
    const double t = t_end * k / (samples - 1), R = spread_radius(c.R0, c.M, t), Cl = two_fermion_c_lower(R);
    r.curve.push_back({t, R, Cl, std::numeric_limits<double>::infinity(), Cl * Cl});
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scattering with a macroscopic recorder

struct ScatteringConfig {
  int m = 2;
  double V = 1e6;
  int n_Q = 20, n_R = 1;
  double b = 1.0;
};

inline void validate(const ScatteringConfig& c) {
  if (c.m < 2) throw Error(ErrorKind::config, "scattering needs m >= 2");
  if (!(c.n_Q > c.n_R && c.n_R >= 0)) throw Error(ErrorKind::config, "need n_Q > n_R >= 0");
  if (!(c.V > 0 && c.b > 0)) throw Error(ErrorKind::config, "V and b must be positive");
}

struct ScatteringReport {
  double C_lower_out = 0, C_upper_out = 0, Q_unsplit_lower = 0, Q_unsplit_upper = 0, Q_split = 0;
  bool split_lower = false, split_upper = false, b_marginal = false;
  bool split_rule = false;  // c0^2 m V > b ln 2m
};

inline ScatteringReport run_scattering(const ScatteringConfig& c) {
  validate(c);
  ScatteringReport r;
  const double nq = c.n_Q, nr = c.n_R;
  r.C_lower_out = constants::c0 * std::sqrt(c.m * c.V * (nq - nr) / (nq + nr));
  // every particle of a cube-shaped region moves at most one cube side during repositioning
  r.C_upper_out = upper_bound_formula(c.m, c.n_Q + c.n_R, c.V, std::cbrt(c.V));
  r.Q_unsplit_lower = r.C_lower_out * r.C_lower_out;
  r.Q_unsplit_upper = r.C_upper_out * r.C_upper_out;
  r.Q_split = c.b * std::log(2.0 * c.m);
  r.split_lower = r.Q_unsplit_lower > r.Q_split;
  r.split_upper = r.Q_unsplit_upper > r.Q_split;
  r.b_marginal = r.split_lower != r.split_upper;
  r.split_rule = constants::c0 * constants::c0 * c.m * c.V > r.Q_split;
  return r;
}

// Gap-width criterion in lattice units: c1 q >= sqrt(n b ln m) with c1 = pi/sqrt(192).
inline bool gap_width_split(int q, int n, double b, int m) {
  if (q < 0 || n < 1 || m < 2 || !(b > 0)) throw Error(ErrorKind::invalid_argument, "need q >= 0, n >= 1, m >= 2, b > 0");
  return constants::pi / std::sqrt(192.0) * q >= std::sqrt(n * b * std::log(double(m)));
}

// ---------------------------------------------------------------------------
// Displaced copies: Phi(p) = m d^2 / p + b ln p

struct DisplacedConfig {
  int m = 64;
  double b = 1.0;
  double rate = 1.0;  // d(t) = rate t
  double t_max = 10.0;
  int n_t = 11;
};

inline void validate(const DisplacedConfig& c) {
  if (c.m < 1 || !(c.b > 0) || c.rate < 0 || c.t_max < 0 || c.n_t < 2)
    throw Error(ErrorKind::config, "need m >= 1, b > 0, rate >= 0, t_max >= 0, n_t >= 2");
}

inline double displaced_phi(int m, double d, double b, double p) { return m * d * d / p + b * std::log(p); }

struct DisplacedSample {
  double t, d, p_opt, C_branch_opt;
  int p_int, p_round;
  double C_branch_int;
  bool split;
};

inline std::vector<DisplacedSample> run_displaced_copies(const DisplacedConfig& c) {
  validate(c);
  std::vector<DisplacedSample> out;
  for (int k = 0; k < c.n_t; ++k) {
    const double t = c.t_max * k / (c.n_t - 1), d = c.rate * t;
    DisplacedSample s{t, d, c.m * d * d / c.b, 0, 1, 0, 0, false};
    // at the continuous optimum each branch holds m/p copies: C = sqrt(m/p) d = sqrt(b)
    s.C_branch_opt = s.p_opt > 0 ? std::sqrt(c.m / s.p_opt) * d : 0.0;
    s.p_round = static_cast<int>(std::lround(std::min<double>(s.p_opt, c.m)));
    double best = displaced_phi(c.m, d, c.b, 1);
    for (int p = 2; p <= c.m; ++p)
      if (double v = displaced_phi(c.m, d, c.b, p); v < best) best = v, s.p_int = p;
    s.C_branch_int = std::sqrt(double(c.m) / s.p_int) * d;
    s.split = s.p_int > 1;
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fan-out record: m equal-weight single-fermion atoms, each copied into its own d^3 cube step by step.
// The tree splits once the copies carry enough complexity for the given b.

inline BranchTree fanout_tree(int m, double b, int d = 2, double t_max = -1, std::uint64_t seed = 0) {
  if (m < 1 || d < 1) throw Error(ErrorKind::config, "fan-out needs m, d >= 1");
  auto lay = make_desk_layout(m, 1, d);
  const auto& s = lay.spec;
  std::vector<Region> cubes;
  std::vector<int> spins;
  std::vector<StateVector> atoms;
  for (int i = 0; i < m; ++i) {
    cubes.push_back(s.regions[i][0]);
    spins.push_back(s.spins[i][0]);
    atoms.push_back(make_product_state(lay.lattice, {point_wavefunction(lay.lattice, s.regions[i][0].center(), s.spins[i][0])})
                        .scaled(s.phases[i] / std::sqrt(double(m))));
  }
  auto fan = build_fanout(cubes, spins).trajectory;
  Stepper step = [fan](int k, double) {
    Trajectory out;
    if (k < static_cast<int>(fan.size())) out.steps.push_back(fan.steps[k]);
    return out;
  };
  if (t_max < 0) t_max = static_cast<double>(fan.size());
  return evolve_tree(lay.lattice, atoms, step, b, {1.0, t_max, CProxy::lower}, family_proxy(1), seed);
}

// ---------------------------------------------------------------------------
// CSV rows, fixed 17-digit formatting so repeated runs are byte-identical

inline std::string csv_num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::setprecision(17) << x;
  return o.str();
}

}  // namespace branchlab
