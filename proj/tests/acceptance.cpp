// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "branchlab/io.hpp"

using namespace branchlab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks; the first few are echoed in the summary line.
struct Check {
  int failures = 0, checks = 0;
  std::vector<std::string> notes;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (ok) return;
    ++failures;
    if (notes.size() < 4) notes.push_back(what);
  }
};

std::string fmt(double x) {
  std::ostringstream o;
  o << std::setprecision(6) << x;
  return o.str();
}

bool report(int id, const std::string& name, const std::function<std::string(Check&)>& body) {
  Check c;
  std::string detail;
  const auto t0 = Clock::now();
  try {
    detail = body(c);
  } catch (const std::exception& e) {
    c.failures++;
    c.notes.push_back(std::string("exception: ") + e.what());
  }
  const bool ok = c.failures == 0;
  std::cout << (ok ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << detail << " (" << c.checks << " checks, "
            << c.failures << " failed, " << fmt(seconds_since(t0)) << " s)";
  for (auto& n : c.notes) std::cout << " | " << n;
  std::cout << std::endl;
  return ok;
}

// 1 ---------------------------------------------------------------------------
std::string constructive_sandwich(Check& c) {
  const auto t0 = Clock::now();
  double worst_fid = 1, worst_ratio = 0;
  for (int m : {2, 4})
    for (int n : {1, 2})
      for (int d : {1, 2, 3}) {
        const std::string cell = "m=" + std::to_string(m) + " n=" + std::to_string(n) + " V=" + std::to_string(d * d * d);
        auto lay = make_desk_layout(m, n, d);
        auto ci = constructive_complexity(lay.lattice, lay.spec);
        const double formula = upper_bound_formula(m, n, d * d * d, ci.r);
        c.expect(ci.fidelity >= 1 - 1e-9, cell + " fidelity " + fmt(ci.fidelity));
        c.expect(ci.upper <= formula, cell + " cost above formula");
        const auto E = build_E_sets(lay.lattice, lay.spec);
        const auto rb = schmidt_rotation_bound(lay.lattice, *ci.witness, ci.reference, E, n);
        c.expect(rb.bound <= ci.upper, cell + " rotation bound above cost");
        worst_fid = std::min(worst_fid, ci.fidelity);
        worst_ratio = std::max(worst_ratio, ci.upper / formula);
      }
  const double secs = seconds_since(t0);
  c.expect(secs < 300, "runtime " + fmt(secs) + " s");
  return "min fidelity " + fmt(worst_fid) + ", max cost/formula " + fmt(worst_ratio);
}

// 2 ---------------------------------------------------------------------------
// Random detours spliced into the witness: W[0,k) R R^-1 W[k,end) reaches the same target.
Trajectory random_detour(const Lattice& L, const Trajectory& W, const std::vector<std::vector<int>>& E, std::mt19937_64& rng) {
  std::vector<int> sites;
  for (auto& e : E) sites.insert(sites.end(), e.begin(), e.end());
  std::uniform_int_distribution<std::size_t> cut(0, W.size());
  std::uniform_int_distribution<int> nsteps(1, 3);
  std::uniform_real_distribution<double> theta(-0.6, 0.6);
  Trajectory R;
  for (int s = nsteps(rng); s > 0; --s) {
    TrajectoryStep st;
    std::set<int> used;
    for (int g = 0; g < 2; ++g) {
      const int x = sites[std::uniform_int_distribution<std::size_t>(0, sites.size() - 1)(rng)];
      const auto nb = L.neighbors(x);
      const int y = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
      if (used.count(x) || used.count(y)) continue;
      used.insert(x);
      used.insert(y);
      st.gens.push_back(random_generator(L.coord(x), L.coord(y), 2, rng, std::uniform_real_distribution<double>(0.5, 2.5)(rng)));
    }
    st.theta = theta(rng);
    R.steps.push_back(st);
  }
  const std::size_t k = cut(rng);
  Trajectory a, b;
  a.steps.assign(W.steps.begin(), W.steps.begin() + static_cast<long>(k));
  b.steps.assign(W.steps.begin() + static_cast<long>(k), W.steps.end());
  return concat(concat(concat(a, R), reverse(R)), b);
}

std::string rotation_universality(Check& c) {
  struct Target {
    int m, n, d, runs;
  };
  // targets with m >= 2n and n >= 2, where the endpoint angle argument applies
  const std::vector<Target> targets = {{4, 2, 1, 80}, {4, 2, 2, 20}};
  int cases = 0, held = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const auto [m, n, d, runs] = targets[ti];
    auto lay = make_desk_layout(m, n, d);
    const auto& L = lay.lattice;
    auto ci = constructive_complexity(L, lay.spec);
    const auto target = make_entangled_state(L, lay.spec);
    const auto E = build_E_sets(L, lay.spec);
    c.expect(!E.empty(), "no E sets for m=" + std::to_string(m));
    const double angle = std::asin(std::sqrt(double(n) / (m * d * d * d)));
    for (int k = 0; k < runs; ++k) {
      std::mt19937_64 rng(1000 * ti + k);
      const Trajectory T = random_detour(L, *ci.witness, E, rng);
      const std::string tag = "target " + std::to_string(ti) + " seed " + std::to_string(k);
      c.expect(fidelity(apply_trajectory(L, ci.reference, T), target) >= 1 - 1e-9, tag + " misses the target");
      const auto rb = schmidt_rotation_bound(L, T, ci.reference, E, n);
      ++cases;
      if (rb.cost >= rb.bound) ++held;
      c.expect(rb.cost >= rb.bound, tag + " cost " + fmt(rb.cost) + " < bound " + fmt(rb.bound));
      for (double a : rb.per_set) {
        c.expect(a >= angle - 1e-6, tag + " E angle " + fmt(a) + " < " + fmt(angle));
        min_slack = std::min(min_slack, a - angle);
      }
    }
  }
  return std::to_string(held) + "/" + std::to_string(cases) + " trajectories with cost >= bound, min angle slack " +
         fmt(min_slack);
}

// 3 ---------------------------------------------------------------------------
std::string exact_constants(Check& c) {
  auto L = build_lattice(4);
  double worst_norm = 0;
  for (int m = 2; m <= 5; ++m)
    for (int n = 1; n <= 3; ++n)
      for (auto& s : build_split_trajectory(L, m, n, {-4, -4, 0}).steps)
        worst_norm = std::max(worst_norm, std::abs(s.generator_norm() - std::sqrt(2.0)));
  c.expect(worst_norm <= 1e-12, "split norm off by " + fmt(worst_norm));

  // With m >= 2n each E set draws one point from each of 2n terms, and with n >= 2 the remainders of
  // distinct terms are orthogonal, so the one-particle block has exactly 2n values 1/sqrt(mV).
  // For n = 1 the remainders are all the vacuum and the block collapses to rank one.
  double worst_schmidt = 0;
  int values = 0;
  for (auto [m, n, d] : std::vector<std::array<int, 3>>{{4, 2, 1}, {4, 2, 2}, {6, 2, 1}, {6, 2, 2}, {6, 3, 1}, {8, 4, 1}}) {
    auto lay = make_desk_layout(m, n, d);
    auto ci = constructive_complexity(lay.lattice, lay.spec);
    const auto end = apply_trajectory(lay.lattice, ci.reference, *ci.witness);
    const double want = std::sqrt(1.0 / (m * d * d * d));
    for (auto& e : build_E_sets(lay.lattice, lay.spec)) {
      const auto spec = sector_spectrum(lay.lattice, end, e);
      int nonzero = 0;
      for (double v : spec.at(1))
        if (v > 1e-12) {
          worst_schmidt = std::max(worst_schmidt, std::abs(v - want));
          ++values;
          ++nonzero;
        }
      c.expect(nonzero == 2 * n, "expected " + std::to_string(2 * n) + " one-particle values, got " + std::to_string(nonzero));
    }
  }
  c.expect(values > 0, "no Schmidt values inspected");
  c.expect(worst_schmidt <= 1e-9, "Schmidt value off by " + fmt(worst_schmidt));

  const double S0 = s0_quadrature();
  c.expect(std::abs(S0 - 6) <= 1e-6, "S0 = " + fmt(S0));
  return "max |norm - sqrt2| " + fmt(worst_norm) + ", max Schmidt error " + fmt(worst_schmidt) + " over " +
         std::to_string(values) + " values, S0 = " + fmt(S0);
}

// 4 ---------------------------------------------------------------------------
std::string threshold_solver(Check& c) {
  double worst = 0;
  for (int n = 1; n <= 8; ++n) worst = std::max(worst, std::abs(branching_threshold(n, 1.0).residual));
  c.expect(worst < 1e-10, "residual " + fmt(worst));

  // 20 cells with the continuous optimum placed inside [1, m - 1]; groups are at most the m terms
  int cells = 0;
  double max_gap = 0;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> U(0, 1);
  for (; cells < 20; ++cells) {
    const int m = 8 + static_cast<int>(120 * U(rng)), n = 1 + cells % 4;
    const double V = 1 + 26 * U(rng);
    const double b = constants::c1p * constants::c1p * m * n * V / (1 + (m - 2) * U(rng));
    const double r = optimal_group_count(m, n, V, b);
    const int brute = brute_force_group_count(m, n, V, b, m);
    max_gap = std::max(max_gap, std::abs(brute - r));
    c.expect(std::abs(brute - r) <= 1.0, "cell " + std::to_string(cells) + ": brute " + std::to_string(brute) + " vs r " + fmt(r));
  }
  c.expect(cells == 20, "cell count");

  double worst_c = 0;
  for (double b : {0.5, 1.0, 4.0, 30.0}) {
    for (auto& s : run_displaced_copies({256, b, 1.0, 20, 41}))
      if (s.p_opt > 0) worst_c = std::max(worst_c, std::abs(s.C_branch_opt - std::sqrt(b)));
  }
  c.expect(worst_c <= 1e-9, "displaced C off by " + fmt(worst_c));
  return "max residual " + fmt(worst) + ", max group gap " + fmt(max_gap) + " over " + std::to_string(cells) +
         " cells, max |C - sqrt b| " + fmt(worst_c);
}

// 5 ---------------------------------------------------------------------------
std::string hyperlattice_geometry(Check& c) {
  const auto t0 = Clock::now();
  const double tau = 1, rho = 0.1, sigma = 6 * rho;
  const double vmin = constants::pi * std::pow(rho, 3) / 6, vmax = 4 * constants::pi * std::pow(rho, 3) / 3;
  double min_d = std::numeric_limits<double>::infinity(), max_cover = 0, vlo = vmax, vhi = 0;
  int max_deg = 0, geodesics = 0, cells_checked = 0;
  double worst_geo = -std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::string tag = "seed " + std::to_string(seed);
    const HyperLattice L = build_random_lattice(tau, sigma, rho, seed);
    const double d = min_pair_distance(L);
    min_d = std::min(min_d, d);
    c.expect(d > rho, tag + " min distance " + fmt(d));
    const double cover = probe_cover_radius(L, 100000, 7919 + seed);
    max_cover = std::max(max_cover, cover);
    c.expect(cover <= rho, tag + " cover " + fmt(cover));
    for (int deg : degrees(L)) max_deg = std::max(max_deg, deg);

    PointGrid G(L);
    std::mt19937_64 rng(31 + seed);
    for (int i = 0; i < static_cast<int>(L.points.size()); ++i) {
      const Cell cell = voronoi_cell(L, G, i);
      if (!cell.interior) continue;
      const double v = cell_volume_mc(cell, tau, 2000, rng);
      vlo = std::min(vlo, v);
      vhi = std::max(vhi, v);
      ++cells_checked;
      c.expect(v > vmin && v < vmax, tag + " cell " + std::to_string(i) + " volume " + fmt(v));
    }

    // 10 geodesics per lattice from interior starting points, lengths up to the exit
    std::normal_distribution<double> N(0, 1);
    std::uniform_real_distribution<double> U(0.05, 0.95);
    for (int g = 0; g < 10; ++g) {
      const P4 P = sample_hyperboloid_point(tau, 0.5 * sigma, rng);
      const V3 dir{N(rng), N(rng), N(rng)};
      const double lam = U(rng) * geodesic_exit_length(L, P, dir);
      const int n = geodesic_crossings(L, P, dir, lam);
      const double cap = 24 * lam / rho + 64;
      worst_geo = std::max(worst_geo, n - cap);
      c.expect(n <= cap, tag + " geodesic crossings " + std::to_string(n));
      ++geodesics;
    }
  }
  c.expect(max_deg <= 68, "max degree " + std::to_string(max_deg));

  // sampler radial law, 10^6 draws
  std::mt19937_64 rng(2718);
  std::vector<double> r;
  r.reserve(1000000);
  for (int i = 0; i < 1000000; ++i) r.push_back(hyper::norm(hyper::spatial(sample_hyperboloid_point(tau, sigma, rng))));
  const double D = ks_statistic(r, [&](double x) { return radial_cdf(x, tau, sigma); });
  const double p = ks_pvalue(D, static_cast<double>(r.size()));
  c.expect(p > 0.01, "KS p " + fmt(p));

  const double secs = seconds_since(t0);
  c.expect(secs < 600, "runtime " + fmt(secs) + " s");
  return "min distance " + fmt(min_d) + ", max cover " + fmt(max_cover) + ", volumes [" + fmt(vlo) + ", " + fmt(vhi) +
         "] over " + std::to_string(cells_checked) + " cells, max degree " + std::to_string(max_deg) + ", " +
         std::to_string(geodesics) + " geodesics (max excess " + fmt(worst_geo) + "), KS p " + fmt(p);
}

// 6 ---------------------------------------------------------------------------
std::string measure_laws(Check& c) {
  double worst_add = 0, worst_comp = 0;
  int nodes = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto T = random_tree(1 + static_cast<int>(seed % 10), 500 + seed);
    HistoryMeasure mu(T);
    for (auto& nd : T.nodes) {
      ++nodes;
      if (nd.split_event >= 0) {
        const double whole = mu(nd.history);
        const double parts = mu(extend_history(nd.history, nd.split_event, 0)) + mu(extend_history(nd.history, nd.split_event, 1));
        worst_add = std::max(worst_add, std::abs(whole - parts));
      }
      double total = mu(nd.history);
      for (auto& h : complement_decomposition(nd.history)) total += mu(h);
      worst_comp = std::max(worst_comp, std::abs(total - 1));
    }
  }
  c.expect(worst_add <= 1e-12, "additivity off by " + fmt(worst_add));
  c.expect(worst_comp <= 1e-12, "complement off by " + fmt(worst_comp));

  const auto T = random_tree(3, 21, 1.0);
  c.expect(T.leaves().size() <= 8, "sampling tree too large");
  HistoryMeasure mu(T);
  const int N = 100000;
  std::map<History, int> all, seq;
  std::mt19937_64 r1(1), r2(2);
  for (int k = 0; k < N; ++k) {
    ++all[sample_all_time_history(mu, r1)];
    ++seq[T.nodes[born_sample(T, r2).back()].history];
  }
  double tv = 0;
  for (int id : T.leaves()) tv += 0.5 * std::abs(all[T.nodes[id].history] - seq[T.nodes[id].history]) / double(N);
  c.expect(tv < 0.01, "TV " + fmt(tv));

  int runs = 0, closed = 0;
  for (int m : {2, 3, 4, 5})
    for (double b : {1e-3, 5e-3, 2e-2}) {
      const auto F = fanout_tree(m, b);
      HistoryMeasure fm(F);
      for (int id : F.leaves()) {
        const auto rep = replay_times(fm, F.nodes[id].history, b);
        ++runs;
        closed += !rep.open_entry.has_value();
        for (std::size_t k = 1; k < rep.taus.size(); ++k)
          c.expect(rep.taus[k] > rep.taus[k - 1], "replay not increasing at m=" + std::to_string(m));
      }
    }
  return "additivity " + fmt(worst_add) + ", complement " + fmt(worst_comp) + " over " + std::to_string(nodes) +
         " nodes, TV " + fmt(tv) + ", " + std::to_string(runs) + " replays (" + std::to_string(closed) + " fully timed)";
}

// 7 ---------------------------------------------------------------------------
std::string lie_closure(Check& c) {
  const auto t0 = Clock::now();
  const auto r = lie_closure_sectors(2, 1);
  const double secs = seconds_since(t0);
  c.expect(r.sector_dims == std::vector<int>{1, 4, 6, 4, 1}, "sector dimensions");
  for (std::size_t k = 0; k < r.contains_su.size(); ++k) c.expect(r.contains_su[k], "sector " + std::to_string(k) + " lacks su");
  c.expect(r.closure_dim >= 65 && r.closure_dim <= 69, "closure dim " + std::to_string(r.closure_dim));
  c.expect(secs < 60, "runtime " + fmt(secs));
  return "closure dim " + std::to_string(r.closure_dim) + " in " + fmt(secs) + " s";
}

// 8 ---------------------------------------------------------------------------
std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string scenario_decisions(Check& c) {
  int agree = 0, marginal = 0;
  for (double V : {8.0, 1e12, 1e14})
    for (double b : {1e6, 1e7, 1e8}) {
      const auto r = run_scattering({2, V, 20, 1, b});
      const bool ok = r.split_lower == r.split_rule && r.split_upper == r.split_rule;
      agree += ok;
      marginal += r.b_marginal;
      c.expect(ok, "V=" + fmt(V) + " b=" + fmt(b) + " brackets disagree with the rule");
    }

  double last = std::numeric_limits<double>::infinity();
  for (double b : {1e6, 1e5, 1e4, 1e3, 1e2}) {
    const double t = run_two_fermion({10, 1, b, {}}).t_star;
    c.expect(std::isfinite(t) && t < last, "t_star not decreasing at b=" + fmt(b));
    last = t;
  }

  // the command-line tool, run twice per scenario with a sweep and a fixed seed
  namespace fs = std::filesystem;
  const fs::path work = fs::temp_directory_path() / ("branchlab_accept_" + std::to_string(::getpid()));
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"two-fermion", "b=100:100000:4"}, {"scattering", "V=8:1e14:5"}, {"displaced", "b=0.5:4:3"}};
  int identical = 0;
  for (auto& [kind, sweep] : runs) {
    std::string stem = kind;
    std::replace(stem.begin(), stem.end(), '-', '_');
    std::string out[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = work / std::to_string(k);
      const std::string cmd = std::string("\"") + BRANCHLAB_CLI + "\" scenario " + kind + " --config \"" + BRANCHLAB_SRC +
                              "/configs/" + stem + ".json\" --out \"" + dir.string() + "\" --sweep " + sweep + " --seed 11";
      c.expect(std::system(cmd.c_str()) == 0, kind + " run failed");
      out[k] = read_all(dir / (kind + ".csv"));
    }
    c.expect(!out[0].empty() && out[0] == out[1], kind + " CSV differs between runs");
    identical += !out[0].empty() && out[0] == out[1];
  }
  fs::remove_all(work);
  return std::to_string(agree) + "/9 scattering cells match the rule under both brackets (" + std::to_string(marginal) +
         " marginal), t_star decreasing, " + std::to_string(identical) + "/3 scenario CSVs identical";
}

}  // namespace

int main() {
  bool ok = true;
  ok &= report(1, "constructive sandwich", constructive_sandwich);
  ok &= report(2, "rotation lower bound", rotation_universality);
  ok &= report(3, "exact constants", exact_constants);
  ok &= report(4, "threshold solver", threshold_solver);
  ok &= report(5, "hyperlattice geometry", hyperlattice_geometry);
  ok &= report(6, "measure laws", measure_laws);
  ok &= report(7, "Lie closure", lie_closure);
  ok &= report(8, "scenario decisions", scenario_decisions);
  return ok ? 0 : 1;
}
