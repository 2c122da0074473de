#include <gtest/gtest.h>

#include "branchlab/branching.hpp"

using namespace branchlab;

namespace {

const double PI = std::numbers::pi;

StateVector single_site(const Lattice& L, const Coord& c, int spin = 1) {
  return make_product_state(L, {point_wavefunction(L, c, spin)});
}

struct FanScenario {
  DeskLayout lay;
  std::vector<StateVector> atoms;
  Trajectory fan;
};

// Entangled family right before fan-out: every particle sits at its cube center.
FanScenario fan_scenario(int m, int n, int d) {
  FanScenario f{make_desk_layout(m, n, d), {}, {}};
  const auto& s = f.lay.spec;
  std::vector<Region> cubes;
  std::vector<int> spins;
  for (int i = 0; i < m; ++i) {
    std::vector<FermionWavefunction> ps;
    for (int j = 0; j < n; ++j) {
      ps.push_back(point_wavefunction(f.lay.lattice, s.regions[i][j].center(), s.spins[i][j]));
      cubes.push_back(s.regions[i][j]);
      spins.push_back(s.spins[i][j]);
    }
    f.atoms.push_back(make_product_state(f.lay.lattice, ps).scaled(s.phases[i] / std::sqrt(double(m))));
  }
  f.fan = build_fanout(cubes, spins).trajectory;
  return f;
}

Stepper scripted(const Trajectory& t) {
  return [t](int k, double) {
    Trajectory out;
    if (k < static_cast<int>(t.size())) out.steps.push_back(t.steps[k]);
    return out;
  };
}

}  // namespace

TEST(NetComplexity, Examples) {
  auto L = build_lattice(1);
  auto p = single_site(L, {0, 0, 0});
  EXPECT_DOUBLE_EQ(net_complexity({{p, "", 1.0, CInterval::exact(0)}}, 3.0, CProxy::upper), 0.0);
  auto a = single_site(L, {0, 0, 0}).scaled(std::sqrt(0.5)), c = single_site(L, {-1, 0, 0}).scaled(std::sqrt(0.5));
  EXPECT_NEAR(net_complexity({{a, "", 0.5, CInterval::exact(0)}, {c, "", 0.5, CInterval::exact(0)}}, 3.0, CProxy::lower),
              3.0 * std::log(2.0), 1e-14);
  EXPECT_THROW(net_complexity({{a, "", 0.5, {}}, {a, "", 0.5, {}}}, 1.0, CProxy::lower), Error);
  EXPECT_THROW(net_complexity({{p, "", 1.0, {}}}, 0.0, CProxy::lower), Error);
}

TEST(NetComplexity, GroupedFormForEqualGroups) {
  // r equal groups of g >= 2 terms: Q = c1'^2 m n V / r + b ln r under the upper proxy
  const int m = 12, n = 2;
  const double V = 27, b = 40;
  for (int r : {1, 2, 3, 6}) {
    std::vector<Branch> br;
    for (int g = 0; g < r; ++g) br.push_back({std::nullopt, "", 1.0 / r, group_interval(m / r, n, V)});
    EXPECT_NEAR(net_complexity(br, b, CProxy::upper), grouped_bound_Q(m, n, V, b, r), 1e-9 * grouped_bound_Q(m, n, V, b, r));
  }
}

TEST(NetComplexity, NonnegativeForNormalizedWeights) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 100; ++t) {
    std::vector<Branch> br(1 + t % 6);
    double s = 0;
    for (auto& x : br) s += (x.weight = U(rng));
    for (auto& x : br) {
      x.weight /= s;
      x.C = CInterval::exact(3 * U(rng));
    }
    EXPECT_GE(net_complexity(br, 0.5 + U(rng), CProxy::lower), 0.0);
  }
}

TEST(SplitCondition, BoundaryIsNotASplit) {
  const double b = 2.5;
  auto t = split_condition(std::sqrt(b * std::log(2.0)), 0, 0, 0.5, b);
  EXPECT_NEAR(t.margin, 0.0, 1e-14);
  EXPECT_FALSE(split_condition(std::sqrt(b * std::log(2.0)) * (1 - 1e-12), 0, 0, 0.5, b).split);
  EXPECT_TRUE(split_condition(1e3, 0, 0, 0.5, b).split);
  EXPECT_THROW(split_condition(1, 0, 0, 0.0, b), Error);
  EXPECT_THROW(split_condition(1, 0, 0, 1.0, b), Error);
  EXPECT_THROW(split_condition(-1, 0, 0, 0.5, b), Error);
}

TEST(SplitCondition, EqualityFixesB) {
  // the first time the inequality becomes an equality, b = [Cp^2 - rho C0^2 - (1-rho) C1^2] / sigma
  const double Cp = 3.1, C0 = 1.2, C1 = 2.0, rho = 0.3;
  const double sigma = -(rho * std::log(rho) + (1 - rho) * std::log(1 - rho));
  const double b = (Cp * Cp - rho * C0 * C0 - (1 - rho) * C1 * C1) / sigma;
  EXPECT_NEAR(split_condition(Cp, C0, C1, rho, b).margin, 0.0, 1e-13);
  EXPECT_TRUE(split_condition(Cp * (1 + 1e-9), C0, C1, rho, b).split);
}

TEST(Threshold, ResidualAndMonotone) {
  double prev = 0;
  for (int n = 1; n <= 8; ++n) {
    auto th = branching_threshold(n, 1.0);
    EXPECT_LT(std::abs(th.residual), 1e-10);
    EXPECT_LT(std::abs(threshold_residual(th.s, n)), 1e-10);
    EXPECT_GT(th.s, 1 / (constants::c0 * constants::c0));  // large root
    // ds/dn = (1/n) / (c0^2 - 1/s) > 0 on the large root
    EXPECT_GT(1.0 / n / (constants::c0 * constants::c0 - 1 / th.s), 0.0);
    EXPECT_GT(th.s, prev);
    prev = th.s;
  }
  auto a = branching_threshold(3, 7.0), b2 = branching_threshold(3, 14.0);
  EXPECT_DOUBLE_EQ(a.s, b2.s);
  EXPECT_DOUBLE_EQ(b2.mV_star, 2 * a.mV_star);
  EXPECT_THROW(branching_threshold(0, 1.0), Error);
}

TEST(Threshold, BruteForceGroupCount) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0, 1);
  for (int cell = 0; cell < 40; ++cell) {
    const int m = 50 + static_cast<int>(200 * U(rng)), n = 1 + cell % 4;
    const double V = 1 + 20 * U(rng);
    const double rstar = 1 + (m - 2) * U(rng);
    const double b = constants::c1p * constants::c1p * m * n * V / rstar;
    EXPECT_NEAR(optimal_group_count(m, n, V, b), rstar, 1e-9 * rstar);
    EXPECT_LE(std::abs(brute_force_group_count(m, n, V, b, m) - rstar), 1.0);
  }
}

TEST(Threshold, CertifiedSplitFlipsAtSb) {
  for (int n : {1, 2, 5}) {
    const double b = 3.0;
    const auto th = branching_threshold(n, b);
    const int m = 7;
    EXPECT_TRUE(certified_family_split(m, n, th.mV_star * 1.01 / m, b));
    EXPECT_FALSE(certified_family_split(m, n, th.mV_star * 0.99 / m, b));
  }
}

TEST(Optimize, PlaneWaveInputIsOneBranch) {
  auto L = build_lattice(1);
  FermionWavefunction pw(2 * static_cast<std::size_t>(L.size())), pw2 = pw;
  for (int i = 0; i < L.size(); ++i) {
    const Coord& x = L.coord(i);
    pw[mode_of(i, 1)] = std::polar(1.0, PI * (x[0] + 1) + PI * x[2]);  // kappa = (1,0,1)
    pw2[mode_of(i, 1)] = 1.0;
  }
  auto st = make_product_state(L, {pw, pw2});
  for (double b : {0.1, 10.0, 1e6}) {
    auto opt = optimize_branches(L, st, {Family::single, Family::point_basis, Family::plane_waves}, b);
    EXPECT_EQ(opt.best.branches.size(), 1u);
    EXPECT_NEAR(opt.best.Q_value, 0.0, 1e-12);
    for (auto& r : opt.reports)
      if (r.family == Family::plane_waves) {
        EXPECT_EQ(r.branch_count, 1u);
        EXPECT_NEAR(r.Q_value, 0.0, 1e-9);
      }
  }
}

TEST(Optimize, PointBasisEntropy) {
  auto L = build_lattice(1);
  // two fermions, two configurations: not a Slater determinant
  auto st = make_product_state(L, {point_wavefunction(L, {0, 0, 0}, 1), point_wavefunction(L, {0, 0, -1}, 1)})
                .scaled(std::sqrt(0.2)) +
            make_product_state(L, {point_wavefunction(L, {-1, -1, 0}, 1), point_wavefunction(L, {-1, -1, -1}, 1)})
                .scaled(std::sqrt(0.8));
  auto opt = optimize_branches(L, st, {Family::point_basis}, 2.0);
  const double H = -(0.2 * std::log(0.2) + 0.8 * std::log(0.8));
  EXPECT_NEAR(opt.best.Q_value, 2.0 * H, 1e-12);
  EXPECT_EQ(opt.best.branches.size(), 2u);
  // not a product state and no family spec: the single branch has an unbounded upper proxy
  auto single = optimize_branches(L, st, {Family::single}, 2.0, CProxy::upper);
  EXPECT_TRUE(std::isinf(single.best.Q_value));
}

TEST(Optimize, Errors) {
  auto L = build_lattice(1);
  auto st = single_site(L, {0, 0, 0});
  EXPECT_THROW(optimize_branches(L, st, {Family::term_groupings}, 1.0), Error);
  BosonWavefunction phi(static_cast<std::size_t>(L.size()), 0.0);
  phi[0] = 1.0;
  auto bos = make_product_state(L, {}, {phi});
  EXPECT_THROW(optimize_branches(L, bos, {Family::plane_waves}, 1.0), Error);
}

TEST(Optimize, EntangledFamilyAboveThresholdGroups) {
  auto lay = make_desk_layout(4, 2, 1);
  auto st = make_entangled_state(lay.lattice, lay.spec);
  ASSERT_FALSE(is_product_state(st));
  const double mnV = 4 * 2 * 1.0;
  const double b = constants::c1p * constants::c1p * mnV / 2;  // optimal group count 2
  auto opt = optimize_branches(lay.lattice, st, {Family::single, Family::term_groupings}, b, CProxy::upper, &lay.spec);
  double q_single = 0, q_group = 0;
  for (auto& r : opt.reports) (r.family == Family::single ? q_single : q_group) = r.Q_value;
  EXPECT_NEAR(q_single, constants::c1p * constants::c1p * mnV, 1e-9 * q_single);
  EXPECT_LT(q_group, q_single);
  EXPECT_EQ(opt.best.family, Family::term_groupings);
  EXPECT_GT(opt.best.branches.size(), 1u);
  double wsum = 0;
  for (auto& br : opt.best.branches) wsum += br.weight;
  EXPECT_NEAR(wsum, 1.0, 1e-12);
  // two-group decomposition beats the whole state
  std::vector<Branch> two;
  for (int g = 0; g < 2; ++g) two.push_back({std::nullopt, "", 0.5, group_interval(2, 2, 1)});
  EXPECT_LT(net_complexity(two, b, CProxy::upper), q_single);
}

TEST(Optimize, LargeBKeepsSingleBranch) {
  auto lay = make_desk_layout(4, 1, 2);
  auto st = make_entangled_state(lay.lattice, lay.spec);
  auto opt = optimize_branches(lay.lattice, st, {Family::single, Family::term_groupings, Family::point_basis}, 1e12,
                               CProxy::upper, &lay.spec);
  EXPECT_EQ(opt.best.family, Family::single);
  EXPECT_EQ(opt.best.branches.size(), 1u);
}

TEST(Optimize, TiesGoToFewerBranches) {
  auto L = build_lattice(1);
  auto st = single_site(L, {0, 0, 0});
  auto opt = optimize_branches(L, st, {Family::point_basis, Family::single}, 1.0);
  EXPECT_EQ(opt.best.family, Family::single);
}

TEST(Optimize, ProductOfRemoteFactorsIsAdditive) {
  // parallel witnesses on remote supports: C(a x b)^2 = C(a)^2 + C(b)^2, so Q adds over the factors
  auto L = build_lattice(3);
  auto ta = build_split_trajectory(L, 3, 1, {-3, -3, -3});
  auto tb = build_split_trajectory(L, 2, 2, {1, 0, 2});
  const double Ca = ta.cost(), Cb = tb.cost(), Cab = parallel_compose(ta, tb).cost();
  EXPECT_NEAR(Cab * Cab, Ca * Ca + Cb * Cb, 1e-9 * Cab * Cab);
  const double b = 0.7;
  const std::vector<double> wa{0.3, 0.7}, wb{0.25, 0.25, 0.5};
  std::vector<Branch> A, Bv, AB;
  for (double x : wa) A.push_back({std::nullopt, "", x, CInterval::exact(Ca * x)});
  for (double y : wb) Bv.push_back({std::nullopt, "", y, CInterval::exact(Cb * y)});
  for (double x : wa)
    for (double y : wb) {
      const double c = std::hypot(Ca * x, Cb * y);
      AB.push_back({std::nullopt, "", x * y, CInterval::exact(c)});
    }
  EXPECT_NEAR(net_complexity(AB, b, CProxy::upper), net_complexity(A, b, CProxy::upper) + net_complexity(Bv, b, CProxy::upper),
              1e-12);
}

TEST(Evolve, IdentityStepperNoSplits) {
  auto f = fan_scenario(2, 1, 2);
  auto T = evolve_tree(f.lay.lattice, f.atoms, [](int, double) { return Trajectory{}; }, 1.0, {1.0, 5.0},
                       family_proxy(1));
  EXPECT_EQ(T.leaves().size(), 1u);
  EXPECT_TRUE(T.events.empty());
  auto one = evolve_tree(f.lay.lattice, {f.atoms[0]}, scripted(f.fan), 1e-9, {1.0, 5.0}, family_proxy(1));
  EXPECT_EQ(one.leaves().size(), 1u);
}

TEST(Evolve, ScriptedFanOutSplitsIntoTerms) {
  const int m = 4;
  auto f = fan_scenario(m, 1, 2);
  EvolveOptions opt{1.0, 6.0, CProxy::lower};
  auto T = evolve_tree(f.lay.lattice, f.atoms, scripted(f.fan), 5e-3, opt, family_proxy(1));
  auto leaves = T.leaves();
  ASSERT_EQ(leaves.size(), static_cast<std::size_t>(m));
  for (int id : leaves) EXPECT_NEAR(T.nodes[id].weight, 1.0 / m, 1e-12);
  // event times strictly increase along every root-to-leaf path
  for (int id : leaves) {
    double last = -1;
    for (auto [e, bit] : T.nodes[id].history)
      if (e >= 0) {
        EXPECT_GT(T.events[e].t, last);
        last = T.events[e].t;
      }
  }
  // splits were never undone and every committed margin stayed positive
  for (auto [e, margin] : T.persistence) EXPECT_GT(margin, 0.0) << e;
}

TEST(Evolve, BookkeepingInvariants) {
  auto f = fan_scenario(4, 1, 2);
  auto T = evolve_tree(f.lay.lattice, f.atoms, scripted(f.fan), 5e-3, {1.0, 6.0}, family_proxy(1));
  for (std::size_t s = 0; s < T.snapshots.size(); ++s) {
    double w = 0;
    for (int id : T.leaves()) w += T.node_state(id, s).norm2();
    EXPECT_NEAR(w, 1.0, 1e-9);
  }
  for (auto& n : T.nodes) {
    if (n.children.empty()) continue;
    ASSERT_EQ(n.children.size(), 2u);
    auto p = T.node_state(n.id), c0 = T.node_state(n.children[0]), c1 = T.node_state(n.children[1]);
    EXPECT_NEAR(std::abs(c0.inner(c1)), 0.0, 1e-12);
    EXPECT_NEAR((p - c0 - c1).norm(), 0.0, 1e-12);
    EXPECT_NEAR(T.nodes[n.children[0]].weight + T.nodes[n.children[1]].weight, n.weight, 1e-12);
  }
}

TEST(BornSample, SingleLeafAndFrequencies) {
  auto f = fan_scenario(2, 1, 2);
  auto T1 = evolve_tree(f.lay.lattice, {f.atoms[0]}, scripted(f.fan), 1.0, {1.0, 1.0}, family_proxy(1));
  EXPECT_EQ(born_sample(T1, std::uint64_t{5}), std::vector<int>{0});

  // hand-built tree with weights 1/4, 3/4
  BranchTree T;
  T.nodes.resize(3);
  T.nodes[0].weight = 1;
  T.nodes[0].children = {1, 2};
  T.nodes[1] = {1, 0, {}, {}, 0.25, -1, 0, {}};
  T.nodes[2] = {2, 0, {}, {}, 0.75, -1, 0, {}};
  std::mt19937_64 rng(99);
  const int N = 100000;
  int first = 0;
  for (int k = 0; k < N; ++k) first += born_sample(T, rng).back() == 1;
  const double sd = std::sqrt(N * 0.25 * 0.75);
  EXPECT_LT(std::abs(first - 0.25 * N), 3 * sd);
}

TEST(BornSample, PathProbabilityIsLeafWeight) {
  auto f = fan_scenario(4, 1, 2);
  auto T = evolve_tree(f.lay.lattice, f.atoms, scripted(f.fan), 5e-3, {1.0, 6.0}, family_proxy(1));
  for (int id : T.leaves()) {
    double p = 1;
    for (int cur = id; T.nodes[cur].parent >= 0; cur = T.nodes[cur].parent)
      p *= T.nodes[cur].weight / T.nodes[T.nodes[cur].parent].weight;
    EXPECT_NEAR(p, T.nodes[id].weight, 1e-14);
  }
}
