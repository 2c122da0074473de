#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "branchlab/kspace.hpp"

using namespace branchlab;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind;
  }
  return ErrorKind::config;  // sentinel: nothing thrown
}

int up(int bos = 0) { return LocalSpace::site_state(true, false, bos); }
int dn(int bos = 0) { return LocalSpace::site_state(false, true, bos); }

StateVector random_state(const Lattice& L, int nf, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<FermionWavefunction> ps;
  for (int k = 0; k < nf; ++k) {
    FermionWavefunction p(2 * static_cast<std::size_t>(L.size()), 0.0);
    for (auto& v : p) v = cplx(g(rng), g(rng));
    ps.push_back(p);
  }
  BosonWavefunction q(static_cast<std::size_t>(L.size()), 0.0);
  q[0] = 1.0;
  q[3] = 0.5;
  auto a = make_product_state(L, ps, {q}, 2).normalized();
  std::reverse(ps.begin(), ps.end());
  ps[0][1] += 0.3;
  auto b = make_product_state(L, ps, {}, 2).normalized();
  return (a + b.scaled(cplx(0.2, 0.7))).normalized();
}

Trajectory random_trajectory(const Lattice& L, int steps, std::mt19937_64& rng) {
  Trajectory t;
  std::uniform_int_distribution<std::size_t> pick(0, L.neighbor_pairs.size() - 1);
  std::uniform_real_distribution<double> ang(-1.0, 1.0);
  for (int s = 0; s < steps; ++s) {
    TrajectoryStep st;
    std::set<int> used;
    for (int k = 0; k < 3; ++k) {
      auto [i, j] = L.neighbor_pairs[pick(rng)];
      if (used.count(i) || used.count(j)) continue;
      used.insert(i);
      used.insert(j);
      st.gens.push_back(random_generator(L.coord(i), L.coord(j), 2, rng));
    }
    st.theta = ang(rng);
    t.steps.push_back(st);
  }
  return t;
}

}  // namespace

TEST(Generator, ZeroBlockValid) {
  Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(64, 64);
  auto g = validate_generator({0, 0, 0}, {1, 0, 0}, z);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(Generator, HopNormSqrt2) {
  auto g = move_generator({0, 0, 0}, 1, {1, 0, 0}, 1);
  EXPECT_NEAR(g.norm(), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(generator_norm({g}), std::sqrt(2.0), 1e-15);
}

TEST(Generator, DistinctRejections) {
  const Coord x{0, 0, 0}, y{0, 1, 0};
  EXPECT_EQ(kind_of([&] { validate_generator(x, y, Eigen::MatrixXcd::Identity(64, 64)); }), ErrorKind::partial_trace);
  Eigen::MatrixXcd anti = cplx(0, 1) * move_generator(x, 1, y, 1).block;
  EXPECT_EQ(kind_of([&] { validate_generator(x, y, anti); }), ErrorKind::non_hermitian);
  // |up,up><0,0| + h.c.: both partial traces vanish but N_xy changes by 2
  Eigen::MatrixXcd nv = Eigen::MatrixXcd::Zero(64, 64);
  nv(local_index(2, up(), up()), 0) = 1.0;
  nv(0, local_index(2, up(), up())) = 1.0;
  EXPECT_EQ(kind_of([&] { validate_generator(x, y, nv); }), ErrorKind::number_violation);
  EXPECT_EQ(kind_of([&] { validate_generator(x, {2, 0, 0}, Eigen::MatrixXcd::Zero(64, 64)); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([&] { validate_generator(x, y, Eigen::MatrixXcd::Zero(16, 16)); }), ErrorKind::invalid_argument);
}

TEST(Generator, ParallelNorms) {
  EXPECT_EQ(generator_norm({}), 0.0);
  // m*n = 6 hops on disjoint pairs
  std::vector<GeneratorElement> gs;
  for (int k = 0; k < 6; ++k) gs.push_back(move_generator({2 * k, 0, 0}, 1, {2 * k + 1, 0, 0}, -1));
  EXPECT_NEAR(generator_norm(gs), std::sqrt(12.0), 1e-14);
  gs.push_back(move_generator({1, 0, 0}, 1, {1, 1, 0}, 1));
  EXPECT_EQ(kind_of([&] { generator_norm(gs); }), ErrorKind::overlap);
}

TEST(Generator, ProjectionRemovesPartialTraces) {
  std::mt19937_64 rng(3);
  for (int nb : {1, 2}) {
    auto g = random_generator({0, 0, 0}, {0, 0, 1}, nb, rng);
    EXPECT_NO_THROW(validate_generator(g.x, g.y, g.block, nb));
    EXPECT_NEAR(g.norm(), 1.0, 1e-12);
    auto again = project_partial_trace_free(g.block, 4 * nb);
    EXPECT_LT((again - g.block).norm(), 1e-12);
  }
}

TEST(Apply, EmptyTrajectoryIdentity) {
  auto L = build_lattice(1);
  std::mt19937_64 rng(1);
  auto st = random_state(L, 2, rng);
  auto out = apply_trajectory(L, st, Trajectory{});
  EXPECT_LT((out - st).norm(), 1e-15);
}

TEST(Apply, FirstSplitStep) {
  auto L = build_lattice(2);
  for (int m : {2, 3, 5}) {
    const Coord a{0, 0, 0}, b{0, 1, 0};
    auto w0 = make_product_state(L, {point_wavefunction(L, a, 1)});
    TrajectoryStep s{{move_generator(a, 1, b, 1)}, std::asin(std::sqrt((m - 1.0) / m))};
    auto out = apply_trajectory(L, w0, Trajectory{{s}});
    auto moved = make_product_state(L, {point_wavefunction(L, b, 1)});
    EXPECT_NEAR(std::abs(out.inner(w0) - cplx(std::sqrt(1.0 / m), 0)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(moved.inner(out) - cplx(std::sqrt((m - 1.0) / m), 0)), 0.0, 1e-14);
  }
}

TEST(Apply, HopReplacesCreatorInPlace) {
  // exp(i pi/2 f) on d+(a) d+(z) d+(w)|0> gives e^{i phi} d+(b) d+(z) d+(w)|0>,
  // for spectator modes on either side of the moved one in the global order
  auto L = build_lattice(2);
  const double phi = 0.37;
  const std::vector<std::array<Coord, 4>> cases = {
      {{{0, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {1, 1, 1}}},
      {{{0, 1, 0}, {0, 0, 0}, {0, 0, 1}, {-2, 1, 0}}},
      {{{1, 0, 0}, {0, 0, 0}, {0, 1, 0}, {0, 0, 0}}},
  };
  for (auto& [a, b, z, w] : cases) {
    for (int sa : {1, -1})
      for (int sb : {1, -1}) {
        auto psi = make_product_state(L, {point_wavefunction(L, a, sa), point_wavefunction(L, z, 1),
                                          point_wavefunction(L, w, -1)});
        if (psi.norm() < 0.5) continue;
        if ((b == w && sb == -1) || (b == z && sb == 1)) continue;
        auto expect = make_product_state(L, {point_wavefunction(L, b, sb), point_wavefunction(L, z, 1),
                                             point_wavefunction(L, w, -1)});
        // the hop only moves a lone fermion: skip if a or b carry a spectator
        if (a == z || a == w || b == z || b == w) continue;
        TrajectoryStep s{{move_generator(a, sa, b, sb, phi)}, std::numbers::pi / 2};
        auto out = apply_trajectory(L, psi, Trajectory{{s}});
        EXPECT_NEAR(std::abs(expect.inner(out) - std::polar(1.0, phi)), 0.0, 1e-13);
      }
  }
}

TEST(Apply, GeneratorIsFermionBilinear) {
  // (c+_y c_x + h.c.) embedded locally must equal the global bilinear, checked on occupied neighbors
  auto L = build_lattice(1);
  const Coord x{-1, 0, -1}, y{0, 0, -1};
  const int xs = L.index(x), ys = L.index(y);
  LocalSpace ls{2};
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(64, 64);
  // c+_{y,up} c_{x,up} on all local occupations with the down modes as spectators
  for (int fx = 0; fx < 4; ++fx)
    for (int fy = 0; fy < 4; ++fy) {
      if (!(fx & 1) || (fy & 1)) continue;
      const int nfx = fx & ~1, nfy = fy | 1;
      // local order x_up x_dn y_up y_dn: c_{x,up} sign 1; c+_{y,up} passes (x_dn occupancy)
      const int sgn = ((nfx & 2) ? -1 : 1);
      h(ls.index(nfx, nfy), ls.index(fx, fy)) = sgn;
    }
  Eigen::MatrixXcd herm = h + h.adjoint();
  std::mt19937_64 rng(9);
  auto st = random_state(L, 3, rng);
  auto got = apply_two_site(L, st, x, y, herm);
  // global oracle
  StateVector want = st;
  want.amps.clear();
  const uint32_t mx = mode_of(xs, 1), my = mode_of(ys, 1);
  for (auto& [c, a] : st.amps) {
    for (auto [from, to] : {std::pair{mx, my}, std::pair{my, mx}}) {
      auto pos = std::find(c.f.begin(), c.f.end(), from);
      if (pos == c.f.end() || c.has_mode(to)) continue;
      Config rem = c;
      const long k = pos - c.f.begin();
      rem.f.erase(rem.f.begin() + k);
      auto r = create_fermion(rem, to);
      want.add(r->first, a * double((k % 2 ? -1 : 1) * r->second));
    }
  }
  want.prune();
  EXPECT_LT((got - want).norm(), 1e-13);
}

TEST(Apply, UnitarityAndReversal) {
  auto L = build_lattice(1);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    auto st = random_state(L, 2, rng);
    auto t = random_trajectory(L, 20, rng);
    auto out = apply_trajectory(L, st, t);
    EXPECT_LT(std::abs(out.norm() - 1.0), 1e-10);
    EXPECT_EQ(out.fermion_sector(), st.fermion_sector());
    auto back = apply_trajectory(L, out, reverse(t));
    EXPECT_LT((back - st).norm(), 1e-9);
  }
}

TEST(Apply, CostAdditivity) {
  auto L = build_lattice(1);
  std::mt19937_64 rng(12);
  auto a = random_trajectory(L, 7, rng), b = random_trajectory(L, 4, rng);
  EXPECT_NEAR(concat(a, b).cost(), a.cost() + b.cost(), 1e-12);
  EXPECT_NEAR(reverse(a).cost(), a.cost(), 1e-12);
  EXPECT_EQ(concat(a, b).size(), 11u);
}

TEST(Apply, LatticeMismatch) {
  auto L1 = build_lattice(1), L2 = build_lattice(2);
  auto st = make_product_state(L2, {point_wavefunction(L2, {1, 1, 1}, 1)});
  EXPECT_EQ(kind_of([&] { apply_trajectory(L1, st, Trajectory{}); }), ErrorKind::lattice_mismatch);
  TrajectoryStep s{{move_generator({1, 1, 1}, 1, {2, 1, 1}, 1)}, 0.3};
  EXPECT_EQ(kind_of([&] { apply_trajectory(L2, st, Trajectory{{s}}); }), ErrorKind::lattice_mismatch);
  TrajectoryStep o{{move_generator({0, 0, 0}, 1, {1, 0, 0}, 1), move_generator({1, 0, 0}, 1, {1, 1, 0}, 1)}, 0.3};
  EXPECT_EQ(kind_of([&] { apply_trajectory(L2, st, Trajectory{{o}}); }), ErrorKind::overlap);
}

TEST(Apply, BosonHopConservesBosons) {
  auto L = build_lattice(1);
  std::mt19937_64 rng(2);
  auto st = random_state(L, 1, rng);
  auto t = random_trajectory(L, 10, rng);
  auto out = apply_trajectory(L, st, t);
  auto bosons = [](const StateVector& s) {
    std::map<int, double> w;
    for (auto& [c, a] : s.amps) w[c.bosons_total()] += std::norm(a);
    return w;
  };
  auto w0 = bosons(st), w1 = bosons(out);
  for (auto& [k, v] : w0) EXPECT_NEAR(w1[k], v, 1e-10);
}

TEST(LieClosure, OneSite) {
  auto r = lie_closure_sectors(1, 1);
  EXPECT_EQ(r.closure_dim, 0);
}

TEST(LieClosure, FermionOnlyTwoSites) {
  const auto t0 = std::chrono::steady_clock::now();
  auto r = lie_closure_sectors(2, 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(r.sector_dims, (std::vector<int>{1, 4, 6, 4, 1}));
  const std::vector<int> su = {0, 15, 35, 15, 0};
  for (int n = 0; n < 5; ++n) {
    EXPECT_TRUE(r.contains_su[n]) << n;
    EXPECT_GE(r.sector_traceless_dim[n], su[n]);
  }
  EXPECT_GE(r.closure_dim, 65);
  EXPECT_LE(r.closure_dim, 69);
  EXPECT_LE(r.closure_dim, r.su_bound);
  EXPECT_LT(secs, 60.0);
}

TEST(LieClosure, TwoSitesWithBosons) {
  auto r = lie_closure_sectors(2, 2);
  EXPECT_EQ(r.sector_dims, (std::vector<int>{4, 16, 24, 16, 4}));
  for (int n = 0; n < 5; ++n) EXPECT_TRUE(r.contains_su[n]) << n;
  EXPECT_LE(r.closure_dim, r.su_bound);
}
