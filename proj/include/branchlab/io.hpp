#pragma once

#include <fstream>
#include <json.hpp>

#include "histories.hpp"
#include "hyperlattice.hpp"
#include "scenarios.hpp"

namespace branchlab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// StateVector: {lattice:{B}, n_b, terms:[{fermions:[[x,y,z,spin]..], bosons:[[x,y,z,count]..], re, im}]}

inline json to_json(const Lattice& L, const StateVector& s) {
  json terms = json::array();
  for (auto& [c, a] : s.amps) {
    json f = json::array(), b = json::array();
    for (uint32_t m : c.f) {
      const Coord& x = L.coord(site_of_mode(m));
      f.push_back({x[0], x[1], x[2], spin_of_mode(m)});
    }
    for (auto [site, n] : c.b) {
      const Coord& x = L.coord(static_cast<int>(site));
      b.push_back({x[0], x[1], x[2], static_cast<int>(n)});
    }
    terms.push_back({{"fermions", f}, {"bosons", b}, {"re", a.real()}, {"im", a.imag()}});
  }
  return {{"lattice", {{"B", s.B}}}, {"n_b", s.n_b}, {"terms", terms}};
}

// Fermion lists in any order are brought to ascending mode order with the permutation sign.
inline StateVector state_from_json(const json& j) {
  StateVector s;
  s.B = j.at("lattice").at("B").get<int>();
  s.n_b = j.value("n_b", 2);
  const Lattice L = build_lattice(s.B);
  for (auto& t : j.at("terms")) {
    Config c;
    for (auto& f : t.at("fermions")) {
      const Coord x{f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()};
      c.f.push_back(mode_of(L.index(x), f.at(3).get<int>()));
    }
    int swaps = 0;
    for (std::size_t i = 0; i < c.f.size(); ++i)
      for (std::size_t k = i + 1; k < c.f.size(); ++k) {
        if (c.f[i] == c.f[k]) throw Error(ErrorKind::invalid_argument, "two fermions in the same mode");
        swaps += c.f[i] > c.f[k];
      }
    std::sort(c.f.begin(), c.f.end());
    for (auto& b : t.value("bosons", json::array())) {
      const Coord x{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()};
      const int n = b.at(3).get<int>();
      if (n < 1 || n >= s.n_b) throw Error(ErrorKind::boson_cutoff, "boson count outside 1..n_b-1");
      c.b.emplace_back(static_cast<uint32_t>(L.index(x)), static_cast<uint8_t>(n));
    }
    std::sort(c.b.begin(), c.b.end());
    const cplx a(t.at("re").get<double>(), t.at("im").get<double>());
    s.amps[c] += swaps % 2 ? -a : a;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Trajectory: [{pairs:[[x1,y1,z1,x2,y2,z2]..], blocks:[matrix as rows of [re,im]], theta}]

inline json to_json(const Trajectory& T) {
  json out = json::array();
  for (auto& st : T.steps) {
    json pairs = json::array(), blocks = json::array();
    for (auto& g : st.gens) {
      pairs.push_back({g.x[0], g.x[1], g.x[2], g.y[0], g.y[1], g.y[2]});
      json rows = json::array();
      for (int r = 0; r < g.block.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < g.block.cols(); ++c) row.push_back({g.block(r, c).real(), g.block(r, c).imag()});
        rows.push_back(row);
      }
      blocks.push_back(rows);
    }
    out.push_back({{"pairs", pairs}, {"blocks", blocks}, {"theta", st.theta}});
  }
  return out;
}

// Blocks are re-validated on load (Hermitian, partial-trace free, number conserving).
inline Trajectory trajectory_from_json(const json& j) {
  Trajectory T;
  for (auto& st : j) {
    TrajectoryStep step;
    step.theta = st.at("theta").get<double>();
    const auto& pairs = st.at("pairs");
    const auto& blocks = st.at("blocks");
    if (pairs.size() != blocks.size()) throw Error(ErrorKind::invalid_argument, "pairs and blocks differ in length");
    for (std::size_t g = 0; g < pairs.size(); ++g) {
      const auto& p = pairs[g];
      const Coord x{p.at(0).get<int>(), p.at(1).get<int>(), p.at(2).get<int>()};
      const Coord y{p.at(3).get<int>(), p.at(4).get<int>(), p.at(5).get<int>()};
      const auto& rows = blocks[g];
      const int d = static_cast<int>(rows.size());
      const int sd = static_cast<int>(std::lround(std::sqrt(double(d))));
      if (sd * sd != d || sd % 4 != 0) throw Error(ErrorKind::invalid_argument, "block size is not (4 n_b)^2");
      Eigen::MatrixXcd m(d, d);
      for (int r = 0; r < d; ++r) {
        if (static_cast<int>(rows[r].size()) != d) throw Error(ErrorKind::invalid_argument, "block is not square");
        for (int c = 0; c < d; ++c) m(r, c) = cplx(rows[r][c].at(0).get<double>(), rows[r][c].at(1).get<double>());
      }
      step.gens.push_back(validate_generator(x, y, m, sd / 4));
    }
    check_disjoint(step.gens);
    T.steps.push_back(std::move(step));
  }
  return T;
}

// ---------------------------------------------------------------------------
// Hyperboloid lattice: {tau, sigma, rho, seed, points:[[x0,x1,x2,x3]..], adjacency:[[i,j]..]}

inline json to_json(const HyperLattice& L) {
  json pts = json::array(), adj = json::array();
  for (auto& p : L.points) pts.push_back({p[0], p[1], p[2], p[3]});
  for (auto [a, b] : L.adjacency) adj.push_back({a, b});
  return {{"tau", L.tau}, {"sigma", L.sigma}, {"rho", L.rho}, {"seed", L.seed}, {"points", pts}, {"adjacency", adj}};
}

inline HyperLattice hyperlattice_from_json(const json& j) {
  HyperLattice L;
  L.tau = j.at("tau").get<double>();
  L.sigma = j.at("sigma").get<double>();
  L.rho = j.at("rho").get<double>();
  L.seed = j.at("seed").get<std::uint64_t>();
  for (auto& p : j.at("points")) {
    const P4 x{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(), p.at(3).get<double>()};
    if (std::abs(minkowski(x, x) - L.tau * L.tau) > 1e-9 * std::max(1.0, L.tau * L.tau))
      throw Error(ErrorKind::invalid_argument, "point off the hyperboloid");
    L.points.push_back(x);
  }
  for (auto& e : j.at("adjacency")) L.adjacency.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return L;
}

// ---------------------------------------------------------------------------
// Histories, event logs, time series

inline json to_json(const History& h) {
  json out = json::array();
  for (auto [e, bit] : h) out.push_back({e, bit});
  return out;
}

inline History history_from_json(const json& j) {
  History h;
  for (auto& p : j) h.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  check_history(h);
  return h;
}

inline std::string history_key(const History& h) {
  std::string s;
  for (auto [e, bit] : h) s += (s.empty() ? "" : ";") + std::to_string(e) + ":" + std::to_string(bit);
  return s;
}

// One row per node history.
inline std::string measure_table_csv(HistoryMeasure& mu) {
  std::string out = "history,mu\n";
  for (auto& n : mu.tree->nodes) out += history_key(n.history) + "," + csv_num(mu(n.history)) + "\n";
  return out;
}

inline json event_log_json(const BranchTree& T) {
  json out = json::array();
  for (auto& e : T.events)
    out.push_back({{"t", e.t},
                   {"parent_id", e.parent_id},
                   {"child_ids", {e.child_ids[0], e.child_ids[1]}},
                   {"rho", e.rho},
                   {"margin", e.margin},
                   {"Q_before", e.Q_before},
                   {"Q_after", e.Q_after}});
  return out;
}

inline std::string proxy_series_csv(const BranchTree& T) {
  std::string out = "t,node,C_lower,C_upper\n";
  for (auto& s : T.series)
    out += csv_num(s.t) + "," + std::to_string(s.node) + "," + csv_num(s.C_lower) + "," + csv_num(s.C_upper) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Scenario configs: exactly the listed fields, nothing missing, nothing extra

inline void require_fields(const json& j, const std::vector<std::string>& keys, const std::string& what) {
  if (!j.is_object()) throw Error(ErrorKind::config, what + " must be a JSON object");
  for (auto& k : keys)
    if (!j.contains(k)) throw Error(ErrorKind::config, what + ": missing field '" + k + "'");
  for (auto& [k, v] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw Error(ErrorKind::config, what + ": unknown field '" + k + "'");
}

template <class T>
T field(const json& j, const std::string& k) {
  try {
    return j.at(k).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, "field '" + k + "' has the wrong type");
  }
}

inline TwoFermionConfig two_fermion_config(const json& j) {
  require_fields(j, {"R0", "M", "b", "phi"}, "two-fermion config");
  require_fields(j.at("phi"), {"kind", "range", "box"}, "phi");
  TwoFermionConfig c{field<double>(j, "R0"), field<double>(j, "M"), field<double>(j, "b"),
                     {field<std::string>(j["phi"], "kind"), field<double>(j["phi"], "range"), field<int>(j["phi"], "box")}};
  validate(c);
  return c;
}

inline ScatteringConfig scattering_config(const json& j) {
  require_fields(j, {"m", "V", "n_Q", "n_R", "b"}, "scattering config");
  ScatteringConfig c{field<int>(j, "m"), field<double>(j, "V"), field<int>(j, "n_Q"), field<int>(j, "n_R"), field<double>(j, "b")};
  validate(c);
  return c;
}

inline DisplacedConfig displaced_config(const json& j) {
  require_fields(j, {"m", "b", "rate", "t_max", "n_t"}, "displaced config");
  DisplacedConfig c{field<int>(j, "m"), field<double>(j, "b"), field<double>(j, "rate"), field<double>(j, "t_max"),
                    field<int>(j, "n_t")};
  validate(c);
  return c;
}

inline const char* csv_bool(bool b) { return b ? "1" : "0"; }

inline std::string two_fermion_header() {
  return "cell,R0,M,b,phi_range,phi_box,S0,S1,Q_planewave,R_star,t_star,t_star_numeric,split_at_start\n";
}
inline std::string two_fermion_row(int cell, const TwoFermionConfig& c, const TwoFermionReport& r) {
  return std::to_string(cell) + "," + csv_num(c.R0) + "," + csv_num(c.M) + "," + csv_num(c.b) + "," + csv_num(c.phi.range) +
         "," + std::to_string(c.phi.box) + "," + csv_num(r.S0) + "," + csv_num(r.S1) + "," + csv_num(r.Q_planewave) + "," +
         csv_num(r.R_star) + "," + csv_num(r.t_star) + "," + csv_num(r.t_star_numeric) + "," + csv_bool(r.split_at_start) + "\n";
}
inline std::string two_fermion_curve_csv(const TwoFermionReport& r) {
  std::string out = "t,R,C_lower,C_upper,Q_unsplit_lower,Q_planewave\n";
  for (auto& s : r.curve)
    out += csv_num(s.t) + "," + csv_num(s.R) + "," + csv_num(s.C_lower) + "," + csv_num(s.C_upper) + "," +
           csv_num(s.Q_unsplit_lower) + "," + csv_num(r.Q_planewave) + "\n";
  return out;
}

inline std::string scattering_header() {
  return "cell,m,V,n_Q,n_R,b,C_lower_out,C_upper_out,Q_unsplit_lower,Q_unsplit_upper,Q_split,split_lower,split_upper,"
         "b_marginal,split_rule\n";
}
inline std::string scattering_row(int cell, const ScatteringConfig& c, const ScatteringReport& r) {
  return std::to_string(cell) + "," + std::to_string(c.m) + "," + csv_num(c.V) + "," + std::to_string(c.n_Q) + "," +
         std::to_string(c.n_R) + "," + csv_num(c.b) + "," + csv_num(r.C_lower_out) + "," + csv_num(r.C_upper_out) + "," +
         csv_num(r.Q_unsplit_lower) + "," + csv_num(r.Q_unsplit_upper) + "," + csv_num(r.Q_split) + "," +
         csv_bool(r.split_lower) + "," + csv_bool(r.split_upper) + "," + csv_bool(r.b_marginal) + "," + csv_bool(r.split_rule) +
         "\n";
}

// one row per (cell, time sample)
inline std::string displaced_header() { return "cell,m,b,t,d,p_opt,p_round,p_int,C_branch_opt,C_branch_int,split\n"; }
inline std::string displaced_rows(int cell, const DisplacedConfig& c, const std::vector<DisplacedSample>& rows) {
  std::string out;
  for (auto& s : rows)
    out += std::to_string(cell) + "," + std::to_string(c.m) + "," + csv_num(c.b) + "," + csv_num(s.t) + "," + csv_num(s.d) +
           "," + csv_num(s.p_opt) + "," + std::to_string(s.p_round) + "," + std::to_string(s.p_int) + "," +
           csv_num(s.C_branch_opt) + "," + csv_num(s.C_branch_int) + "," + csv_bool(s.split) + "\n";
  return out;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, path + ": " + e.what());
  }
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::config, "cannot write " + path);
  out << text;
}

}  // namespace branchlab
