#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <set>

#include "branchlab/io.hpp"

using namespace branchlab;
namespace fs = std::filesystem;

namespace {

struct Sweep {
  std::vector<std::string> path;  // dotted key split into segments
  double lo = 0, hi = 0;
  int n = 1;
};

Sweep parse_sweep(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::config, "sweep must look like key=lo:hi:n");
  Sweep s;
  std::stringstream keys(spec.substr(0, eq));
  for (std::string part; std::getline(keys, part, '.');) s.path.push_back(part);
  std::vector<std::string> f;
  std::stringstream vals(spec.substr(eq + 1));
  for (std::string part; std::getline(vals, part, ':');) f.push_back(part);
  if (s.path.empty() || f.size() != 3) throw Error(ErrorKind::config, "sweep must look like key=lo:hi:n");
  try {
    std::size_t used = 0;
    s.lo = std::stod(f[0], &used);
    if (used != f[0].size()) throw std::invalid_argument(f[0]);
    s.hi = std::stod(f[1], &used);
    if (used != f[1].size()) throw std::invalid_argument(f[1]);
    s.n = std::stoi(f[2], &used);
    if (used != f[2].size()) throw std::invalid_argument(f[2]);
  } catch (const std::exception&) {
    throw Error(ErrorKind::config, "sweep bounds are not numbers: " + spec);
  }
  if (s.n < 1) throw Error(ErrorKind::config, "sweep needs n >= 1");
  return s;
}

// Linear, both ends included.
double sweep_value(const Sweep& s, int k) { return s.n == 1 ? s.lo : s.lo + (s.hi - s.lo) * k / (s.n - 1); }

// Integer-typed fields of each config; everything else numeric is a double.
bool integer_field(const std::string& kind, const std::string& key) {
  static const std::map<std::string, std::set<std::string>> ints = {
      {"two-fermion", {"phi.box"}}, {"scattering", {"m", "n_Q", "n_R"}}, {"displaced", {"m", "n_t"}}};
  auto it = ints.find(kind);
  return it != ints.end() && it->second.count(key);
}

json apply_sweep(json cfg, const Sweep& s, double v, bool integer) {
  json* node = &cfg;
  for (auto& key : s.path) {
    if (!node->is_object() || !node->contains(key)) throw Error(ErrorKind::config, "sweep key not in config: " + key);
    node = &(*node)[key];
  }
  if (!node->is_number()) throw Error(ErrorKind::config, "only numeric fields can be swept");
  if (integer) {
    if (v != std::round(v)) throw Error(ErrorKind::config, "integer field swept to a non-integer value");
    *node = static_cast<long long>(std::llround(v));
  } else {
    *node = v;
  }
  return cfg;
}

int run_scenario(const std::string& kind, const std::string& config_path, const std::string& out_dir,
                 const std::string& sweep_spec, std::uint64_t seed) {
  const json base = read_json_file(config_path);
  std::optional<Sweep> sweep;
  if (!sweep_spec.empty()) sweep = parse_sweep(sweep_spec);
  const int cells = sweep ? sweep->n : 1;

  std::string csv;
  json summary = {{"scenario", kind}, {"config", base}, {"seed", seed}, {"cells", json::array()}};
  const std::string key = sweep_spec.substr(0, sweep_spec.find('='));
  if (sweep)
    summary["sweep"] = {{"key", key}, {"lo", sweep->lo}, {"hi", sweep->hi}, {"n", sweep->n}};
  std::string curve;  // two-fermion, single cell only

  for (int k = 0; k < cells; ++k) {
    const json cfg = sweep ? apply_sweep(base, *sweep, sweep_value(*sweep, k), integer_field(kind, key)) : base;
    json cell = {{"cell", k}, {"seed", seed + static_cast<std::uint64_t>(k)}, {"config", cfg}};
    if (kind == "two-fermion") {
      const auto c = two_fermion_config(cfg);
      const auto r = run_two_fermion(c);
      if (k == 0) csv = two_fermion_header();
      csv += two_fermion_row(k, c, r);
      cell["S0"] = r.S0;
      cell["S1"] = r.S1;
      cell["Q_planewave"] = r.Q_planewave;
      cell["t_star"] = r.t_star;
      cell["split_at_start"] = r.split_at_start;
      if (!sweep) curve = two_fermion_curve_csv(r);
    } else if (kind == "scattering") {
      const auto c = scattering_config(cfg);
      const auto r = run_scattering(c);
      if (k == 0) csv = scattering_header();
      csv += scattering_row(k, c, r);
      cell["split_lower"] = r.split_lower;
      cell["split_upper"] = r.split_upper;
      cell["b_marginal"] = r.b_marginal;
    } else if (kind == "displaced") {
      const auto c = displaced_config(cfg);
      const auto rows = run_displaced_copies(c);
      if (k == 0) csv = displaced_header();
      csv += displaced_rows(k, c, rows);
      cell["p_int_final"] = rows.back().p_int;
      cell["split_final"] = rows.back().split;
    } else {
      throw Error(ErrorKind::config, "unknown scenario " + kind);
    }
    summary["cells"].push_back(cell);
  }

  fs::create_directories(out_dir);
  const std::string stem = (fs::path(out_dir) / kind).string();
  write_file(stem + ".csv", csv);
  if (!curve.empty()) write_file(stem + "_curve.csv", curve);
  write_file(stem + "_summary.json", summary.dump(2) + "\n");
  return 0;
}

void write_lattice(const HyperLattice& L, const std::string& path) {
  if (path.empty() || path == "-")
    std::cout << to_json(L).dump() << "\n";
  else
    write_file(path, to_json(L).dump() + "\n");
}

json stats_json(const HyperLattice& L) {
  const auto s = lattice_stats(L);
  return {{"points", s.points},         {"edges", s.edges},           {"interior_cells", s.interior_cells},
          {"min_distance", s.min_distance}, {"max_extent", s.max_extent}, {"mean_degree", s.mean_degree},
          {"max_degree", s.max_degree},   {"tau", L.tau},               {"sigma", L.sigma},
          {"rho", L.rho},                 {"seed", L.seed}};
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::invalid_argument:
      return 2;
    default:
      return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"branchlab: branch-complexity toolkit"};
  app.require_subcommand(1);

  // scenario
  auto* scen = app.add_subcommand("scenario", "run a named scenario from a JSON config");
  std::string kind, config, out = ".", sweep;
  std::uint64_t seed = 0;
  scen->add_option("kind", kind, "two-fermion | scattering | displaced")
      ->required()
      ->check(CLI::IsMember({"two-fermion", "scattering", "displaced"}));
  scen->add_option("--config", config, "JSON config with exactly the scenario fields")->required();
  scen->add_option("--out", out, "output directory");
  scen->add_option("--sweep", sweep, "key=lo:hi:n, linear and inclusive; nested keys use dots");
  scen->add_option("--seed", seed, "base seed; cell k records seed + k");

  // lattice
  auto* lat = app.add_subcommand("lattice", "random hyperboloid lattices");
  lat->require_subcommand(1);
  double tau = 1, sigma = 0.6, rho = 0.1, delta = 0;
  std::string lat_in, lat_out;
  auto* gen = lat->add_subcommand("gen", "sample a lattice");
  gen->add_option("--tau", tau);
  gen->add_option("--sigma", sigma);
  gen->add_option("--rho", rho);
  gen->add_option("--seed", seed);
  gen->add_option("--out", lat_out, "lattice JSON path (stdout if omitted)");
  auto* evo = lat->add_subcommand("evolve", "advance a lattice by delta and refill");
  evo->add_option("--in", lat_in)->required();
  evo->add_option("--delta", delta)->required();
  evo->add_option("--out", lat_out);
  auto* st = lat->add_subcommand("stats", "summary statistics of a lattice file");
  st->add_option("--in", lat_in)->required();

  // complexity report
  auto* cx = app.add_subcommand("complexity", "complexity bounds");
  cx->require_subcommand(1);
  auto* rep = cx->add_subcommand("report", "CSV of bounds and witness costs");
  std::vector<int> ms{2}, ns{1}, ds{1, 2, 3};
  int q = 0;
  rep->add_option("--m", ms, "branch counts")->delimiter(',');
  rep->add_option("--n", ns, "fermions per branch")->delimiter(',');
  rep->add_option("--d", ds, "cube sides (V = d^3)")->delimiter(',');
  rep->add_option("--q", q, "shared-site count");
  rep->add_option("--out", lat_out, "CSV path (stdout if omitted)");

  // evolve
  auto* ev = app.add_subcommand("evolve", "grow a branch tree for a fan-out record");
  int fan_m = 4, fan_d = 2;
  double b = 5e-3;
  ev->add_option("--m", fan_m, "number of atoms");
  ev->add_option("--d", fan_d, "record cube side");
  ev->add_option("--b", b, "entropy weight");
  ev->add_option("--seed", seed);
  ev->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*scen) return run_scenario(kind, config, out, sweep, seed);
    if (*gen) {
      write_lattice(build_random_lattice(tau, sigma, rho, seed), lat_out);
      return 0;
    }
    if (*evo) {
      write_lattice(evolve_lattice(hyperlattice_from_json(read_json_file(lat_in)), delta), lat_out);
      return 0;
    }
    if (*st) {
      std::cout << stats_json(hyperlattice_from_json(read_json_file(lat_in))).dump(2) << "\n";
      return 0;
    }
    if (*rep) {
      std::vector<ReportRow> rows;
      for (int m : ms)
        for (int n : ns)
          for (int d : ds) rows.push_back(complexity_report_row(m, n, d, q));
      const std::string csv = complexity_report_csv(rows);
      if (lat_out.empty())
        std::cout << csv;
      else
        write_file(lat_out, csv);
      return 0;
    }
    if (*ev) {
      const BranchTree T = fanout_tree(fan_m, b, fan_d, -1, seed);
      HistoryMeasure mu(T);
      fs::create_directories(out);
      const fs::path dir(out);
      write_file((dir / "events.json").string(), event_log_json(T).dump(2) + "\n");
      write_file((dir / "proxy_series.csv").string(), proxy_series_csv(T));
      write_file((dir / "measures.csv").string(), measure_table_csv(mu));
      json hs = json::array();
      for (int id : T.leaves()) hs.push_back(to_json(T.nodes[id].history));
      write_file((dir / "histories.json").string(), hs.dump() + "\n");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
