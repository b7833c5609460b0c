#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "regentree/coding.hpp"
#include "regentree/csbp.hpp"
#include "regentree/discretize.hpp"
#include "regentree/gh_metric.hpp"
#include "regentree/mtt.hpp"
#include "regentree/samplers.hpp"
#include "regentree/verify.hpp"

namespace regentree {

/// `key = value` pairs from a text file; `#` starts a comment.
class Config {
 public:
  static Config parse(std::istream& in) {
    Config c;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::parse_error, "config line " + std::to_string(no) + ": expected key = value");
      }
      std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) {
        throw Error(ErrorKind::parse_error, "config line " + std::to_string(no) + ": empty key or value");
      }
      if (!c.values_.emplace(key, value).second) {
        throw Error(ErrorKind::parse_error, "config line " + std::to_string(no) + ": duplicate key '" + key + "'");
      }
    }
    return c;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io_error, "cannot open config file " + path);
    return parse(in);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

/// "0:0.5,2:0.5" -> pmf vector.
inline OffspringDistribution parse_offspring(const std::string& text) {
  std::vector<double> pmf;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, "offspring entry '" + item + "' is not k:p");
    std::size_t k = 0;
    double p = 0.0;
    try {
      k = std::stoul(item.substr(0, colon));
      p = std::stod(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "offspring entry '" + item + "' is not k:p");
    }
    require(k <= 100000, "offspring value too large");
    if (pmf.size() <= k) pmf.resize(k + 1, 0.0);
    pmf[k] += p;
  }
  require(!pmf.empty(), "empty offspring law");
  return OffspringDistribution(pmf);
}

namespace cli_detail {

struct Options {
  std::uint64_t seed = 7;
  std::string out;
  std::string config;

  // sample
  std::string kind = "finite";
  std::size_t count = 1;
  double rate = 1.0;
  std::string gamma = "0:0.5,2:0.5";
  std::string family = "quadratic";
  double alpha = 1.5;
  std::size_t index = 100;
  double a_cond = 1.0;
  double t_max = 1.0;
  std::uint64_t y0 = 1;
  double delta = 0.5;

  // gh
  std::string tree_a, tree_b;
  double gh_delta = 0.05;

  // discretize / contour
  std::string tree;
  std::string excursion;
  double eps = 0.1;

  // csbp
  double psi_alpha = 0.0, psi_beta = 1.0, power_c = 0.0, power_p = 2.0;
  std::string atoms;
  std::vector<double> times{1.0};
  std::vector<double> lambdas{1.0};
  bool finite = false;

  // verify
  std::string suite;
  std::vector<std::string> checks;
  std::vector<std::string> params;
  std::size_t samples = 0;
  double significance = 1e-3;
};

inline BranchingMechanism mechanism(const Options& o) {
  if (o.power_c > 0.0) return BranchingMechanism::power(o.power_c, o.power_p);
  std::vector<LevyAtom> atoms;
  std::stringstream ss(o.atoms);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, "atom '" + item + "' is not r:weight");
    atoms.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
  }
  return BranchingMechanism(o.psi_alpha, o.psi_beta, atoms);
}

inline FiniteThetaParams finite_params(const Options& o) {
  FiniteThetaParams p;
  p.a = o.rate;
  p.gamma = parse_offspring(o.gamma);
  p.validate();
  return p;
}

inline void run_sample(const Options& o, std::ostream& out) {
  const RngState base{o.seed, 0};
  if (o.kind == "dsbp") {
    const auto p = finite_params(o);
    out << "replica,time,state\n";
    out.precision(17);
    for (std::size_t i = 0; i < o.count; ++i) {
      Rng rng(base.derive(i));
      const auto path = sample_dsbp_path(p, o.y0, o.t_max, rng);
      for (std::size_t j = 0; j < path.time.size(); ++j) out << i << ',' << path.time[j] << ',' << path.state[j] << '\n';
    }
    return;
  }
  if (o.kind == "dyck") {
    for (std::size_t i = 0; i < o.count; ++i) {
      Rng rng(base.derive(i));
      write_excursion(out, sample_dyck_excursion(o.index, rng));
    }
    return;
  }
  std::vector<MarkedTree> trees;
  const LevyFamily fam = o.family == "stable" ? LevyFamily::stable(o.alpha) : LevyFamily::quadratic();
  if (o.family != "stable" && o.family != "quadratic") throw Error(ErrorKind::invalid_argument, "unknown family " + o.family);
  std::optional<ApproxLevyTreeSampler> levy;
  if (o.kind == "levy") levy.emplace(fam, o.index, o.a_cond);
  for (std::size_t i = 0; i < o.count; ++i) {
    Rng rng(base.derive(i));
    if (o.kind == "finite") {
      trees.push_back(sample_finite_theta(finite_params(o), rng));
    } else if (o.kind == "gw") {
      const OrderedTree t = sample_gw_tree(parse_offspring(o.gamma), rng);
      trees.emplace_back(t, std::vector<double>(t.size(), 1.0));
    } else if (o.kind == "levy") {
      trees.push_back((*levy)(rng));
    } else if (o.kind == "forest") {
      const auto p = finite_params(o);
      const auto f = sample_finite_poisson_forest(p, o.delta, rng);
      if (f.empty()) out << "# replica " << i << ": empty forest\n";
      else out << "# replica " << i << ": " << f.size() << " trees\n";
      write_trees(out, f);
    } else {
      throw Error(ErrorKind::invalid_argument, "unknown sample kind " + o.kind);
    }
  }
  write_trees(out, trees);
}

inline void run_gh(const Options& o, std::ostream& out) {
  const auto a = parse_tree_file(o.tree_a), b = parse_tree_file(o.tree_b);
  require(a.size() == 1 && b.size() == 1, "gh expects exactly one tree per file");
  double lower = gh_lower_invariants(a[0], b[0]);
  double upper = gh_upper(a[0], b[0], o.gh_delta);
  try {
    const auto br = gh_bracket_small(a[0], b[0], o.gh_delta);
    lower = std::max(lower, br.lower);
    upper = std::min(upper, br.upper);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::instance_too_large) throw;
  }
  out.precision(17);
  out << "lower,upper\n" << lower << ',' << upper << '\n';
}

inline void run_discretize(const Options& o, std::ostream& out) {
  const auto trees = parse_tree_file(o.tree);
  out << "tree,epsilon,nodes,witness_bound,skeleton\n";
  out.precision(17);
  for (std::size_t i = 0; i < trees.size(); ++i) {
    const auto [d, bound] = discretisation_witness(trees[i], o.eps);
    out << i << ',' << o.eps << ',' << d.theta.size() << ',' << bound << ',' << serialize_tree(d.skeleton) << '\n';
  }
}

inline void run_csbp(const Options& o, std::ostream& out) {
  out.precision(17);
  out << "quantity,t,lambda,value\n";
  if (o.finite) {
    const auto p = finite_params(o);
    for (double t : o.times) out << "v," << t << ",," << dsbp_extinction_ode(p, t) << '\n';
    return;
  }
  const auto m = mechanism(o);
  for (double t : o.times)
    for (double l : o.lambdas) out << "u," << t << ',' << l << ',' << u_solve(m, t, l) << '\n';
  const auto verdict = extinction_integral(m);
  if (verdict.finite) {
    out << "extinction,,," << verdict.value << '\n';
    for (double t : o.times) out << "v," << t << ",," << v_levy(m, t) << '\n';
  } else {
    out << "extinction,,,inf\n";
  }
}

inline bool run_verify(const Options& o, std::ostream& out, std::ostream& err) {
  std::vector<CheckSpec> specs;
  const RngState seed{o.seed, 0};
  if (!o.suite.empty()) {
    if (o.suite != "default") throw Error(ErrorKind::invalid_argument, "unknown suite " + o.suite);
    specs = default_suite(seed);
  }
  std::map<std::string, double> params;
  for (const auto& kv : o.params) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, "parameter '" + kv + "' is not key=value");
    params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  for (const auto& name : o.checks) specs.push_back({name, params, o.samples, seed, o.significance});
  require(!specs.empty(), "verify needs --suite or --check");
  require(params.empty() || o.suite.empty(), "--param applies to --check only");
  std::vector<CheckReport> reports;
  bool ok = true;
  for (auto& s : specs) {
    if (!o.suite.empty() && s.n_samples == 0) s.significance = o.significance;
    reports.push_back(run_check(s));
    ok = ok && reports.back().pass;
    err << reports.back().name << ": " << (reports.back().pass ? "pass" : "FAIL") << ' ' << reports.back().detail
        << '\n';
  }
  write_reports_csv(out, reports);
  return ok;
}

inline void run_contour(const Options& o, std::ostream& out) {
  if (!o.excursion.empty()) {
    write_trees(out, {tree_from_excursion(read_excursion_file(o.excursion))});
    return;
  }
  const auto trees = parse_tree_file(o.tree);
  for (const auto& t : trees) write_excursion(out, contour_of(t));
}

// Option names of the app and of one subcommand, without dashes.
inline bool accepts(const CLI::App& app, const std::string& key) {
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& n : opt->get_lnames())
      if (n == key) return true;
  }
  return false;
}

inline bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  for (const auto& a : args)
    if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
  return false;
}

}  // namespace cli_detail

/// Runs the command line `args` (without the program name). Exit codes: 0
/// success, 1 failed checks or runtime errors, 2 usage errors.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using cli_detail::Options;
  Options o;
  CLI::App app{"regentree: random real trees, branching numerics and Monte-Carlo checks", "regentree"};
  app.require_subcommand(1);
  app.add_option("--seed", o.seed, "RNG seed");
  app.add_option("--out", o.out, "output file (default: stdout)");
  app.add_option("--config", o.config, "file of key = value defaults");

  auto* sample = app.add_subcommand("sample", "draw random trees, paths or excursions");
  sample->add_option("--kind", o.kind, "finite | gw | levy | dyck | dsbp | forest")
      ->check(CLI::IsMember({"finite", "gw", "levy", "dyck", "dsbp", "forest"}));
  sample->add_option("--count", o.count, "number of draws")->check(CLI::PositiveNumber);
  sample->add_option("--rate", o.rate, "branching rate a")->check(CLI::PositiveNumber);
  sample->add_option("--gamma", o.gamma, "offspring law as k:p,k:p");
  sample->add_option("--family", o.family, "quadratic | stable")->check(CLI::IsMember({"quadratic", "stable"}));
  sample->add_option("--alpha", o.alpha, "stable index")->check(CLI::Range(1.0, 2.0));
  sample->add_option("--index", o.index, "approximation index n, or Dyck half-length")->check(CLI::PositiveNumber);
  sample->add_option("--a-cond", o.a_cond, "height conditioning level")->check(CLI::PositiveNumber);
  sample->add_option("--t-max", o.t_max, "DSBP time horizon")->check(CLI::NonNegativeNumber);
  sample->add_option("--y0", o.y0, "DSBP initial state");
  sample->add_option("--delta", o.delta, "forest conditioning level")->check(CLI::PositiveNumber);

  auto* gh = app.add_subcommand("gh", "bracket the pointed GH distance of two trees");
  gh->add_option("--a", o.tree_a, "first MTT file")->required();
  gh->add_option("--b", o.tree_b, "second MTT file")->required();
  gh->add_option("--delta", o.gh_delta, "net spacing")->check(CLI::PositiveNumber);

  auto* disc = app.add_subcommand("discretize", "epsilon-skeleton with its certified GH bound");
  disc->add_option("--tree", o.tree, "MTT file")->required();
  disc->add_option("--eps", o.eps, "epsilon")->check(CLI::PositiveNumber);

  auto* csbp = app.add_subcommand("csbp", "u(t, lambda), v(t) and the extinction integral");
  csbp->add_option("--psi-alpha", o.psi_alpha, "linear coefficient")->check(CLI::NonNegativeNumber);
  csbp->add_option("--psi-beta", o.psi_beta, "quadratic coefficient")->check(CLI::NonNegativeNumber);
  csbp->add_option("--atoms", o.atoms, "Levy measure atoms as r:w,r:w");
  csbp->add_option("--power-c", o.power_c, "use psi(u) = c u^p")->check(CLI::NonNegativeNumber);
  csbp->add_option("--power-p", o.power_p, "exponent p in (1, 2]")->check(CLI::Range(1.0, 2.0));
  csbp->add_option("--t", o.times, "times")->check(CLI::NonNegativeNumber);
  csbp->add_option("--lambda", o.lambdas, "Laplace arguments")->check(CLI::NonNegativeNumber);
  csbp->add_flag("--finite", o.finite, "finite-case tail v(t) from --rate and --gamma");
  csbp->add_option("--rate", o.rate, "branching rate a")->check(CLI::PositiveNumber);
  csbp->add_option("--gamma", o.gamma, "offspring law as k:p,k:p");

  auto* verify = app.add_subcommand("verify", "run Monte-Carlo checks");
  verify->add_option("--suite", o.suite, "named suite (default)");
  verify->add_option("--check", o.checks, "check name (repeatable)");
  verify->add_option("--param", o.params, "key=value for --check (repeatable)");
  verify->add_option("--samples", o.samples, "sample count override");
  verify->add_option("--significance", o.significance, "significance level")->check(CLI::Range(1e-12, 0.5));

  auto* contour = app.add_subcommand("contour", "contour excursion of a tree, or the tree of an excursion");
  contour->add_option("--tree", o.tree, "MTT file");
  contour->add_option("--excursion", o.excursion, "excursion CSV file");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  if (args.empty()) {
    err << app.help();
    return 2;
  }

  try {
    // Config values go in as flags unless already given on the command line.
    std::vector<std::string> parse_args = args;
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
      if (args[i] == "--config") o.config = args[i + 1];
      else if (args[i].rfind("--config=", 0) == 0) o.config = args[i].substr(9);
    }
    if (!o.config.empty()) {
      const Config cfg = Config::parse_file(o.config);
      const CLI::App* active = nullptr;
      for (const auto& a : args)
        for (const auto* sub : app.get_subcommands({}))
          if (!active && sub->get_name() == a) active = sub;
      for (const auto& [key, value] : cfg.values()) {
        if (key == "config") throw Error(ErrorKind::parse_error, "config files cannot include other configs");
        const bool known = cli_detail::accepts(app, key) || (active && cli_detail::accepts(*active, key));
        if (!known) throw Error(ErrorKind::parse_error, "unknown config key '" + key + "'");
        if (cli_detail::given_on_command_line(args, key)) continue;
        parse_args.push_back("--" + key);
        parse_args.push_back(value);
      }
    }
    std::reverse(parse_args.begin(), parse_args.end());
    app.parse(parse_args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  std::ofstream file;
  std::ostream* dest = &out;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) {
      err << to_string(ErrorKind::io_error) << ": cannot open " << o.out << '\n';
      return 1;
    }
    dest = &file;
  }
  try {
    if (sample->parsed()) cli_detail::run_sample(o, *dest);
    else if (gh->parsed()) cli_detail::run_gh(o, *dest);
    else if (disc->parsed()) cli_detail::run_discretize(o, *dest);
    else if (csbp->parsed()) cli_detail::run_csbp(o, *dest);
    else if (contour->parsed()) {
      if (o.tree.empty() == o.excursion.empty()) {
        err << "usage error: contour needs exactly one of --tree and --excursion\n";
        return 2;
      }
      cli_detail::run_contour(o, *dest);
    } else if (verify->parsed()) {
      if (o.suite.empty() && o.checks.empty()) {
        err << "usage error: verify needs --suite or --check\n";
        return 2;
      }
      return cli_detail::run_verify(o, *dest, err) ? 0 : 1;
    }
  } catch (const Error& e) {
    err << e.what() << '\n';
    return e.kind() == ErrorKind::invalid_argument ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

inline int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc));
}

}  // namespace regentree
