#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "spmds/analysis.hpp"
#include "spmds/error.hpp"
#include "spmds/io.hpp"

namespace spmds::cli {
namespace {

namespace fs = std::filesystem;
using io::json;

io::ScenarioConfig load_config(const Options& opt) {
  if (opt.scenario.empty()) throw ConfigError("--scenario is required");
  io::ScenarioConfig cfg = io::load_scenario(opt.scenario);
  if (opt.r) {
    cfg.r = *opt.r;
    cfg.plan.clear();
    cfg.ignore_instance_groups = true;
  }
  if (opt.seed) cfg.seed = *opt.seed;
  auto& s = cfg.solver;
  if (!opt.solvers.empty()) s.method = solve::parse_method(opt.solvers.front());
  if (opt.alpha) s.alpha = Vector::Constant(1, *opt.alpha);
  if (opt.beta) s.beta = Vector::Constant(1, *opt.beta);
  if (opt.tau_u) s.tau_u = *opt.tau_u;
  if (opt.tau_l) s.tau_l = Vector::Constant(1, *opt.tau_l);
  if (opt.eps0) s.eps0 = *opt.eps0;
  if (opt.kappa) s.kappa = *opt.kappa;
  if (opt.max_iters) s.max_iters = *opt.max_iters;
  s.threads = opt.threads;
  return cfg;
}

std::ofstream open_out(const Options& opt, const std::string& name) {
  fs::create_directories(opt.out);
  std::ofstream f(opt.out / name);
  if (!f) throw ConfigError("cannot write " + (opt.out / name).string());
  return f;
}

std::string join_ids(const std::vector<int>& xs) {
  std::ostringstream o;
  for (std::size_t k = 0; k < xs.size(); ++k) o << (k ? "," : "") << xs[k] + 1;
  return o.str();
}

// "1-4" for consecutive runs, comma lists otherwise.
std::string ranges(const std::vector<int>& rows) {
  std::ostringstream o;
  for (std::size_t k = 0; k < rows.size();) {
    std::size_t e = k;
    while (e + 1 < rows.size() && rows[e + 1] == rows[e] + 1) ++e;
    o << (k ? "," : "") << rows[k] + 1;
    if (e > k) o << '-' << rows[e] + 1;
    k = e + 1;
  }
  return o.str();
}

void print_plan(std::ostream& os, const part::GroupingPlan& plan, const std::string& entity) {
  os << "groups: " << plan.r << "  d: " << plan.d << "  subset size: " << plan.subset_size() << '\n';
  for (int s = 0; s < plan.r; ++s) {
    std::vector<int> m;
    for (std::size_t j = 0; j < plan.membership.size(); ++j)
      if (plan.membership[j] == s) m.push_back(static_cast<int>(j));
    os << "  group " << s + 1 << ": " << entity << "s {" << ranges(m) << "}  rows {"
       << ranges(plan.subset_rows[s]) << "}\n";
  }
}

int largest_group(const solve::GroupStructure& g) {
  std::vector<int> count(g.group_count(), 0);
  for (int s : g.agent_group) ++count[s];
  return *std::max_element(count.begin(), count.end());
}

analysis::FlopsReport flops_of(const CoupledProblem& p, const part::GroupingPlan& plan,
                               const solve::GroupStructure& g) {
  return analysis::flops_report(p.row_count(), plan.d, p.horizon(), p.agent_count(),
                                largest_group(g), plan.r);
}

json flops_json(const analysis::FlopsReport& f) {
  return {{"n", f.n},       {"d", f.d},         {"K", f.K},
          {"v", f.v},       {"v_m", f.v_m},     {"r", f.r},
          {"F_pt", f.F_pt}, {"F_pr", f.F_pr.percent()},
          {"F_dt", f.F_dt}, {"F_dr", f.F_dr.percent()}};
}

json certificate_json(const solve::Certificate& c) {
  return {{"feasible", c.feasible}, {"M", c.M},          {"N", c.N},
          {"Psi", c.Psi},           {"mu_lower", c.mu_lower}, {"mu", c.mu},
          {"mu_ratio", c.mu_ratio}, {"L_phi", c.L_phi},  {"L_gradG", c.L_gradG},
          {"L_d", c.L_d},           {"F_U", c.F_U},      {"F_lambda", c.F_lambda},
          {"A", c.A},               {"B", c.B},          {"alpha", c.alpha},
          {"beta", c.beta},         {"tau_u", c.tau_u},  {"tau_l", c.tau_l}};
}

json vec_json(const Vector& x) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back(x(i));
  return a;
}

void print_summary(std::ostream& os, const json& summary) {
  for (auto it = summary.begin(); it != summary.end(); ++it) {
    if (it->is_object()) {
      os << it.key() << ":\n";
      for (auto jt = it->begin(); jt != it->end(); ++jt) os << "  " << jt.key() << ": " << jt->dump() << '\n';
    } else {
      os << it.key() << ": " << it->dump() << '\n';
    }
  }
}

int exit_status(const solve::RunTrace& t, const solve::SolverConfig& s) {
  return t.converged || s.max_iters == 0 ? 0 : 1;
}

int run_ev(const Options& opt, const io::ScenarioConfig& cfg, std::ostream& os) {
  io::EvCase ec = io::build_ev_case(cfg);
  const auto& p = *ec.problem;
  const solve::Certificate cert = solve::certificate(p, ec.groups, cfg.solver);
  const solve::RunTrace trace = solve::run(p, ec.groups, cfg.solver);
  const Matrix& U = trace.final_state.U;

  {
    auto f = open_out(opt, "trace.csv");
    solve::write_trace_csv(f, trace, opt.timing);
  }
  const Vector controlled = p.total_load(U);
  const Matrix U0 = p.uncontrolled_schedule();
  const Vector uncontrolled = p.total_load(U0);
  const Matrix vpu = (p.voltages_squared(U).cwiseMax(0.0).cwiseSqrt()) / p.network().slack_voltage();
  {
    auto f = open_out(opt, "profile.csv");
    f << "slot,baseline_w,controlled_w,uncontrolled_w,min_voltage_pu\n" << std::setprecision(12);
    for (int t = 0; t < p.horizon(); ++t)
      f << t << ',' << p.aggregate_baseline()(t) << ',' << controlled(t) << ',' << uncontrolled(t)
        << ',' << vpu.col(t).minCoeff() << '\n';
  }
  double energy = 0.0;
  for (int i = 0; i < p.agent_count(); ++i) energy = std::max(energy, p.energy_residual(i, U));
  const auto fc = analysis::flatness_metrics(controlled);
  const auto fu = analysis::flatness_metrics(uncontrolled);

  json summary;
  summary["scenario"] = cfg.name;
  summary["solver"] = solve::to_string(cfg.solver.method);
  summary["iterations"] = trace.rows.size();
  summary["converged"] = trace.converged;
  summary["final_eps"] = trace.rows.empty() ? 0.0 : trace.rows.back().eps;
  summary["objective"] = p.objective(U);
  summary["max_violation_pu2"] = p.max_violation(U);
  summary["max_energy_residual"] = energy;
  summary["min_voltage_pu"] = vpu.minCoeff();
  summary["load_variance_w2"] = fc.variance;
  summary["uncontrolled_variance_w2"] = fu.variance;
  summary["load_factor"] = fc.load_factor;
  summary["flops"] = flops_json(flops_of(p, ec.plan, ec.groups));
  summary["certificate_feasible"] = cert.feasible;
  io::write_json(opt.out / "summary.json", summary);
  print_summary(os, summary);
  return exit_status(trace, cfg.solver);
}

struct TrafficRun {
  io::TrafficCase tc;
  traffic::OracleResult oracle;
};

TrafficRun prepare_traffic(const io::ScenarioConfig& cfg) {
  TrafficRun tr{io::build_traffic_case(cfg), {}};
  tr.oracle = traffic::centralized_oracle(*tr.tc.problem, cfg.oracle_tol);
  return tr;
}

int run_traffic(const Options& opt, const io::ScenarioConfig& cfg, std::ostream& os) {
  const TrafficRun tr = prepare_traffic(cfg);
  const auto& p = *tr.tc.problem;
  const solve::Certificate cert = solve::certificate(p, tr.tc.groups, cfg.solver);
  const solve::RunTrace trace = solve::run(p, tr.tc.groups, cfg.solver);
  {
    auto f = open_out(opt, "trace.csv");
    solve::write_trace_csv(f, trace, opt.timing);
  }
  const Vector x = trace.final_state.U.row(0).transpose();
  json summary;
  summary["scenario"] = cfg.name;
  summary["solver"] = solve::to_string(cfg.solver.method);
  summary["iterations"] = trace.rows.size();
  summary["converged"] = trace.converged;
  summary["final_eps"] = trace.rows.empty() ? 0.0 : trace.rows.back().eps;
  summary["objective"] = p.objective(trace.final_state.U);
  summary["max_violation"] = p.max_violation(trace.final_state.U);
  summary["x"] = vec_json(x);
  summary["x_star"] = vec_json(tr.oracle.x);
  summary["oracle_residual"] = tr.oracle.residual;
  summary["error_vs_oracle"] = (x - tr.oracle.x).norm();
  summary["flops"] = flops_json(flops_of(p, tr.tc.plan, tr.tc.groups));
  summary["certificate_feasible"] = cert.feasible;
  io::write_json(opt.out / "summary.json", summary);
  print_summary(os, summary);
  return exit_status(trace, cfg.solver);
}

}  // namespace

int cmd_partition(const Options& opt, std::ostream& os) {
  const io::ScenarioConfig cfg = load_config(opt);
  if (cfg.kind == io::ScenarioKind::traffic) {
    const io::TrafficCase tc = io::build_traffic_case(cfg);
    io::write_json(opt.out / "plan.json", io::plan_to_json(tc.plan, "agent"));
    print_plan(os, tc.plan, "agent");
    return 0;
  }

  const io::NetworkData nd = io::load_network(cfg.network);
  const net::SensitivityMatrices sens = net::build_sensitivity(nd.network);
  part::GroupingPlan plan;
  if (!cfg.plan.empty()) {
    plan = io::plan_from_json(io::read_json(cfg.plan));
  } else {
    part::ClusterResult cluster;
    plan = io::partition_feeder(sens, cfg.r, cfg.seed, cfg.restarts, cfg.subset_rule, &cluster);
    os << "kmeans objective: " << std::setprecision(10) << cluster.objective << '\n';
  }
  io::write_json(opt.out / "plan.json", io::plan_to_json(plan, "node"));

  // Nodes sorted by group, and R in that order, for heatmap rendering.
  std::vector<int> order(nd.network.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return plan.membership[a] < plan.membership[b]; });
  {
    auto f = open_out(opt, "heatmap_order.csv");
    f << "position,node,label,group\n";
    for (std::size_t k = 0; k < order.size(); ++k)
      f << k + 1 << ',' << order[k] + 1 << ',' << nd.network.label(order[k] + 1) << ','
        << plan.membership[order[k]] + 1 << '\n';
  }
  {
    auto f = open_out(opt, "sensitivity_r_ohm.csv");
    f << "node";
    for (int j : order) f << ',' << j + 1;
    f << '\n' << std::setprecision(12);
    for (int i : order) {
      f << i + 1;
      for (int j : order) f << ',' << sens.R(i, j);
      f << '\n';
    }
  }
  print_plan(os, plan, "node");
  return 0;
}

int cmd_run(const Options& opt, std::ostream& os) {
  const io::ScenarioConfig cfg = load_config(opt);
  return cfg.kind == io::ScenarioKind::ev ? run_ev(opt, cfg, os) : run_traffic(opt, cfg, os);
}

int cmd_compare(const Options& opt, std::ostream& os) {
  io::ScenarioConfig cfg = load_config(opt);
  if (cfg.kind != io::ScenarioKind::traffic)
    throw ConfigError("compare needs a scenario with a centralized reference (kind 'traffic')");
  const std::vector<std::string> names =
      opt.solvers.empty() ? std::vector<std::string>{"spmds", "spds", "rpds"} : opt.solvers;
  const TrafficRun tr = prepare_traffic(cfg);
  const auto& p = *tr.tc.problem;

  std::vector<std::vector<double>> cols;
  for (const auto& name : names) {
    solve::SolverConfig sc = cfg.solver;
    sc.method = solve::parse_method(name);
    sc.eps0 = std::numeric_limits<double>::min();  // always run the full horizon
    std::vector<double> chi;
    solve::RunMonitors mon;
    mon.on_iteration = [&](const solve::IterationState& st) {
      chi.push_back((st.U.row(0).transpose() - tr.oracle.x).norm());
    };
    solve::run(p, tr.tc.groups, sc, mon);
    cols.push_back(std::move(chi));
  }

  auto f = open_out(opt, "compare.csv");
  f << "iter";
  for (const auto& n : names) f << ",chi_" << n;
  f << '\n' << std::scientific << std::setprecision(12);
  const std::size_t rows = cols.empty() ? 0 : cols.front().size();
  for (std::size_t k = 0; k < rows; ++k) {
    f << k + 1;
    for (const auto& c : cols) f << ',' << c[k];
    f << '\n';
  }
  os << "x_star:";
  for (Eigen::Index i = 0; i < tr.oracle.x.size(); ++i) os << ' ' << tr.oracle.x(i);
  os << "\nfinal chi:";
  for (std::size_t s = 0; s < names.size(); ++s)
    os << ' ' << names[s] << '=' << (cols[s].empty() ? 0.0 : cols[s].back());
  os << '\n';
  return 0;
}

int cmd_certificate(const Options& opt, std::ostream& os) {
  const io::ScenarioConfig cfg = load_config(opt);
  solve::Certificate c;
  if (cfg.kind == io::ScenarioKind::ev) {
    const io::EvCase ec = io::build_ev_case(cfg);
    c = solve::certificate(*ec.problem, ec.groups, cfg.solver);
  } else {
    const io::TrafficCase tc = io::build_traffic_case(cfg);
    c = solve::certificate(*tc.problem, tc.groups, cfg.solver);
  }
  const json doc = certificate_json(c);
  io::write_json(opt.out / "certificate.json", doc);
  print_summary(os, doc);
  return 0;
}

int cmd_flops(const Options& opt, std::ostream& os) {
  analysis::FlopsReport f;
  if (!opt.scenario.empty()) {
    const io::ScenarioConfig cfg = load_config(opt);
    if (cfg.kind == io::ScenarioKind::ev) {
      const io::EvCase ec = io::build_ev_case(cfg);
      f = flops_of(*ec.problem, ec.plan, ec.groups);
    } else {
      const io::TrafficCase tc = io::build_traffic_case(cfg);
      f = flops_of(*tc.problem, tc.plan, tc.groups);
    }
  } else {
    if (!opt.n || !opt.d || !opt.K || !opt.v || !opt.v_m)
      throw ConfigError("flops needs --scenario or all of --n --d --K --v --vm");
    f = analysis::flops_report(*opt.n, *opt.d, *opt.K, *opt.v, *opt.v_m, opt.r.value_or(1));
  }
  auto out = open_out(opt, "flops.csv");
  out << "n,d,K,v,v_m,r,F_pt,F_pr_percent,F_dt,F_dr_percent\n";
  auto pct = [](const analysis::Ratio& q) {
    std::string s = q.percent();
    s.pop_back();
    return s;
  };
  out << f.n << ',' << f.d << ',' << f.K << ',' << f.v << ',' << f.v_m << ',' << f.r << ','
      << f.F_pt << ',' << pct(f.F_pr) << ',' << f.F_dt << ',' << pct(f.F_dr) << '\n';
  print_summary(os, flops_json(f));
  return 0;
}

int main_entry(int argc, char** argv, std::ostream& os, std::ostream& err) {
  CLI::App app{"Decentralized shrunken primal-multi-dual subgradient toolkit", "spmds"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--scenario", opt.scenario, "Scenario JSON file");
    sub->add_option("--solver", opt.solvers, "spmds, spds or rpds (comma list for compare)")
        ->delimiter(',');
    sub->add_option("--r", opt.r, "Group count (re-partitions with K-means)");
    sub->add_option("--alpha", opt.alpha, "Primal step size");
    sub->add_option("--beta", opt.beta, "Dual step size");
    sub->add_option("--tau-u", opt.tau_u, "Primal shrink factor in (0, 1]");
    sub->add_option("--tau-l", opt.tau_l, "Dual shrink factor in (0, 1]");
    sub->add_option("--eps0", opt.eps0, "Stopping tolerance");
    sub->add_option("--kappa", opt.kappa, "RPDS dual regularization");
    sub->add_option("--max-iters", opt.max_iters, "Iteration limit");
    sub->add_option("--seed", opt.seed, "Seed for fleet sampling and K-means");
    sub->add_option("--threads", opt.threads, "Worker threads per update phase")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
    sub->add_flag("--timing", opt.timing, "Add wall-clock column to traces");
  };

  int (*handler)(const Options&, std::ostream&) = nullptr;
  auto add = [&](const char* name, const char* help, int (*fn)(const Options&, std::ostream&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    common(sub);
    sub->callback([&handler, fn] { handler = fn; });
    return sub;
  };
  add("partition", "Cluster the scenario and write the grouping plan", cmd_partition);
  add("run", "Run one solver and write trace and summary", cmd_run);
  add("compare", "Per-iteration distance to the centralized optimum for several solvers", cmd_compare);
  add("certificate", "Evaluate the step-size convergence certificate", cmd_certificate);
  CLI::App* fl = add("flops", "Analytic FLOPS savings of the dimension reduction", cmd_flops);
  fl->add_option("--n", opt.n, "Constraint rows");
  fl->add_option("--d", opt.d, "Dimension reduction");
  fl->add_option("--K", opt.K, "Horizon length");
  fl->add_option("--v", opt.v, "Agent count");
  fl->add_option("--vm", opt.v_m, "Largest group size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out_s, err_s;
    const int code = app.exit(e, out_s, err_s);
    os << out_s.str();
    err << err_s.str();
    return code == 0 ? 0 : 2;
  }
  try {
    return handler(opt, os);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace spmds::cli
