#include "spmds/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "spmds/error.hpp"

namespace spmds::io {
namespace {

template <class T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ParseError(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": key '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

template <class T>
T optional(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return required<T>(j, key, where);
}

Vector number_or_array(const json& j, const char* key, double fallback, const std::string& where) {
  if (!j.contains(key)) return Vector::Constant(1, fallback);
  const json& v = j.at(key);
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  if (v.is_array() && !v.empty()) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number()) throw ParseError(where + ": '" + key + "' must hold numbers");
      out(static_cast<Eigen::Index>(k)) = v[k].get<double>();
    }
    return out;
  }
  throw ParseError(where + ": '" + key + "' must be a number or a nonempty array");
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

NetworkData parse_network(const json& doc) {
  const std::string where = "network";
  const int phases = optional<int>(doc, "phases", 1, where);
  if (phases != 1 && phases != 3) throw ParseError(where + ": phases must be 1 or 3");
  const double v_in = required<double>(doc, "slack_voltage_v", where);
  // Three-phase feeders quote the line-to-line voltage.
  const double v0 = phases == 3 ? v_in / std::sqrt(3.0) : v_in;

  const json& nodes = doc.contains("nodes") ? doc.at("nodes") : json();
  if (!nodes.is_array() || nodes.empty()) throw ParseError(where + ": 'nodes' must be a nonempty array");
  const int n = static_cast<int>(nodes.size());
  std::vector<int> parent(n, -1);
  std::vector<double> r(n), x(n);
  std::vector<std::string> labels(n);
  Vector p = Vector::Zero(n), q = Vector::Zero(n);
  std::vector<bool> seen(n, false);
  for (const json& nd : nodes) {
    const int id = required<int>(nd, "id", where);
    const std::string here = where + " node " + std::to_string(id);
    if (id < 1 || id > n) throw ParseError(here + ": ids must run 1.." + std::to_string(n));
    if (seen[id - 1]) throw ParseError(here + ": duplicate id");
    seen[id - 1] = true;
    parent[id - 1] = required<int>(nd, "parent", here);
    r[id - 1] = required<double>(nd, "r_ohm", here);
    x[id - 1] = required<double>(nd, "x_ohm", here);
    labels[id - 1] = optional<std::string>(nd, "label", "", here);
    p(id - 1) = optional<double>(nd, "load_kw", 0.0, here) * 1e3 / phases;
    q(id - 1) = optional<double>(nd, "load_kvar", 0.0, here) * 1e3 / phases;
  }
  return {net::RadialNetwork(parent, r, x, v0, phases, labels), p, q};
}

NetworkData load_network(const fs::path& path) {
  try {
    return parse_network(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<fleet::EV> parse_fleet(const json& doc, const net::RadialNetwork& network,
                                   std::uint64_t seed) {
  const std::string where = "fleet";
  const double ph = network.phases();
  auto make = [&](int node, double pmax_kw, double eta, double soc_need, double cap_kwh,
                  const std::string& here) {
    if (!(cap_kwh > 0.0)) throw ParseError(here + ": capacity_kwh must be positive");
    if (!(soc_need >= 0.0 && soc_need <= 1.0)) throw ParseError(here + ": soc_need must lie in [0, 1]");
    return fleet::EV{node, pmax_kw * 1e3 / ph, eta, soc_need * cap_kwh * 3.6e6 / ph};
  };

  std::vector<fleet::EV> evs;
  if (doc.contains("evs")) {
    int k = 0;
    for (const json& e : doc.at("evs")) {
      const std::string here = where + " ev " + std::to_string(++k);
      evs.push_back(make(required<int>(e, "node", here), required<double>(e, "pmax_kw", here),
                         optional<double>(e, "eta", 1.0, here), required<double>(e, "soc_need", here),
                         required<double>(e, "capacity_kwh", here), here));
    }
  }
  if (doc.contains("generate")) {
    const json& g = doc.at("generate");
    const std::string here = where + " generate";
    const auto nodes = required<std::vector<int>>(g, "nodes", here);
    const int per_node = optional<int>(g, "per_node", 1, here);
    std::map<std::string, int> counts = optional<std::map<std::string, int>>(g, "counts", {}, here);
    const double pmax = required<double>(g, "pmax_kw", here);
    const double eta = optional<double>(g, "eta", 1.0, here);
    const double cap = required<double>(g, "capacity_kwh", here);
    const auto range = required<std::vector<double>>(g, "soc_need_range", here);
    if (range.size() != 2 || !(range[0] <= range[1])) throw ParseError(here + ": bad soc_need_range");
    std::mt19937_64 rng(seed);
    for (int node : nodes) {
      const auto it = counts.find(std::to_string(node));
      const int c = it != counts.end() ? it->second : per_node;
      if (c < 0) throw ParseError(here + ": negative EV count");
      for (int k = 0; k < c; ++k)
        evs.push_back(make(node, pmax, eta, range[0] + (range[1] - range[0]) * unit_draw(rng), cap, here));
    }
  }
  if (evs.empty()) throw ParseError(where + ": no EVs (need 'evs' or 'generate')");
  return evs;
}

std::vector<fleet::EV> load_fleet(const fs::path& path, const net::RadialNetwork& network,
                                  std::uint64_t seed) {
  try {
    return parse_fleet(read_json(path), network, seed);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

TrafficData parse_traffic(const json& doc) {
  const std::string where = "traffic";
  const int links = required<int>(doc, "links", where);
  const auto cap = required<std::vector<double>>(doc, "capacity", where);
  const json& agents = doc.contains("agents") ? doc.at("agents") : json();
  if (!agents.is_array() || agents.empty()) throw ParseError(where + ": 'agents' must be a nonempty array");
  std::vector<std::vector<int>> routes;
  std::vector<double> k;
  std::vector<int> groups;
  int idx = 0;
  for (const json& a : agents) {
    const std::string here = where + " agent " + std::to_string(++idx);
    routes.push_back(required<std::vector<int>>(a, "route", here));
    k.push_back(required<double>(a, "k", here));
    if (a.contains("group")) groups.push_back(required<int>(a, "group", here) - 1);
  }
  if (!groups.empty() && groups.size() != routes.size())
    throw ParseError(where + ": either every agent or no agent names a group");
  Vector b = Eigen::Map<const Vector>(cap.data(), static_cast<Eigen::Index>(cap.size()));
  Vector kv = Eigen::Map<const Vector>(k.data(), static_cast<Eigen::Index>(k.size()));
  traffic::TrafficProblem p(traffic::incidence_from_routes(routes, links), b, kv,
                            optional<double>(doc, "initial_flow", 1.0, where));
  return {std::move(p), groups};
}

TrafficData load_traffic(const fs::path& path) {
  try {
    return parse_traffic(read_json(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json plan_to_json(const part::GroupingPlan& plan, const std::string& entity) {
  json doc;
  doc["r"] = plan.r;
  doc["d"] = plan.d;
  doc["rows"] = plan.rows;
  doc["subset_size"] = plan.subset_size();
  doc["entity"] = entity;
  json membership = json::array();
  for (int g : plan.membership) membership.push_back(g + 1);
  doc["membership"] = membership;
  json groups = json::array();
  for (int s = 0; s < plan.r; ++s) {
    json members = json::array(), rows = json::array();
    for (std::size_t j = 0; j < plan.membership.size(); ++j)
      if (plan.membership[j] == s) members.push_back(static_cast<int>(j) + 1);
    for (int row : plan.subset_rows[s]) rows.push_back(row + 1);
    groups.push_back({{"id", s + 1}, {"members", members}, {"subset_rows", rows}});
  }
  doc["groups"] = groups;
  return doc;
}

part::GroupingPlan plan_from_json(const json& doc) {
  const std::string where = "plan";
  part::GroupingPlan plan;
  plan.r = required<int>(doc, "r", where);
  plan.d = required<int>(doc, "d", where);
  plan.rows = required<int>(doc, "rows", where);
  for (int g : required<std::vector<int>>(doc, "membership", where)) plan.membership.push_back(g - 1);
  const json& groups = doc.contains("groups") ? doc.at("groups") : json();
  if (!groups.is_array()) throw ParseError(where + ": 'groups' must be an array");
  plan.subset_rows.assign(plan.r, {});
  for (const json& g : groups) {
    const int id = required<int>(g, "id", where);
    if (id < 1 || id > plan.r) throw ParseError(where + ": group id out of range");
    for (int row : required<std::vector<int>>(g, "subset_rows", where))
      plan.subset_rows[id - 1].push_back(row - 1);
  }
  plan.validate();
  return plan;
}

ScenarioConfig parse_scenario(const json& doc, const fs::path& base_dir) {
  const std::string where = "scenario";
  ScenarioConfig c;
  const auto kind = required<std::string>(doc, "kind", where);
  if (kind == "ev")
    c.kind = ScenarioKind::ev;
  else if (kind == "traffic")
    c.kind = ScenarioKind::traffic;
  else
    throw ParseError(where + ": kind must be 'ev' or 'traffic'");
  c.name = optional<std::string>(doc, "name", kind, where);
  c.seed = optional<std::uint64_t>(doc, "seed", 1, where);

  if (c.kind == ScenarioKind::ev) {
    c.network = resolve(base_dir, required<std::string>(doc, "network", where));
    c.fleet = resolve(base_dir, required<std::string>(doc, "fleet", where));
    const json h = optional<json>(doc, "horizon", json::object(), where);
    c.horizon.slots = optional<int>(h, "slots", 52, where + " horizon");
    c.horizon.dt_s = optional<double>(h, "dt_s", 900.0, where + " horizon");
    const auto start = optional<std::string>(h, "start", "19:00", where + " horizon");
    int hh = 0, mm = 0;
    if (std::sscanf(start.c_str(), "%d:%d", &hh, &mm) != 2 || hh < 0 || hh > 23 || mm < 0 || mm > 59)
      throw ParseError(where + ": horizon start must look like HH:MM");
    c.horizon.start = static_cast<int>((hh * 3600 + mm * 60) / c.horizon.dt_s);

    const json base = optional<json>(doc, "baseline", json::object(), where);
    if (base.contains("multipliers")) {
      const auto m = required<std::vector<double>>(base, "multipliers", where + " baseline");
      if (static_cast<int>(m.size()) != c.horizon.slots)
        throw ParseError(where + ": baseline multipliers must have one entry per slot");
      c.multipliers = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
    } else {
      const auto profile = optional<std::string>(base, "profile", "overnight_valley", where);
      if (profile != "overnight_valley") throw ParseError(where + ": unknown baseline profile '" + profile + "'");
      c.multipliers = fleet::overnight_valley_profile(c.horizon.slots, c.horizon.dt_s);
    }
    c.rho = optional<double>(doc, "rho", 0.0, where);
    c.vmin_pu = optional<double>(doc, "vmin_pu", 0.954, where);
  } else {
    c.instance = resolve(base_dir, required<std::string>(doc, "instance", where));
    c.oracle_tol = optional<double>(doc, "oracle_tol", 1e-8, where);
  }

  const json p = optional<json>(doc, "partition", json::object(), where);
  const std::string pw = where + " partition";
  c.r = optional<int>(p, "r", 1, pw);
  c.restarts = optional<int>(p, "restarts", 32, pw);
  const auto rule = optional<std::string>(p, "subset_rule", "sensitivity", pw);
  if (rule == "sensitivity")
    c.subset_rule = part::SubsetRule::sensitivity;
  else if (rule == "contiguous")
    c.subset_rule = part::SubsetRule::contiguous;
  else
    throw ParseError(pw + ": subset_rule must be 'sensitivity' or 'contiguous'");
  if (p.contains("plan")) c.plan = resolve(base_dir, required<std::string>(p, "plan", pw));

  const json s = optional<json>(doc, "solver", json::object(), where);
  const std::string sw = where + " solver";
  c.solver.method = solve::parse_method(optional<std::string>(s, "method", "spmds", sw));
  c.solver.alpha = number_or_array(s, "alpha", 1e-3, sw);
  c.solver.beta = number_or_array(s, "beta", 0.5, sw);
  c.solver.tau_u = optional<double>(s, "tau_u", 1.0, sw);
  c.solver.tau_l = number_or_array(s, "tau_l", 1.0, sw);
  c.solver.kappa = optional<double>(s, "kappa", 0.1, sw);
  c.solver.eps0 = optional<double>(s, "eps0", 1e-3, sw);
  c.solver.max_iters = optional<int>(s, "max_iters", 500, sw);
  c.solver.dual_cap = optional<double>(s, "dual_cap", solve::kDefaultDualCap, sw);
  c.solver.freeze_omegas = optional<bool>(s, "freeze_omegas", false, sw);
  c.solver.threads = optional<int>(s, "threads", 1, sw);
  return c;
}

ScenarioConfig load_scenario(const fs::path& path) {
  try {
    return parse_scenario(read_json(path), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

part::GroupingPlan partition_feeder(const net::SensitivityMatrices& sens, int r, std::uint64_t seed,
                                    int restarts, part::SubsetRule rule, part::ClusterResult* cluster) {
  const int n = static_cast<int>(sens.R.rows());
  part::ClusterResult c = part::kmeans_best_of(sens.R, r, seed, restarts);
  part::GroupingPlan plan = part::select_subsets(sens.R, c.assignment, r, part::max_reduction(n, r), rule);
  if (cluster) *cluster = std::move(c);
  return plan;
}

EvCase build_ev_case(const ScenarioConfig& cfg) {
  if (cfg.kind != ScenarioKind::ev) throw ConfigError("scenario is not an EV scenario");
  NetworkData nd = load_network(cfg.network);
  std::vector<fleet::EV> evs = load_fleet(cfg.fleet, nd.network, cfg.seed);
  fleet::Baseline base = fleet::scale_nominal(nd.p_nominal, nd.q_nominal, cfg.multipliers);

  EvCase ec;
  ec.problem = std::make_unique<fleet::ValleyFillingProblem>(std::move(nd.network), std::move(evs),
                                                             cfg.horizon, std::move(base), cfg.rho,
                                                             cfg.vmin_pu);
  if (!cfg.plan.empty()) {
    ec.plan = plan_from_json(read_json(cfg.plan));
  } else {
    const int n = static_cast<int>(ec.problem->network().size());
    if (cfg.r < 1 || cfg.r > n) throw ConfigError("partition: r must lie in [1, " + std::to_string(n) + "]");
    ec.plan = partition_feeder(ec.problem->sensitivity(), cfg.r, cfg.seed, cfg.restarts,
                               cfg.subset_rule, &ec.cluster);
  }
  ec.groups.agent_group = ec.problem->agent_groups(ec.plan);
  ec.groups.subset_rows = ec.plan.subset_rows;
  return ec;
}

TrafficCase build_traffic_case(const ScenarioConfig& cfg) {
  if (cfg.kind != ScenarioKind::traffic) throw ConfigError("scenario is not a traffic scenario");
  TrafficData td = load_traffic(cfg.instance);
  TrafficCase tc;
  tc.problem = std::make_unique<traffic::TrafficProblem>(std::move(td.problem));
  const Matrix& A = tc.problem->impact();
  const int L = tc.problem->link_count();
  if (!cfg.plan.empty()) {
    tc.plan = plan_from_json(read_json(cfg.plan));
  } else {
    std::vector<int> membership = cfg.ignore_instance_groups ? std::vector<int>{} : td.groups;
    int r = cfg.r;
    if (membership.empty()) {
      if (r < 1 || r > tc.problem->agent_count()) throw ConfigError("partition: r out of range");
      membership = part::kmeans_best_of(A, r, cfg.seed, cfg.restarts).assignment;
    } else {
      r = *std::max_element(membership.begin(), membership.end()) + 1;
    }
    const Vector k = tc.problem->utility_weights();
    tc.plan = part::select_subsets(A, membership, r, part::max_reduction(L, r), cfg.subset_rule, &k);
  }
  if (static_cast<int>(tc.plan.membership.size()) != tc.problem->agent_count())
    throw ConfigError("traffic plan membership must list one group per agent");
  tc.groups.agent_group = tc.plan.membership;
  tc.groups.subset_rows = tc.plan.subset_rows;
  return tc;
}

}  // namespace spmds::io
