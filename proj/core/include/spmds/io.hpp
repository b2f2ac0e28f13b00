#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spmds/fleet.hpp"
#include "spmds/netmodel.hpp"
#include "spmds/partition.hpp"
#include "spmds/solver.hpp"
#include "spmds/traffic.hpp"

namespace spmds::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// Parse a JSON file; ParseError names the file on failure.
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& doc);

/// Feeder plus nominal per-phase nodal load.
struct NetworkData {
  net::RadialNetwork network;
  Vector p_nominal;  // watt per phase
  Vector q_nominal;  // var per phase
};

NetworkData parse_network(const json& doc);
NetworkData load_network(const fs::path& path);

/// Explicit EV list or a seeded "generate" block. Powers and energies are
/// converted to the per-phase equivalent of `network`.
std::vector<fleet::EV> parse_fleet(const json& doc, const net::RadialNetwork& network,
                                   std::uint64_t seed);
std::vector<fleet::EV> load_fleet(const fs::path& path, const net::RadialNetwork& network,
                                  std::uint64_t seed);

/// Traffic instance with optional 0-based agent groups (empty if absent).
struct TrafficData {
  traffic::TrafficProblem problem;
  std::vector<int> groups;
};

TrafficData parse_traffic(const json& doc);
TrafficData load_traffic(const fs::path& path);

/// Plans are written with 1-based ids, matching the input files.
json plan_to_json(const part::GroupingPlan& plan, const std::string& entity);
part::GroupingPlan plan_from_json(const json& doc);

enum class ScenarioKind { ev, traffic };

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::ev;
  std::string name;
  fs::path network, fleet, instance, plan;  // resolved against the scenario's folder
  fleet::Horizon horizon{52, 900.0, 0};
  Vector multipliers;                      // per-slot baseline multipliers
  double rho = 0.0;
  double vmin_pu = 0.954;
  int r = 1;
  int restarts = 32;
  /// Cluster traffic agents with K-means even if the instance names groups.
  bool ignore_instance_groups = false;
  part::SubsetRule subset_rule = part::SubsetRule::sensitivity;
  solve::SolverConfig solver;
  std::uint64_t seed = 1;
  double oracle_tol = 1e-8;
};

ScenarioConfig parse_scenario(const json& doc, const fs::path& base_dir);
ScenarioConfig load_scenario(const fs::path& path);

/// Bundled EV case: problem, plan over the feeder nodes, the clustering it
/// came from (empty when the plan was read from a file), and the per-EV
/// group structure for the solver.
struct EvCase {
  std::unique_ptr<fleet::ValleyFillingProblem> problem;
  part::GroupingPlan plan;
  part::ClusterResult cluster;
  solve::GroupStructure groups;
};

EvCase build_ev_case(const ScenarioConfig& cfg);

struct TrafficCase {
  std::unique_ptr<traffic::TrafficProblem> problem;
  part::GroupingPlan plan;  // membership indexed by agent
  solve::GroupStructure groups;
};

TrafficCase build_traffic_case(const ScenarioConfig& cfg);

/// Nodal clustering and subsets for a feeder: K-means on the columns of R.
part::GroupingPlan partition_feeder(const net::SensitivityMatrices& sens, int r,
                                    std::uint64_t seed, int restarts, part::SubsetRule rule,
                                    part::ClusterResult* cluster = nullptr);

}  // namespace spmds::io
