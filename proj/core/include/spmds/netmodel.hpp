#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spmds::net {

/// Radial feeder stored as a parent array.
///
/// Node 0 is the slack bus and is not stored. Nodes 1..n each own the line
/// that connects them to their parent, so `resistance(j)` is r of line
/// (parent(j), j). All quantities are SI and per phase: a balanced
/// three-phase feeder is represented by its single-phase equivalent
/// (line-to-neutral slack voltage, per-phase powers).
class RadialNetwork {
 public:
  /// `parent[k]` is the upstream node of node k + 1. Throws TopologyError on
  /// cycles or dangling parents and ConfigError on negative impedances.
  RadialNetwork(std::vector<int> parent, std::vector<double> resistance,
                std::vector<double> reactance, double slack_voltage,
                int phases = 1, std::vector<std::string> labels = {});

  std::size_t size() const { return parent_.size(); }
  int parent(int node) const { return parent_.at(node - 1); }
  double resistance(int node) const { return resistance_.at(node - 1); }
  double reactance(int node) const { return reactance_.at(node - 1); }

  /// Per-phase slack voltage magnitude V0 (volt).
  double slack_voltage() const { return slack_voltage_; }

  /// Phase count of the physical feeder. Three-phase inputs are divided by
  /// this when converted to the per-phase equivalent.
  int phases() const { return phases_; }

  /// Node ids ordered so that every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }
  const std::vector<int>& children(int node) const { return children_.at(node); }

  /// Original bus names, if the input carried them ("" otherwise).
  const std::string& label(int node) const { return labels_.at(node - 1); }

  /// Nodes whose lines form the path from `node` back to the slack bus,
  /// starting at `node` itself.
  std::vector<int> path_to_root(int node) const;

  const std::vector<int>& parents() const { return parent_; }
  const std::vector<double>& resistances() const { return resistance_; }
  const std::vector<double>& reactances() const { return reactance_; }

 private:
  std::vector<int> parent_;
  std::vector<double> resistance_;
  std::vector<double> reactance_;
  double slack_voltage_;
  int phases_;
  std::vector<std::string> labels_;
  std::vector<int> order_;
  std::vector<std::vector<int>> children_;  // indexed by node id, 0..n
};

/// Voltage-to-power sensitivities. R(i, j) is the resistance of the part of
/// the root path shared by nodes i + 1 and j + 1; X likewise for reactance.
struct SensitivityMatrices {
  Eigen::MatrixXd R;
  Eigen::MatrixXd X;
};

/// Nodal consumption at one time instant (watt, var), indexed by node - 1.
struct LoadProfile {
  Eigen::VectorXd P;
  Eigen::VectorXd Q;
};

SensitivityMatrices build_sensitivity(const RadialNetwork& net);

/// LinDistFlow squared voltages V0^2 - 2 R P - 2 X Q (volt^2).
Eigen::VectorXd lindistflow_voltages(const RadialNetwork& net,
                                     const SensitivityMatrices& sens,
                                     const LoadProfile& load);

struct DistFlowSolution {
  Eigen::VectorXd v_squared;  // volt^2, per node
  Eigen::VectorXd p_flow;     // sending-end real flow into each node's line
  Eigen::VectorXd q_flow;
  int sweeps = 0;
  double residual = 0.0;  // max relative change of v_squared in the last sweep
};

/// Full DistFlow branch equations (with I^2 loss terms) solved by a
/// flat-start backward/forward sweep. Throws DivergenceError when the
/// relative residual does not drop below `tol` within `max_sweeps`, or when a
/// squared voltage collapses to a non-positive value.
DistFlowSolution distflow_solve(const RadialNetwork& net, const LoadProfile& load,
                                double tol = 1e-10, int max_sweeps = 200);

/// Squared voltages (volt^2) to magnitudes in per-unit of V0.
Eigen::VectorXd to_per_unit_magnitude(const RadialNetwork& net,
                                      const Eigen::VectorXd& v_squared);

}  // namespace spmds::net
