#include "spmds/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spmds/error.hpp"

namespace spmds::net {

RadialNetwork::RadialNetwork(std::vector<int> parent, std::vector<double> resistance,
                             std::vector<double> reactance, double slack_voltage,
                             int phases, std::vector<std::string> labels)
    : parent_(std::move(parent)),
      resistance_(std::move(resistance)),
      reactance_(std::move(reactance)),
      slack_voltage_(slack_voltage),
      phases_(phases),
      labels_(std::move(labels)) {
  const int n = static_cast<int>(parent_.size());
  if (n == 0) throw ConfigError("network has no nodes besides the slack bus");
  if (resistance_.size() != parent_.size() || reactance_.size() != parent_.size())
    throw ConfigError("network: impedance arrays must match the node count");
  if (!(slack_voltage_ > 0.0)) throw ConfigError("network: slack voltage must be positive");
  if (phases_ < 1) throw ConfigError("network: phase count must be at least 1");
  if (labels_.empty()) labels_.assign(parent_.size(), std::string{});
  if (labels_.size() != parent_.size()) throw ConfigError("network: label count mismatch");

  for (int j = 1; j <= n; ++j) {
    const int p = parent_[j - 1];
    if (p < 0 || p > n)
      throw TopologyError("node " + std::to_string(j) + " has unknown parent " + std::to_string(p));
    if (p == j) throw TopologyError("node " + std::to_string(j) + " is its own parent");
    if (resistance_[j - 1] < 0.0 || reactance_[j - 1] < 0.0)
      throw ConfigError("line into node " + std::to_string(j) + " has negative impedance");
  }

  children_.assign(n + 1, {});
  for (int j = 1; j <= n; ++j) children_[parent_[j - 1]].push_back(j);

  // Breadth-first from the slack bus; anything not reached sits on a cycle.
  order_.reserve(n);
  std::vector<int> frontier{0};
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int u : frontier)
      for (int c : children_[u]) {
        order_.push_back(c);
        next.push_back(c);
      }
    frontier.swap(next);
  }
  if (static_cast<int>(order_.size()) != n) {
    std::vector<bool> seen(n + 1, false);
    for (int j : order_) seen[j] = true;
    int bad = 1;
    while (seen[bad]) ++bad;
    throw TopologyError("node " + std::to_string(bad) +
                        " does not reach the slack bus (cycle in parent relation)");
  }
}

std::vector<int> RadialNetwork::path_to_root(int node) const {
  std::vector<int> path;
  for (int j = node; j != 0; j = parent(j)) path.push_back(j);
  return path;
}

SensitivityMatrices build_sensitivity(const RadialNetwork& net) {
  const int n = static_cast<int>(net.size());
  // Shared root path of i and j ends at their lowest common ancestor, so
  // R(i, j) is the cumulative resistance from the slack bus to that node.
  std::vector<double> cum_r(n + 1, 0.0), cum_x(n + 1, 0.0);
  std::vector<int> depth(n + 1, 0);
  for (int j : net.topological_order()) {
    const int p = net.parent(j);
    cum_r[j] = cum_r[p] + net.resistance(j);
    cum_x[j] = cum_x[p] + net.reactance(j);
    depth[j] = depth[p] + 1;
  }
  auto lca = [&](int a, int b) {
    while (depth[a] > depth[b]) a = net.parent(a);
    while (depth[b] > depth[a]) b = net.parent(b);
    while (a != b) {
      a = net.parent(a);
      b = net.parent(b);
    }
    return a;
  };

  SensitivityMatrices s{Eigen::MatrixXd(n, n), Eigen::MatrixXd(n, n)};
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      const int a = lca(i, j);
      s.R(i - 1, j - 1) = s.R(j - 1, i - 1) = cum_r[a];
      s.X(i - 1, j - 1) = s.X(j - 1, i - 1) = cum_x[a];
    }
  }
  return s;
}

Eigen::VectorXd lindistflow_voltages(const RadialNetwork& net, const SensitivityMatrices& sens,
                                     const LoadProfile& load) {
  const auto n = static_cast<Eigen::Index>(net.size());
  if (sens.R.rows() != n || sens.X.rows() != n || load.P.size() != n || load.Q.size() != n)
    throw ConfigError("lindistflow: dimension mismatch");
  const double v0sq = net.slack_voltage() * net.slack_voltage();
  return Eigen::VectorXd::Constant(n, v0sq) - 2.0 * sens.R * load.P - 2.0 * sens.X * load.Q;
}

DistFlowSolution distflow_solve(const RadialNetwork& net, const LoadProfile& load, double tol,
                                int max_sweeps) {
  if (!(tol > 0.0)) throw ConfigError("distflow: tolerance must be positive");
  const int n = static_cast<int>(net.size());
  if (load.P.size() != n || load.Q.size() != n) throw ConfigError("distflow: dimension mismatch");

  const double v0sq = net.slack_voltage() * net.slack_voltage();
  const auto& order = net.topological_order();

  DistFlowSolution sol;
  sol.v_squared = Eigen::VectorXd::Constant(n, v0sq);
  sol.p_flow = Eigen::VectorXd::Zero(n);
  sol.q_flow = Eigen::VectorXd::Zero(n);
  auto upstream_vsq = [&](int j) {
    const int p = net.parent(j);
    return p == 0 ? v0sq : sol.v_squared(p - 1);
  };

  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    // Backward: line flows from the leaves up, losses from the last iterate.
    Eigen::VectorXd p_new(n), q_new(n);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int j = *it;
      double p = load.P(j - 1), q = load.Q(j - 1);
      for (int c : net.children(j)) {
        p += p_new(c - 1);
        q += q_new(c - 1);
      }
      const double isq = (sol.p_flow(j - 1) * sol.p_flow(j - 1) +
                          sol.q_flow(j - 1) * sol.q_flow(j - 1)) /
                         upstream_vsq(j);
      p_new(j - 1) = p + net.resistance(j) * isq;
      q_new(j - 1) = q + net.reactance(j) * isq;
    }
    sol.p_flow = p_new;
    sol.q_flow = q_new;

    // Forward: squared voltages from the slack bus down.
    double change = 0.0;
    for (int j : order) {
      const double vi = upstream_vsq(j);
      const double r = net.resistance(j), x = net.reactance(j);
      const double pf = sol.p_flow(j - 1), qf = sol.q_flow(j - 1);
      const double isq = (pf * pf + qf * qf) / vi;
      const double vj = vi - 2.0 * (r * pf + x * qf) + (r * r + x * x) * isq;
      if (!(vj > 0.0) || !std::isfinite(vj))
        throw DivergenceError("distflow: voltage collapse at node " + std::to_string(j) +
                              " (feeder overloaded)");
      change = std::max(change, std::abs(vj - sol.v_squared(j - 1)) / vj);
      sol.v_squared(j - 1) = vj;
    }
    sol.sweeps = sweep;
    sol.residual = change;
    if (change < tol) return sol;
  }
  throw DivergenceError("distflow: no convergence within " + std::to_string(max_sweeps) +
                        " sweeps (residual " + std::to_string(sol.residual) + ")");
}

Eigen::VectorXd to_per_unit_magnitude(const RadialNetwork& net, const Eigen::VectorXd& v_squared) {
  return v_squared.cwiseMax(0.0).cwiseSqrt() / net.slack_voltage();
}

}  // namespace spmds::net
