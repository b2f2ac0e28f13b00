#include "spmds/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spmds/error.hpp"

namespace spmds::fleet {

Vector overnight_valley_profile(int slots, double dt_s) {
  if (slots < 1 || !(dt_s > 0.0)) throw ConfigError("valley profile: bad horizon");
  constexpr double pi = std::numbers::pi;
  Vector m(slots);
  for (int k = 0; k < slots; ++k) {
    const double t = k * dt_s / 3600.0;
    if (t <= 8.5)
      m(k) = 0.45 + 0.35 * 0.5 * (1.0 + std::cos(pi * t / 8.5));
    else
      m(k) = 0.45 + 0.25 * std::sin(0.5 * pi * std::min((t - 8.5) / 4.5, 1.0));
  }
  return m;
}

Baseline scale_nominal(const Vector& p_nominal, const Vector& q_nominal, const Vector& multipliers) {
  if (p_nominal.size() != q_nominal.size()) throw ConfigError("baseline: P/Q size mismatch");
  return {p_nominal * multipliers.transpose(), q_nominal * multipliers.transpose()};
}

Matrix StackedBlocks::dense(int agent) const {
  const auto H = coeff.rows();
  Matrix out = Matrix::Zero(H * slots, slots);
  for (int t = 0; t < slots; ++t) out.block(t * H, t, H, 1) = coeff.col(agent);
  return out;
}

void project_capped_simplex(Eigen::Ref<Vector> z, double target) {
  const auto K = static_cast<double>(z.size());
  const double slack = 1e-12 * std::max(K, 1.0);
  if (!(target >= -slack) || !(target <= K + slack))
    throw InfeasibleError("charge target " + std::to_string(target) + " outside [0, " +
                          std::to_string(z.size()) + "]");
  if (target >= K) {
    z.setOnes();
    return;
  }
  if (target <= 0.0) {
    z.setZero();
    return;
  }
  auto filled = [&](double theta) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < z.size(); ++k) s += std::clamp(z(k) + theta, 0.0, 1.0);
    return s;
  };
  double lo = -z.maxCoeff(), hi = 1.0 - z.minCoeff();
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (filled(mid) < target ? lo : hi) = mid;
  }
  double theta = 0.5 * (lo + hi);

  // Solve exactly on the free set picked out by bisection.
  int ones = 0, free_count = 0;
  double free_sum = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double y = z(k) + theta;
    if (y >= 1.0) {
      ++ones;
    } else if (y > 0.0) {
      ++free_count;
      free_sum += z(k);
    }
  }
  if (free_count > 0) {
    const double exact = (target - ones - free_sum) / free_count;
    if (std::abs(exact - theta) <= 1e-9) theta = exact;
  }
  for (Eigen::Index k = 0; k < z.size(); ++k) z(k) = std::clamp(z(k) + theta, 0.0, 1.0);
}

ValleyFillingProblem::ValleyFillingProblem(net::RadialNetwork network, std::vector<EV> evs,
                                           Horizon horizon, Baseline baseline, double rho,
                                           double vmin_pu)
    : network_(std::move(network)),
      sens_(net::build_sensitivity(network_)),
      evs_(std::move(evs)),
      horizon_(horizon),
      baseline_(std::move(baseline)),
      rho_(rho),
      vmin_pu_(vmin_pu) {
  const int n = static_cast<int>(network_.size());
  const int K = horizon_.slots;
  const int v = agent_count();
  if (K < 1 || !(horizon_.dt_s > 0.0)) throw ConfigError("horizon: need K >= 1 and dt > 0");
  if (v == 0) throw ConfigError("fleet is empty");
  if (!(rho_ >= 0.0)) throw ConfigError("rho must be nonnegative");
  if (!(vmin_pu_ > 0.0 && vmin_pu_ <= 1.0)) throw ConfigError("vmin must lie in (0, 1]");
  if (baseline_.P.rows() != n || baseline_.P.cols() != K || baseline_.Q.rows() != n ||
      baseline_.Q.cols() != K)
    throw ConfigError("baseline must be n x K for both P and Q");

  pmax_.resize(v);
  target_.resize(v);
  D_.resize(n, v);
  for (int i = 0; i < v; ++i) {
    const EV& ev = evs_[i];
    const std::string who = "EV " + std::to_string(i + 1) + " at node " + std::to_string(ev.node);
    if (ev.node < 1 || ev.node > n) throw ConfigError(who + ": node out of range");
    if (!(ev.pmax_w > 0.0)) throw ConfigError(who + ": Pmax must be positive");
    if (!(ev.eta > 0.0 && ev.eta <= 1.0)) throw ConfigError(who + ": eta must lie in (0, 1]");
    if (!(ev.energy_need_j >= 0.0)) throw ConfigError(who + ": negative energy need");
    pmax_(i) = ev.pmax_w;
    target_(i) = ev.energy_need_j / (ev.eta * horizon_.dt_s * ev.pmax_w);
    if (target_(i) > K * (1.0 + 1e-12))
      throw InfeasibleError(who + " cannot be charged: needs " + std::to_string(target_(i)) +
                            " full-rate slots but the horizon has " + std::to_string(K));
    D_.col(i) = 2.0 * sens_.R.col(ev.node - 1) * ev.pmax_w;
  }

  pb_ = baseline_.P.colwise().sum().transpose();
  const double v0sq = network_.slack_voltage() * network_.slack_voltage();
  vc_ = Matrix::Constant(n, K, v0sq) - 2.0 * sens_.R * baseline_.P - 2.0 * sens_.X * baseline_.Q;
  capacity_ = vc_.array() - vmin_pu_ * vmin_pu_ * v0sq;
}

Vector ValleyFillingProblem::total_load(const Matrix& U) const { return pb_ + U * pmax_; }

double ValleyFillingProblem::objective(const Matrix& U) const {
  return 0.5 * total_load(U).squaredNorm() + 0.5 * rho_ * U.squaredNorm();
}

void ValleyFillingProblem::gradient(const Matrix& U, Matrix& grad) const {
  const Vector total = total_load(U);
  grad = total * pmax_.transpose() + rho_ * U;
}

void ValleyFillingProblem::project_local(int agent, Eigen::Ref<Vector> block) const {
  try {
    project_capped_simplex(block, target_(agent));
  } catch (const InfeasibleError& e) {
    throw InfeasibleError("EV " + std::to_string(agent + 1) + " at node " +
                          std::to_string(evs_[agent].node) + ": " + e.what());
  }
}

double ValleyFillingProblem::gradient_lipschitz_scale() const {
  const double pm = pmax_.maxCoeff();
  return static_cast<double>(network_.size()) * horizon_.slots * pm * pm;
}

double ValleyFillingProblem::violation_scale() const {
  return 1.0 / (network_.slack_voltage() * network_.slack_voltage());
}

Matrix ValleyFillingProblem::voltage_violation(const Matrix& U) const { return load(U) - capacity_; }

Matrix ValleyFillingProblem::voltages_squared(const Matrix& U) const { return vc_ - load(U); }

double ValleyFillingProblem::energy_residual(int agent, const Matrix& U) const {
  const double t = target_(agent);
  return std::abs(U.col(agent).sum() - t) / std::max(t, 1e-300);
}

Matrix ValleyFillingProblem::uncontrolled_schedule() const {
  Matrix U = Matrix::Zero(horizon_.slots, agent_count());
  for (int i = 0; i < agent_count(); ++i) {
    double left = target_(i);
    for (int t = 0; t < horizon_.slots && left > 0.0; ++t) {
      U(t, i) = std::min(1.0, left);
      left -= U(t, i);
    }
  }
  return U;
}

std::vector<int> ValleyFillingProblem::agent_groups(const part::GroupingPlan& plan) const {
  if (static_cast<int>(plan.membership.size()) != static_cast<int>(network_.size()))
    throw ConfigError("plan membership must list one group per feeder node");
  std::vector<int> g(evs_.size());
  for (std::size_t i = 0; i < evs_.size(); ++i) g[i] = plan.membership[evs_[i].node - 1];
  return g;
}

StackedBlocks ValleyFillingProblem::stack_horizon(const part::GroupingPlan& plan) const {
  plan.validate();
  if (plan.rows != static_cast<int>(network_.size()))
    throw ConfigError("plan row count does not match the feeder");
  StackedBlocks out;
  out.slots = horizon_.slots;
  out.agent_group = agent_groups(plan);
  out.rows = plan.subset_rows;
  const int H = plan.subset_size();
  out.coeff.resize(H, agent_count());
  for (int i = 0; i < agent_count(); ++i) {
    const auto& rows = plan.subset_rows[out.agent_group[i]];
    for (int k = 0; k < H; ++k) out.coeff(k, i) = D_(rows[k], i);
  }
  return out;
}

}  // namespace spmds::fleet
