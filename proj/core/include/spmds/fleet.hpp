#pragma once

#include <vector>

#include "spmds/coupled_problem.hpp"
#include "spmds/netmodel.hpp"
#include "spmds/partition.hpp"

namespace spmds::fleet {

/// One electric vehicle, per-phase SI units.
struct EV {
  int node = 1;               // attachment node, 1..n
  double pmax_w = 0.0;        // maximum charging power
  double eta = 1.0;           // charging efficiency in (0, 1]
  double energy_need_j = 0.0; // energy still to be stored in the battery
};

struct Horizon {
  int slots = 1;       // K
  double dt_s = 900.0; // slot length
  int start = 0;       // index of the first slot within the day
};

/// Nodal baseline consumption, n x K, per phase (watt, var).
struct Baseline {
  Matrix P;
  Matrix Q;
};

/// Multipliers of nominal load for an overnight valley starting at 19:00:
/// a cosine fall from 0.8 to 0.45 by 03:30, then a quarter-sine recovery to
/// 0.7 by 08:00. `t` is measured from the start of the horizon.
Vector overnight_valley_profile(int slots, double dt_s);

/// Nominal nodal load scaled by per-slot multipliers.
Baseline scale_nominal(const Vector& p_nominal, const Vector& q_nominal, const Vector& multipliers);

/// Per-EV reduced constraint blocks. Because the blocks are block-diagonal
/// in time, only the H coefficients of each EV are stored; `dense(i)` expands
/// them to the (H K) x K matrix.
struct StackedBlocks {
  int slots = 1;
  std::vector<int> agent_group;
  std::vector<std::vector<int>> rows;  // subset rows per group
  Matrix coeff;                        // H x v
  Matrix dense(int agent) const;
};

/// EV valley filling on a radial feeder.
///
///   f(U) = 1/2 || P_b + sum_i Pmax_i U_i ||^2 + rho/2 || U ||^2
///   0 <= U_i <= 1,  sum_t U_i(t) = need_i / (eta_i dt Pmax_i)
///   sum_i D_i U_i(t) <= V_c(t) - vmin^2 V0^2      (lower voltage bound)
///
/// with D_i = 2 R(:, node_i) Pmax_i and V_c the LinDistFlow voltage of the
/// baseline alone.
class ValleyFillingProblem final : public CoupledProblem {
 public:
  ValleyFillingProblem(net::RadialNetwork network, std::vector<EV> evs, Horizon horizon,
                       Baseline baseline, double rho, double vmin_pu);

  int agent_count() const override { return static_cast<int>(evs_.size()); }
  int horizon() const override { return horizon_.slots; }
  const Matrix& impact() const override { return D_; }
  const Matrix& capacity() const override { return capacity_; }

  double objective(const Matrix& U) const override;
  void gradient(const Matrix& U, Matrix& grad) const override;
  void project_local(int agent, Eigen::Ref<Vector> block) const override;

  /// n K max Pmax^2.
  double gradient_lipschitz_scale() const override;
  double regularization() const override { return rho_; }
  /// Residuals in squared per-unit voltage.
  double violation_scale() const override;

  const net::RadialNetwork& network() const { return network_; }
  const net::SensitivityMatrices& sensitivity() const { return sens_; }
  const std::vector<EV>& evs() const { return evs_; }
  const Horizon& horizon_spec() const { return horizon_; }
  const Baseline& baseline() const { return baseline_; }
  double vmin_pu() const { return vmin_pu_; }

  /// Aggregate baseline load P_b, length K.
  const Vector& aggregate_baseline() const { return pb_; }
  /// Baseline squared voltages V_c, n x K.
  const Matrix& baseline_voltage() const { return vc_; }
  /// vmin^2 V0^2 - V_c, n x K.
  Matrix y_b() const { return -capacity_; }

  /// Slots of full-rate charging EV i needs (the sum its profile must hit).
  double charge_target(int agent) const { return target_(agent); }

  /// Aggregate load P_b + sum_i Pmax_i U_i, length K.
  Vector total_load(const Matrix& U) const;

  /// Left side of the voltage constraint, n x K (volt^2); positive entries
  /// are violations.
  Matrix voltage_violation(const Matrix& U) const;

  /// Squared voltages (LinDistFlow) with EV charging added, n x K.
  Matrix voltages_squared(const Matrix& U) const;

  /// Relative error of EV i's energy equality.
  double energy_residual(int agent, const Matrix& U) const;

  /// Every EV charges at full rate from the first slot until its need is met.
  Matrix uncontrolled_schedule() const;

  /// Restrict each EV's sensitivity column to its group's subset rows.
  StackedBlocks stack_horizon(const part::GroupingPlan& plan) const;

  /// Group of each EV under a plan whose membership is indexed by node.
  std::vector<int> agent_groups(const part::GroupingPlan& plan) const;

 private:
  net::RadialNetwork network_;
  net::SensitivityMatrices sens_;
  std::vector<EV> evs_;
  Horizon horizon_;
  Baseline baseline_;
  double rho_;
  double vmin_pu_;
  Vector pmax_;
  Vector target_;
  Vector pb_;
  Matrix vc_;
  Matrix D_;
  Matrix capacity_;
};

/// Projection onto {0 <= u <= 1, sum u = target}: u = clamp(z + theta, 0, 1).
/// Throws InfeasibleError if target is outside [0, K].
void project_capped_simplex(Eigen::Ref<Vector> z, double target);

}  // namespace spmds::fleet
