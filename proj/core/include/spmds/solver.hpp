#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spmds/coupled_problem.hpp"

namespace spmds::solve {

enum class Method { spmds, spds, rpds };

Method parse_method(const std::string& name);
std::string to_string(Method m);

/// Which group each agent belongs to and which constraint rows (0-based,
/// sorted) each group's dual block covers.
struct GroupStructure {
  std::vector<int> agent_group;
  std::vector<std::vector<int>> subset_rows;

  int group_count() const { return static_cast<int>(subset_rows.size()); }
  void validate(int agents, int rows) const;
};

/// One group holding every agent and every row.
GroupStructure single_group(int agents, int rows);

/// Default upper bound of the dual set.
inline constexpr double kDefaultDualCap = 1e15;

struct SolverConfig {
  Method method = Method::spmds;
  Vector alpha = Vector::Constant(1, 1e-3);  // size 1 (uniform) or v
  Vector beta = Vector::Constant(1, 0.5);    // size 1 (uniform) or r
  double tau_u = 1.0;
  Vector tau_l = Vector::Constant(1, 1.0);   // size 1 (uniform) or r
  double kappa = 0.1;                        // rpds only
  double eps0 = 1e-3;
  int max_iters = 500;
  double dual_cap = kDefaultDualCap;
  /// Keep the omega weights from the first iteration instead of refreshing.
  bool freeze_omegas = false;
  int threads = 1;

  double alpha_of(int agent) const { return alpha.size() == 1 ? alpha(0) : alpha(agent); }
  double beta_of(int group) const { return beta.size() == 1 ? beta(0) : beta(group); }
  double tau_l_of(int group) const { return tau_l.size() == 1 ? tau_l(0) : tau_l(group); }

  /// Throws ConfigError on non-positive steps, shrink factors outside (0, 1],
  /// or per-agent / per-group vectors of the wrong length.
  void validate(int agents, int groups) const;
};

struct IterationState {
  Matrix U;                     // K x v
  std::vector<Matrix> lambdas;  // H_s x K per group
  Matrix lambda_e;              // rows x K, sum of the lambdas scattered onto their rows
  std::vector<Matrix> omegas;   // H_s x K per group
  int iter = 0;
  double eps = 0.0;
};

/// Problem initial point, zero duals, omegas of the initial point.
IterationState initial_state(const CoupledProblem& problem, const GroupStructure& groups);

/// Each group's share of the load on its rows, 1 where the load is zero.
std::vector<Matrix> compute_omegas(const Matrix& U, const CoupledProblem& problem,
                                   const GroupStructure& groups);

/// Sum of the dual blocks scattered onto the full row space.
Matrix assemble_lambda_e(const std::vector<Matrix>& lambdas, const GroupStructure& groups,
                         int rows, int slots);

/// Pi((1/tau) Pi(arg)) for an in-place projector. `arg` is the already
/// shrunk point tau x - step * grad.
template <class Proj, class Vec>
void shrunken_projection(const Proj& project, double tau, Vec&& arg) {
  project(arg);
  arg /= tau;
  project(arg);
}

IterationState spmds_step(const IterationState& state, const CoupledProblem& problem,
                          const GroupStructure& groups, const SolverConfig& config);

/// Full-dimension step with a single dual block over all rows.
IterationState spds_step(const IterationState& state, const CoupledProblem& problem,
                         const SolverConfig& config);

/// Dual-regularized step: direction g - kappa lambda, unshrunk projections.
IterationState rpds_step(const IterationState& state, const CoupledProblem& problem,
                         const SolverConfig& config);

/// ||U+ - U|| + sum_s ||lambda_s+ - lambda_s|| (Frobenius norms).
double convergence_eps(const IterationState& prev, const IterationState& next);

/// beta^2 ||U - U*||^2 + alpha^2 sum_s ||lambda_s - lambda_s*||^2.
double lyapunov(const IterationState& state, const IterationState& reference, double alpha,
                double beta);

struct TraceRow {
  int iter = 0;
  double eps = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  std::optional<double> lyapunov;
  double wall_ms = 0.0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  IterationState final_state;
  bool converged = false;
};

struct RunMonitors {
  /// Converged state to measure the Lyapunov function against.
  const IterationState* reference = nullptr;
  /// Called after every iteration.
  std::function<void(const IterationState&)> on_iteration;
};

/// Iterate until eps < eps0 or max_iters. SPDS and RPDS ignore `groups` and
/// use one full-dimension block.
RunTrace run(const CoupledProblem& problem, const GroupStructure& groups,
             const SolverConfig& config, const RunMonitors& monitors = {},
             const IterationState* start = nullptr);

void write_trace_csv(std::ostream& os, const RunTrace& trace, bool with_timing);

/// Constants of the Lyapunov contraction condition.
struct Certificate {
  double M = 0, N = 0, Psi = 0;
  double mu_lower = 0;  // max{(M + Psi L_phi^2) / (2 Psi F_U), (N + Psi L_phi^2) / (2 Psi F_l)}
  double mu = 0;        // midpoint of (mu_lower, 1) when that interval is nonempty
  double mu_ratio = 0;  // min/max of alpha^2 beta^2 / tau^2 over the two shrink factors
  double L_phi = 0, L_gradG = 0, L_d = 0;
  double F_U = 0, F_lambda = 0;
  double A = 0, B = 0;
  bool feasible = false;
  /// Step sizes of the evaluated (worst) corner when steps are heterogeneous.
  double alpha = 0, beta = 0, tau_u = 0, tau_l = 0;
};

/// Heterogeneous steps are checked at every combination of extreme alpha,
/// beta and tau_l; the least favourable corner is returned and `feasible`
/// holds only if every corner passes.
Certificate certificate(const CoupledProblem& problem, const GroupStructure& groups,
                        const SolverConfig& config);

/// Single-corner evaluation from raw constants.
Certificate certificate_from_constants(double alpha, double beta, double tau_u, double tau_l,
                                       double rho, double L_gradG, double L_d, int r);

struct TuneResult {
  double step = 0.0;
  int trials = 0;
};

/// Geometric step search: multiply the uniform primal step (or dual step when
/// `dual` is set) by `factor` until `window` iterations show eps growing,
/// then return the previous step.
TuneResult tune_step(const CoupledProblem& problem, const GroupStructure& groups,
                     SolverConfig config, bool dual, double start, double factor = 2.0,
                     int window = 30, int max_trials = 40);

}  // namespace spmds::solve
