#pragma once

#include <vector>

#include "spmds/coupled_problem.hpp"
#include "spmds/partition.hpp"

namespace spmds::traffic {

/// Congestion control on shared links. Agent i sends flow x_i along a fixed
/// route; link l carries (A x)_l and must stay below b_l.
///
///   f(x) = sum_i -k_i log(1 + x_i) + sum_l (A x)_l^2,   x >= 0,  A x <= b
///
/// The congestion term is the double sum over agents and links of
/// A_li x_i * (A x)_l.
class TrafficProblem final : public CoupledProblem {
 public:
  TrafficProblem(Matrix incidence, Vector capacity, Vector utility_weights,
                 double initial_flow = 1.0);

  int agent_count() const override { return static_cast<int>(A_.cols()); }
  int horizon() const override { return 1; }
  const Matrix& impact() const override { return A_; }
  const Matrix& capacity() const override { return b_; }

  /// Throws DomainError if any x_i <= -1.
  double objective(const Matrix& U) const override;
  void gradient(const Matrix& U, Matrix& grad) const override;
  void project_local(int agent, Eigen::Ref<Vector> block) const override;

  /// max_i 2 (A^T A)_ii.
  double gradient_lipschitz_scale() const override;
  Matrix initial_point() const override;

  int link_count() const { return static_cast<int>(A_.rows()); }
  const Vector& utility_weights() const { return k_; }

  double objective(const Vector& x) const;
  Vector gradient(const Vector& x) const;

 private:
  Matrix A_;
  Matrix b_;  // L x 1
  Vector k_;
  double x0_;
};

/// The five-agent, nine-link instance with its two agent groups and 5-link
/// subsets: agents {1, 2} and {3, 4, 5}.
struct Fig7Instance {
  TrafficProblem problem;
  part::GroupingPlan plan;  // membership indexed by agent
};

Fig7Instance build_fig7_instance();

/// Agent routes as 1-based link lists to an incidence matrix.
Matrix incidence_from_routes(const std::vector<std::vector<int>>& routes, int links);

struct OracleResult {
  Vector x;
  double residual = 0.0;  // ||x - P(x - grad f(x))|| over {x >= 0, A x <= b}
  int iterations = 0;
};

/// Centralized reference solution by projected gradient descent on the full
/// problem with exact projections onto {x >= 0, A x <= b}. Throws
/// DivergenceError if the residual stays above `tol`.
OracleResult centralized_oracle(const TrafficProblem& problem, double tol = 1e-8,
                                int max_iters = 200000);

/// Euclidean projection onto {x >= 0, A x <= b}, computed exactly as a
/// least-distance problem through a nonnegative least-squares dual. Throws
/// InfeasibleError if the set is empty.
Vector project_polyhedron(const Matrix& A, const Vector& b, const Vector& y);

}  // namespace spmds::traffic
