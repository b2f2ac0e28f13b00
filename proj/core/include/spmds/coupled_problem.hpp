#pragma once

#include <Eigen/Dense>

namespace spmds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A separable-constraint problem shared by v agents over a horizon of K
/// slots:
///
///   minimize  f(U)  s.t.  U_i in local set of agent i,
///                         sum_i impact(:, i) U_i(t) <= capacity(:, t)  for all t.
///
/// U is stored K x v, one column per agent. Constraint quantities are stored
/// rows x K. impact() must be nonnegative.
class CoupledProblem {
 public:
  virtual ~CoupledProblem() = default;

  virtual int agent_count() const = 0;
  virtual int horizon() const = 0;
  virtual const Matrix& impact() const = 0;
  virtual const Matrix& capacity() const = 0;

  virtual double objective(const Matrix& U) const = 0;
  /// Gradient of the smooth objective, K x v.
  virtual void gradient(const Matrix& U, Matrix& grad) const = 0;
  /// Euclidean projection of one agent's block onto its local set, in place.
  virtual void project_local(int agent, Eigen::Ref<Vector> block) const = 0;

  /// Lipschitz-type constant of the objective gradient used by the
  /// convergence certificate.
  virtual double gradient_lipschitz_scale() const = 0;
  /// Strong-convexity weight of the objective (rho), 0 if none.
  virtual double regularization() const { return 0.0; }
  /// Multiplier turning constraint residuals into reporting units.
  virtual double violation_scale() const { return 1.0; }

  /// Starting iterate. Defaults to the projection of zero.
  virtual Matrix initial_point() const {
    Matrix U = Matrix::Zero(horizon(), agent_count());
    for (int i = 0; i < agent_count(); ++i) project_local(i, U.col(i));
    return U;
  }

  int row_count() const { return static_cast<int>(impact().rows()); }

  /// Constraint-side load, rows x K.
  Matrix load(const Matrix& U) const { return impact() * U.transpose(); }

  /// Largest scaled residual of load - capacity (<= 0 means feasible).
  double max_violation(const Matrix& U) const {
    return (load(U) - capacity()).maxCoeff() * violation_scale();
  }
};

}  // namespace spmds
