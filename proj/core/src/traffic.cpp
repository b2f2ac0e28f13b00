#include "spmds/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spmds/error.hpp"

namespace spmds::traffic {

TrafficProblem::TrafficProblem(Matrix incidence, Vector capacity, Vector utility_weights,
                               double initial_flow)
    : A_(std::move(incidence)), k_(std::move(utility_weights)), x0_(initial_flow) {
  if (A_.rows() == 0 || A_.cols() == 0) throw ConfigError("traffic: empty incidence matrix");
  if (capacity.size() != A_.rows()) throw ConfigError("traffic: capacity length != link count");
  if (k_.size() != A_.cols()) throw ConfigError("traffic: utility weights length != agent count");
  for (Eigen::Index l = 0; l < A_.rows(); ++l)
    for (Eigen::Index i = 0; i < A_.cols(); ++i)
      if (A_(l, i) != 0.0 && A_(l, i) != 1.0)
        throw ConfigError("traffic: incidence entries must be 0 or 1");
  if (!(capacity.minCoeff() > 0.0)) throw ConfigError("traffic: capacities must be positive");
  if (!(k_.minCoeff() >= 0.0)) throw ConfigError("traffic: utility weights must be nonnegative");
  if (!(x0_ >= 0.0)) throw ConfigError("traffic: initial flow must be nonnegative");
  b_ = capacity;
}

double TrafficProblem::objective(const Vector& x) const {
  if (x.size() != A_.cols()) throw ConfigError("traffic: flow vector has wrong length");
  double u = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > -1.0))
      throw DomainError("traffic: flow of agent " + std::to_string(i + 1) + " is <= -1");
    u += k_(i) * std::log1p(x(i));
  }
  return -u + (A_ * x).squaredNorm();
}

Vector TrafficProblem::gradient(const Vector& x) const {
  if (x.size() != A_.cols()) throw ConfigError("traffic: flow vector has wrong length");
  Vector g = 2.0 * A_.transpose() * (A_ * x);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > -1.0))
      throw DomainError("traffic: flow of agent " + std::to_string(i + 1) + " is <= -1");
    g(i) -= k_(i) / (1.0 + x(i));
  }
  return g;
}

double TrafficProblem::objective(const Matrix& U) const {
  return objective(Vector(U.row(0).transpose()));
}

void TrafficProblem::gradient(const Matrix& U, Matrix& grad) const {
  grad = gradient(Vector(U.row(0).transpose())).transpose();
}

void TrafficProblem::project_local(int, Eigen::Ref<Vector> block) const {
  block = block.cwiseMax(0.0);
}

double TrafficProblem::gradient_lipschitz_scale() const {
  return 2.0 * (A_.transpose() * A_).diagonal().maxCoeff();
}

Matrix TrafficProblem::initial_point() const { return Matrix::Constant(1, agent_count(), x0_); }

Matrix incidence_from_routes(const std::vector<std::vector<int>>& routes, int links) {
  if (links < 1) throw ConfigError("traffic: link count must be positive");
  Matrix A = Matrix::Zero(links, static_cast<Eigen::Index>(routes.size()));
  for (std::size_t i = 0; i < routes.size(); ++i) {
    if (routes[i].empty()) throw ConfigError("traffic: agent " + std::to_string(i + 1) + " has an empty route");
    for (int l : routes[i]) {
      if (l < 1 || l > links)
        throw ConfigError("traffic: agent " + std::to_string(i + 1) + " uses unknown link " +
                          std::to_string(l));
      A(l - 1, static_cast<Eigen::Index>(i)) = 1.0;
    }
  }
  return A;
}

Fig7Instance build_fig7_instance() {
  const Matrix A = incidence_from_routes({{2, 3, 6}, {2, 5, 9}, {1, 5, 9}, {6, 4, 9}, {8, 9}}, 9);
  Vector k(5);
  k << 10, 0, 10, 10, 10;
  TrafficProblem p(A, Vector::Ones(9), k, 1.0);
  const int d = part::max_reduction(9, 2);
  part::GroupingPlan plan =
      part::select_subsets(A, {0, 0, 1, 1, 1}, 2, d, part::SubsetRule::sensitivity, &k);
  return {std::move(p), std::move(plan)};
}

namespace {

// Lawson-Hanson active-set solver for min ||E u - f|| subject to u >= 0.
Vector nnls(const Matrix& E, const Vector& f) {
  const Eigen::Index m = E.cols();
  Vector u = Vector::Zero(m);
  std::vector<bool> passive(static_cast<std::size_t>(m), false);
  const double tol = 1e-12 * std::max(1.0, E.cwiseAbs().maxCoeff()) * std::max(1.0, f.norm());

  auto solve_passive = [&]() {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m; ++j)
      if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
    Matrix Ep(E.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ep.col(static_cast<Eigen::Index>(k)) = E.col(idx[k]);
    const Vector zp = Ep.completeOrthogonalDecomposition().solve(f);
    Vector z = Vector::Zero(m);
    for (std::size_t k = 0; k < idx.size(); ++k) z(idx[k]) = zp(static_cast<Eigen::Index>(k));
    return z;
  };

  for (Eigen::Index outer = 0; outer < 3 * m + 10; ++outer) {
    const Vector w = E.transpose() * (f - E * u);
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w(j) > best) best = w(j), t = j;
    if (t < 0) return u;
    passive[static_cast<std::size_t>(t)] = true;

    for (Eigen::Index inner = 0; inner < 3 * m + 10; ++inner) {
      const Vector z = solve_passive();
      bool positive = true;
      double step = 1.0;
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && z(j) <= 0.0) {
          positive = false;
          step = std::min(step, u(j) / (u(j) - z(j)));
        }
      if (positive) {
        u = z;
        break;
      }
      u += step * (z - u);
      for (Eigen::Index j = 0; j < m; ++j)
        if (passive[static_cast<std::size_t>(j)] && u(j) <= tol) {
          passive[static_cast<std::size_t>(j)] = false;
          u(j) = 0.0;
        }
    }
  }
  throw DivergenceError("nnls: active set did not settle");
}

}  // namespace

Vector project_polyhedron(const Matrix& A, const Vector& b, const Vector& y) {
  const Eigen::Index n = y.size(), L = A.rows();
  if (A.cols() != n || b.size() != L) throw ConfigError("projection: dimension mismatch");
  // Constraints G x <= h with G = [A; -I], h = [b; 0]. With x = y + z this is
  // the least-distance problem min ||z|| s.t. -G z >= G y - h, solved through
  // its NNLS dual: E = [-G^T; (G y - h)^T], f = e_{n+1}.
  Matrix G(L + n, n);
  G << A, -Matrix::Identity(n, n);
  Vector h(L + n);
  h << b, Vector::Zero(n);
  const Vector slack = G * y - h;
  if (slack.maxCoeff() <= 0.0) return y;

  Matrix E(n + 1, L + n);
  E.topRows(n) = -G.transpose();
  E.row(n) = slack.transpose();
  const Vector f = Vector::Unit(n + 1, n);
  const Vector res = E * nnls(E, f) - f;
  if (!(std::abs(res(n)) > 1e-14)) throw InfeasibleError("projection: empty polyhedron");
  const Vector x = y - res.head(n) / res(n);
  return x.cwiseMax(0.0);
}

OracleResult centralized_oracle(const TrafficProblem& problem, double tol, int max_iters) {
  if (!(tol > 0.0)) throw ConfigError("oracle: tolerance must be positive");
  const Matrix& A = problem.impact();
  const Vector b = problem.capacity().col(0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A);
  const double L = problem.utility_weights().maxCoeff() + 2.0 * es.eigenvalues().maxCoeff();
  const double step = 1.0 / L;

  OracleResult res;
  res.x = project_polyhedron(A, b, Vector::Zero(problem.agent_count()));
  for (int it = 1; it <= max_iters; ++it) {
    const Vector g = problem.gradient(res.x);
    const Vector nx = project_polyhedron(A, b, res.x - step * g);
    res.iterations = it;
    const bool small_move = (nx - res.x).norm() < 1e-3 * tol * step;
    res.x = nx;
    if (small_move || it % 50 == 0) {
      res.residual = (res.x - project_polyhedron(A, b, res.x - problem.gradient(res.x))).norm();
      if (res.residual < tol) return res;
    }
  }
  throw DivergenceError("oracle: first-order residual " + std::to_string(res.residual) +
                        " above tolerance after " + std::to_string(max_iters) + " iterations");
}

}  // namespace spmds::traffic
