#include "spmds/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <ostream>
#include <thread>

#include "spmds/error.hpp"

namespace spmds::solve {
namespace {

// Contiguous chunks, one per thread. Every index writes only its own
// output, so the result does not depend on the thread count.
template <class Fn>
void parallel_for(int count, int threads, const Fn& fn) {
  if (threads <= 1 || count < 2) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = static_cast<int>(static_cast<long long>(count) * w / workers);
    const int hi = static_cast<int>(static_cast<long long>(count) * (w + 1) / workers);
    pool.emplace_back([&, w, lo, hi] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::vector<int>> members_of(const GroupStructure& groups) {
  std::vector<std::vector<int>> m(groups.group_count());
  for (std::size_t i = 0; i < groups.agent_group.size(); ++i)
    m[groups.agent_group[i]].push_back(static_cast<int>(i));
  return m;
}

// Load of `agents` on `rows`, H x K.
Matrix partial_load(const Matrix& A, const Matrix& U, const std::vector<int>& rows,
                    const std::vector<int>& agents) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), U.rows());
  for (int i : agents)
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const double a = A(rows[k], i);
      if (a != 0.0) out.row(static_cast<Eigen::Index>(k)) += a * U.col(i).transpose();
    }
  return out;
}

void clamp_dual(Matrix& lam, double cap) { lam = lam.cwiseMax(0.0).cwiseMin(cap); }

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "spmds") return Method::spmds;
  if (name == "spds") return Method::spds;
  if (name == "rpds") return Method::rpds;
  throw ConfigError("unknown solver '" + name + "' (expected spmds, spds or rpds)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::spmds: return "spmds";
    case Method::spds: return "spds";
    case Method::rpds: return "rpds";
  }
  return "?";
}

void GroupStructure::validate(int agents, int rows) const {
  if (static_cast<int>(agent_group.size()) != agents)
    throw ConfigError("groups: agent count mismatch");
  const int r = group_count();
  if (r < 1) throw ConfigError("groups: need at least one group");
  for (int g : agent_group)
    if (g < 0 || g >= r) throw ConfigError("groups: agent assigned to unknown group");
  std::vector<bool> covered(rows, false);
  for (const auto& sub : subset_rows)
    for (std::size_t k = 0; k < sub.size(); ++k) {
      if (sub[k] < 0 || sub[k] >= rows) throw ConfigError("groups: subset row out of range");
      if (k > 0 && sub[k] <= sub[k - 1]) throw ConfigError("groups: subset rows must increase");
      covered[sub[k]] = true;
    }
  for (int j = 0; j < rows; ++j)
    if (!covered[j]) throw ConfigError("groups: row " + std::to_string(j + 1) + " not covered");
}

GroupStructure single_group(int agents, int rows) {
  GroupStructure g;
  g.agent_group.assign(agents, 0);
  g.subset_rows.resize(1);
  for (int j = 0; j < rows; ++j) g.subset_rows[0].push_back(j);
  return g;
}

void SolverConfig::validate(int agents, int groups) const {
  auto check_vec = [](const Vector& x, int expected, const char* name) {
    if (x.size() != 1 && x.size() != expected)
      throw ConfigError(std::string(name) + " must have 1 or " + std::to_string(expected) +
                        " entries");
  };
  check_vec(alpha, agents, "alpha");
  check_vec(beta, groups, "beta");
  check_vec(tau_l, groups, "tau_l");
  if (!(alpha.minCoeff() > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta.minCoeff() > 0.0)) throw ConfigError("beta must be positive");
  if (!(tau_u > 0.0 && tau_u <= 1.0)) throw ConfigError("tau_u must lie in (0, 1]");
  if (!(tau_l.minCoeff() > 0.0 && tau_l.maxCoeff() <= 1.0))
    throw ConfigError("tau_l must lie in (0, 1]");
  if (!(eps0 > 0.0)) throw ConfigError("eps0 must be positive");
  if (max_iters < 0) throw ConfigError("max_iters must be nonnegative");
  if (!(dual_cap > 0.0)) throw ConfigError("dual cap must be positive");
  if (!(kappa >= 0.0)) throw ConfigError("kappa must be nonnegative");
  if (threads < 1) throw ConfigError("thread count must be at least 1");
}

std::vector<Matrix> compute_omegas(const Matrix& U, const CoupledProblem& problem,
                                   const GroupStructure& groups) {
  const Matrix& A = problem.impact();
  const auto members = members_of(groups);
  std::vector<int> everyone(U.cols());
  for (int i = 0; i < U.cols(); ++i) everyone[i] = i;

  std::vector<Matrix> om(groups.group_count());
  for (int s = 0; s < groups.group_count(); ++s) {
    const auto& rows = groups.subset_rows[s];
    const Matrix num = partial_load(A, U, rows, members[s]);
    const Matrix den = partial_load(A, U, rows, everyone);
    om[s] = (den.array() == 0.0).select(Matrix::Ones(num.rows(), num.cols()), num.cwiseQuotient(den));
  }
  return om;
}

Matrix assemble_lambda_e(const std::vector<Matrix>& lambdas, const GroupStructure& groups, int rows,
                         int slots) {
  Matrix le = Matrix::Zero(rows, slots);
  for (int s = 0; s < groups.group_count(); ++s) {
    const auto& sub = groups.subset_rows[s];
    for (std::size_t k = 0; k < sub.size(); ++k)
      le.row(sub[k]) += lambdas[s].row(static_cast<Eigen::Index>(k));
  }
  return le;
}

IterationState initial_state(const CoupledProblem& problem, const GroupStructure& groups) {
  IterationState st;
  st.U = problem.initial_point();
  for (const auto& sub : groups.subset_rows)
    st.lambdas.push_back(Matrix::Zero(static_cast<Eigen::Index>(sub.size()), problem.horizon()));
  st.lambda_e = Matrix::Zero(problem.row_count(), problem.horizon());
  st.omegas = compute_omegas(st.U, problem, groups);
  return st;
}

IterationState spmds_step(const IterationState& state, const CoupledProblem& problem,
                          const GroupStructure& groups, const SolverConfig& config) {
  const Matrix& A = problem.impact();
  const Matrix& C = problem.capacity();
  const int v = problem.agent_count();
  const int r = groups.group_count();
  const auto members = members_of(groups);

  IterationState next;
  next.omegas = (config.freeze_omegas && !state.omegas.empty())
                    ? state.omegas
                    : compute_omegas(state.U, problem, groups);
  const Matrix lambda_e = assemble_lambda_e(state.lambdas, groups, problem.row_count(),
                                            problem.horizon());
  Matrix grad;
  problem.gradient(state.U, grad);

  // Primal phase: each agent prices only the rows of its own group.
  next.U.resize(state.U.rows(), state.U.cols());
  parallel_for(v, config.threads, [&](int i) {
    const auto& rows = groups.subset_rows[groups.agent_group[i]];
    Vector dual_term = Vector::Zero(state.U.rows());
    for (int j : rows)
      if (A(j, i) != 0.0) dual_term += A(j, i) * lambda_e.row(j).transpose();
    Vector arg = config.tau_u * state.U.col(i) - config.alpha_of(i) * (grad.col(i) + dual_term);
    shrunken_projection([&](Vector& x) { problem.project_local(i, x); }, config.tau_u, arg);
    next.U.col(i) = arg;
  });

  // Dual phase on the new primal block.
  next.lambdas.resize(r);
  parallel_for(r, config.threads, [&](int s) {
    const auto& rows = groups.subset_rows[s];
    Matrix cap(static_cast<Eigen::Index>(rows.size()), C.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) cap.row(static_cast<Eigen::Index>(k)) = C.row(rows[k]);
    const Matrix g = partial_load(A, next.U, rows, members[s]) - next.omegas[s].cwiseProduct(cap);
    const double tau = config.tau_l_of(s);
    Matrix arg = tau * state.lambdas[s] + config.beta_of(s) * g;
    shrunken_projection([&](Matrix& x) { clamp_dual(x, config.dual_cap); }, tau, arg);
    next.lambdas[s] = std::move(arg);
  });

  next.lambda_e = assemble_lambda_e(next.lambdas, groups, problem.row_count(), problem.horizon());
  next.iter = state.iter + 1;
  next.eps = convergence_eps(state, next);
  return next;
}

namespace {

IterationState full_dimension_step(const IterationState& state, const CoupledProblem& problem,
                                   const SolverConfig& config, bool regularized) {
  if (state.lambdas.size() != 1 || state.lambdas[0].rows() != problem.row_count())
    throw ConfigError("full-dimension step needs a single dual block over all rows");
  const Matrix& A = problem.impact();
  const Matrix& lam = state.lambdas[0];
  const double tau_u = regularized ? 1.0 : config.tau_u;
  const double tau_l = regularized ? 1.0 : config.tau_l_of(0);

  Matrix grad;
  problem.gradient(state.U, grad);
  const Matrix dual_term = lam.transpose() * A;  // K x v

  IterationState next;
  next.U.resize(state.U.rows(), state.U.cols());
  parallel_for(problem.agent_count(), config.threads, [&](int i) {
    Vector arg = tau_u * state.U.col(i) - config.alpha_of(i) * (grad.col(i) + dual_term.col(i));
    if (regularized)
      problem.project_local(i, arg);
    else
      shrunken_projection([&](Vector& x) { problem.project_local(i, x); }, tau_u, arg);
    next.U.col(i) = arg;
  });

  Matrix g = problem.load(next.U) - problem.capacity();
  if (regularized) g -= config.kappa * lam;
  Matrix arg = tau_l * lam + config.beta_of(0) * g;
  if (regularized)
    clamp_dual(arg, config.dual_cap);
  else
    shrunken_projection([&](Matrix& x) { clamp_dual(x, config.dual_cap); }, tau_l, arg);

  next.lambdas = {arg};
  next.lambda_e = arg;
  next.omegas = {Matrix::Ones(arg.rows(), arg.cols())};
  next.iter = state.iter + 1;
  next.eps = convergence_eps(state, next);
  return next;
}

}  // namespace

IterationState spds_step(const IterationState& state, const CoupledProblem& problem,
                         const SolverConfig& config) {
  return full_dimension_step(state, problem, config, false);
}

IterationState rpds_step(const IterationState& state, const CoupledProblem& problem,
                         const SolverConfig& config) {
  return full_dimension_step(state, problem, config, true);
}

double convergence_eps(const IterationState& prev, const IterationState& next) {
  if (prev.lambdas.size() != next.lambdas.size())
    throw ConfigError("convergence_eps: dual block count mismatch");
  double e = (next.U - prev.U).norm();
  for (std::size_t s = 0; s < prev.lambdas.size(); ++s) e += (next.lambdas[s] - prev.lambdas[s]).norm();
  return e;
}

double lyapunov(const IterationState& state, const IterationState& reference, double alpha,
                double beta) {
  if (state.lambdas.size() != reference.lambdas.size())
    throw ConfigError("lyapunov: dual block count mismatch");
  double dual = 0.0;
  for (std::size_t s = 0; s < state.lambdas.size(); ++s)
    dual += (state.lambdas[s] - reference.lambdas[s]).squaredNorm();
  return beta * beta * (state.U - reference.U).squaredNorm() + alpha * alpha * dual;
}

RunTrace run(const CoupledProblem& problem, const GroupStructure& groups,
             const SolverConfig& config, const RunMonitors& monitors,
             const IterationState* start) {
  const GroupStructure eff = config.method == Method::spmds
                                 ? groups
                                 : single_group(problem.agent_count(), problem.row_count());
  eff.validate(problem.agent_count(), problem.row_count());
  config.validate(problem.agent_count(), eff.group_count());

  RunTrace trace;
  IterationState state = start ? *start : initial_state(problem, eff);
  if (static_cast<int>(state.lambdas.size()) != eff.group_count())
    throw ConfigError("run: starting state has the wrong number of dual blocks");

  const double a = config.alpha.maxCoeff(), b = config.beta.maxCoeff();
  const auto t0 = std::chrono::steady_clock::now();
  for (int it = 0; it < config.max_iters; ++it) {
    IterationState next;
    switch (config.method) {
      case Method::spmds: next = spmds_step(state, problem, eff, config); break;
      case Method::spds: next = spds_step(state, problem, config); break;
      case Method::rpds: next = rpds_step(state, problem, config); break;
    }
    if (!std::isfinite(next.eps))
      throw DivergenceError("iteration " + std::to_string(next.iter) +
                            " produced a non-finite state; reduce the step sizes");
    TraceRow row;
    row.iter = next.iter;
    row.eps = next.eps;
    row.objective = problem.objective(next.U);
    row.max_violation = problem.max_violation(next.U);
    if (monitors.reference) row.lyapunov = lyapunov(next, *monitors.reference, a, b);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trace.rows.push_back(row);
    if (monitors.on_iteration) monitors.on_iteration(next);
    state = std::move(next);
    if (state.eps < config.eps0) {
      trace.converged = true;
      break;
    }
  }
  trace.final_state = std::move(state);
  return trace;
}

void write_trace_csv(std::ostream& os, const RunTrace& trace, bool with_timing) {
  const bool lyap = std::any_of(trace.rows.begin(), trace.rows.end(),
                                [](const TraceRow& r) { return r.lyapunov.has_value(); });
  os << "iter,eps,objective,max_violation";
  if (lyap) os << ",lyapunov";
  if (with_timing) os << ",wall_ms";
  os << '\n';
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::scientific << std::setprecision(12);
  for (const auto& r : trace.rows) {
    os << r.iter << ',' << r.eps << ',' << r.objective << ',' << r.max_violation;
    if (lyap) os << ',' << r.lyapunov.value_or(std::numeric_limits<double>::quiet_NaN());
    if (with_timing) os << ',' << r.wall_ms;
    os << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

Certificate certificate_from_constants(double alpha, double beta, double tau_u, double tau_l,
                                       double rho, double L_gradG, double L_d, int r) {
  Certificate c;
  c.alpha = alpha;
  c.beta = beta;
  c.tau_u = tau_u;
  c.tau_l = tau_l;
  c.L_gradG = L_gradG;
  c.L_d = L_d;
  const double ab2 = alpha * alpha * beta * beta;
  const double pu = ab2 / (tau_u * tau_u), pl = ab2 / (tau_l * tau_l);
  c.M = pu - beta * beta;
  c.N = pl - alpha * alpha;
  c.Psi = std::max(pu, pl);
  c.mu_ratio = std::min(pu, pl) / c.Psi;
  c.L_phi = std::hypot(rho + std::abs(alpha - tau_u) / alpha + L_gradG + r * L_d,
                       std::abs(beta - tau_l) / beta + L_d);
  c.F_U = rho + (alpha - tau_u) / alpha;
  c.F_lambda = (beta - tau_l) / beta;
  const double psi_l2 = c.Psi * c.L_phi * c.L_phi;
  if (c.F_U > 0.0 && c.F_lambda > 0.0) {
    c.mu_lower = std::max((c.M + psi_l2) / (2.0 * c.Psi * c.F_U),
                          (c.N + psi_l2) / (2.0 * c.Psi * c.F_lambda));
  } else {
    c.mu_lower = std::numeric_limits<double>::infinity();
  }
  c.feasible = c.mu_lower < 1.0;
  c.mu = c.feasible ? 0.5 * (std::max(c.mu_lower, 0.0) + 1.0) : c.mu_ratio;
  c.A = c.M + psi_l2 - 2.0 * c.mu * c.Psi * c.F_U;
  c.B = c.N + psi_l2 - 2.0 * c.mu * c.Psi * c.F_lambda;
  return c;
}

Certificate certificate(const CoupledProblem& problem, const GroupStructure& groups,
                        const SolverConfig& config) {
  const GroupStructure eff = config.method == Method::spmds
                                 ? groups
                                 : single_group(problem.agent_count(), problem.row_count());
  eff.validate(problem.agent_count(), problem.row_count());
  config.validate(problem.agent_count(), eff.group_count());

  const Matrix& A = problem.impact();
  std::size_t H = 0;
  for (const auto& sub : eff.subset_rows) H = std::max(H, sub.size());
  double col = 0.0;
  for (int i = 0; i < problem.agent_count(); ++i) {
    double sq = 0.0;
    for (int j : eff.subset_rows[eff.agent_group[i]]) sq += A(j, i) * A(j, i);
    col = std::max(col, std::sqrt(sq));
  }
  const double L_d = static_cast<double>(H) * problem.horizon() * col;
  const double L_g = problem.gradient_lipschitz_scale();
  const double rho = problem.regularization();
  const int r = eff.group_count();

  Certificate worst;
  bool first = true, all = true;
  for (double a : {config.alpha.minCoeff(), config.alpha.maxCoeff()})
    for (double b : {config.beta.minCoeff(), config.beta.maxCoeff()})
      for (double tl : {config.tau_l.minCoeff(), config.tau_l.maxCoeff()}) {
        const Certificate c = certificate_from_constants(a, b, config.tau_u, tl, rho, L_g, L_d, r);
        all = all && c.feasible;
        if (first || c.mu_lower > worst.mu_lower) worst = c;
        first = false;
      }
  worst.feasible = all;
  return worst;
}

TuneResult tune_step(const CoupledProblem& problem, const GroupStructure& groups,
                     SolverConfig config, bool dual, double start, double factor, int window,
                     int max_trials) {
  if (!(start > 0.0) || !(factor > 1.0) || window < 2 || max_trials < 1)
    throw ConfigError("tune_step: bad search parameters");
  config.max_iters = window;
  config.eps0 = std::numeric_limits<double>::min();
  TuneResult res;
  double step = start, last_good = 0.0;
  for (int trial = 0; trial < max_trials; ++trial) {
    (dual ? config.beta : config.alpha) = Vector::Constant(1, step);
    ++res.trials;
    bool diverged = false;
    try {
      const RunTrace t = run(problem, groups, config);
      const auto& rows = t.rows;
      const std::size_t half = rows.size() / 2;
      double early = 0.0, late = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) (k < half ? early : late) += rows[k].eps;
      diverged = !std::isfinite(late) || late > early * 1.5;
    } catch (const DivergenceError&) {
      diverged = true;
    }
    if (diverged) break;
    last_good = step;
    step *= factor;
  }
  res.step = last_good > 0.0 ? last_good : start / factor;
  return res;
}

}  // namespace spmds::solve
