#include <doctest.h>

#include <sstream>

#include "spmds/error.hpp"
#include "spmds/solver.hpp"
#include "spmds/traffic.hpp"
#include "support.hpp"

using namespace spmds;
using solve::GroupStructure;
using solve::IterationState;
using solve::SolverConfig;
using spmds::testing::random_groups;
using spmds::testing::random_valley;
using spmds::testing::uniform;

namespace {

SolverConfig small_steps() {
  SolverConfig c;
  c.alpha = Vector::Constant(1, 0.2);
  c.beta = Vector::Constant(1, 0.5);
  c.tau_u = 0.98;
  c.tau_l = Vector::Constant(1, 0.98);
  return c;
}

// Traffic instance with two agent groups and disjoint row impact.
traffic::TrafficProblem disjoint_traffic() {
  const Matrix A = traffic::incidence_from_routes({{1, 2}, {1}, {3, 4}, {4}}, 4);
  return traffic::TrafficProblem(A, Vector::Ones(4), Vector::Constant(4, 2.0), 0.5);
}

}  // namespace

TEST_CASE("omega weights") {
  std::mt19937_64 rng(43);
  const auto p = random_valley(rng, 4, 6, 3);
  const Matrix U = Matrix::Constant(3, 6, 0.4);

  SUBCASE("single group is all ones") {
    const auto om = solve::compute_omegas(U, p, solve::single_group(6, 4));
    CHECK((om[0].array() == 1.0).all());
  }
  SUBCASE("zero load falls back to one") {
    const GroupStructure g = random_groups(rng, 6, 4, 2, 2);
    for (const auto& om : solve::compute_omegas(Matrix::Zero(3, 6), p, g))
      CHECK((om.array() == 1.0).all());
  }
  SUBCASE("two groups against direct division") {
    const auto tp = disjoint_traffic();
    GroupStructure g;
    g.agent_group = {0, 0, 1, 1};
    g.subset_rows = {{0, 1, 2}, {1, 2, 3}};
    const Matrix x = (Matrix(1, 4) << 0.3, 0.6, 0.2, 0.7).finished();
    const auto om = solve::compute_omegas(x, tp, g);
    const Matrix& A = tp.impact();
    for (int s = 0; s < 2; ++s)
      for (std::size_t k = 0; k < g.subset_rows[s].size(); ++k) {
        const int j = g.subset_rows[s][k];
        double own = 0.0, all = 0.0;
        for (int i = 0; i < 4; ++i) {
          all += A(j, i) * x(0, i);
          if (g.agent_group[i] == s) own += A(j, i) * x(0, i);
        }
        CHECK(om[s](static_cast<Eigen::Index>(k), 0) == doctest::Approx(all == 0.0 ? 1.0 : own / all));
      }
    // Row 3 is touched only by group 2 agents; group 1's weight there is 0.
    CHECK(om[0](2, 0) == 0.0);
    CHECK(om[1](2, 0) == 1.0);
  }
}

TEST_CASE("shrunken projection") {
  const auto box = [](Vector& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); };
  Vector inner = (Vector(2) << 0.3, 0.6).finished();
  solve::shrunken_projection(box, 1.0, inner);
  CHECK(inner(0) == 0.3);
  CHECK(inner(1) == 0.6);

  // tau x with x = 1: 0.98 stays inside, divided back to 1.
  Vector edge = Vector::Constant(1, 0.98 * 1.0);
  solve::shrunken_projection(box, 0.98, edge);
  CHECK(edge(0) == doctest::Approx(1.0));

  // Overshoot is clipped twice.
  Vector over = Vector::Constant(1, 1.5);
  solve::shrunken_projection(box, 0.5, over);
  CHECK(over(0) == 1.0);

  std::mt19937_64 rng(47);
  for (int k = 0; k < 200; ++k) {
    Vector z(3);
    for (int i = 0; i < 3; ++i) z(i) = uniform(rng, -2, 2);
    solve::shrunken_projection(box, uniform(rng, 0.05, 1.0), z);
    CHECK(z.minCoeff() >= 0.0);
    CHECK(z.maxCoeff() <= 1.0);
  }
}

TEST_CASE("zero steps leave the state unchanged") {
  std::mt19937_64 rng(53);
  const auto p = random_valley(rng, 4, 5, 3);
  const GroupStructure g = random_groups(rng, 5, 4, 2, 2);
  IterationState st = solve::initial_state(p, g);
  for (auto& l : st.lambdas) l.setConstant(0.7);
  st.lambda_e = solve::assemble_lambda_e(st.lambdas, g, 4, 3);
  SolverConfig c;
  c.alpha = Vector::Zero(1);
  c.beta = Vector::Zero(1);
  c.tau_u = 1.0;
  c.tau_l = Vector::Ones(1);
  const IterationState next = solve::spmds_step(st, p, g, c);
  CHECK((next.U - st.U).norm() == 0.0);
  for (std::size_t s = 0; s < st.lambdas.size(); ++s)
    CHECK((next.lambdas[s] - st.lambdas[s]).norm() == 0.0);
  CHECK(next.eps == 0.0);
}

TEST_CASE("single group without reduction reproduces the full-dimension method") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = spmds::testing::uniform_int(rng, 2, 8);
    const int v = spmds::testing::uniform_int(rng, 1, 10);
    const int K = spmds::testing::uniform_int(rng, 1, 4);
    const auto p = random_valley(rng, n, v, K);
    const GroupStructure g = solve::single_group(v, n);
    SolverConfig c = small_steps();
    IterationState a = solve::initial_state(p, g), b = a;
    for (int it = 0; it < 100; ++it) {
      a = solve::spmds_step(a, p, g, c);
      b = solve::spds_step(b, p, c);
      REQUIRE((a.U - b.U).cwiseAbs().maxCoeff() <= 1e-12);
      REQUIRE((a.lambdas[0] - b.lambdas[0]).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("unregularized RPDS step equals an unshrunk SPDS step") {
  std::mt19937_64 rng(61);
  const auto p = random_valley(rng, 5, 6, 3);
  const GroupStructure g = solve::single_group(6, 5);
  SolverConfig c = small_steps();
  c.kappa = 0.0;
  c.tau_u = 1.0;
  c.tau_l = Vector::Ones(1);
  IterationState a = solve::initial_state(p, g), b = a;
  for (int it = 0; it < 50; ++it) {
    a = solve::rpds_step(a, p, c);
    b = solve::spds_step(b, p, c);
    CHECK((a.U - b.U).norm() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK((a.lambdas[0] - b.lambdas[0]).norm() == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("convergence measure") {
  std::mt19937_64 rng(67);
  const auto p = random_valley(rng, 4, 3, 2);
  const GroupStructure g = random_groups(rng, 3, 4, 2, 2);
  const IterationState st = solve::initial_state(p, g);
  CHECK(solve::convergence_eps(st, st) == 0.0);

  IterationState moved = st;
  moved.lambdas[1](0, 1) += 1.0;
  CHECK(solve::convergence_eps(st, moved) == 1.0);

  IterationState noisy = st;
  double expect_dual = 0.0;
  for (Eigen::Index k = 0; k < noisy.U.size(); ++k) noisy.U.data()[k] += uniform(rng, -1, 1);
  for (auto& l : noisy.lambdas) {
    Matrix d(l.rows(), l.cols());
    for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] = uniform(rng, -1, 1);
    l += d;
    expect_dual += std::sqrt(d.array().square().sum());
  }
  const double expect = std::sqrt((noisy.U - st.U).array().square().sum()) + expect_dual;
  CHECK(solve::convergence_eps(st, noisy) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("run: zero iterations returns the initial state") {
  std::mt19937_64 rng(71);
  const auto p = random_valley(rng, 4, 3, 2);
  const GroupStructure g = random_groups(rng, 3, 4, 2, 2);
  SolverConfig c = small_steps();
  c.max_iters = 0;
  const auto trace = solve::run(p, g, c);
  CHECK(trace.rows.empty());
  CHECK(!trace.converged);
  CHECK((trace.final_state.U - p.initial_point()).norm() == 0.0);
}

TEST_CASE("invariants along random runs") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = spmds::testing::uniform_int(rng, 2, 8);
    const int v = spmds::testing::uniform_int(rng, 2, 10);
    const int K = spmds::testing::uniform_int(rng, 1, 4);
    const int r = spmds::testing::uniform_int(rng, 1, std::min(n, v));
    const int d = spmds::testing::uniform_int(rng, 0, part::max_reduction(n, r));
    const auto p = random_valley(rng, n, v, K, 0.5, 0.3, 0.2);
    const GroupStructure g = random_groups(rng, v, n, r, d);
    SolverConfig c = small_steps();
    c.dual_cap = 50.0;
    c.max_iters = 300;
    solve::RunMonitors mon;
    mon.on_iteration = [&](const IterationState& s) {
      for (const auto& l : s.lambdas) {
        CHECK(l.minCoeff() >= 0.0);
        CHECK(l.maxCoeff() <= 50.0);
      }
      CHECK((s.lambda_e - solve::assemble_lambda_e(s.lambdas, g, n, K)).norm() == 0.0);
      for (int i = 0; i < v; ++i) CHECK(p.energy_residual(i, s.U) < 1e-9);
    };
    const auto trace = solve::run(p, g, c, mon);
    CHECK(trace.rows.size() <= 300);
  }
}

TEST_CASE("random valid plans converge") {
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = spmds::testing::uniform_int(rng, 3, 8);
    const int v = spmds::testing::uniform_int(rng, 3, 10);
    const int r = spmds::testing::uniform_int(rng, 1, 3);
    const auto p = random_valley(rng, n, v, 3, 0.3, 0.5, 0.05);
    const GroupStructure g = random_groups(rng, v, n, r, part::max_reduction(n, r));
    SolverConfig c = small_steps();
    // Impact coefficients are O(0.03), so binding rows need a large dual step.
    c.beta = Vector::Constant(1, 20.0);
    c.eps0 = 1e-8;
    c.max_iters = 20000;
    const auto trace = solve::run(p, g, c);
    CHECK(trace.converged);
    CHECK(p.max_violation(trace.final_state.U) < 1e-6);
  }
}

TEST_CASE("fixed point is returned unchanged") {
  std::mt19937_64 rng(83);
  const auto p = random_valley(rng, 4, 5, 3, 0.3, 0.5, 0.05);
  const GroupStructure g = random_groups(rng, 5, 4, 2, 2);
  SolverConfig c = small_steps();
  c.eps0 = 1e-15;
  c.max_iters = 100000;
  const auto trace = solve::run(p, g, c);
  REQUIRE(trace.converged);
  const IterationState again = solve::spmds_step(trace.final_state, p, g, c);
  CHECK((again.U - trace.final_state.U).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t s = 0; s < again.lambdas.size(); ++s)
    CHECK((again.lambdas[s] - trace.final_state.lambdas[s]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("thread count does not change the iterates") {
  std::mt19937_64 rng(89);
  const auto p = random_valley(rng, 6, 40, 4);
  const GroupStructure g = random_groups(rng, 40, 6, 3, 3);
  SolverConfig c = small_steps();
  c.max_iters = 60;
  c.eps0 = 1e-300;
  const auto one = solve::run(p, g, c);
  c.threads = 4;
  const auto four = solve::run(p, g, c);
  CHECK((one.final_state.U - four.final_state.U).norm() == 0.0);
  for (std::size_t s = 0; s < one.final_state.lambdas.size(); ++s)
    CHECK((one.final_state.lambdas[s] - four.final_state.lambdas[s]).norm() == 0.0);
}

TEST_CASE("certificate") {
  SUBCASE("no margin when steps equal shrink factors") {
    const auto c = solve::certificate_from_constants(0.3, 0.7, 0.3, 0.7, 0.0, 0.01, 0.01, 2);
    CHECK(c.F_U == 0.0);
    CHECK(c.F_lambda == 0.0);
    CHECK(!c.feasible);
  }
  SUBCASE("symbolic recomputation") {
    const double a = 0.1, b = 1.8, tu = 0.1, tl = 0.9, rho = 0.5, lg = 0.02, ld = 0.03;
    const int r = 2;
    const auto c = solve::certificate_from_constants(a, b, tu, tl, rho, lg, ld, r);
    const double M = a * a * b * b / (tu * tu) - b * b;
    const double N = a * a * b * b / (tl * tl) - a * a;
    const double Psi = std::max(a * a * b * b / (tu * tu), a * a * b * b / (tl * tl));
    const double x = rho + std::abs(a - tu) / a + lg + r * ld;
    const double y = std::abs(b - tl) / b + ld;
    const double L2 = x * x + y * y;
    const double FU = rho + (a - tu) / a, FL = (b - tl) / b;
    const double lower = std::max((M + Psi * L2) / (2 * Psi * FU), (N + Psi * L2) / (2 * Psi * FL));
    CHECK(c.M == doctest::Approx(M));
    CHECK(c.N == doctest::Approx(N));
    CHECK(c.Psi == doctest::Approx(Psi));
    CHECK(c.L_phi * c.L_phi == doctest::Approx(L2));
    CHECK(c.F_U == doctest::Approx(FU));
    CHECK(c.F_lambda == doctest::Approx(FL));
    CHECK(c.mu_lower == doctest::Approx(lower));
    REQUIRE(c.feasible);
    CHECK(c.mu == doctest::Approx(0.5 * (lower + 1.0)));
    CHECK(c.A == doctest::Approx(M + Psi * L2 - 2 * c.mu * Psi * FU));
    CHECK(c.B == doctest::Approx(N + Psi * L2 - 2 * c.mu * Psi * FL));
  }
  SUBCASE("feasible implies negative contraction terms") {
    std::mt19937_64 rng(97);
    int feasible = 0;
    for (int k = 0; k < 20000; ++k) {
      const auto c = solve::certificate_from_constants(
          uniform(rng, 0.01, 1.0), uniform(rng, 0.01, 4.0), uniform(rng, 0.01, 1.0),
          uniform(rng, 0.01, 1.0), uniform(rng, 0.0, 2.0), uniform(rng, 0.0, 0.1),
          uniform(rng, 0.0, 0.1), spmds::testing::uniform_int(rng, 1, 4));
      if (!c.feasible) continue;
      ++feasible;
      CHECK(c.A < 0.0);
      CHECK(c.B < 0.0);
    }
    CHECK(feasible > 0);
  }
  SUBCASE("problem constants") {
    std::mt19937_64 rng(101);
    const auto cc = spmds::testing::certified_case(rng);
    const auto c = solve::certificate(cc.problem, cc.groups, cc.config);
    CHECK(c.feasible);
    CHECK(c.L_gradG == doctest::Approx(cc.problem.gradient_lipschitz_scale()));
    const auto& ev = cc.problem.evs();
    double pm = 0.0;
    for (const auto& e : ev) pm = std::max(pm, e.pmax_w);
    CHECK(c.L_gradG == doctest::Approx(static_cast<double>(cc.problem.network().size()) *
                                       cc.problem.horizon() * pm * pm));
  }
  SUBCASE("heterogeneous steps take the worst corner") {
    std::mt19937_64 rng(103);
    auto cc = spmds::testing::certified_case(rng);
    SolverConfig c = cc.config;
    c.beta = (Vector(2) << 1.8, 5.0).finished();
    const auto mixed = solve::certificate(cc.problem, cc.groups, c);
    c.beta = Vector::Constant(1, 5.0);
    const auto high = solve::certificate(cc.problem, cc.groups, c);
    CHECK(mixed.mu_lower >= high.mu_lower - 1e-15);
    CHECK(mixed.feasible == (high.feasible && solve::certificate(cc.problem, cc.groups, cc.config).feasible));
  }
}

TEST_CASE("Lyapunov function") {
  std::mt19937_64 rng(107);
  const auto p = random_valley(rng, 4, 3, 2);
  const GroupStructure g = random_groups(rng, 3, 4, 2, 2);
  const IterationState ref = solve::initial_state(p, g);
  CHECK(solve::lyapunov(ref, ref, 0.3, 0.7) == 0.0);

  IterationState st = ref;
  st.U.array() += 0.1;
  for (auto& l : st.lambdas) l.array() += 0.2;
  const double primal = (st.U - ref.U).squaredNorm();
  double dual = 0.0;
  for (std::size_t s = 0; s < st.lambdas.size(); ++s)
    dual += (st.lambdas[s] - ref.lambdas[s]).squaredNorm();
  const double base = solve::lyapunov(st, ref, 0.3, 0.7);
  const double doubled = solve::lyapunov(st, ref, 0.3, 1.4);
  CHECK(base == doctest::Approx(0.49 * primal + 0.09 * dual));
  CHECK(doubled - 0.09 * dual == doctest::Approx(4.0 * (base - 0.09 * dual)));
}

TEST_CASE("trace CSV") {
  solve::RunTrace t;
  solve::TraceRow a;
  a.iter = 1;
  a.eps = 0.5;
  a.objective = 2.0;
  a.max_violation = -1.0;
  t.rows.push_back(a);
  std::ostringstream plain;
  solve::write_trace_csv(plain, t, false);
  CHECK(plain.str().rfind("iter,eps,objective,max_violation\n", 0) == 0);
  t.rows[0].lyapunov = 3.0;
  std::ostringstream full;
  solve::write_trace_csv(full, t, true);
  CHECK(full.str().rfind("iter,eps,objective,max_violation,lyapunov,wall_ms\n", 0) == 0);
}

TEST_CASE("configuration errors") {
  std::mt19937_64 rng(109);
  const auto p = random_valley(rng, 4, 3, 2);
  const GroupStructure g = random_groups(rng, 3, 4, 2, 2);
  SolverConfig c = small_steps();
  c.tau_u = 1.5;
  CHECK_THROWS_AS(solve::run(p, g, c), ConfigError);
  c = small_steps();
  c.alpha = Vector::Constant(2, 0.1);
  CHECK_THROWS_AS(solve::run(p, g, c), ConfigError);
  GroupStructure gap = g;
  gap.subset_rows[0] = {0};
  gap.subset_rows[1] = {1};
  CHECK_THROWS_AS(solve::run(p, gap, small_steps()), ConfigError);
  CHECK_THROWS_AS(solve::parse_method("admm"), ConfigError);
  CHECK(solve::parse_method("rpds") == solve::Method::rpds);

  SolverConfig wild = small_steps();
  wild.alpha = Vector::Constant(1, 1e200);
  wild.beta = Vector::Constant(1, 1e200);
  wild.max_iters = 50;
  const auto tp = disjoint_traffic();
  CHECK_THROWS_AS(solve::run(tp, solve::single_group(4, 4), wild), Error);
}
