#include <doctest.h>

#include "spmds/error.hpp"
#include "spmds/io.hpp"
#include "spmds/netmodel.hpp"
#include "support.hpp"

using namespace spmds;
using spmds::testing::random_tree;

TEST_CASE("two-node chain sensitivities") {
  const net::RadialNetwork net({0, 1}, {1.0, 2.0}, {0.5, 0.25}, 1.0);
  const auto s = net::build_sensitivity(net);
  CHECK(s.R(0, 0) == doctest::Approx(1.0));
  CHECK(s.R(0, 1) == doctest::Approx(1.0));
  CHECK(s.R(1, 0) == doctest::Approx(1.0));
  CHECK(s.R(1, 1) == doctest::Approx(3.0));
  CHECK(s.X(1, 1) == doctest::Approx(0.75));
  CHECK(s.X(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("star feeder shares only the first line") {
  // 1 hangs off the slack bus; 2, 3, 4 hang off node 1.
  const net::RadialNetwork net({0, 1, 1, 1}, {1.0, 2.0, 3.0, 4.0}, {0, 0, 0, 0}, 1.0);
  const auto s = net::build_sensitivity(net);
  CHECK(s.R(1, 2) == doctest::Approx(1.0));
  CHECK(s.R(2, 3) == doctest::Approx(1.0));
  CHECK(s.R(3, 3) == doctest::Approx(5.0));
  CHECK(net.children(1).size() == 3);
  CHECK(net.path_to_root(4) == std::vector<int>{4, 1});
}

TEST_CASE("sensitivity matches the incidence product on random trees") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = spmds::testing::uniform_int(rng, 1, 20);
    const auto net = random_tree(rng, n);
    const auto s = net::build_sensitivity(net);
    const Matrix ref = spmds::testing::brute_force_R(net);
    CHECK((s.R - ref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s.R - s.R.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.R.minCoeff() >= 0.0);
    // R(i, j) <= min(R(i, i), R(j, j)).
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(s.R(i, j) <= std::min(s.R(i, i), s.R(j, j)) + 1e-15);
  }
}

TEST_CASE("LinDistFlow: zero load, monotonicity and linearity") {
  std::mt19937_64 rng(11);
  const auto net = random_tree(rng, 9, 0.1, 2.0);
  const auto s = net::build_sensitivity(net);
  net::LoadProfile zero{Vector::Zero(9), Vector::Zero(9)};
  CHECK((net::lindistflow_voltages(net, s, zero).array() == 4.0).all());

  net::LoadProfile a{Vector::Constant(9, 0.3), Vector::Constant(9, 0.1)};
  net::LoadProfile b = a;
  b.P(4) += 0.5;
  const Vector va = net::lindistflow_voltages(net, s, a);
  const Vector vb = net::lindistflow_voltages(net, s, b);
  CHECK((vb.array() <= va.array()).all());

  // Single-node injection: drop is exactly 2 R(:, j) p.
  net::LoadProfile one{Vector::Zero(9), Vector::Zero(9)};
  one.P(3) = 0.7;
  const Vector v1 = net::lindistflow_voltages(net, s, one);
  CHECK(((Vector::Constant(9, 4.0) - v1) - 1.4 * s.R.col(3)).cwiseAbs().maxCoeff() < 1e-12);

  // Equals the dense formula.
  const Vector dense = Vector::Constant(9, 4.0) - 2.0 * s.R * a.P - 2.0 * s.X * a.Q;
  CHECK((va - dense).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("DistFlow sweep") {
  std::mt19937_64 rng(3);
  const auto net = random_tree(rng, 12, 0.02, 1.0);
  const auto s = net::build_sensitivity(net);

  SUBCASE("zero load is flat") {
    const auto sol = net::distflow_solve(net, {Vector::Zero(12), Vector::Zero(12)});
    CHECK((sol.v_squared.array() - 1.0).abs().maxCoeff() < 1e-14);
  }
  SUBCASE("losses lower the voltage below LinDistFlow") {
    net::LoadProfile load{Vector::Constant(12, 0.2), Vector::Constant(12, 0.05)};
    const auto sol = net::distflow_solve(net, load);
    const Vector lin = net::lindistflow_voltages(net, s, load);
    CHECK((sol.v_squared.array() <= lin.array() + 1e-15).all());
    CHECK(sol.residual < 1e-10);
  }
  SUBCASE("tiny loads agree with LinDistFlow") {
    // The gap is second order in the load.
    net::LoadProfile load{Vector::Constant(12, 1e-7), Vector::Constant(12, 1e-7)};
    const auto sol = net::distflow_solve(net, load);
    const Vector lin = net::lindistflow_voltages(net, s, load);
    CHECK((sol.v_squared - lin).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("overload collapses") {
    net::LoadProfile load{Vector::Constant(12, 50.0), Vector::Constant(12, 50.0)};
    CHECK_THROWS_AS(net::distflow_solve(net, load), DivergenceError);
  }
}

TEST_CASE("13-bus feeder: LinDistFlow within 2% of DistFlow") {
  const auto data = io::load_network(spmds::testing::data_path("ieee13_network.json"));
  const auto s = net::build_sensitivity(data.network);
  net::LoadProfile load{data.p_nominal, data.q_nominal};
  const auto sol = net::distflow_solve(data.network, load);
  const Vector lin =
      net::to_per_unit_magnitude(data.network, net::lindistflow_voltages(data.network, s, load));
  const Vector ref = net::to_per_unit_magnitude(data.network, sol.v_squared);
  const double dev = ((lin - ref).array() / ref.array()).abs().maxCoeff();
  CHECK(dev < 0.02);
  CHECK(dev > 0.0);
  CHECK(data.network.size() == 12);
  CHECK(data.network.label(1) == "632");
}

TEST_CASE("topology and impedance errors") {
  CHECK_THROWS_AS(net::RadialNetwork({2, 1}, {1, 1}, {1, 1}, 1.0), TopologyError);
  CHECK_THROWS_AS(net::RadialNetwork({0, 5}, {1, 1}, {1, 1}, 1.0), TopologyError);
  CHECK_THROWS_AS(net::RadialNetwork({0, 2}, {1, 1}, {1, 1}, 1.0), TopologyError);
  CHECK_THROWS_AS(net::RadialNetwork({0, 1}, {1, -1}, {1, 1}, 1.0), ConfigError);
  CHECK_THROWS_AS(net::RadialNetwork({}, {}, {}, 1.0), ConfigError);
  // Parents may be listed after their children.
  const net::RadialNetwork ok({2, 0}, {1, 1}, {1, 1}, 1.0);
  CHECK(ok.topological_order() == std::vector<int>{2, 1});
}
