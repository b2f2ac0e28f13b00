#pragma once

// Random instance generators and brute-force oracles shared by the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "spmds/fleet.hpp"
#include "spmds/io.hpp"
#include "spmds/netmodel.hpp"
#include "spmds/solver.hpp"
#include "spmds/traffic.hpp"

#ifndef SPMDS_DATA_DIR
#define SPMDS_DATA_DIR "data"
#endif

namespace spmds::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(SPMDS_DATA_DIR) / name;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

/// Random tree: node j attaches to a uniformly chosen earlier node (or 0).
inline net::RadialNetwork random_tree(std::mt19937_64& rng, int n, double r_scale = 1.0,
                                      double v0 = 1.0) {
  std::vector<int> parent(n);
  std::vector<double> r(n), x(n);
  for (int j = 1; j <= n; ++j) {
    parent[j - 1] = uniform_int(rng, 0, j - 1);
    r[j - 1] = r_scale * uniform(rng, 0.1, 1.0);
    x[j - 1] = r_scale * uniform(rng, 0.1, 1.0);
  }
  return net::RadialNetwork(parent, r, x, v0);
}

/// R(i, j) = sum over lines l of r_l B(i, l) B(j, l), with B(i, l) = 1 when
/// line l (owned by node l) lies on node i's root path.
inline Matrix brute_force_R(const net::RadialNetwork& net) {
  const int n = static_cast<int>(net.size());
  Matrix B = Matrix::Zero(n, n);
  for (int i = 1; i <= n; ++i)
    for (int j = i; j != 0; j = net.parent(j)) B(i - 1, j - 1) = 1.0;
  Vector r(n);
  for (int j = 1; j <= n; ++j) r(j - 1) = net.resistance(j);
  return B * r.asDiagonal() * B.transpose();
}

/// Small per-unit valley-filling instance. With `tight` set, vmin sits just
/// below the lowest voltage of the schedule that spreads every need evenly,
/// so the instance stays feasible but has little slack (unless the feeder
/// is so weak that this would put vmin below 0.5).
inline fleet::ValleyFillingProblem random_valley(std::mt19937_64& rng, int n, int v, int K,
                                                 double pmax_scale = 0.5, double rho = 0.1,
                                                 double r_scale = 0.05, bool tight = true) {
  net::RadialNetwork net = random_tree(rng, n, r_scale, 1.0);
  std::vector<fleet::EV> evs;
  const double dt = 1.0;
  for (int i = 0; i < v; ++i) {
    fleet::EV ev;
    ev.node = uniform_int(rng, 1, n);
    ev.pmax_w = pmax_scale * uniform(rng, 0.5, 1.5);
    ev.eta = uniform(rng, 0.8, 1.0);
    ev.energy_need_j = uniform(rng, 0.2, 0.8) * K * ev.eta * dt * ev.pmax_w;
    evs.push_back(ev);
  }
  fleet::Baseline base{Matrix(n, K), Matrix(n, K)};
  for (int t = 0; t < K; ++t)
    for (int j = 0; j < n; ++j) {
      base.P(j, t) = uniform(rng, 0.2, 1.0) * (1.0 + std::cos(6.28 * t / K + j)) * pmax_scale;
      base.Q(j, t) = 0.3 * base.P(j, t);
    }
  fleet::ValleyFillingProblem loose(net, evs, {K, dt, 0}, base, rho, 0.5);
  double vmin = 0.9;
  if (tight) {
    Matrix flat(K, v);
    for (int i = 0; i < v; ++i) flat.col(i).setConstant(loose.charge_target(i) / K);
    const double room = (loose.baseline_voltage() - loose.load(flat)).minCoeff() - 1e-4;
    vmin = std::sqrt(std::clamp(room, 0.25, 1.0));
  }
  return fleet::ValleyFillingProblem(std::move(net), std::move(evs), {K, dt, 0}, std::move(base),
                                     rho, vmin);
}

inline fleet::ValleyFillingProblem with_vmin(const fleet::ValleyFillingProblem& p, double vmin) {
  return fleet::ValleyFillingProblem(p.network(), p.evs(), p.horizon_spec(), p.baseline(),
                                     p.regularization(), vmin);
}

/// Random agent groups (every group nonempty) with random subsets of size
/// H = rows - d that jointly cover all rows. Needs r H >= rows.
inline solve::GroupStructure random_groups(std::mt19937_64& rng, int agents, int rows, int r, int d) {
  solve::GroupStructure g;
  g.agent_group.resize(agents);
  for (int i = 0; i < agents; ++i) g.agent_group[i] = i < r ? i : uniform_int(rng, 0, r - 1);
  const int H = rows - d;
  std::vector<int> perm(rows);
  for (int j = 0; j < rows; ++j) perm[j] = j;
  std::shuffle(perm.begin(), perm.end(), rng);
  g.subset_rows.assign(r, {});
  // Deal the rows round-robin for coverage, then top up at random.
  for (int k = 0; k < rows; ++k) g.subset_rows[k % r].push_back(perm[k]);
  for (int s = 0; s < r; ++s) {
    auto& sub = g.subset_rows[s];
    std::vector<bool> in(rows, false);
    for (int j : sub) in[j] = true;
    while (static_cast<int>(sub.size()) < H) {
      const int j = uniform_int(rng, 0, rows - 1);
      if (!in[j]) {
        in[j] = true;
        sub.push_back(j);
      }
    }
    std::sort(sub.begin(), sub.end());
  }
  return g;
}

/// Tiny instance with step sizes for which the contraction certificate holds:
/// alpha = tau_u makes F_U = rho, and small Pmax and line resistances keep
/// the gradient and dual Lipschitz constants well below the margin.
struct CertifiedCase {
  fleet::ValleyFillingProblem problem;
  solve::GroupStructure groups;
  solve::SolverConfig config;
};

inline solve::SolverConfig certified_steps() {
  solve::SolverConfig c;
  c.alpha = Vector::Constant(1, 0.1);
  c.tau_u = 0.1;
  c.beta = Vector::Constant(1, 1.8);
  c.tau_l = Vector::Constant(1, 0.9);
  return c;
}

inline CertifiedCase certified_case(std::mt19937_64& rng,
                                    solve::SolverConfig c = certified_steps(), double rho = 0.5) {
  c.eps0 = 1e-13;
  c.max_iters = 20000;
  for (;;) {
    const int n = uniform_int(rng, 2, 4);
    const int v = uniform_int(rng, 2, 5);
    const int K = uniform_int(rng, 2, 3);
    const auto p = random_valley(rng, n, v, K, 0.05, rho, 0.05, false);
    const int r = std::min(2, v);
    solve::GroupStructure g = random_groups(rng, v, n, r, part::max_reduction(n, r));
    // Place the bound between the fixed point without active voltage rows
    // and the evenly spread schedule, so some rows must bind.
    const Matrix free_U = solve::run(p, g, c).final_state.U;
    Matrix flat(K, v);
    for (int i = 0; i < v; ++i) flat.col(i).setConstant(p.charge_target(i) / K);
    const double lo = (p.baseline_voltage() - p.load(free_U)).minCoeff();
    const double hi = (p.baseline_voltage() - p.load(flat)).minCoeff();
    if (!(hi > lo + 1e-6)) continue;
    return {with_vmin(p, std::sqrt(0.5 * (lo + hi))), std::move(g), c};
  }
}

/// Central finite difference of a scalar function along every coordinate.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                double h) {
  Matrix g(at.rows(), at.cols());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    Matrix p = at, m = at;
    p.data()[i] += h;
    m.data()[i] -= h;
    g.data()[i] = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

}  // namespace spmds::testing
