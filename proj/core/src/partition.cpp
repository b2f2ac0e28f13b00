#include "spmds/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "spmds/error.hpp"

namespace spmds::part {
namespace {

int nearest_center(const Eigen::MatrixXd& centers, const Eigen::VectorXd& x, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < centers.cols(); ++s) {
    const double d = (centers.col(s) - x).squaredNorm();
    // Strict comparison: equal distances keep the lower index.
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(s);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Eigen::MatrixXd plus_plus_seed(const Eigen::MatrixXd& cols, int r, std::mt19937_64& rng) {
  const Eigen::Index c = cols.cols();
  Eigen::MatrixXd centers(cols.rows(), r);
  std::vector<bool> used(c, false);
  std::uniform_int_distribution<Eigen::Index> first(0, c - 1);
  Eigen::Index pick = first(rng);
  centers.col(0) = cols.col(pick);
  used[pick] = true;

  Eigen::VectorXd d2(c);
  for (Eigen::Index j = 0; j < c; ++j) d2(j) = (cols.col(j) - centers.col(0)).squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int s = 1; s < r; ++s) {
    const double total = d2.sum();
    if (total > 0.0) {
      double target = unif(rng) * total;
      pick = c - 1;
      for (Eigen::Index j = 0; j < c; ++j) {
        target -= d2(j);
        if (target < 0.0 && d2(j) > 0.0) {
          pick = j;
          break;
        }
      }
    } else {
      pick = 0;
      while (pick < c - 1 && used[pick]) ++pick;
    }
    used[pick] = true;
    centers.col(s) = cols.col(pick);
    for (Eigen::Index j = 0; j < c; ++j)
      d2(j) = std::min(d2(j), (cols.col(j) - centers.col(s)).squaredNorm());
  }
  return centers;
}

}  // namespace

ClusterResult kmeans_cluster(const Eigen::MatrixXd& columns, int r, std::uint64_t seed,
                             int max_iters) {
  const int c = static_cast<int>(columns.cols());
  if (c == 0 || columns.rows() == 0) throw ConfigError("kmeans: no columns to cluster");
  if (r < 1 || r > c)
    throw ConfigError("kmeans: group count " + std::to_string(r) + " outside [1, " +
                      std::to_string(c) + "]");
  if (max_iters < 1) throw ConfigError("kmeans: max_iters must be positive");

  std::mt19937_64 rng(seed);
  ClusterResult res;
  res.centers = plus_plus_seed(columns, r, rng);
  res.assignment.assign(c, -1);

  for (int sweep = 0; sweep < max_iters; ++sweep) {
    std::vector<int> next(c);
    std::vector<double> dist(c);
    for (int j = 0; j < c; ++j) next[j] = nearest_center(res.centers, columns.col(j), &dist[j]);

    std::vector<int> count(r, 0);
    for (int g : next) ++count[g];
    for (int s = 0; s < r; ++s) {
      if (count[s] > 0) continue;
      // Farthest point among those whose cluster can spare one.
      int far = -1;
      for (int j = 0; j < c; ++j)
        if (count[next[j]] > 1 && (far < 0 || dist[j] > dist[far])) far = j;
      if (far < 0) break;
      --count[next[far]];
      next[far] = s;
      count[s] = 1;
      dist[far] = 0.0;
    }

    const bool changed = next != res.assignment;
    res.assignment = std::move(next);
    for (int s = 0; s < r; ++s) {
      if (count[s] == 0) continue;
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(columns.rows());
      for (int j = 0; j < c; ++j)
        if (res.assignment[j] == s) sum += columns.col(j);
      res.centers.col(s) = sum / count[s];
    }
    double obj = 0.0;
    for (int j = 0; j < c; ++j)
      obj += (columns.col(j) - res.centers.col(res.assignment[j])).squaredNorm();
    res.objective = obj;
    res.history.push_back(obj);
    res.sweeps = sweep + 1;
    if (!changed) break;
  }
  return res;
}

std::vector<int> canonical_labels(const std::vector<int>& labels) {
  std::vector<int> map;
  std::vector<int> out(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const int g = labels[j];
    if (g < 0) throw ConfigError("canonical_labels: negative label");
    if (static_cast<int>(map.size()) <= g) map.resize(g + 1, -1);
    if (map[g] < 0) map[g] = *std::max_element(map.begin(), map.end()) + 1;
    out[j] = map[g];
  }
  return out;
}

ClusterResult kmeans_best_of(const Eigen::MatrixXd& columns, int r, std::uint64_t seed,
                             int restarts, int max_iters) {
  if (restarts < 1) throw ConfigError("kmeans: restarts must be positive");
  ClusterResult best;
  for (int k = 0; k < restarts; ++k) {
    ClusterResult cur = kmeans_cluster(columns, r, seed + static_cast<std::uint64_t>(k), max_iters);
    if (k == 0 || cur.objective < best.objective * (1.0 - 1e-12)) best = std::move(cur);
  }
  const std::vector<int> relabeled = canonical_labels(best.assignment);
  Eigen::MatrixXd centers = best.centers;
  for (std::size_t j = 0; j < relabeled.size(); ++j)
    centers.col(relabeled[j]) = best.centers.col(best.assignment[j]);
  best.centers = centers;
  best.assignment = relabeled;
  return best;
}

int max_reduction(int n, int r) {
  if (n < 1) throw ConfigError("max_reduction: n must be positive");
  if (r < 1 || r > n)
    throw ConfigError("max_reduction: r = " + std::to_string(r) + " outside [1, " +
                      std::to_string(n) + "]");
  return n - (n + r - 1) / r;
}

void GroupingPlan::validate() const {
  if (r < 1) throw ConfigError("plan: r must be at least 1");
  if (rows < 1) throw ConfigError("plan: no constraint rows");
  if (d < 0 || d >= rows) throw ConfigError("plan: d = " + std::to_string(d) + " out of range");
  if (static_cast<int>(subset_rows.size()) != r)
    throw ConfigError("plan: expected " + std::to_string(r) + " subsets, got " +
                      std::to_string(subset_rows.size()));
  for (int g : membership)
    if (g < 0 || g >= r) throw ConfigError("plan: membership refers to unknown group");
  std::vector<bool> covered(rows, false);
  for (int s = 0; s < r; ++s) {
    const auto& sub = subset_rows[s];
    if (static_cast<int>(sub.size()) != subset_size())
      throw ConfigError("plan: subset " + std::to_string(s + 1) + " has " +
                        std::to_string(sub.size()) + " rows, expected " +
                        std::to_string(subset_size()));
    for (std::size_t k = 0; k < sub.size(); ++k) {
      if (sub[k] < 0 || sub[k] >= rows) throw ConfigError("plan: subset row out of range");
      if (k > 0 && sub[k] <= sub[k - 1])
        throw ConfigError("plan: subset rows must be strictly increasing");
      covered[sub[k]] = true;
    }
  }
  for (int j = 0; j < rows; ++j)
    if (!covered[j])
      throw ConfigError("plan: row " + std::to_string(j + 1) + " is not covered by any subset");
}

GroupingPlan select_subsets(const Eigen::MatrixXd& columns, const std::vector<int>& membership,
                            int r, int d, SubsetRule rule, const Eigen::VectorXd* activity) {
  const int m = static_cast<int>(columns.rows());
  const int c = static_cast<int>(columns.cols());
  if (static_cast<int>(membership.size()) != c)
    throw ConfigError("select_subsets: membership size does not match column count");
  if (r < 1) throw ConfigError("select_subsets: r must be positive");
  if (d < 0 || d >= m) throw ConfigError("select_subsets: d out of range");
  const int H = m - d;
  if (static_cast<long long>(r) * H < m)
    throw ConfigError("select_subsets: coverage infeasible, r (n - d) = " + std::to_string(r * H) +
                      " < n = " + std::to_string(m));
  for (int g : membership)
    if (g < 0 || g >= r) throw ConfigError("select_subsets: group id out of range");

  GroupingPlan plan;
  plan.r = r;
  plan.d = d;
  plan.rows = m;
  plan.membership = membership;
  plan.subset_rows.assign(r, {});

  if (rule == SubsetRule::contiguous) {
    std::vector<int> first(r, c);
    for (int j = c - 1; j >= 0; --j) first[membership[j]] = j;
    std::vector<int> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return first[a] < first[b]; });
    for (int pos = 0; pos < r; ++pos) {
      const int start = std::min(pos * H, m - H);
      auto& sub = plan.subset_rows[order[pos]];
      for (int k = 0; k < H; ++k) sub.push_back(start + k);
    }
    plan.validate();
    return plan;
  }

  Eigen::VectorXd act = activity ? *activity : Eigen::VectorXd::Ones(c);
  if (act.size() != c) throw ConfigError("select_subsets: activity size mismatch");

  // mass(s, row): mean member column. other(s, row): activity-weighted impact
  // of every entity outside s, used only to break ties.
  Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(r, m);
  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(r, m);
  std::vector<int> count(r, 0);
  for (int j = 0; j < c; ++j) {
    mass.row(membership[j]) += columns.col(j).transpose();
    weighted.row(membership[j]) += act(j) * columns.col(j).transpose();
    ++count[membership[j]];
  }
  for (int s = 0; s < r; ++s)
    if (count[s] > 0) mass.row(s) /= count[s];
  const Eigen::RowVectorXd weighted_total = weighted.colwise().sum();
  const double tol = 1e-12 * std::max(mass.cwiseAbs().maxCoeff(), 1e-300);
  auto gt = [tol](double a, double b) { return a > b + tol; };

  std::vector<int> owner(m, 0);
  for (int row = 0; row < m; ++row)
    for (int s = 1; s < r; ++s)
      if (gt(mass(s, row), mass(owner[row], row))) owner[row] = s;

  auto by_mass = [&](int s) {
    return [&, s](int a, int b) {
      if (gt(mass(s, a), mass(s, b))) return true;
      if (gt(mass(s, b), mass(s, a))) return false;
      const double oa = weighted_total(a) - weighted(s, a);
      const double ob = weighted_total(b) - weighted(s, b);
      if (oa != ob) return oa > ob;
      return a < b;
    };
  };

  std::vector<int> overflow;
  for (int s = 0; s < r; ++s) {
    std::vector<int> own;
    for (int row = 0; row < m; ++row)
      if (owner[row] == s) own.push_back(row);
    std::sort(own.begin(), own.end(), by_mass(s));
    for (std::size_t k = 0; k < own.size(); ++k)
      (static_cast<int>(k) < H ? plan.subset_rows[s] : overflow).push_back(own[k]);
  }

  // Rows squeezed out of their owner go to the most sensitive group with room.
  std::sort(overflow.begin(), overflow.end(), [&](int a, int b) {
    if (gt(mass(owner[a], a), mass(owner[b], b))) return true;
    if (gt(mass(owner[b], b), mass(owner[a], a))) return false;
    return a < b;
  });
  for (int row : overflow) {
    int dest = -1;
    for (int s = 0; s < r; ++s) {
      if (static_cast<int>(plan.subset_rows[s].size()) >= H) continue;
      if (dest < 0 || gt(mass(s, row), mass(dest, row))) dest = s;
    }
    plan.subset_rows[dest].push_back(row);
  }

  // Top up every group with its most sensitive remaining rows.
  for (int s = 0; s < r; ++s) {
    auto& sub = plan.subset_rows[s];
    std::vector<bool> in(m, false);
    for (int row : sub) in[row] = true;
    std::vector<int> rest;
    for (int row = 0; row < m; ++row)
      if (!in[row]) rest.push_back(row);
    std::sort(rest.begin(), rest.end(), by_mass(s));
    for (std::size_t k = 0; static_cast<int>(sub.size()) < H; ++k) sub.push_back(rest[k]);
    std::sort(sub.begin(), sub.end());
  }
  plan.validate();
  return plan;
}

GroupingPlan select_subsets(const ClusterResult& cluster, const Eigen::MatrixXd& columns, int d,
                            SubsetRule rule) {
  return select_subsets(columns, cluster.assignment, static_cast<int>(cluster.centers.cols()), d,
                        rule);
}

}  // namespace spmds::part
