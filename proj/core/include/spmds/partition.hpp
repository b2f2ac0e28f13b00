#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace spmds::part {

/// Result of Lloyd's algorithm on a set of column vectors.
struct ClusterResult {
  Eigen::MatrixXd centers;       // m x r, one center per column
  std::vector<int> assignment;   // group id per input column
  double objective = 0.0;        // sum of squared distances to assigned centers
  std::vector<double> history;   // objective after every sweep
  int sweeps = 0;
};

/// K-means with k-means++ seeding. Deterministic for a given seed.
/// Columns are the points; ties in the nearest-center test go to the lowest
/// group index. A center left without members is moved onto the point
/// farthest from its current center.
ClusterResult kmeans_cluster(const Eigen::MatrixXd& columns, int r, std::uint64_t seed,
                             int max_iters = 300);

/// Best objective over `restarts` runs seeded seed, seed + 1, ... (first run
/// wins ties). Labels are renumbered by first appearance so that column 0 is
/// always in group 0.
ClusterResult kmeans_best_of(const Eigen::MatrixXd& columns, int r, std::uint64_t seed,
                             int restarts = 32, int max_iters = 300);

/// Relabel groups in order of first appearance.
std::vector<int> canonical_labels(const std::vector<int>& labels);

/// Largest d with r (n - d) >= n, i.e. n - ceil(n / r).
int max_reduction(int n, int r);

enum class SubsetRule {
  /// Each group takes the rows its members affect most, followed by a
  /// coverage pass. Works for any impact matrix.
  sensitivity,
  /// Groups ordered by their lowest member take consecutive row blocks
  /// starting at min(s H, n - H).
  contiguous,
};

/// Grouping of the clustered entities (feeder nodes, or agents directly) and
/// the constraint rows each group monitors. All indices are 0-based.
struct GroupingPlan {
  int r = 1;
  int d = 0;
  int rows = 0;                                // n, the full constraint dimension
  std::vector<int> membership;                 // group per clustered entity
  std::vector<std::vector<int>> subset_rows;   // sorted, each of size rows - d

  int subset_size() const { return rows - d; }

  /// Throws ConfigError unless every subset has H rows within range and the
  /// subsets jointly cover all rows.
  void validate() const;
};

/// Pick the H = n - d rows monitored by each group.
///
/// `columns` is the m x c impact matrix of the c clustered entities (m = n
/// constraint rows). `activity` optionally weights the entities when ranking
/// rows that tie on the group's own mass (defaults to all ones).
GroupingPlan select_subsets(const Eigen::MatrixXd& columns, const std::vector<int>& membership,
                            int r, int d, SubsetRule rule = SubsetRule::sensitivity,
                            const Eigen::VectorXd* activity = nullptr);

GroupingPlan select_subsets(const ClusterResult& cluster, const Eigen::MatrixXd& columns, int d,
                            SubsetRule rule = SubsetRule::sensitivity);

}  // namespace spmds::part
