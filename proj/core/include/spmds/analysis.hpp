#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace spmds::analysis {

/// Exact rational, kept unreduced.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  /// Percentage rounded to two decimals, e.g. "57.22%".
  std::string percent() const;
};

/// Operation counts of one primal and one dual update, full dimension versus
/// reduced.
struct FlopsReport {
  int n = 0, d = 0, K = 0, v = 0, v_m = 0, r = 0;
  std::int64_t F_pt = 0;  // primal FLOPS saved per agent: 2 d K^2
  Ratio F_pr;             // d K / ((n + 2) K - 1)
  std::int64_t F_dt = 0;  // dual FLOPS saved: (2 v n - 2 v_m (n - d)) K^2 - K (n - d)
  Ratio F_dr;             // F_dt / (2 v n K^2)
};

/// Throws ConfigError unless 0 <= d < n, 1 <= v_m <= v, K >= 1, 1 <= r <= n.
FlopsReport flops_report(int n, int d, int K, int v, int v_m, int r);

/// The same counts written directly in terms of ceil(n / r), i.e. for the
/// largest admissible reduction.
FlopsReport flops_at_max_reduction(int n, int r, int K, int v, int v_m);

/// Shape statistics of an aggregate load curve.
struct Flatness {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double peak = 0.0;
  double trough = 0.0;
  double peak_to_trough = 0.0;
  double load_factor = 0.0;  // mean / peak, 1 for a perfectly flat curve
};

/// Statistics over slots [first, last) of `total_load`; last < 0 means the end.
Flatness flatness_metrics(const Eigen::VectorXd& total_load, int first = 0, int last = -1);

}  // namespace spmds::analysis
