#include "spmds/analysis.hpp"

#include <cstdio>
#include <string>

#include "spmds/error.hpp"

namespace spmds::analysis {

std::string Ratio::percent() const {
  // Round half away from zero on the exact rational: 100 * num / den with
  // two decimals is round(10000 * num / den) / 100.
  const std::int64_t scaled = 10000 * num;
  std::int64_t q = scaled / den;
  if (2 * (scaled % den) >= den) ++q;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%lld.%02lld%%", static_cast<long long>(q / 100),
                static_cast<long long>(q % 100));
  return buf;
}

namespace {

void check(int n, int d, int K, int v, int v_m, int r) {
  if (n < 1 || d < 0 || d >= n) throw ConfigError("flops: need 0 <= d < n");
  if (K < 1) throw ConfigError("flops: K must be positive");
  if (v < 1 || v_m < 1 || v_m > v) throw ConfigError("flops: need 1 <= v_m <= v");
  if (r < 1 || r > n) throw ConfigError("flops: need 1 <= r <= n");
}

}  // namespace

FlopsReport flops_report(int n, int d, int K, int v, int v_m, int r) {
  check(n, d, K, v, v_m, r);
  const std::int64_t N = n, D = d, KK = K, V = v, VM = v_m;
  FlopsReport f;
  f.n = n, f.d = d, f.K = K, f.v = v, f.v_m = v_m, f.r = r;
  f.F_pt = 2 * D * KK * KK;
  f.F_pr = {D * KK, (N + 2) * KK - 1};
  f.F_dt = (2 * V * N - 2 * VM * (N - D)) * KK * KK - KK * (N - D);
  f.F_dr = {f.F_dt, 2 * V * N * KK * KK};
  return f;
}

FlopsReport flops_at_max_reduction(int n, int r, int K, int v, int v_m) {
  if (n < 1 || r < 1 || r > n) throw ConfigError("flops: need 1 <= r <= n");
  const std::int64_t N = n, KK = K, V = v, VM = v_m;
  const std::int64_t c = (N + r - 1) / r;
  check(n, static_cast<int>(N - c), K, v, v_m, r);
  FlopsReport f;
  f.n = n, f.d = static_cast<int>(N - c), f.K = K, f.v = v, f.v_m = v_m, f.r = r;
  f.F_pt = 2 * (N - c) * KK * KK;
  f.F_pr = {(N - c) * KK, (N + 2) * KK - 1};
  f.F_dt = (2 * V * N - 2 * VM * c) * KK * KK - KK * c;
  f.F_dr = {f.F_dt, 2 * V * N * KK * KK};
  return f;
}

Flatness flatness_metrics(const Eigen::VectorXd& total_load, int first, int last) {
  const int K = static_cast<int>(total_load.size());
  if (last < 0) last = K;
  if (first < 0 || first >= last || last > K) throw ConfigError("flatness: bad slot window");
  const Eigen::VectorXd w = total_load.segment(first, last - first);
  Flatness m;
  m.mean = w.mean();
  m.variance = (w.array() - m.mean).square().mean();
  m.peak = w.maxCoeff();
  m.trough = w.minCoeff();
  m.peak_to_trough = m.trough != 0.0 ? m.peak / m.trough : 0.0;
  m.load_factor = m.peak != 0.0 ? m.mean / m.peak : 0.0;
  return m;
}

}  // namespace spmds::analysis
