#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace spmds::cli {

/// Flags shared by every command. Unset optionals leave the scenario value.
struct Options {
  std::filesystem::path scenario;
  std::filesystem::path out = "spmds_out";
  std::vector<std::string> solvers;  // run uses the first, compare uses all
  std::optional<int> r;
  std::optional<double> alpha, beta, tau_u, tau_l, eps0, kappa;
  std::optional<int> max_iters;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool timing = false;

  // flops without a scenario
  std::optional<int> n, d, K, v, v_m;
};

/// Each command writes its files under `out`, prints a report to `os` and
/// returns the process exit status. Library errors propagate as exceptions.
int cmd_partition(const Options& opt, std::ostream& os);
int cmd_run(const Options& opt, std::ostream& os);
int cmd_compare(const Options& opt, std::ostream& os);
int cmd_certificate(const Options& opt, std::ostream& os);
int cmd_flops(const Options& opt, std::ostream& os);

/// Parse argv and dispatch. Errors are reported on `err` with exit status 2.
int main_entry(int argc, char** argv, std::ostream& os, std::ostream& err);

}  // namespace spmds::cli
