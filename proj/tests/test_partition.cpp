#include <doctest.h>

#include <set>

#include "spmds/error.hpp"
#include "spmds/io.hpp"
#include "spmds/partition.hpp"
#include "spmds/traffic.hpp"
#include "support.hpp"

using namespace spmds;
using part::GroupingPlan;
using part::SubsetRule;

namespace {

std::vector<int> rows_1based(const std::vector<int>& rows) {
  std::vector<int> out;
  for (int j : rows) out.push_back(j + 1);
  return out;
}

std::vector<int> members_1based(const GroupingPlan& plan, int group) {
  std::vector<int> out;
  for (std::size_t i = 0; i < plan.membership.size(); ++i)
    if (plan.membership[i] == group) out.push_back(static_cast<int>(i) + 1);
  return out;
}

std::vector<int> range(int lo, int hi) {
  std::vector<int> out;
  for (int j = lo; j <= hi; ++j) out.push_back(j);
  return out;
}

}  // namespace

TEST_CASE("k-means basics") {
  Matrix pts(2, 6);
  pts << 0, 0.1, 0.2, 5, 5.1, 5.2,
         0, 0.1, 0.0, 5, 5.0, 5.1;

  SUBCASE("r = 1 center is the mean") {
    const auto res = part::kmeans_cluster(pts, 1, 3);
    CHECK((res.centers.col(0) - pts.rowwise().mean()).norm() < 1e-14);
  }
  SUBCASE("two blobs") {
    const auto res = part::kmeans_best_of(pts, 2, 1);
    CHECK(res.assignment == std::vector<int>{0, 0, 0, 1, 1, 1});
  }
  SUBCASE("identical columns give zero objective") {
    const Matrix same = Matrix::Constant(3, 5, 2.0);
    const auto res = part::kmeans_cluster(same, 2, 9);
    CHECK(res.objective == 0.0);
  }
  SUBCASE("objective never increases across sweeps") {
    std::mt19937_64 rng(5);
    Matrix cloud(3, 60);
    for (Eigen::Index k = 0; k < cloud.size(); ++k)
      cloud.data()[k] = spmds::testing::uniform(rng, 0, 1);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto res = part::kmeans_cluster(cloud, 5, seed);
      for (std::size_t k = 1; k < res.history.size(); ++k)
        CHECK(res.history[k] <= res.history[k - 1] + 1e-12);
    }
  }
  SUBCASE("deterministic for a seed") {
    const auto a = part::kmeans_best_of(pts, 3, 42);
    const auto b = part::kmeans_best_of(pts, 3, 42);
    CHECK(a.assignment == b.assignment);
    CHECK(a.objective == b.objective);
  }
  CHECK(part::canonical_labels({2, 2, 0, 1, 0}) == std::vector<int>{0, 0, 1, 2, 1});
  CHECK_THROWS_AS(part::kmeans_cluster(pts, 7, 1), ConfigError);
}

TEST_CASE("max_reduction") {
  CHECK(part::max_reduction(12, 3) == 8);
  CHECK(part::max_reduction(122, 4) == 91);
  CHECK(part::max_reduction(9, 2) == 4);
  CHECK(part::max_reduction(5, 1) == 0);
  CHECK(part::max_reduction(7, 7) == 6);
  CHECK_THROWS_AS(part::max_reduction(5, 6), ConfigError);
  CHECK_THROWS_AS(part::max_reduction(5, 0), ConfigError);

  for (int n = 2; n <= 200; ++n)
    for (int r = 1; r <= n; ++r) {
      const int d = part::max_reduction(n, r);
      REQUIRE(r * (n - d) >= n);
      REQUIRE(r * (n - (d + 1)) < n);
    }
}

TEST_CASE("13-bus grouping") {
  const auto data = io::load_network(spmds::testing::data_path("ieee13_network.json"));
  const auto sens = net::build_sensitivity(data.network);
  part::ClusterResult cluster;
  const GroupingPlan plan = io::partition_feeder(sens, 3, 1, 32, SubsetRule::contiguous, &cluster);
  CHECK(plan.d == 8);
  CHECK(plan.subset_size() == 4);
  CHECK(members_1based(plan, 0) == std::vector<int>{1, 4, 5});
  CHECK(members_1based(plan, 1) == std::vector<int>{2, 3});
  CHECK(members_1based(plan, 2) == range(6, 12));
  CHECK(rows_1based(plan.subset_rows[0]) == range(1, 4));
  CHECK(rows_1based(plan.subset_rows[1]) == range(5, 8));
  CHECK(rows_1based(plan.subset_rows[2]) == range(9, 12));
  plan.validate();

  SUBCASE("r = 1 is the trivial plan") {
    const GroupingPlan one = io::partition_feeder(sens, 1, 1, 4, SubsetRule::contiguous);
    CHECK(one.d == 0);
    CHECK(one.subset_rows[0] == range(0, 11));
  }
  SUBCASE("sensitivity rule covers every row") {
    const GroupingPlan s = io::partition_feeder(sens, 3, 1, 32, SubsetRule::sensitivity);
    s.validate();
    CHECK(s.membership == plan.membership);
  }
}

TEST_CASE("123-bus plan file") {
  const GroupingPlan plan =
      io::plan_from_json(io::read_json(spmds::testing::data_path("ieee123_plan.json")));
  plan.validate();
  CHECK(plan.r == 4);
  CHECK(plan.d == 91);
  CHECK(rows_1based(plan.subset_rows[0]) == range(1, 31));
  CHECK(rows_1based(plan.subset_rows[1]) == range(32, 62));
  CHECK(rows_1based(plan.subset_rows[2]) == range(63, 93));
  CHECK(rows_1based(plan.subset_rows[3]) == range(92, 122));

  const auto round = io::plan_from_json(io::plan_to_json(plan, "node"));
  CHECK(round.subset_rows == plan.subset_rows);
  CHECK(round.membership == plan.membership);
}

TEST_CASE("subset selection property: coverage and size on random inputs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = spmds::testing::uniform_int(rng, 1, 30);
    const int c = spmds::testing::uniform_int(rng, 1, 25);
    const int r = spmds::testing::uniform_int(rng, 1, std::min(m, c));
    const int d = spmds::testing::uniform_int(rng, 0, part::max_reduction(m, r));
    Matrix cols(m, c);
    for (Eigen::Index k = 0; k < cols.size(); ++k)
      cols.data()[k] = rng() % 3 == 0 ? 0.0 : spmds::testing::uniform(rng, 0, 1);
    std::vector<int> membership(c);
    for (int i = 0; i < c; ++i) membership[i] = i < r ? i : spmds::testing::uniform_int(rng, 0, r - 1);
    for (SubsetRule rule : {SubsetRule::sensitivity, SubsetRule::contiguous}) {
      const GroupingPlan plan = part::select_subsets(cols, membership, r, d, rule);
      CHECK_NOTHROW(plan.validate());
      std::set<int> all;
      for (const auto& sub : plan.subset_rows) {
        CHECK(static_cast<int>(sub.size()) == m - d);
        all.insert(sub.begin(), sub.end());
      }
      CHECK(static_cast<int>(all.size()) == m);
    }
  }
}

TEST_CASE("subset selection errors") {
  const Matrix cols = Matrix::Ones(6, 2);
  CHECK_THROWS_AS(part::select_subsets(cols, {0, 1}, 2, 4), ConfigError);  // 2 * 2 < 6
  CHECK_THROWS_AS(part::select_subsets(cols, {0, 2}, 2, 1), ConfigError);
  GroupingPlan bad;
  bad.r = 2;
  bad.d = 1;
  bad.rows = 3;
  bad.membership = {0, 1};
  bad.subset_rows = {{0, 1}, {0, 1}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("traffic subsets") {
  const auto inst = traffic::build_fig7_instance();
  CHECK(inst.plan.d == 4);
  CHECK(inst.plan.membership == std::vector<int>{0, 0, 1, 1, 1});
  CHECK(rows_1based(inst.plan.subset_rows[0]) == std::vector<int>{2, 3, 5, 6, 7});
  CHECK(rows_1based(inst.plan.subset_rows[1]) == std::vector<int>{1, 4, 6, 8, 9});
}
