#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rtopt/error.hpp"
#include "rtopt/generator.hpp"
#include "rtopt/partitioner.hpp"
#include "support.hpp"

using namespace rtopt;
using namespace rtopt::testing;

namespace {

std::vector<WeightedItem> items_of(const std::vector<std::uint64_t>& w) {
  std::vector<WeightedItem> items;
  for (std::size_t i = 0; i < w.size(); ++i) items.push_back({i, w[i]});
  return items;
}

// Straightforward O(nK) simulation of the greedy rule used as the oracle.
std::vector<std::uint32_t> greedy_oracle(const std::vector<std::uint64_t>& w, std::uint32_t k) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
  std::vector<std::uint64_t> load(k, 0);
  std::vector<std::uint32_t> owner(w.size());
  for (auto i : order) {
    std::uint32_t best = 0;
    for (std::uint32_t j = 1; j < k; ++j) {
      if (load[j] < load[best]) best = j;
    }
    owner[i] = best;
    load[best] += w[i];
  }
  return owner;
}

}  // namespace

TEST_CASE("hand-simulated example splits evenly") {
  const auto part = greedy_partition(items_of({10, 7, 5, 4, 3, 1}), 3);
  CHECK(part.load == std::vector<std::uint64_t>{10, 10, 10});
  CHECK(part.items_of(0) == std::vector<std::size_t>{0});
  CHECK(part.items_of(1) == std::vector<std::size_t>{1, 4});
  CHECK(part.items_of(2) == std::vector<std::size_t>{2, 3, 5});
  CHECK(part.discrepancy() == 0);
}

TEST_CASE("single worker takes everything") {
  const auto part = greedy_partition(items_of({3, 9, 1}), 1);
  CHECK(part.owner == std::vector<std::uint32_t>{0, 0, 0});
  CHECK(part.load == std::vector<std::uint64_t>{13});
}

TEST_CASE("more workers than items puts the largest items on the lowest ids") {
  const auto part = greedy_partition(items_of({2, 8, 5}), 5);
  CHECK(part.owner == std::vector<std::uint32_t>{2, 0, 1});
  CHECK(part.load == std::vector<std::uint64_t>{8, 5, 2, 0, 0});
}

TEST_CASE("equal weights keep ascending id order") {
  const auto part = greedy_partition(items_of({4, 4, 4, 4}), 2);
  CHECK(part.owner == std::vector<std::uint32_t>{0, 1, 0, 1});
}

TEST_CASE("empty input and invalid arguments") {
  const auto part = greedy_partition({}, 3);
  CHECK(part.owner.empty());
  CHECK(part.load == std::vector<std::uint64_t>{0, 0, 0});
  CHECK_THROWS_AS(greedy_partition(items_of({1}), 0), Error);
  const std::vector<WeightedItem> gap{{0, 1}, {2, 1}};
  CHECK_THROWS_AS(greedy_partition(gap, 2), Error);
  const std::vector<WeightedItem> dup{{0, 1}, {0, 1}};
  CHECK_THROWS_AS(greedy_partition(dup, 2), Error);
}

TEST_CASE("property: discrepancy never exceeds the largest item") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = uniform_int(rng, 0, 60);
    const auto k = static_cast<std::uint32_t>(uniform_int(rng, 1, 12));
    std::vector<std::uint64_t> w(n);
    const auto cap = uniform_int(rng, 1, 1000000);
    for (auto& v : w) v = uniform_int(rng, 0, cap);
    const auto part = greedy_partition(items_of(w), k);
    const std::uint64_t largest = w.empty() ? 0 : *std::max_element(w.begin(), w.end());
    CHECK(part.discrepancy() <= largest);
    CHECK(part.owner == greedy_oracle(w, k));
    std::vector<std::uint64_t> load(k, 0);
    for (std::size_t i = 0; i < n; ++i) load[part.owner[i]] += w[i];
    CHECK(load == part.load);
  }
}

TEST_CASE("property: input order does not change the assignment") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint64_t> w(uniform_int(rng, 1, 30));
    for (auto& v : w) v = uniform_int(rng, 1, 20);
    auto items = items_of(w);
    const auto base = greedy_partition(items, 4);
    std::shuffle(items.begin(), items.end(), rng);
    CHECK(greedy_partition(items, 4) == base);
  }
}

TEST_CASE("problem partitioning covers every term once") {
  GeneratorConfig cfg;
  cfg.seed = 8;
  cfg.num_rois = 30;
  cfg.nnz_max = 20000;
  const auto p = generate(cfg);
  for (std::uint32_t k = 1; k <= 8; ++k) {
    const auto a = partition_problem(p, k);
    CHECK(a.num_workers == k);
    CHECK_NOTHROW(check_assignment(p, a));
    std::vector<int> seen(p.objectives.size(), 0);
    for (std::uint32_t w = 0; w < k; ++w) {
      for (auto i : a.objectives.items_of(w)) ++seen[i];
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
    std::uint64_t largest = 0;
    for (const auto& s : p.objectives) largest = std::max(largest, term_nnz(p, s));
    CHECK(a.objectives.discrepancy() <= largest);
    CHECK(partition_problem(p, k) == a);
  }
  const auto serial = partition_problem(p, 0);
  CHECK(serial.num_workers == 0);
  CHECK(serial.objectives.owner.empty());
}

TEST_CASE("single-objective problem keeps one worker busy") {
  TreatmentProblem p;
  p.num_vars = 3;
  p.rois.push_back({"A", RoiKind::Target, SparseMatrix::identity(3)});
  p.objectives.push_back(make_objective(0, MeanDoseParams{}, 1.0));
  const auto a = partition_problem(p, 4);
  CHECK(a.objectives.load == std::vector<std::uint64_t>{3, 0, 0, 0});
  CHECK(a.constraints.load == std::vector<std::uint64_t>{0, 0, 0, 0});
}

TEST_CASE("quadratic terms are weighted by their matrix") {
  TreatmentProblem p;
  p.num_vars = 3;
  p.objectives.push_back(make_objective(std::nullopt, QuadraticParams{SparseMatrix::identity(3), {0, 0, 0}, 0}, 1.0));
  CHECK(term_nnz(p, p.objectives[0]) == 3);
}

TEST_CASE("check_assignment rejects mismatches") {
  TreatmentProblem p;
  p.num_vars = 3;
  p.rois.push_back({"A", RoiKind::Target, SparseMatrix::identity(3)});
  p.objectives.push_back(make_objective(0, MeanDoseParams{}, 1.0));
  p.objectives.push_back(make_objective(0, MeanDoseParams{}, 2.0));
  auto a = partition_problem(p, 2);
  auto missing = a;
  missing.objectives.owner.pop_back();
  CHECK_THROWS_AS(check_assignment(p, missing), Error);
  auto out_of_range = a;
  out_of_range.objectives.owner[0] = 5;
  CHECK_THROWS_AS(check_assignment(p, out_of_range), Error);
  auto wrong_load = a;
  wrong_load.objectives.load[0] += 1;
  CHECK_THROWS_AS(check_assignment(p, wrong_load), Error);
}

TEST_CASE("partition on a generated 40-ROI problem with K=5") {
  GeneratorConfig cfg;
  cfg.seed = 42;
  cfg.num_rois = 40;
  const auto p = generate(cfg);
  const auto a = partition_problem(p, 5);
  const auto& load = a.objectives.load;
  const double mean = std::accumulate(load.begin(), load.end(), 0.0) / 5.0;
  MESSAGE("objective discrepancy / mean = " << static_cast<double>(a.objectives.discrepancy()) / mean);
  CHECK(static_cast<double>(a.objectives.discrepancy()) / mean <= 0.05);
}
