#include "rtopt/partitioner.hpp"

#include <algorithm>
#include <string>

#include "rtopt/error.hpp"

namespace rtopt {

std::vector<std::size_t> Partition::items_of(std::uint32_t worker) const {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (owner[i] == worker) ids.push_back(i);
  }
  return ids;
}

std::uint64_t Partition::discrepancy() const {
  if (load.empty()) return 0;
  const auto [lo, hi] = std::minmax_element(load.begin(), load.end());
  return *hi - *lo;
}

Partition greedy_partition(std::span<const WeightedItem> items, std::uint32_t num_workers) {
  if (num_workers == 0) throw Error(ErrorCode::ConfigError, "greedy_partition needs at least one worker");

  Partition result;
  result.load.assign(num_workers, 0);
  result.owner.assign(items.size(), UINT32_MAX);
  for (const auto& item : items) {
    if (item.id >= items.size() || result.owner[item.id] != UINT32_MAX) {
      throw Error(ErrorCode::ValidationError, "item ids must be a permutation of 0..n-1");
    }
    result.owner[item.id] = 0;
  }

  std::vector<WeightedItem> order(items.begin(), items.end());
  std::stable_sort(order.begin(), order.end(), [](const WeightedItem& a, const WeightedItem& b) {
    return a.weight != b.weight ? a.weight > b.weight : a.id < b.id;
  });
  for (const auto& item : order) {
    // min_element returns the first minimum, i.e. the lowest worker id.
    const auto lightest = std::min_element(result.load.begin(), result.load.end()) - result.load.begin();
    result.owner[item.id] = static_cast<std::uint32_t>(lightest);
    result.load[lightest] += item.weight;
  }
  return result;
}

WorkerAssignment partition_problem(const TreatmentProblem& problem, std::uint32_t num_workers) {
  auto weigh = [&](const std::vector<FunctionSpec>& terms) {
    std::vector<WeightedItem> items;
    items.reserve(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) items.push_back({i, term_nnz(problem, terms[i])});
    return items;
  };
  WorkerAssignment a;
  a.num_workers = num_workers;
  if (num_workers == 0) return a;  // serial evaluation, nothing to distribute
  a.objectives = greedy_partition(weigh(problem.objectives), num_workers);
  a.constraints = greedy_partition(weigh(problem.constraints), num_workers);
  return a;
}

void check_assignment(const TreatmentProblem& problem, const WorkerAssignment& a) {
  if (a.num_workers == 0) return;
  auto check = [&](const Partition& part, const std::vector<FunctionSpec>& specs, const char* what) {
    const std::size_t count = specs.size();
    if (part.owner.size() != count) {
      throw Error(ErrorCode::ValidationError, std::string(what) + " assignment covers " +
                                                  std::to_string(part.owner.size()) + " terms, problem has " +
                                                  std::to_string(count));
    }
    if (part.load.size() != a.num_workers) {
      throw Error(ErrorCode::ValidationError, std::string(what) + " load vector length != num_workers");
    }
    for (auto w : part.owner) {
      if (w >= a.num_workers) throw Error(ErrorCode::ValidationError, std::string(what) + " owner out of range");
    }
    std::vector<std::uint64_t> load(a.num_workers, 0);
    for (std::size_t i = 0; i < count; ++i) load[part.owner[i]] += term_nnz(problem, specs[i]);
    if (load != part.load) {
      throw Error(ErrorCode::ValidationError, std::string(what) + " loads do not match the owned terms");
    }
  };
  check(a.objectives, problem.objectives, "objective");
  check(a.constraints, problem.constraints, "constraint");
}

}  // namespace rtopt
