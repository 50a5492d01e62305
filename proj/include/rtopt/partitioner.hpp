#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rtopt/problem.hpp"

namespace rtopt {

struct WeightedItem {
  std::size_t id;
  std::uint64_t weight;
};

/// One family of terms (objectives or constraints) split across K workers.
struct Partition {
  std::vector<std::uint32_t> owner;  // owner[id] = worker, for ids 0..n-1
  std::vector<std::uint64_t> load;   // total weight per worker, length K

  /// Term ids owned by `worker`, ascending.
  std::vector<std::size_t> items_of(std::uint32_t worker) const;
  /// max(load) - min(load); 0 when K == 0.
  std::uint64_t discrepancy() const;

  friend bool operator==(const Partition&, const Partition&) = default;
};

struct WorkerAssignment {
  std::uint32_t num_workers = 0;
  Partition objectives;
  Partition constraints;

  friend bool operator==(const WorkerAssignment&, const WorkerAssignment&) = default;
};

/**
 * Greedy multi-way number partitioning.
 *
 * Items are taken in descending weight (equal weights keep ascending id) and each
 * goes to the currently lightest worker, lowest id on ties. Ids must be exactly
 * 0..n-1 in some order. The result satisfies max(load) - min(load) <= max weight.
 */
Partition greedy_partition(std::span<const WeightedItem> items, std::uint32_t num_workers);

/// Objectives and constraints are partitioned independently, weighted by dose-matrix nnz.
/// K = 0 gives an empty assignment, meaning serial evaluation.
WorkerAssignment partition_problem(const TreatmentProblem& problem, std::uint32_t num_workers);

/// Throws ValidationError if the assignment does not cover the problem's terms exactly.
void check_assignment(const TreatmentProblem& problem, const WorkerAssignment& assignment);

}  // namespace rtopt
