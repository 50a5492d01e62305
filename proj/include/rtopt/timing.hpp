#pragma once

#include <cstdint>
#include <vector>

namespace rtopt {

/// Where one follower spent its time. busy = matvec + function <= wall.
struct WorkerTiming {
  double matvec_seconds = 0.0;    // dose products A x and A^T y
  double function_seconds = 0.0;  // function values and dose gradients
  double wait_seconds = 0.0;      // blocked waiting for the next request
  double wall_seconds = 0.0;      // worker lifetime
  std::uint64_t objective_requests = 0;
  std::uint64_t constraint_requests = 0;

  double busy_seconds() const noexcept { return matvec_seconds + function_seconds; }
};

struct TimingRecord {
  std::vector<WorkerTiming> workers;  // indexed by worker id; empty for serial engines
  double leader_eval_seconds = 0.0;   // leader wall time inside evaluate()
  std::uint64_t evaluations = 0;
};

}  // namespace rtopt
