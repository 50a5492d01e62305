#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rtopt/partitioner.hpp"
#include "rtopt/problem.hpp"
#include "rtopt/timing.hpp"

namespace rtopt {

enum class TransportKind { InProcess, Socket };

struct SocketOptions {
  /// Binary started as `<exe> worker --connect host:port --problem <file>` for each follower.
  std::string worker_executable;
  /// File the followers load. Written to a temporary file when empty.
  std::filesystem::path problem_path;
  std::string listen = "127.0.0.1:0";
  /// When false the leader only listens; followers are started by someone else.
  bool spawn_workers = true;
  /// Called with the bound port before the leader starts accepting connections.
  std::function<void(std::uint16_t port)> on_listening;
  std::chrono::milliseconds connect_timeout{10000};
  /// Per-reply deadline; zero waits forever. A dead follower is detected by EOF regardless.
  std::chrono::milliseconds reply_timeout{0};
};

struct EngineOptions {
  TransportKind transport = TransportKind::InProcess;
  SocketOptions socket;
};

struct EvalResult {
  double objective = 0.0;
  std::vector<double> objective_grad;                    // empty unless requested
  std::vector<double> constraint_values;                 // g_i(x) = f_i(x) - rhs_i, problem order
  std::vector<std::vector<double>> constraint_jacobian;  // dense rows, problem order, when requested
};

struct EngineStats {
  std::uint64_t evaluations = 0;
  std::uint64_t objective_phases = 0;
  std::uint64_t constraint_phases = 0;
  std::uint64_t requests_sent = 0;
  std::uint64_t replies_received = 0;
};

/**
 * Leader side of the leader/follower evaluation scheme.
 *
 * Each follower owns a fixed subset of objective and constraint terms. For every
 * evaluate() the leader sends x to all followers for the objective phase, sums the
 * partial values and gradients in ascending worker id, then repeats for the
 * constraint phase (skipped when the problem has no constraints). Followers never
 * talk to each other. With zero workers the leader evaluates everything itself.
 *
 * Not thread-safe: one thread drives an engine at a time.
 */
class EvalEngine {
 public:
  EvalEngine(std::shared_ptr<const TreatmentProblem> problem, const WorkerAssignment& assignment,
             const EngineOptions& options = {});
  ~EvalEngine();

  EvalEngine(const EvalEngine&) = delete;
  EvalEngine& operator=(const EvalEngine&) = delete;
  EvalEngine(EvalEngine&&) noexcept;
  EvalEngine& operator=(EvalEngine&&) noexcept;

  /// Throws DimensionMismatch, EvalError (with worker and term id) or WorkerLost.
  EvalResult evaluate(std::span<const double> x, bool want_grad);

  /// Tells every follower to stop and collects timings. Further calls return the same record.
  TimingRecord shutdown();

  std::uint32_t num_workers() const;
  const TreatmentProblem& problem() const;
  EngineStats stats() const;
  /// Process ids of spawned socket followers; empty otherwise.
  std::vector<int> worker_pids() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// A K = 0 assignment yields a serial engine.
std::unique_ptr<EvalEngine> start_workers(std::shared_ptr<const TreatmentProblem> problem,
                                          const WorkerAssignment& assignment, const EngineOptions& options = {});

/// Reference path: every term evaluated in problem order by the caller.
EvalResult evaluate_serial(const TreatmentProblem& problem, std::span<const double> x, bool want_grad);

/// Follower process body for the socket transport. Returns a process exit code.
int run_socket_worker(const std::string& leader_endpoint, const TreatmentProblem& problem);

/// Amdahl runtime estimate: serial part plus the parallel part split K ways (K = 0 treated as 1).
double amdahl_predict(double serial_seconds, double parallel_seconds, std::uint32_t workers);

}  // namespace rtopt
