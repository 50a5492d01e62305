#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtopt/eval_engine.hpp"
#include "rtopt/problem.hpp"

namespace rtopt::cli {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

struct CliEnv {
  /// Binary used to start socket followers; the running executable when empty.
  std::string worker_executable;
};

/// Runs one command line (without the program name). Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const CliEnv& env = {});

struct BenchConfig {
  std::vector<std::uint32_t> workers{0, 1, 2, 4};
  std::uint32_t repeats = 5;
  std::uint64_t iterations = 50;
  TransportKind transport = TransportKind::InProcess;
  std::string worker_executable;
  std::string problem_path;  // handed to socket followers; optional
};

struct BenchRow {
  std::uint32_t workers = 0;
  std::uint32_t repeats = 0;
  std::uint64_t iterations = 0;
  double wall_mean = 0.0;
  double wall_std = 0.0;
  double eval_mean = 0.0;
  double solver_mean = 0.0;
  double amdahl_seconds = 0.0;  // from the K = 0 split
  double speedup = 0.0;         // K = 0 wall over this wall
};

/// Fixed-budget solves per worker count after one discarded warm-up each. K = 0 is always measured.
std::vector<BenchRow> run_bench(const TreatmentProblem& problem, const BenchConfig& cfg);

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

/// Path of the running executable.
std::string self_executable();

}  // namespace rtopt::cli
