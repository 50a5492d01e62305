#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rtopt/eval_engine.hpp"
#include "rtopt/problem.hpp"

namespace rtopt {

struct SolverConfig {
  std::uint64_t max_iterations = 3000;
  double grad_tolerance = 1e-6;       // on the infinity norm of the projected merit gradient
  double violation_tolerance = 1e-4;  // max constraint violation accepted at convergence
  double penalty_initial = 10.0;
  double penalty_growth = 10.0;
  std::uint64_t penalty_window = 25;  // iterations over which the violation must halve
  std::uint64_t lbfgs_memory = 10;
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  std::uint64_t max_backtracks = 40;
  std::uint64_t log_every = 1;
  std::optional<std::vector<double>> initial_x;  // default_initial_point() when unset
};

/// Throws ConfigError.
void validate(const SolverConfig& cfg);

enum class SolveStatus { Converged, IterationLimit, LineSearchFailure };

std::string_view to_string(SolveStatus status);

struct IterationLog {
  std::uint64_t iteration = 0;
  double merit = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  double projected_grad_norm = 0.0;
  double penalty = 0.0;
  double step = 0.0;  // accepted step length that produced this iterate; 0 for the start point
  std::uint64_t evaluations = 0;
  // Timing columns; excluded from reproducibility comparisons.
  double eval_seconds = 0.0;  // evaluate() time spent reaching this iterate
  double solver_seconds_total = 0.0;
  double eval_seconds_total = 0.0;
};

struct SolveResult {
  std::vector<double> x;
  SolveStatus status = SolveStatus::IterationLimit;
  std::vector<IterationLog> log;
  double merit = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;
  double penalty = 0.0;
  std::uint64_t iterations = 0;
  double wall_seconds = 0.0;
  double solver_seconds = 0.0;  // time outside evaluate()
  double eval_seconds = 0.0;    // time inside evaluate()
};

struct MeritValue {
  double merit = 0.0;
  double objective = 0.0;
  double max_violation = 0.0;  // max(0, max_i g_i)
  std::vector<double> grad;    // empty unless requested
};

/// Phi = objective + mu * sum max(g_i, 0)^2 and its gradient, from an existing evaluation.
MeritValue combine_merit(const EvalResult& eval, double mu);

/// One evaluate() call turned into the merit and its gradient.
MeritValue merit_and_grad(EvalEngine& engine, std::span<const double> x, double mu, bool want_grad = true);

/// Uniform start: prescription of the first target ROI over its mean row sum, at least 1e-3.
std::vector<double> default_initial_point(const TreatmentProblem& problem);

/**
 * Projected L-BFGS on the quadratic-penalty merit over x >= 0.
 *
 * Variables at zero with a positive gradient are held fixed for the step; the
 * trial point is projected back onto x >= 0 and accepted by Armijo backtracking
 * along the projected path. The penalty weight grows whenever the max violation
 * fails to halve over penalty_window iterations, or when the projected gradient
 * has converged but the constraints have not.
 */
SolveResult solve(const TreatmentProblem& problem, EvalEngine& engine, const SolverConfig& cfg,
                  const std::function<void(const IterationLog&)>& on_iteration = {});

/// CSV with a header row. Timing columns come last.
void write_iteration_log_csv(std::ostream& out, std::span<const IterationLog> log);

}  // namespace rtopt
