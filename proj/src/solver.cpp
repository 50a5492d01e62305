#include "rtopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <variant>

#include "rtopt/error.hpp"

namespace rtopt {

namespace {

using Clock = std::chrono::steady_clock;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// || P(x - g) - x ||_inf with P the projection onto x >= 0.
double projected_grad_norm(std::span<const double> x, std::span<const double> g) {
  double m = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) m = std::max(m, std::abs(std::max(0.0, x[j] - g[j]) - x[j]));
  return m;
}

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho;
};

/// Two-loop recursion: returns -H g with H the L-BFGS inverse-Hessian estimate.
std::vector<double> lbfgs_direction(const std::deque<CurvaturePair>& memory, std::span<const double> g) {
  std::vector<double> q(g.begin(), g.end());
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * dot(memory[k].s, q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] -= alpha[k] * memory[k].y[j];
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
    for (double& v : q) v *= gamma;
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * dot(memory[k].y, q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += (alpha[k] - beta) * memory[k].s[j];
  }
  for (double& v : q) v = -v;
  return q;
}

/// Splits wall time into time inside evaluate() and everything else.
class TimeSplit {
 public:
  TimeSplit() : start_(Clock::now()), mark_(start_) {}

  template <typename Fn>
  auto timed_eval(Fn&& fn) {
    const auto t0 = Clock::now();
    solver_ += std::chrono::duration<double>(t0 - mark_).count();
    auto result = fn();
    mark_ = Clock::now();
    const double dt = std::chrono::duration<double>(mark_ - t0).count();
    eval_ += dt;
    last_eval_ += dt;
    return result;
  }

  double take_last_eval() { return std::exchange(last_eval_, 0.0); }
  double solver_seconds() const { return solver_ + std::chrono::duration<double>(Clock::now() - mark_).count(); }
  double eval_seconds() const { return eval_; }
  double wall_seconds() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

 private:
  Clock::time_point start_;
  Clock::time_point mark_;
  double solver_ = 0.0;
  double eval_ = 0.0;
  double last_eval_ = 0.0;
};

}  // namespace

void validate(const SolverConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (!(cfg.grad_tolerance >= 0.0)) fail("grad_tolerance must be >= 0");
  if (!(cfg.violation_tolerance > 0.0)) fail("violation_tolerance must be > 0");
  if (!(cfg.penalty_initial > 0.0)) fail("penalty_initial must be > 0");
  if (!(cfg.penalty_growth > 1.0)) fail("penalty_growth must be > 1");
  if (cfg.penalty_window == 0) fail("penalty_window must be >= 1");
  if (cfg.lbfgs_memory == 0) fail("lbfgs_memory must be >= 1");
  if (!(cfg.armijo_c1 > 0.0 && cfg.armijo_c1 < 1.0)) fail("armijo_c1 must lie in (0, 1)");
  if (!(cfg.backtrack_factor > 0.0 && cfg.backtrack_factor < 1.0)) fail("backtrack_factor must lie in (0, 1)");
  if (cfg.max_backtracks == 0) fail("max_backtracks must be >= 1");
  if (cfg.log_every == 0) fail("log_every must be >= 1");
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::IterationLimit: return "iteration_limit";
    case SolveStatus::LineSearchFailure: return "line_search_failure";
  }
  return "unknown";
}

MeritValue combine_merit(const EvalResult& eval, double mu) {
  MeritValue out;
  out.objective = eval.objective;
  out.merit = eval.objective;
  const bool want_grad = !eval.objective_grad.empty();
  if (want_grad) out.grad = eval.objective_grad;
  double penalty = 0.0;
  for (std::size_t i = 0; i < eval.constraint_values.size(); ++i) {
    const double v = std::max(eval.constraint_values[i], 0.0);
    out.max_violation = std::max(out.max_violation, v);
    if (v == 0.0) continue;
    penalty += v * v;
    if (want_grad) {
      const double scale = 2.0 * mu * v;
      const auto& row = eval.constraint_jacobian.at(i);
      for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += scale * row[j];
    }
  }
  if (mu != 0.0) out.merit += mu * penalty;
  return out;
}

MeritValue merit_and_grad(EvalEngine& engine, std::span<const double> x, double mu, bool want_grad) {
  return combine_merit(engine.evaluate(x, want_grad), mu);
}

std::vector<double> default_initial_point(const TreatmentProblem& problem) {
  double start = 1.0;
  for (std::size_t r = 0; r < problem.rois.size(); ++r) {
    if (problem.rois[r].kind != RoiKind::Target) continue;
    double dose_sum = 0.0;
    int count = 0;
    auto collect = [&](const FunctionSpec& spec) {
      if (spec.roi != r) return;
      std::visit(
          [&](const auto& p) {
            if constexpr (requires { p.ref_dose; }) {
              dose_sum += p.ref_dose;
              ++count;
            }
          },
          spec.params);
    };
    for (const auto& s : problem.objectives) collect(s);
    for (const auto& s : problem.constraints) collect(s);
    const auto sums = row_sums(problem.rois[r].matrix);
    const double mean_row_sum =
        sums.empty() ? 0.0 : std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(sums.size());
    if (count > 0 && mean_row_sum > 0.0) start = (dose_sum / count) / mean_row_sum;
    break;
  }
  return std::vector<double>(problem.num_vars, std::max(start, 1e-3));
}

SolveResult solve(const TreatmentProblem& problem, EvalEngine& engine, const SolverConfig& cfg,
                  const std::function<void(const IterationLog&)>& on_iteration) {
  validate(cfg);
  TimeSplit clock;
  const std::size_t n = problem.num_vars;
  const bool has_constraints = !problem.constraints.empty();

  std::vector<double> x = cfg.initial_x ? *cfg.initial_x : default_initial_point(problem);
  if (x.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "initial x has " + std::to_string(x.size()) + " entries, expected " +
                                                  std::to_string(n));
  }
  for (double& v : x) v = std::max(v, 0.0);

  double mu = cfg.penalty_initial;
  std::uint64_t evaluations = 0;
  auto evaluate = [&](std::span<const double> at) {
    ++evaluations;
    return clock.timed_eval([&] { return engine.evaluate(at, true); });
  };

  EvalResult raw = evaluate(x);
  MeritValue cur = combine_merit(raw, mu);
  std::deque<CurvaturePair> memory;

  SolveResult result;
  double last_step = 0.0;
  double window_violation = cur.max_violation;
  std::uint64_t window_start = 0;

  auto record = [&](std::uint64_t iter, double pg, bool force) {
    IterationLog row;
    row.iteration = iter;
    row.merit = cur.merit;
    row.objective = cur.objective;
    row.max_violation = cur.max_violation;
    row.projected_grad_norm = pg;
    row.penalty = mu;
    row.step = last_step;
    row.evaluations = evaluations;
    row.eval_seconds = clock.take_last_eval();
    row.solver_seconds_total = clock.solver_seconds();
    row.eval_seconds_total = clock.eval_seconds();
    if (force || iter % cfg.log_every == 0) {
      result.log.push_back(row);
      if (on_iteration) on_iteration(row);
    }
  };

  auto raise_penalty = [&]() {
    mu *= cfg.penalty_growth;
    memory.clear();
    cur = combine_merit(raw, mu);
  };

  std::uint64_t iter = 0;
  SolveStatus status = SolveStatus::IterationLimit;
  while (true) {
    double pg = projected_grad_norm(x, cur.grad);
    const bool feasible = !has_constraints || cur.max_violation <= cfg.violation_tolerance;
    if (pg <= cfg.grad_tolerance && feasible) {
      status = SolveStatus::Converged;
      record(iter, pg, true);
      break;
    }
    if (iter >= cfg.max_iterations) {
      record(iter, pg, true);
      break;
    }
    record(iter, pg, false);
    if (pg <= cfg.grad_tolerance) {
      // Stationary for this penalty weight but still infeasible.
      raise_penalty();
      window_violation = cur.max_violation;
      window_start = iter;
      ++iter;
      last_step = 0.0;
      continue;
    }

    // Hold variables sitting on the bound with the gradient pushing outward.
    std::vector<double> reduced = cur.grad;
    std::vector<bool> active(n, false);
    for (std::size_t j = 0; j < n; ++j) {
      if (x[j] <= 0.0 && cur.grad[j] > 0.0) {
        active[j] = true;
        reduced[j] = 0.0;
      }
    }

    bool accepted = false;
    bool steepest = memory.empty();
    std::vector<double> x_new(n);
    std::vector<double> step(n);
    EvalResult raw_new;
    MeritValue trial;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      std::vector<double> dir;
      if (!steepest) {
        dir = lbfgs_direction(memory, reduced);
        for (std::size_t j = 0; j < n; ++j) {
          if (active[j]) dir[j] = 0.0;
        }
        if (!(dot(reduced, dir) < 0.0)) steepest = true;
      }
      if (steepest) {
        memory.clear();
        dir.resize(n);
        for (std::size_t j = 0; j < n; ++j) dir[j] = -reduced[j];
      }

      double t = 1.0;
      if (steepest) {
        const double gmax = std::abs(*std::max_element(reduced.begin(), reduced.end(),
                                                       [](double a, double b) { return std::abs(a) < std::abs(b); }));
        if (gmax > 1.0) t = 1.0 / gmax;
      }
      for (std::uint64_t b = 0; b < cfg.max_backtracks; ++b, t *= cfg.backtrack_factor) {
        for (std::size_t j = 0; j < n; ++j) {
          x_new[j] = std::max(0.0, x[j] + t * dir[j]);
          step[j] = x_new[j] - x[j];
        }
        const double slope = dot(cur.grad, step);
        if (!(slope < 0.0)) continue;
        raw_new = evaluate(x_new);
        trial = combine_merit(raw_new, mu);
        if (trial.merit <= cur.merit + cfg.armijo_c1 * slope) {
          accepted = true;
          last_step = t;
          break;
        }
      }
      if (!accepted) {
        if (steepest) break;
        steepest = true;
      }
    }
    if (!accepted) {
      status = SolveStatus::LineSearchFailure;
      record(iter, pg, true);
      break;
    }

    std::vector<double> y(n);
    for (std::size_t j = 0; j < n; ++j) y[j] = trial.grad[j] - cur.grad[j];
    const double sy = dot(step, y);
    if (sy > 1e-10 * norm2(step) * norm2(y)) {
      memory.push_back({step, std::move(y), 1.0 / sy});
      if (memory.size() > cfg.lbfgs_memory) memory.pop_front();
    }
    x = x_new;
    raw = std::move(raw_new);
    cur = std::move(trial);
    ++iter;

    if (has_constraints && iter - window_start >= cfg.penalty_window) {
      if (cur.max_violation > cfg.violation_tolerance && cur.max_violation > 0.5 * window_violation) {
        raise_penalty();
      }
      window_violation = cur.max_violation;
      window_start = iter;
    }
  }

  result.x = std::move(x);
  result.status = status;
  result.merit = cur.merit;
  result.objective = cur.objective;
  result.max_violation = cur.max_violation;
  result.penalty = mu;
  result.iterations = iter;
  result.solver_seconds = clock.solver_seconds();
  result.eval_seconds = clock.eval_seconds();
  result.wall_seconds = clock.wall_seconds();
  return result;
}

void write_iteration_log_csv(std::ostream& out, std::span<const IterationLog> log) {
  out << "iteration,merit,objective,max_violation,projected_grad_norm,penalty,step,evaluations,"
         "eval_seconds,solver_seconds_total,eval_seconds_total\n";
  char buf[512];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%llu,%.6f,%.6f,%.6f\n",
                  static_cast<unsigned long long>(r.iteration), r.merit, r.objective, r.max_violation,
                  r.projected_grad_norm, r.penalty, r.step, static_cast<unsigned long long>(r.evaluations),
                  r.eval_seconds, r.solver_seconds_total, r.eval_seconds_total);
    out << buf;
  }
}

}  // namespace rtopt
