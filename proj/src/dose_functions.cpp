#include "rtopt/dose_functions.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "rtopt/error.hpp"

namespace rtopt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

constexpr double kMaxExponent = 700.0;

void check_nonempty(std::span<const double> d, const char* what) {
  if (d.empty()) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " needs at least one voxel");
}

void check_grad_size(std::span<const double> d, std::span<double> grad_d) {
  if (!grad_d.empty() && grad_d.size() != d.size()) {
    throw Error(ErrorCode::DimensionMismatch, "dose gradient buffer has wrong length");
  }
}

/// Applies a dose-level function through d = A x.
template <typename DoseFn>
FunctionValueGrad through_dose(const SparseMatrix& a, std::span<const double> x, bool want_grad,
                               EvalProfile* profile, DoseFn&& fn) {
  auto t0 = Clock::now();
  std::vector<double> d = matvec(a, x);
  if (profile) profile->matvec_seconds += seconds_since(t0);

  t0 = Clock::now();
  std::vector<double> grad_d(want_grad ? d.size() : 0);
  FunctionValueGrad out;
  out.value = fn(std::span<const double>(d), std::span<double>(grad_d));
  if (profile) profile->function_seconds += seconds_since(t0);

  if (want_grad) {
    t0 = Clock::now();
    out.grad = matvec_transpose(a, grad_d);
    if (profile) profile->matvec_seconds += seconds_since(t0);
  }
  return out;
}

FunctionValueGrad quadratic_impl(const QuadraticParams& q, std::span<const double> x, bool want_grad,
                                 EvalProfile* profile) {
  if (x.size() != q.hessian.cols() || q.hessian.rows() != q.hessian.cols() || q.linear.size() != x.size()) {
    throw Error(ErrorCode::DimensionMismatch, "quadratic term does not match x length");
  }
  auto t0 = Clock::now();
  const std::vector<double> hx = matvec(q.hessian, x);
  std::vector<double> htx;
  if (want_grad) htx = matvec_transpose(q.hessian, x);
  if (profile) profile->matvec_seconds += seconds_since(t0);

  t0 = Clock::now();
  FunctionValueGrad out;
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    quad += x[j] * hx[j];
    lin += q.linear[j] * x[j];
  }
  out.value = 0.5 * quad + lin + q.constant;
  if (want_grad) {
    out.grad.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out.grad[j] = 0.5 * (hx[j] + htx[j]) + q.linear[j];
  }
  if (profile) profile->function_seconds += seconds_since(t0);
  return out;
}

std::string term_label(const FunctionSpec& spec, std::size_t index) {
  return std::string(spec.role == TermRole::Objective ? "objective " : "constraint ") + std::to_string(index) +
         " (" + std::string(to_string(spec.kind())) + ")";
}

}  // namespace

namespace dose {

double ltcp(std::span<const double> d, const LtcpParams& p, std::span<double> grad_d) {
  check_nonempty(d, "LTCP");
  check_grad_size(d, grad_d);
  const double n = static_cast<double>(d.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double arg = -p.alpha * (d[i] - p.ref_dose);
    if (!(arg <= kMaxExponent)) {
      throw Error(ErrorCode::Overflow, "LTCP exponent " + std::to_string(arg) + " at voxel " + std::to_string(i) +
                                           " exceeds " + std::to_string(kMaxExponent));
    }
    const double e = std::exp(arg);
    sum += e;
    if (!grad_d.empty()) grad_d[i] = -p.alpha / n * e;
  }
  return sum / n;
}

double min_dose_penalty(std::span<const double> d, const MinDosePenaltyParams& p, std::span<double> grad_d) {
  check_nonempty(d, "min dose penalty");
  check_grad_size(d, grad_d);
  const double n = static_cast<double>(d.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = std::min(d[i] - p.ref_dose, 0.0);
    sum += t * t;
    if (!grad_d.empty()) grad_d[i] = 2.0 / n * t;
  }
  return sum / n;
}

double max_dose_penalty(std::span<const double> d, const MaxDosePenaltyParams& p, std::span<double> grad_d) {
  check_nonempty(d, "max dose penalty");
  check_grad_size(d, grad_d);
  const double n = static_cast<double>(d.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = std::max(d[i] - p.ref_dose, 0.0);
    sum += t * t;
    if (!grad_d.empty()) grad_d[i] = 2.0 / n * t;
  }
  return sum / n;
}

double mean_dose(std::span<const double> d, std::span<double> grad_d) {
  check_nonempty(d, "mean dose");
  check_grad_size(d, grad_d);
  const double n = static_cast<double>(d.size());
  double sum = 0.0;
  for (double di : d) sum += di;
  for (double& g : grad_d) g = 1.0 / n;
  return sum / n;
}

double generalized_mean(std::span<const double> d, const GeneralizedMeanParams& p, std::span<double> grad_d) {
  check_nonempty(d, "generalized mean");
  check_grad_size(d, grad_d);
  const double a = p.exponent;
  if (a == 0.0) throw Error(ErrorCode::DomainError, "generalized mean exponent must be nonzero");
  const double n = static_cast<double>(d.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 0.0 || (a < 1.0 && d[i] == 0.0) || std::isnan(d[i])) {
      throw Error(ErrorCode::DomainError, "generalized mean with exponent " + std::to_string(a) +
                                              " undefined at dose " + std::to_string(d[i]) + " (voxel " +
                                              std::to_string(i) + ")");
    }
    sum += std::pow(d[i], a);
  }
  const double s = sum / n;
  if (s == 0.0) {
    // All doses zero with a >= 1: the minimum of a nonnegative convex function, so 0 is a subgradient.
    for (double& g : grad_d) g = 0.0;
    return 0.0;
  }
  const double value = std::pow(s, 1.0 / a);
  if (!grad_d.empty()) {
    const double outer = std::pow(s, 1.0 / a - 1.0) / n;
    for (std::size_t i = 0; i < d.size(); ++i) grad_d[i] = outer * std::pow(d[i], a - 1.0);
  }
  return value;
}

}  // namespace dose

FunctionValueGrad eval_ltcp(const SparseMatrix& a, const LtcpParams& p, std::span<const double> x, bool want_grad) {
  return through_dose(a, x, want_grad, nullptr, [&](auto d, auto g) { return dose::ltcp(d, p, g); });
}

FunctionValueGrad eval_min_dose_penalty(const SparseMatrix& a, const MinDosePenaltyParams& p,
                                        std::span<const double> x, bool want_grad) {
  return through_dose(a, x, want_grad, nullptr, [&](auto d, auto g) { return dose::min_dose_penalty(d, p, g); });
}

FunctionValueGrad eval_max_dose_penalty(const SparseMatrix& a, const MaxDosePenaltyParams& p,
                                        std::span<const double> x, bool want_grad) {
  return through_dose(a, x, want_grad, nullptr, [&](auto d, auto g) { return dose::max_dose_penalty(d, p, g); });
}

FunctionValueGrad eval_mean_dose(const SparseMatrix& a, std::span<const double> x, bool want_grad) {
  return through_dose(a, x, want_grad, nullptr, [&](auto d, auto g) { return dose::mean_dose(d, g); });
}

FunctionValueGrad eval_generalized_mean(const SparseMatrix& a, const GeneralizedMeanParams& p,
                                        std::span<const double> x, bool want_grad) {
  return through_dose(a, x, want_grad, nullptr, [&](auto d, auto g) { return dose::generalized_mean(d, p, g); });
}

FunctionValueGrad eval_quadratic(const QuadraticParams& q, std::span<const double> x, bool want_grad) {
  return quadratic_impl(q, x, want_grad, nullptr);
}

FunctionValueGrad eval_term(const TreatmentProblem& problem, const FunctionSpec& spec, std::span<const double> x,
                            bool want_grad, EvalProfile* profile) {
  if (x.size() != problem.num_vars) {
    throw Error(ErrorCode::DimensionMismatch,
                "x has " + std::to_string(x.size()) + " entries, problem has " + std::to_string(problem.num_vars));
  }
  return std::visit(
      [&](const auto& params) -> FunctionValueGrad {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, QuadraticParams>) {
          return quadratic_impl(params, x, want_grad, profile);
        } else {
          const auto& a = problem.rois.at(spec.roi.value()).matrix;
          return through_dose(a, x, want_grad, profile, [&](auto d, auto g) {
            if constexpr (std::is_same_v<T, LtcpParams>) {
              return dose::ltcp(d, params, g);
            } else if constexpr (std::is_same_v<T, MinDosePenaltyParams>) {
              return dose::min_dose_penalty(d, params, g);
            } else if constexpr (std::is_same_v<T, MaxDosePenaltyParams>) {
              return dose::max_dose_penalty(d, params, g);
            } else if constexpr (std::is_same_v<T, MeanDoseParams>) {
              return dose::mean_dose(d, g);
            } else {
              return dose::generalized_mean(d, params, g);
            }
          });
        }
      },
      spec.params);
}

void accumulate_objective_terms(const TreatmentProblem& problem, std::span<const std::size_t> terms,
                                std::span<const double> x, bool want_grad, double& value, std::span<double> grad,
                                EvalProfile* profile, int worker_id) {
  if (want_grad && grad.size() != problem.num_vars) {
    throw Error(ErrorCode::DimensionMismatch, "objective gradient buffer has wrong length");
  }
  for (std::size_t t : terms) {
    const auto& spec = problem.objectives.at(t);
    FunctionValueGrad term;
    try {
      term = eval_term(problem, spec, x, want_grad, profile);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DimensionMismatch) throw;
      throw EvalError(worker_id, t, term_label(spec, t) + ": " + e.what());
    }
    value += spec.weight * term.value;
    if (want_grad) {
      for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += spec.weight * term.grad[j];
    }
  }
}

std::vector<ConstraintEntry> evaluate_constraint_terms(const TreatmentProblem& problem,
                                                       std::span<const std::size_t> terms,
                                                       std::span<const double> x, bool want_grad,
                                                       EvalProfile* profile, int worker_id) {
  std::vector<ConstraintEntry> out;
  out.reserve(terms.size());
  for (std::size_t t : terms) {
    const auto& spec = problem.constraints.at(t);
    FunctionValueGrad term;
    try {
      term = eval_term(problem, spec, x, want_grad, profile);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::DimensionMismatch) throw;
      throw EvalError(worker_id, t, term_label(spec, t) + ": " + e.what());
    }
    out.push_back({t, term.value - spec.rhs, std::move(term.grad)});
  }
  return out;
}

FunctionValueGrad eval_weighted_objective(const TreatmentProblem& problem, std::span<const double> x,
                                          bool want_grad) {
  std::vector<std::size_t> all(problem.objectives.size());
  std::iota(all.begin(), all.end(), 0);
  FunctionValueGrad out;
  if (want_grad) out.grad.assign(problem.num_vars, 0.0);
  accumulate_objective_terms(problem, all, x, want_grad, out.value, out.grad);
  return out;
}

ConstraintValues eval_constraints(const TreatmentProblem& problem, std::span<const double> x, bool want_grad) {
  std::vector<std::size_t> all(problem.constraints.size());
  std::iota(all.begin(), all.end(), 0);
  ConstraintValues out;
  for (auto& entry : evaluate_constraint_terms(problem, all, x, want_grad)) {
    out.values.push_back(entry.value);
    if (want_grad) out.jacobian.push_back(std::move(entry.grad));
  }
  return out;
}

}  // namespace rtopt
