#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rtopt/problem.hpp"
#include "rtopt/sparse_matrix.hpp"

namespace rtopt {

struct FunctionValueGrad {
  double value = 0.0;
  std::vector<double> grad;  // empty unless the gradient was requested
};

/// Time split of one or more term evaluations: dose products vs. the function of dose.
struct EvalProfile {
  double matvec_seconds = 0.0;
  double function_seconds = 0.0;
};

// Functions of the dose vector alone. When grad_d is non-empty it receives df/dd
// (same length as d).
namespace dose {

double ltcp(std::span<const double> d, const LtcpParams& p, std::span<double> grad_d);
double min_dose_penalty(std::span<const double> d, const MinDosePenaltyParams& p, std::span<double> grad_d);
double max_dose_penalty(std::span<const double> d, const MaxDosePenaltyParams& p, std::span<double> grad_d);
double mean_dose(std::span<const double> d, std::span<double> grad_d);
double generalized_mean(std::span<const double> d, const GeneralizedMeanParams& p, std::span<double> grad_d);

}  // namespace dose

// Each evaluates d = A x, the function of d, and (if asked) grad_x = A^T df/dd.

FunctionValueGrad eval_ltcp(const SparseMatrix& a, const LtcpParams& p, std::span<const double> x, bool want_grad);
FunctionValueGrad eval_min_dose_penalty(const SparseMatrix& a, const MinDosePenaltyParams& p,
                                        std::span<const double> x, bool want_grad);
FunctionValueGrad eval_max_dose_penalty(const SparseMatrix& a, const MaxDosePenaltyParams& p,
                                        std::span<const double> x, bool want_grad);
FunctionValueGrad eval_mean_dose(const SparseMatrix& a, std::span<const double> x, bool want_grad);
FunctionValueGrad eval_generalized_mean(const SparseMatrix& a, const GeneralizedMeanParams& p,
                                        std::span<const double> x, bool want_grad);
/// Gradient is 0.5 (H + H^T) x + b, so H need not be symmetric.
FunctionValueGrad eval_quadratic(const QuadraticParams& q, std::span<const double> x, bool want_grad);

/// Unweighted f(x) of one term; constraint rhs is not subtracted here.
FunctionValueGrad eval_term(const TreatmentProblem& problem, const FunctionSpec& spec, std::span<const double> x,
                            bool want_grad, EvalProfile* profile = nullptr);

/**
 * value += sum of w_i f_i(x) and grad += sum of w_i grad f_i(x) over `terms`, taken
 * in the given order. The serial path and every worker go through this, which is
 * what makes a single worker bit-identical to serial evaluation.
 *
 * Term failures are rethrown as EvalError tagged with worker_id and the term index.
 */
void accumulate_objective_terms(const TreatmentProblem& problem, std::span<const std::size_t> terms,
                                std::span<const double> x, bool want_grad, double& value,
                                std::span<double> grad, EvalProfile* profile = nullptr, int worker_id = -1);

struct ConstraintEntry {
  std::size_t index = 0;
  double value = 0.0;         // f_i(x) - rhs_i
  std::vector<double> grad;   // dense Jacobian row, empty unless requested
};

std::vector<ConstraintEntry> evaluate_constraint_terms(const TreatmentProblem& problem,
                                                       std::span<const std::size_t> terms,
                                                       std::span<const double> x, bool want_grad,
                                                       EvalProfile* profile = nullptr, int worker_id = -1);

FunctionValueGrad eval_weighted_objective(const TreatmentProblem& problem, std::span<const double> x,
                                          bool want_grad);

struct ConstraintValues {
  std::vector<double> values;                // g_i(x) = f_i(x) - rhs_i, <= 0 when satisfied
  std::vector<std::vector<double>> jacobian;  // one dense row per constraint when requested
};

ConstraintValues eval_constraints(const TreatmentProblem& problem, std::span<const double> x, bool want_grad);

}  // namespace rtopt
