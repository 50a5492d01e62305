#include "rtopt/problem.hpp"

#include <cmath>
#include <set>

#include "rtopt/error.hpp"

namespace rtopt {

std::string_view to_string(RoiKind kind) {
  switch (kind) {
    case RoiKind::Target: return "target";
    case RoiKind::OrganAtRisk: return "organ_at_risk";
    case RoiKind::Other: return "other";
  }
  return "other";
}

std::string_view to_string(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::Ltcp: return "ltcp";
    case FunctionKind::MinDosePenalty: return "min_dose_penalty";
    case FunctionKind::MaxDosePenalty: return "max_dose_penalty";
    case FunctionKind::MeanDose: return "mean_dose";
    case FunctionKind::GeneralizedMean: return "generalized_mean";
    case FunctionKind::Quadratic: return "quadratic";
  }
  return "unknown";
}

std::optional<RoiKind> parse_roi_kind(std::string_view s) {
  for (auto k : {RoiKind::Target, RoiKind::OrganAtRisk, RoiKind::Other}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<FunctionKind> parse_function_kind(std::string_view s) {
  for (auto k : {FunctionKind::Ltcp, FunctionKind::MinDosePenalty, FunctionKind::MaxDosePenalty,
                 FunctionKind::MeanDose, FunctionKind::GeneralizedMean, FunctionKind::Quadratic}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ValidationError, what); }

bool finite(double v) { return std::isfinite(v); }

void validate_term(const TreatmentProblem& p, const FunctionSpec& spec, TermRole expected,
                   const std::string& where) {
  if (spec.role != expected) invalid(where + ": role does not match the list it is in");
  if (spec.kind() == FunctionKind::Quadratic) {
    if (spec.roi) invalid(where + ": quadratic term must not reference an ROI");
    const auto& q = std::get<QuadraticParams>(spec.params);
    if (q.hessian.rows() != p.num_vars || q.hessian.cols() != p.num_vars) {
      invalid(where + ": quadratic matrix must be num_vars x num_vars");
    }
    if (q.linear.size() != p.num_vars) invalid(where + ": quadratic linear vector length != num_vars");
    for (double v : q.linear) {
      if (!finite(v)) invalid(where + ": quadratic linear vector not finite");
    }
    if (!finite(q.constant)) invalid(where + ": quadratic constant not finite");
  } else {
    if (!spec.roi) invalid(where + ": dose term requires an ROI");
    if (*spec.roi >= p.rois.size()) invalid(where + ": ROI index out of range");
    if (p.rois[*spec.roi].voxel_count() == 0) {
      invalid(where + ": ROI '" + p.rois[*spec.roi].name + "' has no voxels");
    }
  }
  std::visit(
      [&](const auto& params) {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, LtcpParams>) {
          if (!finite(params.alpha) || !finite(params.ref_dose)) invalid(where + ": LTCP params not finite");
        } else if constexpr (std::is_same_v<T, MinDosePenaltyParams> ||
                             std::is_same_v<T, MaxDosePenaltyParams>) {
          if (!finite(params.ref_dose)) invalid(where + ": penalty reference dose not finite");
        } else if constexpr (std::is_same_v<T, GeneralizedMeanParams>) {
          if (!finite(params.exponent) || params.exponent == 0.0) {
            invalid(where + ": generalized mean requires a finite nonzero exponent");
          }
          // The power mean is only defined on nonnegative doses.
          for (double v : p.rois[*spec.roi].matrix.values()) {
            if (v < 0.0) {
              invalid(where + ": generalized mean on ROI '" + p.rois[*spec.roi].name +
                      "' with negative matrix entries");
            }
          }
        }
      },
      spec.params);
  if (expected == TermRole::Objective) {
    if (!finite(spec.weight) || spec.weight <= 0.0) invalid(where + ": objective weight must be > 0");
  } else if (!finite(spec.rhs)) {
    invalid(where + ": constraint rhs must be finite");
  }
}

}  // namespace

void validate(const TreatmentProblem& p) {
  if (p.num_vars == 0) invalid("num_vars must be positive");
  std::set<std::string> names;
  for (const auto& roi : p.rois) {
    if (roi.name.empty()) invalid("ROI with empty name");
    if (!names.insert(roi.name).second) invalid("duplicate ROI name '" + roi.name + "'");
    if (roi.matrix.cols() != p.num_vars) {
      invalid("ROI '" + roi.name + "': matrix has " + std::to_string(roi.matrix.cols()) +
              " columns, num_vars is " + std::to_string(p.num_vars));
    }
  }
  if (p.objectives.empty()) invalid("problem needs at least one objective");
  for (std::size_t i = 0; i < p.objectives.size(); ++i) {
    validate_term(p, p.objectives[i], TermRole::Objective, "objective " + std::to_string(i));
  }
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    validate_term(p, p.constraints[i], TermRole::Constraint, "constraint " + std::to_string(i));
  }
}

const SparseMatrix& term_matrix(const TreatmentProblem& problem, const FunctionSpec& spec) {
  if (const auto* q = std::get_if<QuadraticParams>(&spec.params)) return q->hessian;
  return problem.rois.at(spec.roi.value()).matrix;
}

std::uint64_t term_nnz(const TreatmentProblem& problem, const FunctionSpec& spec) {
  return term_matrix(problem, spec).nnz();
}

FunctionSpec make_objective(std::optional<std::size_t> roi, TermParams params, double weight) {
  return FunctionSpec{roi, std::move(params), TermRole::Objective, weight, 0.0};
}

FunctionSpec make_constraint(std::optional<std::size_t> roi, TermParams params, double rhs) {
  return FunctionSpec{roi, std::move(params), TermRole::Constraint, 1.0, rhs};
}

}  // namespace rtopt
