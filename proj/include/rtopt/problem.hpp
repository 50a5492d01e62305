#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rtopt/sparse_matrix.hpp"

namespace rtopt {

enum class RoiKind { Target, OrganAtRisk, Other };

struct Roi {
  std::string name;
  RoiKind kind = RoiKind::Other;
  SparseMatrix matrix;  // rows = voxels of this ROI

  std::uint64_t voxel_count() const noexcept { return matrix.rows(); }
  friend bool operator==(const Roi&, const Roi&) = default;
};

// Per-kind parameters of one optimization function. Doses are in Gy.

struct LtcpParams {
  double alpha = 0.0;
  double ref_dose = 0.0;
  friend bool operator==(const LtcpParams&, const LtcpParams&) = default;
};

struct MinDosePenaltyParams {
  double ref_dose = 0.0;
  friend bool operator==(const MinDosePenaltyParams&, const MinDosePenaltyParams&) = default;
};

struct MaxDosePenaltyParams {
  double ref_dose = 0.0;
  friend bool operator==(const MaxDosePenaltyParams&, const MaxDosePenaltyParams&) = default;
};

struct MeanDoseParams {
  friend bool operator==(const MeanDoseParams&, const MeanDoseParams&) = default;
};

struct GeneralizedMeanParams {
  double exponent = 1.0;
  friend bool operator==(const GeneralizedMeanParams&, const GeneralizedMeanParams&) = default;
};

/// 0.5 x^T H x + b^T x + c, acting directly on the beamlet weights.
struct QuadraticParams {
  SparseMatrix hessian;
  std::vector<double> linear;
  double constant = 0.0;
  friend bool operator==(const QuadraticParams&, const QuadraticParams&) = default;
};

using TermParams = std::variant<LtcpParams, MinDosePenaltyParams, MaxDosePenaltyParams,
                                MeanDoseParams, GeneralizedMeanParams, QuadraticParams>;

enum class FunctionKind { Ltcp, MinDosePenalty, MaxDosePenalty, MeanDose, GeneralizedMean, Quadratic };

enum class TermRole { Objective, Constraint };

/**
 * One objective or constraint term.
 *
 * Objectives contribute weight * f(x) to the objective sum. Constraints are
 * enforced as f(x) - rhs <= 0. Quadratic terms carry no ROI.
 */
struct FunctionSpec {
  std::optional<std::size_t> roi;
  TermParams params;
  TermRole role = TermRole::Objective;
  double weight = 1.0;
  double rhs = 0.0;

  FunctionKind kind() const noexcept { return static_cast<FunctionKind>(params.index()); }
  friend bool operator==(const FunctionSpec&, const FunctionSpec&) = default;
};

struct TreatmentProblem {
  std::uint64_t num_vars = 0;
  std::vector<Roi> rois;
  std::vector<FunctionSpec> objectives;
  std::vector<FunctionSpec> constraints;

  friend bool operator==(const TreatmentProblem&, const TreatmentProblem&) = default;
};

std::string_view to_string(RoiKind kind);
std::string_view to_string(FunctionKind kind);
std::optional<RoiKind> parse_roi_kind(std::string_view s);
std::optional<FunctionKind> parse_function_kind(std::string_view s);

/// Throws ValidationError naming the first broken invariant.
void validate(const TreatmentProblem& problem);

/// The matrix whose nonzeros a term touches: the ROI matrix, or the Quadratic hessian.
const SparseMatrix& term_matrix(const TreatmentProblem& problem, const FunctionSpec& spec);

/// Work estimate used for load balancing.
std::uint64_t term_nnz(const TreatmentProblem& problem, const FunctionSpec& spec);

FunctionSpec make_objective(std::optional<std::size_t> roi, TermParams params, double weight);
FunctionSpec make_constraint(std::optional<std::size_t> roi, TermParams params, double rhs);

}  // namespace rtopt
