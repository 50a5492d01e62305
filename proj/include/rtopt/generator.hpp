#pragma once

#include <cstdint>

#include "rtopt/problem.hpp"

namespace rtopt {

/// Synthetic problem settings. The seed fully determines the output.
struct GeneratorConfig {
  std::uint64_t num_vars = 200;
  std::uint64_t num_rois = 20;
  std::uint64_t nnz_min = 100;      // per-ROI nnz drawn log-uniform in [nnz_min, nnz_max]
  std::uint64_t nnz_max = 100000;
  std::uint64_t seed = 0;
  double fraction_constraints = 0.25;  // share of organs at risk that also get a constraint
  double dose_scale = 60.0;            // prescription dose of the target, Gy
  double ltcp_alpha = 0.25;
};

/**
 * Builds a problem whose dose matrices vary in size over orders of magnitude.
 *
 * ROI 0 is the target with an LTCP objective plus min- and max-dose penalty
 * constraints. Every other ROI is an organ at risk with a MeanDose or
 * GeneralizedMean (exponent >= 1) objective; a fraction of them also get a
 * MaxDosePenalty or MeanDose constraint. All matrix entries are positive and
 * each row sums to roughly 1, so a uniform x = s gives doses near s. Constraint
 * levels are loosened where needed so that the uniform plan delivering the
 * prescription on average satisfies every constraint.
 */
TreatmentProblem generate(const GeneratorConfig& cfg);

/// Throws ConfigError on an invalid configuration.
void validate(const GeneratorConfig& cfg);

}  // namespace rtopt
