#include "rtopt/generator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "rtopt/dose_functions.hpp"
#include "rtopt/error.hpp"

namespace rtopt {

namespace {

// Distributions built on raw mt19937_64 output, so results don't depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [lo, hi].
  std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    if (span == 0) return engine_();
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + v % span;
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t log_uniform(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  if (lo == hi) return lo;
  const double v = std::exp(rng.uniform(std::log(static_cast<double>(lo)), std::log(static_cast<double>(hi))));
  return std::clamp(static_cast<std::uint64_t>(std::llround(v)), lo, hi);
}

/// Floyd's sampling of `count` distinct columns out of [0, n), returned sorted.
std::vector<std::uint32_t> sample_columns(Rng& rng, std::uint64_t n, std::uint64_t count) {
  std::set<std::uint32_t> chosen;
  for (std::uint64_t j = n - count; j < n; ++j) {
    const auto t = static_cast<std::uint32_t>(rng.integer(0, j));
    if (!chosen.insert(t).second) chosen.insert(static_cast<std::uint32_t>(j));
  }
  return {chosen.begin(), chosen.end()};
}

SparseMatrix random_dose_matrix(Rng& rng, std::uint64_t num_vars, std::uint64_t nnz) {
  // Each voxel sees 1-10% of the beamlets; voxel count follows from nnz.
  const auto lo = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(0.01 * num_vars)));
  const auto hi = std::max<std::uint64_t>(lo, static_cast<std::uint64_t>(std::floor(0.1 * num_vars)));
  const auto per_row = std::min(rng.integer(lo, hi), num_vars);
  const auto rows = (nnz + per_row - 1) / per_row;
  const auto base = nnz / rows;
  const auto extra = nnz % rows;

  std::vector<std::uint64_t> offsets(rows + 1, 0);
  std::vector<std::uint32_t> cols;
  std::vector<double> values;
  cols.reserve(nnz);
  values.reserve(nnz);
  for (std::uint64_t r = 0; r < rows; ++r) {
    const auto count = base + (r < extra ? 1 : 0);
    for (auto c : sample_columns(rng, num_vars, count)) {
      cols.push_back(c);
      values.push_back(rng.uniform(0.5, 1.5) / static_cast<double>(count));
    }
    offsets[r + 1] = cols.size();
  }
  return SparseMatrix(rows, num_vars, std::move(offsets), std::move(cols), std::move(values));
}

std::string oar_name(std::uint64_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 2) digits.insert(0, 2 - digits.size(), '0');
  return "OAR_" + digits;
}

}  // namespace

void validate(const GeneratorConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
  if (cfg.num_vars == 0) fail("num_vars must be >= 1");
  if (cfg.num_vars > (std::uint64_t{1} << 32)) fail("num_vars exceeds 32-bit column index range");
  if (cfg.num_rois == 0) fail("num_rois must be >= 1");
  if (cfg.nnz_min < 1) fail("nnz_min must be >= 1");
  if (cfg.nnz_max < cfg.nnz_min) fail("nnz_max must be >= nnz_min");
  if (!(cfg.fraction_constraints >= 0.0 && cfg.fraction_constraints <= 1.0)) {
    fail("fraction_constraints must lie in [0, 1]");
  }
  if (!(std::isfinite(cfg.dose_scale) && cfg.dose_scale > 0.0)) fail("dose_scale must be positive");
  if (!std::isfinite(cfg.ltcp_alpha)) fail("ltcp_alpha must be finite");
}

TreatmentProblem generate(const GeneratorConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  TreatmentProblem p;
  p.num_vars = cfg.num_vars;

  for (std::uint64_t r = 0; r < cfg.num_rois; ++r) {
    const auto nnz = log_uniform(rng, cfg.nnz_min, cfg.nnz_max);
    Roi roi;
    roi.name = r == 0 ? "PTV" : oar_name(r);
    roi.kind = r == 0 ? RoiKind::Target : RoiKind::OrganAtRisk;
    roi.matrix = random_dose_matrix(rng, cfg.num_vars, nnz);
    p.rois.push_back(std::move(roi));
  }

  const double scale = cfg.dose_scale;
  // Squared-hinge tolerance for penalty constraints: RMS excursion of 5% of prescription.
  const double penalty_rhs = (0.05 * scale) * (0.05 * scale);

  p.objectives.push_back(make_objective(0, LtcpParams{cfg.ltcp_alpha, scale}, 1.0));
  p.constraints.push_back(make_constraint(0, MinDosePenaltyParams{0.95 * scale}, penalty_rhs));
  p.constraints.push_back(make_constraint(0, MaxDosePenaltyParams{1.07 * scale}, penalty_rhs));

  for (std::uint64_t r = 1; r < cfg.num_rois; ++r) {
    const double weight = rng.uniform(0.01, 0.1);
    if (rng.bernoulli(0.5)) {
      p.objectives.push_back(make_objective(r, MeanDoseParams{}, weight));
    } else {
      const double exponents[] = {2.0, 4.0, 8.0};
      p.objectives.push_back(make_objective(r, GeneralizedMeanParams{exponents[rng.integer(0, 2)]}, weight));
    }
    if (rng.bernoulli(cfg.fraction_constraints)) {
      if (rng.bernoulli(0.5)) {
        p.constraints.push_back(make_constraint(r, MaxDosePenaltyParams{rng.uniform(0.4, 0.7) * scale}, penalty_rhs));
      } else {
        p.constraints.push_back(make_constraint(r, MeanDoseParams{}, rng.uniform(0.3, 0.5) * scale));
      }
    }
  }

  // Loosen constraint levels where needed so the uniform plan at prescription satisfies them all.
  const auto target_rows = row_sums(p.rois[0].matrix);
  double mean_row = 0.0;
  for (double v : target_rows) mean_row += v / static_cast<double>(target_rows.size());
  const std::vector<double> x_ref(cfg.num_vars, scale / mean_row);
  for (auto& c : p.constraints) {
    const double at_ref = eval_term(p, c, x_ref, false).value;
    const double slack = c.kind() == FunctionKind::MeanDose ? 1.1 : 1.25;
    c.rhs = std::max(c.rhs, slack * at_ref);
  }
  validate(p);
  return p;
}

}  // namespace rtopt
