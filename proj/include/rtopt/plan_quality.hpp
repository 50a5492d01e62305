#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtopt/problem.hpp"

namespace rtopt {

struct DvhCurve {
  std::string roi_name;
  std::vector<double> dose_grid;        // Gy, ascending
  std::vector<double> volume_fraction;  // share of voxels with dose >= grid point
};

struct RoiMetrics {
  std::string roi_name;
  double min_dose = 0.0;
  double max_dose = 0.0;
  double mean_dose = 0.0;
};

/// Fraction of voxels receiving at least `level`. Throws ValidationError on an empty dose vector.
double volume_at_dose(std::span<const double> dose, double level);

/// DVH of one dose vector sampled on `grid`.
DvhCurve dvh_curve(std::string roi_name, std::span<const double> dose, std::span<const double> grid);

/// n points from 0 to `upper` inclusive.
std::vector<double> dose_grid(double upper, std::size_t points);

/// One curve per ROI on a shared grid reaching 1.05 times the largest dose of the plan.
std::vector<DvhCurve> dvh(const TreatmentProblem& problem, std::span<const double> x, std::size_t grid_points = 200);

std::vector<RoiMetrics> plan_metrics(const TreatmentProblem& problem, std::span<const double> x);

struct LabeledCurves {
  std::string plan_label;
  std::vector<DvhCurve> curves;
};

/// Columns roi,dose,volume_fraction,plan_label. Plans are written one after another.
void write_dvh_csv(std::ostream& out, std::span<const LabeledCurves> plans);
void export_dvh_csv(std::span<const DvhCurve> curves, const std::string& plan_label, const std::filesystem::path& path);

/// Two plans side by side in one file.
void export_dvh_comparison_csv(const LabeledCurves& a, const LabeledCurves& b, const std::filesystem::path& path);

void write_metrics_csv(std::ostream& out, std::span<const RoiMetrics> metrics);

}  // namespace rtopt
