#include "rtopt/plan_quality.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "rtopt/error.hpp"
#include "rtopt/sparse_matrix.hpp"

namespace rtopt {

namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<std::vector<double>> roi_doses(const TreatmentProblem& problem, std::span<const double> x) {
  if (x.size() != problem.num_vars) {
    throw Error(ErrorCode::DimensionMismatch, "x has " + std::to_string(x.size()) + " entries, problem has " +
                                                  std::to_string(problem.num_vars) + " variables");
  }
  std::vector<std::vector<double>> doses;
  doses.reserve(problem.rois.size());
  for (const auto& roi : problem.rois) doses.push_back(matvec(roi.matrix, x));
  return doses;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

double volume_at_dose(std::span<const double> dose, double level) {
  if (dose.empty()) throw Error(ErrorCode::ValidationError, "volume_at_dose of an empty dose vector");
  std::size_t covered = 0;
  for (double d : dose) covered += d >= level ? 1 : 0;
  return static_cast<double>(covered) / static_cast<double>(dose.size());
}

DvhCurve dvh_curve(std::string roi_name, std::span<const double> dose, std::span<const double> grid) {
  if (dose.empty()) throw Error(ErrorCode::ValidationError, "ROI " + roi_name + " has no voxels");
  DvhCurve c;
  c.roi_name = std::move(roi_name);
  c.dose_grid.assign(grid.begin(), grid.end());
  c.volume_fraction.reserve(grid.size());
  std::vector<double> sorted(dose.begin(), dose.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (double level : grid) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), level) - sorted.begin();
    c.volume_fraction.push_back(static_cast<double>(sorted.size() - static_cast<std::size_t>(below)) / n);
  }
  return c;
}

std::vector<double> dose_grid(double upper, std::size_t points) {
  if (points < 2) throw Error(ErrorCode::ConfigError, "a dose grid needs at least 2 points");
  std::vector<double> g(points);
  const double step = upper / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) g[i] = step * static_cast<double>(i);
  g.back() = upper;
  return g;
}

std::vector<DvhCurve> dvh(const TreatmentProblem& problem, std::span<const double> x, std::size_t grid_points) {
  const auto doses = roi_doses(problem, x);
  double max_dose = 0.0;
  for (const auto& d : doses) {
    for (double v : d) max_dose = std::max(max_dose, v);
  }
  const double upper = max_dose > 0.0 ? 1.05 * max_dose : 1.0;
  const auto grid = dose_grid(upper, grid_points);
  std::vector<DvhCurve> curves;
  curves.reserve(doses.size());
  for (std::size_t r = 0; r < doses.size(); ++r) curves.push_back(dvh_curve(problem.rois[r].name, doses[r], grid));
  return curves;
}

std::vector<RoiMetrics> plan_metrics(const TreatmentProblem& problem, std::span<const double> x) {
  const auto doses = roi_doses(problem, x);
  std::vector<RoiMetrics> out;
  for (std::size_t r = 0; r < doses.size(); ++r) {
    const auto& d = doses[r];
    if (d.empty()) throw Error(ErrorCode::ValidationError, "ROI " + problem.rois[r].name + " has no voxels");
    RoiMetrics m;
    m.roi_name = problem.rois[r].name;
    const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
    m.min_dose = *lo;
    m.max_dose = *hi;
    double sum = 0.0;
    for (double v : d) sum += v;
    m.mean_dose = sum / static_cast<double>(d.size());
    out.push_back(std::move(m));
  }
  return out;
}

void write_dvh_csv(std::ostream& out, std::span<const LabeledCurves> plans) {
  out << "roi,dose,volume_fraction,plan_label\n";
  for (const auto& plan : plans) {
    for (const auto& c : plan.curves) {
      for (std::size_t i = 0; i < c.dose_grid.size(); ++i) {
        out << c.roi_name << ',' << fmt9(c.dose_grid[i]) << ',' << fmt9(c.volume_fraction[i]) << ','
            << plan.plan_label << '\n';
      }
    }
  }
}

void export_dvh_csv(std::span<const DvhCurve> curves, const std::string& plan_label,
                    const std::filesystem::path& path) {
  auto out = open_out(path);
  const LabeledCurves plan{plan_label, {curves.begin(), curves.end()}};
  write_dvh_csv(out, std::span(&plan, 1));
}

void export_dvh_comparison_csv(const LabeledCurves& a, const LabeledCurves& b, const std::filesystem::path& path) {
  auto out = open_out(path);
  const LabeledCurves both[] = {a, b};
  write_dvh_csv(out, both);
}

void write_metrics_csv(std::ostream& out, std::span<const RoiMetrics> metrics) {
  out << "roi,min_dose,max_dose,mean_dose\n";
  for (const auto& m : metrics) {
    out << m.roi_name << ',' << fmt9(m.min_dose) << ',' << fmt9(m.max_dose) << ',' << fmt9(m.mean_dose) << '\n';
  }
}

}  // namespace rtopt
