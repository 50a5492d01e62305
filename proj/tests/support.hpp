#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "rtopt/problem.hpp"
#include "rtopt/sparse_matrix.hpp"

namespace rtopt::testing {

// Row-major dense reference used as an oracle for the sparse kernels.
struct Dense {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::vector<double> a;
  double& at(std::uint64_t r, std::uint64_t c) { return a[r * cols + c]; }
  double at(std::uint64_t r, std::uint64_t c) const { return a[r * cols + c]; }
};

inline Dense to_dense(const SparseMatrix& m) {
  Dense d{m.rows(), m.cols(), std::vector<double>(m.rows() * m.cols(), 0.0)};
  for (const auto& t : m.to_triplets().entries) d.at(t.row, t.col) += t.value;
  return d;
}

inline std::vector<double> dense_matvec(const Dense& d, std::span<const double> x) {
  std::vector<double> y(d.rows, 0.0);
  for (std::uint64_t r = 0; r < d.rows; ++r) {
    for (std::uint64_t c = 0; c < d.cols; ++c) y[r] += d.at(r, c) * x[c];
  }
  return y;
}

inline std::vector<double> dense_matvec_t(const Dense& d, std::span<const double> y) {
  std::vector<double> x(d.cols, 0.0);
  for (std::uint64_t r = 0; r < d.rows; ++r) {
    for (std::uint64_t c = 0; c < d.cols; ++c) x[c] += d.at(r, c) * y[r];
  }
  return x;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::uint64_t uniform_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return v;
}

/// Random matrix with roughly `density` of the entries set; values in [lo, hi).
inline SparseMatrix random_sparse(std::mt19937_64& rng, std::uint64_t rows, std::uint64_t cols, double density,
                                  double lo, double hi) {
  TripletList t{rows, cols, {}};
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      if (uniform(rng, 0.0, 1.0) < density) t.entries.push_back({r, c, uniform(rng, lo, hi)});
    }
  }
  return assemble(t);
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// ||a - b|| / max(||b||, floor), Euclidean norms.
inline double rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-300) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(diff) / std::max(norm2(b), floor);
}

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Central differences with h_j = rel_step * max(1, |x_j|).
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::span<const double> x, double rel_step = 1e-5) {
  std::vector<double> g(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    const double fp = f(xp);
    xp[j] = x[j] - h;
    const double fm = f(xp);
    xp[j] = x[j];
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Smallest |d_i - ref| over doses reachable by the finite-difference stencil around x.
inline double kink_distance(const SparseMatrix& a, std::span<const double> x, double ref, double rel_step = 1e-5) {
  const auto d = matvec(a, x);
  double reach = 0.0;
  for (double v : x) reach = std::max(reach, rel_step * std::max(1.0, std::abs(v)));
  double dist = INFINITY;
  for (std::uint64_t r = 0; r < a.rows(); ++r) {
    double row_reach = 0.0;
    const auto offs = a.row_offsets();
    for (auto k = offs[r]; k < offs[r + 1]; ++k) row_reach = std::max(row_reach, std::abs(a.values()[k]) * reach);
    dist = std::min(dist, std::abs(d[r] - ref) - row_reach);
  }
  return dist;
}

}  // namespace rtopt::testing
