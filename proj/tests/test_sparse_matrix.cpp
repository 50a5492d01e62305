#include <doctest.h>

#include <random>

#include "rtopt/error.hpp"
#include "rtopt/sparse_matrix.hpp"
#include "support.hpp"

using namespace rtopt;
using namespace rtopt::testing;

namespace {

SparseMatrix example_2x2() { return assemble({2, 2, {{0, 0, 1.0}, {0, 1, 2.0}, {1, 1, 4.0}}}); }

}  // namespace

TEST_CASE("assemble sums duplicates") {
  const auto m = assemble({1, 1, {{0, 0, 1.0}, {0, 0, 2.0}}});
  CHECK(m.nnz() == 1);
  CHECK(m.values()[0] == 3.0);
}

TEST_CASE("empty matrix multiplies to zero") {
  const auto m = assemble({2, 2, {}});
  CHECK(m.nnz() == 0);
  CHECK(matvec(m, std::vector<double>{5.0, 6.0}) == std::vector<double>{0.0, 0.0});
  CHECK(matvec_transpose(m, std::vector<double>{5.0, 6.0}) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("assemble matches a dense reference") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    TripletList t{3, 3, {}};
    Dense ref{3, 3, std::vector<double>(9, 0.0)};
    for (std::uint64_t r = 0; r < 3; ++r) {
      for (std::uint64_t c = 0; c < 3; ++c) {
        if (uniform(rng, 0, 1) < 0.5) {
          const double v = uniform(rng, -1, 1);
          t.entries.push_back({r, c, v});
          ref.at(r, c) += v;
        }
      }
    }
    std::shuffle(t.entries.begin(), t.entries.end(), rng);
    CHECK(to_dense(assemble(t)).a == ref.a);
  }
}

TEST_CASE("assemble rejects out-of-range entries") {
  try {
    assemble({2, 2, {{0, 0, 1.0}, {2, 1, 1.0}}});
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
    CHECK(std::string(e.what()).find("(2, 1)") != std::string::npos);
  }
  CHECK_THROWS_AS(assemble({2, 2, {{0, 2, 1.0}}}), Error);
}

TEST_CASE("constructor enforces CSR invariants") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::EvalError;
  };
  CHECK(code_of([] { SparseMatrix(1, 2, {0, 2}, {1, 0}, {1.0, 1.0}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(1, 2, {0, 1}, {2}, {1.0}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(1, 2, {0, 1}, {0}, {NAN}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(1, 2, {0, 1}, {0}, {INFINITY}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(2, 2, {0, 1}, {0}, {1.0}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(2, 2, {1, 1, 1}, {0}, {1.0}); }) == ErrorCode::ValidationError);
  CHECK(code_of([] { SparseMatrix(2, 2, {0, 1, 0}, {0}, {1.0}); }) == ErrorCode::ValidationError);
  CHECK_NOTHROW(SparseMatrix(2, 2, {0, 1, 1}, {1}, {1.0}));
}

TEST_CASE("matvec examples") {
  CHECK(matvec(SparseMatrix::identity(2), std::vector<double>{3, 7}) == std::vector<double>{3, 7});
  CHECK(matvec(example_2x2(), std::vector<double>{1, 1}) == std::vector<double>{3, 4});
  CHECK(matvec(example_2x2(), std::vector<double>{1, 1}) == dense_matvec(to_dense(example_2x2()), std::vector<double>{1, 1}));
}

TEST_CASE("matvec_transpose examples") {
  CHECK(matvec_transpose(SparseMatrix::identity(2), std::vector<double>{1, 2}) == std::vector<double>{1, 2});
  CHECK(matvec_transpose(example_2x2(), std::vector<double>{1, 1}) == std::vector<double>{1, 6});
  CHECK(matvec_transpose(example_2x2(), std::vector<double>{0, 0}) == std::vector<double>{0, 0});
}

TEST_CASE("dimension mismatches are reported") {
  const auto m = example_2x2();
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::EvalError;
  };
  CHECK(code_of([&] { matvec(m, std::vector<double>{1, 2, 3}); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { matvec_transpose(m, std::vector<double>{1}); }) == ErrorCode::DimensionMismatch);
  std::vector<double> out(3);
  CHECK(code_of([&] { matvec(m, std::vector<double>{1, 2}, out); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("property: kernels agree with dense reference on small random matrices") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto rows = uniform_int(rng, 1, 8);
    const auto cols = uniform_int(rng, 1, 8);
    const auto a = random_sparse(rng, rows, cols, uniform(rng, 0.0, 1.0), -2.0, 2.0);
    const auto dense = to_dense(a);
    const auto x = random_vector(rng, cols, -3, 3);
    const auto y = random_vector(rng, rows, -3, 3);
    CHECK(rel_error(matvec(a, x), dense_matvec(dense, x), 1e-300) <= 1e-14);
    CHECK(rel_error(matvec_transpose(a, y), dense_matvec_t(dense, y), 1e-300) <= 1e-14);
  }
}

TEST_CASE("property: adjoint identity <Ax, y> = <x, A^T y>") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rows = uniform_int(rng, 1, 60);
    const auto cols = uniform_int(rng, 1, 60);
    const auto a = random_sparse(rng, rows, cols, 0.2, 0.0, 1.0);
    const auto x = random_vector(rng, cols, 0, 1);
    const auto y = random_vector(rng, rows, -1, 1);
    const auto ax = matvec(a, x);
    const auto aty = matvec_transpose(a, y);
    double lhs = 0.0;
    double rhs = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
      lhs += ax[i] * y[i];
      scale += std::abs(ax[i] * y[i]);
    }
    for (std::size_t j = 0; j < cols; ++j) rhs += x[j] * aty[j];
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(scale, 1e-300));
  }
}

TEST_CASE("property: assemble of to_triplets is the identity") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_sparse(rng, uniform_int(rng, 0, 10), uniform_int(rng, 1, 10), 0.3, -1.0, 1.0);
    CHECK(assemble(a.to_triplets()) == a);
  }
}

TEST_CASE("matvec is bit-stable across calls") {
  std::mt19937_64 rng(14);
  const auto a = random_sparse(rng, 200, 150, 0.1, 0.0, 1.0);
  const auto x = random_vector(rng, 150, 0, 1);
  const auto first = matvec(a, x);
  for (int i = 0; i < 5; ++i) CHECK(matvec(a, x) == first);
}

TEST_CASE("row_sums") {
  CHECK(row_sums(example_2x2()) == std::vector<double>{3.0, 4.0});
}
