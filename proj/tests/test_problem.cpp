#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "rtopt/byte_io.hpp"
#include "rtopt/error.hpp"
#include "rtopt/generator.hpp"
#include "rtopt/problem.hpp"
#include "rtopt/problem_io.hpp"
#include "support.hpp"

using namespace rtopt;
using namespace rtopt::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::EvalError;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Hand-built file: header, manifest, table of contents, then the raw blocks.
std::vector<std::uint8_t> build_file(const std::string& manifest, const std::vector<std::vector<std::uint8_t>>& blocks) {
  ByteWriter w;
  w.put_bytes(std::span(reinterpret_cast<const std::uint8_t*>("RTOPTPRB"), 8));
  w.put<std::uint32_t>(1);
  w.put<std::uint64_t>(manifest.size());
  w.put_string(manifest);
  w.put<std::uint64_t>(blocks.size());
  std::uint64_t offset = w.size() + 16 * blocks.size();
  for (const auto& b : blocks) {
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(b.size());
    offset += b.size();
  }
  for (const auto& b : blocks) w.put_bytes(b);
  return w.release();
}

std::vector<std::uint8_t> matrix_block(std::uint64_t rows, std::uint64_t cols, std::vector<std::uint64_t> offs,
                                       std::vector<std::uint32_t> idx, std::vector<double> vals) {
  ByteWriter w;
  w.put<std::uint64_t>(rows);
  w.put<std::uint64_t>(cols);
  w.put<std::uint64_t>(vals.size());
  for (auto o : offs) w.put<std::uint64_t>(o);
  for (auto c : idx) w.put<std::uint32_t>(c);
  for (auto v : vals) w.put<double>(v);
  return w.release();
}

TreatmentProblem all_kinds_problem() {
  std::mt19937_64 rng(5);
  TreatmentProblem p;
  p.num_vars = 6;
  p.rois.push_back({"PTV", RoiKind::Target, random_sparse(rng, 9, 6, 0.5, 0.1, 1.0)});
  p.rois.push_back({"Rectum", RoiKind::OrganAtRisk, random_sparse(rng, 5, 6, 0.5, 0.1, 1.0)});
  p.rois.push_back({"Ring", RoiKind::Other, assemble({3, 6, {}})});
  p.objectives.push_back(make_objective(0, LtcpParams{0.25, 60.1}, 1.0));
  p.objectives.push_back(make_objective(1, MeanDoseParams{}, 0.1));
  p.objectives.push_back(make_objective(1, GeneralizedMeanParams{8.0}, 1.0 / 3.0));
  p.objectives.push_back(make_objective(std::nullopt, QuadraticParams{random_sparse(rng, 6, 6, 0.3, -1, 1),
                                                                      random_vector(rng, 6, -1, 1), 0.1},
                                        2.0));
  p.constraints.push_back(make_constraint(0, MinDosePenaltyParams{57.0}, 9.0));
  p.constraints.push_back(make_constraint(0, MaxDosePenaltyParams{64.2}, 9.0));
  p.constraints.push_back(make_constraint(2, MeanDoseParams{}, 0.1 + 0.2));
  return p;
}

}  // namespace

TEST_CASE("minimal hand-written file loads") {
  const std::string manifest =
      "# minimal\n"
      "num_vars 2\n"
      "roi name=PTV kind=target voxels=2 matrix=0\n"
      "objective kind=mean_dose roi=PTV weight=1\n";
  const auto bytes = build_file(manifest, {matrix_block(2, 2, {0, 1, 3}, {0, 0, 1}, {1.0, 0.5, 0.25})});
  const auto p = deserialize_problem(bytes);
  CHECK(p.num_vars == 2);
  REQUIRE(p.rois.size() == 1);
  CHECK(p.rois[0].name == "PTV");
  CHECK(p.rois[0].kind == RoiKind::Target);
  CHECK(p.rois[0].voxel_count() == 2);
  CHECK(p.objectives.size() == 1);
  CHECK(p.objectives[0].kind() == FunctionKind::MeanDose);
  CHECK(p.constraints.empty());
  CHECK(to_dense(p.rois[0].matrix).a == std::vector<double>{1.0, 0.0, 0.5, 0.25});
}

TEST_CASE("matrix width different from num_vars names the ROI") {
  const std::string manifest =
      "num_vars 3\n"
      "roi name=Bladder kind=organ_at_risk voxels=1 matrix=0\n"
      "objective kind=mean_dose roi=Bladder weight=1\n";
  const auto bytes = build_file(manifest, {matrix_block(1, 2, {0, 1}, {0}, {1.0})});
  CHECK(code_of([&] { deserialize_problem(bytes); }) == ErrorCode::ValidationError);
  CHECK(message_of([&] { deserialize_problem(bytes); }).find("Bladder") != std::string::npos);
}

TEST_CASE("parse errors carry a location") {
  const auto block = matrix_block(1, 1, {0, 1}, {0}, {1.0});
  auto good = build_file("num_vars 1\nroi name=A kind=target voxels=1 matrix=0\nobjective kind=mean_dose roi=A weight=1\n",
                         {block});
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(code_of([&] { deserialize_problem(bad_magic); }) == ErrorCode::ParseError);
  CHECK(message_of([&] { deserialize_problem(bad_magic); }).find("byte offset 0") != std::string::npos);

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  CHECK(code_of([&] { deserialize_problem(truncated); }) == ErrorCode::ParseError);

  const auto unknown_field =
      build_file("num_vars 1\nroi name=A kind=target voxels=1 matrix=0 colour=red\nobjective kind=mean_dose roi=A weight=1\n",
                 {block});
  CHECK(message_of([&] { deserialize_problem(unknown_field); }).find("manifest line 2") != std::string::npos);

  const auto bad_kind =
      build_file("num_vars 1\nroi name=A kind=target voxels=1 matrix=0\nobjective kind=banana roi=A weight=1\n", {block});
  CHECK(code_of([&] { deserialize_problem(bad_kind); }) == ErrorCode::ParseError);

  const auto bad_number =
      build_file("num_vars 1\nroi name=A kind=target voxels=1 matrix=0\nobjective kind=mean_dose roi=A weight=one\n",
                 {block});
  CHECK(code_of([&] { deserialize_problem(bad_number); }) == ErrorCode::ParseError);

  const auto missing_block =
      build_file("num_vars 1\nroi name=A kind=target voxels=1 matrix=3\nobjective kind=mean_dose roi=A weight=1\n",
                 {block});
  CHECK(code_of([&] { deserialize_problem(missing_block); }) == ErrorCode::ParseError);

  const auto voxel_mismatch =
      build_file("num_vars 1\nroi name=A kind=target voxels=4 matrix=0\nobjective kind=mean_dose roi=A weight=1\n",
                 {block});
  CHECK(code_of([&] { deserialize_problem(voxel_mismatch); }) == ErrorCode::ValidationError);

  const auto corrupt_matrix = build_file(
      "num_vars 2\nroi name=A kind=target voxels=1 matrix=0\nobjective kind=mean_dose roi=A weight=1\n",
      {matrix_block(1, 2, {0, 2}, {1, 0}, {1.0, 1.0})});
  CHECK_THROWS_AS(deserialize_problem(corrupt_matrix), Error);
}

TEST_CASE("validation rules") {
  auto p = all_kinds_problem();
  CHECK_NOTHROW(validate(p));

  auto no_objective = p;
  no_objective.objectives.clear();
  CHECK(code_of([&] { validate(no_objective); }) == ErrorCode::ValidationError);

  auto zero_weight = p;
  zero_weight.objectives[1].weight = 0.0;
  CHECK(code_of([&] { validate(zero_weight); }) == ErrorCode::ValidationError);

  auto bad_rhs = p;
  bad_rhs.constraints[0].rhs = INFINITY;
  CHECK(code_of([&] { validate(bad_rhs); }) == ErrorCode::ValidationError);

  auto dup = p;
  dup.rois[1].name = "PTV";
  CHECK(code_of([&] { validate(dup); }) == ErrorCode::ValidationError);

  auto zero_exponent = p;
  zero_exponent.objectives[2].params = GeneralizedMeanParams{0.0};
  CHECK(code_of([&] { validate(zero_exponent); }) == ErrorCode::ValidationError);

  auto quadratic_with_roi = p;
  quadratic_with_roi.objectives[3].roi = 0;
  CHECK(code_of([&] { validate(quadratic_with_roi); }) == ErrorCode::ValidationError);

  auto missing_roi = p;
  missing_roi.objectives[1].roi.reset();
  CHECK(code_of([&] { validate(missing_roi); }) == ErrorCode::ValidationError);

  auto dangling_roi = p;
  dangling_roi.objectives[1].roi = 17;
  CHECK(code_of([&] { validate(dangling_roi); }) == ErrorCode::ValidationError);

  auto wrong_role = p;
  wrong_role.constraints[0].role = TermRole::Objective;
  CHECK(code_of([&] { validate(wrong_role); }) == ErrorCode::ValidationError);

  auto bad_hessian = p;
  std::get<QuadraticParams>(bad_hessian.objectives[3].params).hessian = assemble({5, 6, {}});
  CHECK(code_of([&] { validate(bad_hessian); }) == ErrorCode::ValidationError);
}

TEST_CASE("round trips preserve every field bit for bit") {
  SUBCASE("all kinds") {
    const auto p = all_kinds_problem();
    CHECK(deserialize_problem(serialize_problem(p)) == p);
  }
  SUBCASE("no constraints") {
    auto p = all_kinds_problem();
    p.constraints.clear();
    CHECK(deserialize_problem(serialize_problem(p)) == p);
  }
  SUBCASE("zero-nnz matrix") {
    TreatmentProblem p;
    p.num_vars = 4;
    p.rois.push_back({"Empty", RoiKind::Other, assemble({2, 4, {}})});
    p.objectives.push_back(make_objective(0, MeanDoseParams{}, 1.0));
    CHECK(deserialize_problem(serialize_problem(p)) == p);
  }
  SUBCASE("awkward doubles") {
    auto p = all_kinds_problem();
    p.objectives[0].params = LtcpParams{std::nextafter(0.25, 1.0), 5e-324};
    p.objectives[1].weight = 0.1 + 0.2;
    p.constraints[0].rhs = -0.0;
    const auto back = deserialize_problem(serialize_problem(p));
    CHECK(back == p);
    CHECK(std::signbit(back.constraints[0].rhs));
  }
  SUBCASE("generated problem through a file") {
    GeneratorConfig cfg;
    cfg.seed = 3;
    cfg.nnz_max = 5000;
    const auto p = generate(cfg);
    const auto path = std::filesystem::temp_directory_path() / "rtopt_test_roundtrip.bin";
    save_problem(p, path);
    CHECK(load_problem(path) == p);
    std::filesystem::remove(path);
  }
}

TEST_CASE("names that would break the manifest are rejected") {
  auto p = all_kinds_problem();
  p.rois[0].name = "two words";
  CHECK_THROWS_AS(serialize_problem(p), Error);
  p.rois[0].name = "a=b";
  CHECK_THROWS_AS(serialize_problem(p), Error);
}

TEST_CASE("missing file is an IoError") {
  CHECK(code_of([] { load_problem("/nonexistent/dir/problem.bin"); }) == ErrorCode::IoError);
}

TEST_CASE("vector files") {
  const std::vector<double> v{1.0, -0.0, 1e-300, 3.5};
  const auto path = std::filesystem::temp_directory_path() / "rtopt_test_vector.bin";
  save_vector(v, path);
  const auto back = load_vector(path);
  CHECK(back == v);
  CHECK(std::signbit(back[1]));
  const auto bytes = read_file(path);
  CHECK(bytes.size() == 8 + 8 * v.size());
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  CHECK(n == v.size());
  std::filesystem::remove(path);
}

TEST_CASE("problem hash follows content") {
  const auto p = all_kinds_problem();
  auto q = p;
  CHECK(problem_hash(p) == problem_hash(q));
  q.objectives[1].weight = std::nextafter(q.objectives[1].weight, 1.0);
  CHECK(problem_hash(p) != problem_hash(q));
}

TEST_CASE("generator: same seed gives identical bytes, other seeds differ") {
  GeneratorConfig cfg;
  cfg.seed = 9;
  cfg.nnz_max = 20000;
  CHECK(serialize_problem(generate(cfg)) == serialize_problem(generate(cfg)));
  auto other = cfg;
  other.seed = 10;
  CHECK(serialize_problem(generate(cfg)) != serialize_problem(generate(other)));
}

TEST_CASE("generator: fixed nnz range gives exact counts") {
  GeneratorConfig cfg;
  cfg.num_rois = 4;
  cfg.nnz_min = 100;
  cfg.nnz_max = 100;
  const auto p = generate(cfg);
  REQUIRE(p.rois.size() == 4);
  for (const auto& roi : p.rois) CHECK(roi.matrix.nnz() == 100);
}

TEST_CASE("generator: nnz spread covers two orders of magnitude") {
  GeneratorConfig cfg;
  cfg.num_rois = 40;
  cfg.nnz_min = 100;
  cfg.nnz_max = 100000;
  cfg.seed = 42;
  const auto p = generate(cfg);
  std::uint64_t lo = UINT64_MAX;
  std::uint64_t hi = 0;
  for (const auto& roi : p.rois) {
    lo = std::min<std::uint64_t>(lo, roi.matrix.nnz());
    hi = std::max<std::uint64_t>(hi, roi.matrix.nnz());
  }
  CHECK(static_cast<double>(hi) / static_cast<double>(lo) >= 100.0);
}

TEST_CASE("property: generated problems are valid, nonnegative and structured as documented") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.num_vars = 50 + seed * 7;
    cfg.num_rois = 2 + seed % 9;
    cfg.nnz_max = 30000;
    const auto p = generate(cfg);
    CHECK_NOTHROW(validate(p));
    CHECK(deserialize_problem(serialize_problem(p)) == p);
    CHECK(p.rois[0].kind == RoiKind::Target);
    CHECK(p.objectives[0].kind() == FunctionKind::Ltcp);
    bool has_min = false;
    bool has_max = false;
    for (const auto& c : p.constraints) {
      if (c.roi == 0u && c.kind() == FunctionKind::MinDosePenalty) has_min = true;
      if (c.roi == 0u && c.kind() == FunctionKind::MaxDosePenalty) has_max = true;
    }
    CHECK(has_min);
    CHECK(has_max);
    for (std::size_t r = 0; r < p.rois.size(); ++r) {
      const auto& roi = p.rois[r];
      CHECK(roi.matrix.nnz() >= cfg.nnz_min);
      CHECK(roi.matrix.nnz() <= cfg.nnz_max);
      const auto vals = roi.matrix.values();
      CHECK(std::all_of(vals.begin(), vals.end(), [](double v) { return v > 0.0; }));
      if (r > 0) CHECK(roi.kind == RoiKind::OrganAtRisk);
    }
    for (std::size_t i = 1; i < p.objectives.size(); ++i) {
      const auto k = p.objectives[i].kind();
      CHECK((k == FunctionKind::MeanDose || k == FunctionKind::GeneralizedMean));
      if (k == FunctionKind::GeneralizedMean) CHECK(std::get<GeneralizedMeanParams>(p.objectives[i].params).exponent >= 1.0);
    }
  }
}

TEST_CASE("generator rejects invalid configurations") {
  auto bad = [](auto mutate) {
    GeneratorConfig cfg;
    mutate(cfg);
    return code_of([&] { generate(cfg); });
  };
  CHECK(bad([](GeneratorConfig& c) { c.nnz_min = 0; }) == ErrorCode::ConfigError);
  CHECK(bad([](GeneratorConfig& c) { c.nnz_max = c.nnz_min - 1; }) == ErrorCode::ConfigError);
  CHECK(bad([](GeneratorConfig& c) { c.num_rois = 0; }) == ErrorCode::ConfigError);
  CHECK(bad([](GeneratorConfig& c) { c.num_vars = 0; }) == ErrorCode::ConfigError);
  CHECK(bad([](GeneratorConfig& c) { c.fraction_constraints = 1.5; }) == ErrorCode::ConfigError);
  CHECK(bad([](GeneratorConfig& c) { c.dose_scale = -1.0; }) == ErrorCode::ConfigError);
}

TEST_CASE("kind names round trip") {
  for (auto k : {RoiKind::Target, RoiKind::OrganAtRisk, RoiKind::Other}) CHECK(parse_roi_kind(to_string(k)) == k);
  for (int i = 0; i < 6; ++i) {
    const auto k = static_cast<FunctionKind>(i);
    CHECK(parse_function_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_function_kind("ltcp2").has_value());
}
