#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "rtopt/error.hpp"
#include "rtopt/wire.hpp"
#include "support.hpp"

using namespace rtopt;
using namespace rtopt::wire;
using namespace rtopt::testing;

namespace {

Message round_trip(const Message& m) {
  const auto frame = encode(m);
  const auto header = decode_header(frame);
  REQUIRE(header.has_value());
  CHECK(header->first == tag_of(m));
  CHECK(header->second == frame.size() - kFrameHeaderSize);
  return decode(header->first, std::span(frame).subspan(kFrameHeaderSize));
}

}  // namespace

TEST_CASE("eval request layout") {
  const EvalRequest req{Phase::Constraints, true, false, {1.5, -2.0}};
  const auto frame = encode(req);
  REQUIRE(frame.size() == 5 + 3 + 8 + 16);
  std::uint32_t len = 0;
  std::memcpy(&len, frame.data(), 4);
  CHECK(len == 3 + 8 + 16);
  CHECK(frame[4] == 1);
  CHECK(frame[5] == 1);
  CHECK(frame[6] == 1);
  CHECK(frame[7] == 0);
  std::uint64_t n = 0;
  std::memcpy(&n, frame.data() + 8, 8);
  CHECK(n == 2);
  double x0 = 0.0;
  std::memcpy(&x0, frame.data() + 16, 8);
  CHECK(x0 == 1.5);
  CHECK(std::get<EvalRequest>(round_trip(req)) == req);
}

TEST_CASE("done request carries no x") {
  const EvalRequest done{Phase::Objective, false, true, {}};
  const auto frame = encode(done);
  CHECK(frame.size() == 5 + 3 + 8);
  CHECK(std::get<EvalRequest>(round_trip(done)) == done);
}

TEST_CASE("every message kind round trips") {
  const PartialObjective po{3.25, true, {1.0, -0.0, 2.0}};
  const auto po_back = std::get<PartialObjective>(round_trip(po));
  CHECK(po_back == po);
  CHECK(std::signbit(po_back.grad[1]));
  const PartialObjective po_nograd{-1.0, false, {}};
  CHECK(std::get<PartialObjective>(round_trip(po_nograd)) == po_nograd);

  PartialConstraints pc;
  pc.entries.push_back({4, -0.5, true, {{0, 1.0}, {7, 2.5}}});
  pc.entries.push_back({9, 0.25, false, {}});
  CHECK(std::get<PartialConstraints>(round_trip(pc)) == pc);
  CHECK(std::get<PartialConstraints>(round_trip(PartialConstraints{})) == PartialConstraints{});

  const ErrorReply err{2, 17, "generalized mean: zero dose with exponent 0.5"};
  CHECK(std::get<ErrorReply>(round_trip(err)) == err);
  CHECK(std::holds_alternative<Ready>(round_trip(Ready{})));

  Handshake hs;
  for (std::size_t i = 0; i < 32; ++i) hs.problem_hash[i] = static_cast<std::uint8_t>(i * 7);
  hs.worker_id = 1;
  hs.assignment.num_workers = 2;
  hs.assignment.objectives = {{0, 1, 1}, {5, 9}};
  hs.assignment.constraints = {{1}, {0, 3}};
  CHECK(std::get<Handshake>(round_trip(hs)) == hs);

  TimingReport tr;
  tr.timing = {0.5, 0.25, 1.5, 3.0, 11, 7};
  const auto tr_back = std::get<TimingReport>(round_trip(tr));
  CHECK(tr_back.timing.matvec_seconds == 0.5);
  CHECK(tr_back.timing.wall_seconds == 3.0);
  CHECK(tr_back.timing.constraint_requests == 7);
}

TEST_CASE("malformed payloads are parse errors") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  auto frame = encode(EvalRequest{Phase::Objective, true, false, {1, 2, 3}});
  const std::span payload = std::span(frame).subspan(kFrameHeaderSize);
  CHECK(code_of([&] { decode(Tag::EvalRequest, payload.first(payload.size() - 1)); }) == ErrorCode::ParseError);
  std::vector<std::uint8_t> bad_phase(payload.begin(), payload.end());
  bad_phase[0] = 9;
  CHECK(code_of([&] { decode(Tag::EvalRequest, bad_phase); }) == ErrorCode::ParseError);
  std::vector<std::uint8_t> trailing(payload.begin(), payload.end());
  trailing.push_back(0);
  CHECK(code_of([&] { decode(Tag::EvalRequest, trailing); }) == ErrorCode::ParseError);

  const std::vector<std::uint8_t> unknown_tag{0, 0, 0, 0, 42};
  CHECK(code_of([&] { decode_header(unknown_tag); }) == ErrorCode::ParseError);
  CHECK_FALSE(decode_header(std::span(unknown_tag).first(4)).has_value());

  PartialConstraints pc;
  pc.entries.push_back({0, 1.0, true, {{0, 1.0}}});
  auto pc_frame = encode(pc);
  CHECK(code_of([&] {
          decode(Tag::PartialConstraints, std::span(pc_frame).subspan(kFrameHeaderSize, pc_frame.size() - 9));
        }) == ErrorCode::ParseError);
}

TEST_CASE("property: sparsify and densify are inverse on dense rows") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = uniform_int(rng, 0, 40);
    std::vector<double> dense(n, 0.0);
    for (auto& v : dense) {
      const double u = uniform(rng, 0, 1);
      if (u < 0.3) v = uniform(rng, -5, 5);
      else if (u < 0.35) v = -0.0;
    }
    const auto sparse = sparsify(dense);
    const auto back = densify(sparse, n);
    REQUIRE(back.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::memcmp(&back[i], &dense[i], sizeof(double)) == 0);
    }
    for (const auto& [col, v] : sparse) CHECK(!(v == 0.0 && !std::signbit(v)));
  }
}
