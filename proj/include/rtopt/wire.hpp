#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rtopt/partitioner.hpp"
#include "rtopt/timing.hpp"

namespace rtopt::wire {

// Frame: u32 payload length, u8 tag, payload. Everything little-endian.
enum class Tag : std::uint8_t {
  EvalRequest = 1,
  PartialObjective = 2,
  PartialConstraints = 3,
  Error = 4,
  Ready = 5,
  Handshake = 6,
  TimingReport = 7,
};

enum class Phase : std::uint8_t { Objective = 0, Constraints = 1 };

inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::uint32_t kNoTerm = UINT32_MAX;

/// u8 phase, u8 want_grad, u8 done, u64 n, f64[n] x. A done request carries no x.
struct EvalRequest {
  Phase phase = Phase::Objective;
  bool want_grad = false;
  bool done = false;
  std::vector<double> x;
  friend bool operator==(const EvalRequest&, const EvalRequest&) = default;
};

/// f64 value, u8 has_grad, then f64[num_vars] grad if has_grad.
struct PartialObjective {
  double value = 0.0;
  bool has_grad = false;
  std::vector<double> grad;
  friend bool operator==(const PartialObjective&, const PartialObjective&) = default;
};

struct ConstraintRow {
  std::uint32_t index = 0;
  double value = 0.0;
  bool has_grad = false;
  std::vector<std::pair<std::uint32_t, double>> row;  // (col, value), ascending col
  friend bool operator==(const ConstraintRow&, const ConstraintRow&) = default;
};

/// u32 count, then per entry: u32 index, f64 value, u8 has_grad, u64 row_nnz, (u32 col, f64 val)[row_nnz].
struct PartialConstraints {
  std::vector<ConstraintRow> entries;
  friend bool operator==(const PartialConstraints&, const PartialConstraints&) = default;
};

/// u32 worker, u32 term (kNoTerm if not term-specific), utf-8 message filling the rest.
struct ErrorReply {
  std::uint32_t worker = 0;
  std::uint32_t term = kNoTerm;
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

/// Empty payload.
struct Ready {
  friend bool operator==(const Ready&, const Ready&) = default;
};

/// 32-byte problem hash, u32 worker id, u32 K, then for objectives and then constraints:
/// u32 count, u32 owner[count], u64 load[K].
struct Handshake {
  std::array<std::uint8_t, 32> problem_hash{};
  std::uint32_t worker_id = 0;
  WorkerAssignment assignment;
  friend bool operator==(const Handshake&, const Handshake&) = default;
};

/// f64 matvec, f64 function, f64 wait, f64 wall, u64 objective requests, u64 constraint requests.
struct TimingReport {
  WorkerTiming timing;
};

using Message = std::variant<EvalRequest, PartialObjective, PartialConstraints, ErrorReply, Ready, Handshake,
                             TimingReport>;

Tag tag_of(const Message& m);

/// Whole frame including the 5-byte header.
std::vector<std::uint8_t> encode(const Message& m);

/// Decodes a payload for the given tag. Throws ParseError on malformed input.
Message decode(Tag tag, std::span<const std::uint8_t> payload);

/// Header parse; nullopt if fewer than 5 bytes. Throws ParseError on an unknown tag.
std::optional<std::pair<Tag, std::uint32_t>> decode_header(std::span<const std::uint8_t> bytes);

/// Sparse row of the nonzero-bit-pattern entries of a dense row (so -0.0 survives).
std::vector<std::pair<std::uint32_t, double>> sparsify(std::span<const double> dense);
std::vector<double> densify(std::span<const std::pair<std::uint32_t, double>> row, std::uint64_t n);

}  // namespace rtopt::wire
