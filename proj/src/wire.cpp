#include "rtopt/wire.hpp"

#include <bit>
#include <limits>

#include "rtopt/byte_io.hpp"
#include "rtopt/error.hpp"

namespace rtopt::wire {

namespace {

void put_partition(ByteWriter& w, const Partition& p) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.owner.size()));
  w.put_array<std::uint32_t>(p.owner);
  w.put_array<std::uint64_t>(p.load);
}

Partition get_partition(ByteReader& r, std::uint32_t k) {
  Partition p;
  const auto count = r.get<std::uint32_t>();
  p.owner = r.get_array<std::uint32_t>(count);
  p.load = r.get_array<std::uint64_t>(k);
  return p;
}

void encode_payload(ByteWriter& w, const EvalRequest& m) {
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.phase));
  w.put<std::uint8_t>(m.want_grad);
  w.put<std::uint8_t>(m.done);
  w.put<std::uint64_t>(m.x.size());
  w.put_array<double>(m.x);
}

void encode_payload(ByteWriter& w, const PartialObjective& m) {
  w.put<double>(m.value);
  w.put<std::uint8_t>(m.has_grad);
  if (m.has_grad) w.put_array<double>(m.grad);
}

void encode_payload(ByteWriter& w, const PartialConstraints& m) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.entries.size()));
  for (const auto& e : m.entries) {
    w.put<std::uint32_t>(e.index);
    w.put<double>(e.value);
    w.put<std::uint8_t>(e.has_grad);
    w.put<std::uint64_t>(e.row.size());
    for (const auto& [col, val] : e.row) {
      w.put<std::uint32_t>(col);
      w.put<double>(val);
    }
  }
}

void encode_payload(ByteWriter& w, const ErrorReply& m) {
  w.put<std::uint32_t>(m.worker);
  w.put<std::uint32_t>(m.term);
  w.put_string(m.message);
}

void encode_payload(ByteWriter&, const Ready&) {}

void encode_payload(ByteWriter& w, const Handshake& m) {
  w.put_array<std::uint8_t>(m.problem_hash);
  w.put<std::uint32_t>(m.worker_id);
  w.put<std::uint32_t>(m.assignment.num_workers);
  put_partition(w, m.assignment.objectives);
  put_partition(w, m.assignment.constraints);
}

void encode_payload(ByteWriter& w, const TimingReport& m) {
  w.put<double>(m.timing.matvec_seconds);
  w.put<double>(m.timing.function_seconds);
  w.put<double>(m.timing.wait_seconds);
  w.put<double>(m.timing.wall_seconds);
  w.put<std::uint64_t>(m.timing.objective_requests);
  w.put<std::uint64_t>(m.timing.constraint_requests);
}

bool get_flag(ByteReader& r, const char* what) {
  const auto v = r.get<std::uint8_t>();
  if (v > 1) r.fail(std::string(what) + " flag");
  return v == 1;
}

}  // namespace

Tag tag_of(const Message& m) {
  static constexpr Tag tags[] = {Tag::EvalRequest, Tag::PartialObjective, Tag::PartialConstraints, Tag::Error,
                                 Tag::Ready,       Tag::Handshake,        Tag::TimingReport};
  return tags[m.index()];
}

std::vector<std::uint8_t> encode(const Message& m) {
  ByteWriter w;
  w.put<std::uint32_t>(0);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(tag_of(m)));
  std::visit([&](const auto& msg) { encode_payload(w, msg); }, m);
  const auto payload = w.size() - kFrameHeaderSize;
  if (payload > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::TransportError, "message payload exceeds 4 GiB frame limit");
  }
  w.patch<std::uint32_t>(0, static_cast<std::uint32_t>(payload));
  return w.release();
}

std::optional<std::pair<Tag, std::uint32_t>> decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize) return std::nullopt;
  ByteReader r(bytes.first(kFrameHeaderSize));
  const auto len = r.get<std::uint32_t>();
  const auto tag = r.get<std::uint8_t>();
  if (tag < 1 || tag > 7) throw Error(ErrorCode::ParseError, "unknown message tag " + std::to_string(tag));
  return std::make_pair(static_cast<Tag>(tag), len);
}

Message decode(Tag tag, std::span<const std::uint8_t> payload) {
  ByteReader r(payload, kFrameHeaderSize);
  Message out;
  switch (tag) {
    case Tag::EvalRequest: {
      EvalRequest m;
      const auto phase = r.get<std::uint8_t>();
      if (phase > 1) r.fail("phase");
      m.phase = static_cast<Phase>(phase);
      m.want_grad = get_flag(r, "want_grad");
      m.done = get_flag(r, "done");
      m.x = r.get_array<double>(r.get<std::uint64_t>());
      if (m.done && !m.x.empty()) r.fail("done request carrying x");
      out = std::move(m);
      break;
    }
    case Tag::PartialObjective: {
      PartialObjective m;
      m.value = r.get<double>();
      m.has_grad = get_flag(r, "has_grad");
      if (m.has_grad) {
        if (r.remaining() % sizeof(double) != 0) r.fail("gradient array");
        m.grad = r.get_array<double>(r.remaining() / sizeof(double));
      }
      out = std::move(m);
      break;
    }
    case Tag::PartialConstraints: {
      PartialConstraints m;
      const auto count = r.get<std::uint32_t>();
      for (std::uint32_t i = 0; i < count; ++i) {
        ConstraintRow e;
        e.index = r.get<std::uint32_t>();
        e.value = r.get<double>();
        e.has_grad = get_flag(r, "has_grad");
        const auto nnz = r.get<std::uint64_t>();
        if (nnz > r.remaining() / 12) r.fail("sparse row");
        e.row.reserve(nnz);
        for (std::uint64_t k = 0; k < nnz; ++k) {
          const auto col = r.get<std::uint32_t>();
          const auto val = r.get<double>();
          e.row.emplace_back(col, val);
        }
        m.entries.push_back(std::move(e));
      }
      out = std::move(m);
      break;
    }
    case Tag::Error: {
      ErrorReply m;
      m.worker = r.get<std::uint32_t>();
      m.term = r.get<std::uint32_t>();
      m.message = r.get_string(r.remaining());
      out = std::move(m);
      break;
    }
    case Tag::Ready:
      out = Ready{};
      break;
    case Tag::Handshake: {
      Handshake m;
      const auto hash = r.get_bytes(32);
      std::copy(hash.begin(), hash.end(), m.problem_hash.begin());
      m.worker_id = r.get<std::uint32_t>();
      m.assignment.num_workers = r.get<std::uint32_t>();
      m.assignment.objectives = get_partition(r, m.assignment.num_workers);
      m.assignment.constraints = get_partition(r, m.assignment.num_workers);
      out = std::move(m);
      break;
    }
    case Tag::TimingReport: {
      TimingReport m;
      m.timing.matvec_seconds = r.get<double>();
      m.timing.function_seconds = r.get<double>();
      m.timing.wait_seconds = r.get<double>();
      m.timing.wall_seconds = r.get<double>();
      m.timing.objective_requests = r.get<std::uint64_t>();
      m.timing.constraint_requests = r.get<std::uint64_t>();
      out = m;
      break;
    }
    default:
      throw Error(ErrorCode::ParseError, "unknown message tag");
  }
  if (!r.at_end()) r.fail("message (trailing bytes)");
  return out;
}

std::vector<std::pair<std::uint32_t, double>> sparsify(std::span<const double> dense) {
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t j = 0; j < dense.size(); ++j) {
    if (std::bit_cast<std::uint64_t>(dense[j]) != 0) row.emplace_back(static_cast<std::uint32_t>(j), dense[j]);
  }
  return row;
}

std::vector<double> densify(std::span<const std::pair<std::uint32_t, double>> row, std::uint64_t n) {
  std::vector<double> dense(n, 0.0);
  for (const auto& [col, val] : row) {
    if (col >= n) throw Error(ErrorCode::ParseError, "sparse row column " + std::to_string(col) + " out of range");
    dense[col] = val;
  }
  return dense;
}

}  // namespace rtopt::wire
