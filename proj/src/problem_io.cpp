#include "rtopt/problem_io.hpp"

#include <openssl/sha.h>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "rtopt/error.hpp"

namespace rtopt {

namespace {

constexpr std::string_view kMagic = "RTOPTPRB";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

class ManifestLine {
 public:
  ManifestLine(std::size_t line_no, std::string_view keyword) : line_no_(line_no), keyword_(keyword) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ParseError, "manifest line " + std::to_string(line_no_) + " (" +
                                           std::string(keyword_) + "): " + what);
  }

  void add(std::string_view token) {
    const auto eq = token.find('=');
    if (eq == std::string_view::npos || eq == 0) fail("expected key=value, got '" + std::string(token) + "'");
    auto [it, inserted] = fields_.emplace(std::string(token.substr(0, eq)), std::string(token.substr(eq + 1)));
    if (!inserted) fail("duplicate field '" + it->first + "'");
  }

  bool has(const std::string& key) const { return fields_.count(key) != 0; }

  const std::string& text(const std::string& key) {
    auto it = fields_.find(key);
    if (it == fields_.end()) fail("missing field '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  double number(const std::string& key) {
    const auto& s = text(key);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("field '" + key + "' is not a number: '" + s + "'");
    return v;
  }

  std::uint64_t integer(const std::string& key) {
    const auto& s = text(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail("field '" + key + "' is not an integer: '" + s + "'");
    return v;
  }

  /// Every field must be consumed; unknown keys are rejected rather than ignored.
  void finish() const {
    for (const auto& [key, value] : fields_) {
      if (!used_.count(key)) fail("unexpected field '" + key + "'");
    }
  }

 private:
  std::size_t line_no_;
  std::string_view keyword_;
  std::map<std::string, std::string> fields_;
  std::set<std::string> used_;
};

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == '=' || c == '#' || static_cast<unsigned char>(c) <= ' ') return false;
  }
  return true;
}

struct Toc {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries;
};

std::string term_line(const TreatmentProblem& p, const FunctionSpec& spec, std::size_t& next_block,
                      std::vector<const QuadraticParams*>& quadratic_blocks) {
  std::ostringstream line;
  line << (spec.role == TermRole::Objective ? "objective" : "constraint") << " kind="
       << to_string(spec.kind());
  if (spec.roi) line << " roi=" << p.rois.at(*spec.roi).name;
  if (spec.role == TermRole::Objective) {
    line << " weight=" << format_double(spec.weight);
  } else {
    line << " rhs=" << format_double(spec.rhs);
  }
  std::visit(
      [&](const auto& params) {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, LtcpParams>) {
          line << " alpha=" << format_double(params.alpha) << " ref_dose=" << format_double(params.ref_dose);
        } else if constexpr (std::is_same_v<T, MinDosePenaltyParams> ||
                             std::is_same_v<T, MaxDosePenaltyParams>) {
          line << " ref_dose=" << format_double(params.ref_dose);
        } else if constexpr (std::is_same_v<T, GeneralizedMeanParams>) {
          line << " exponent=" << format_double(params.exponent);
        } else if constexpr (std::is_same_v<T, QuadraticParams>) {
          line << " hessian=" << next_block << " linear=" << next_block + 1
               << " constant=" << format_double(params.constant);
          next_block += 2;
          quadratic_blocks.push_back(&params);
        }
      },
      spec.params);
  line << '\n';
  return line.str();
}

}  // namespace

void write_matrix_block(ByteWriter& out, const SparseMatrix& m) {
  out.put<std::uint64_t>(m.rows());
  out.put<std::uint64_t>(m.cols());
  out.put<std::uint64_t>(m.nnz());
  out.put_array(m.row_offsets());
  out.put_array(m.col_indices());
  out.put_array(m.values());
}

SparseMatrix read_matrix_block(ByteReader& in) {
  const auto rows = in.get<std::uint64_t>();
  const auto cols = in.get<std::uint64_t>();
  const auto nnz = in.get<std::uint64_t>();
  if (rows == UINT64_MAX) in.fail("matrix row count");
  auto offsets = in.get_array<std::uint64_t>(rows + 1);
  auto col_indices = in.get_array<std::uint32_t>(nnz);
  auto values = in.get_array<double>(nnz);
  try {
    return SparseMatrix(rows, cols, std::move(offsets), std::move(col_indices), std::move(values));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, "matrix block ending at byte offset " +
                                           std::to_string(in.position()) + ": " + e.what());
  }
}

void write_vector_block(ByteWriter& out, std::span<const double> v) {
  out.put<std::uint64_t>(v.size());
  out.put_array(v);
}

std::vector<double> read_vector_block(ByteReader& in) {
  const auto n = in.get<std::uint64_t>();
  return in.get_array<double>(n);
}

std::vector<std::uint8_t> serialize_problem(const TreatmentProblem& p) {
  validate(p);
  for (const auto& roi : p.rois) {
    if (!valid_token(roi.name)) {
      throw Error(ErrorCode::ValidationError,
                  "ROI name '" + roi.name + "' must be non-empty without whitespace, '=' or '#'");
    }
  }

  std::ostringstream manifest;
  manifest << "# rtopt treatment problem\n";
  manifest << "num_vars " << p.num_vars << '\n';
  for (std::size_t r = 0; r < p.rois.size(); ++r) {
    const auto& roi = p.rois[r];
    manifest << "roi name=" << roi.name << " kind=" << to_string(roi.kind)
             << " voxels=" << roi.voxel_count() << " matrix=" << r << '\n';
  }
  std::size_t next_block = p.rois.size();
  std::vector<const QuadraticParams*> quadratic_blocks;
  for (const auto& spec : p.objectives) manifest << term_line(p, spec, next_block, quadratic_blocks);
  for (const auto& spec : p.constraints) manifest << term_line(p, spec, next_block, quadratic_blocks);
  const std::string manifest_text = manifest.str();

  std::vector<ByteWriter> blocks;
  for (const auto& roi : p.rois) {
    write_matrix_block(blocks.emplace_back(), roi.matrix);
  }
  for (const auto* q : quadratic_blocks) {
    write_matrix_block(blocks.emplace_back(), q->hessian);
    write_vector_block(blocks.emplace_back(), q->linear);
  }

  ByteWriter out;
  out.put_string(kMagic);
  out.put<std::uint32_t>(kProblemFormatVersion);
  out.put<std::uint64_t>(manifest_text.size());
  out.put_string(manifest_text);
  out.put<std::uint64_t>(blocks.size());
  std::uint64_t offset = out.size() + blocks.size() * 16;
  for (const auto& b : blocks) {
    out.put<std::uint64_t>(offset);
    out.put<std::uint64_t>(b.size());
    offset += b.size();
  }
  for (auto& b : blocks) out.put_bytes(b.bytes());
  return out.release();
}

TreatmentProblem deserialize_problem(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (in.remaining() < kMagic.size() || in.get_string(kMagic.size()) != kMagic) {
    throw Error(ErrorCode::ParseError, "byte offset 0: not an rtopt problem file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kProblemFormatVersion) {
    throw Error(ErrorCode::ParseError, "byte offset 8: unsupported format version " + std::to_string(version));
  }
  const auto manifest_len = in.get<std::uint64_t>();
  if (manifest_len > in.remaining()) in.fail("manifest");
  const std::string manifest_text = in.get_string(manifest_len);
  const auto block_count = in.get<std::uint64_t>();
  if (block_count > in.remaining() / 16) in.fail("table of contents");
  Toc toc;
  for (std::uint64_t i = 0; i < block_count; ++i) {
    const auto off = in.get<std::uint64_t>();
    const auto len = in.get<std::uint64_t>();
    if (off > bytes.size() || len > bytes.size() - off) {
      throw Error(ErrorCode::ParseError, "table of contents entry " + std::to_string(i) +
                                             " points outside the file (offset " +
                                             std::to_string(off) + ", length " + std::to_string(len) + ")");
    }
    toc.entries.emplace_back(off, len);
  }

  auto block_reader = [&](ManifestLine& line, const std::string& key) {
    const auto idx = line.integer(key);
    if (idx >= toc.entries.size()) line.fail("block " + std::to_string(idx) + " not in table of contents");
    const auto [off, len] = toc.entries[idx];
    return ByteReader(bytes.subspan(off, len), off);
  };
  auto read_matrix = [&](ManifestLine& line, const std::string& key) {
    auto r = block_reader(line, key);
    auto m = read_matrix_block(r);
    if (!r.at_end()) r.fail("matrix block (trailing bytes)");
    return m;
  };

  TreatmentProblem p;
  bool have_num_vars = false;
  std::map<std::string, std::size_t> roi_index;

  std::istringstream stream(manifest_text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream tokens(raw);
    std::string keyword;
    if (!(tokens >> keyword)) continue;
    ManifestLine line(line_no, keyword);

    if (keyword == "num_vars") {
      std::string value, extra;
      tokens >> value;
      if (tokens >> extra) line.fail("trailing tokens");
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), p.num_vars);
      if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
        line.fail("expected an integer, got '" + value + "'");
      }
      have_num_vars = true;
      continue;
    }

    std::string tok;
    while (tokens >> tok) line.add(tok);

    if (keyword == "roi") {
      Roi roi;
      roi.name = line.text("name");
      auto kind = parse_roi_kind(line.text("kind"));
      if (!kind) line.fail("unknown ROI kind '" + line.text("kind") + "'");
      roi.kind = *kind;
      const auto voxels = line.integer("voxels");
      roi.matrix = read_matrix(line, "matrix");
      line.finish();
      if (roi.matrix.rows() != voxels) {
        throw Error(ErrorCode::ValidationError, "ROI '" + roi.name + "': voxels=" + std::to_string(voxels) +
                                                    " but matrix has " + std::to_string(roi.matrix.rows()) + " rows");
      }
      if (!roi_index.emplace(roi.name, p.rois.size()).second) {
        throw Error(ErrorCode::ValidationError, "duplicate ROI name '" + roi.name + "'");
      }
      p.rois.push_back(std::move(roi));
    } else if (keyword == "objective" || keyword == "constraint") {
      FunctionSpec spec;
      spec.role = keyword == "objective" ? TermRole::Objective : TermRole::Constraint;
      auto kind = parse_function_kind(line.text("kind"));
      if (!kind) line.fail("unknown function kind '" + line.text("kind") + "'");
      if (*kind != FunctionKind::Quadratic) {
        const auto& name = line.text("roi");
        auto it = roi_index.find(name);
        if (it == roi_index.end()) line.fail("unknown ROI '" + name + "' (ROIs must be declared first)");
        spec.roi = it->second;
      }
      if (spec.role == TermRole::Objective) {
        spec.weight = line.number("weight");
      } else {
        spec.rhs = line.number("rhs");
      }
      switch (*kind) {
        case FunctionKind::Ltcp:
          spec.params = LtcpParams{line.number("alpha"), line.number("ref_dose")};
          break;
        case FunctionKind::MinDosePenalty:
          spec.params = MinDosePenaltyParams{line.number("ref_dose")};
          break;
        case FunctionKind::MaxDosePenalty:
          spec.params = MaxDosePenaltyParams{line.number("ref_dose")};
          break;
        case FunctionKind::MeanDose:
          spec.params = MeanDoseParams{};
          break;
        case FunctionKind::GeneralizedMean:
          spec.params = GeneralizedMeanParams{line.number("exponent")};
          break;
        case FunctionKind::Quadratic: {
          QuadraticParams q;
          q.hessian = read_matrix(line, "hessian");
          auto r = block_reader(line, "linear");
          q.linear = read_vector_block(r);
          if (!r.at_end()) r.fail("vector block (trailing bytes)");
          q.constant = line.number("constant");
          spec.params = std::move(q);
          break;
        }
      }
      line.finish();
      (spec.role == TermRole::Objective ? p.objectives : p.constraints).push_back(std::move(spec));
    } else {
      line.fail("unknown keyword");
    }
  }
  if (!have_num_vars) throw Error(ErrorCode::ParseError, "manifest: missing num_vars");
  validate(p);
  return p;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw Error(ErrorCode::IoError, "error reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoError, "error writing '" + path.string() + "'");
}

void save_problem(const TreatmentProblem& problem, const std::filesystem::path& path) {
  write_file(path, serialize_problem(problem));
}

TreatmentProblem load_problem(const std::filesystem::path& path) { return deserialize_problem(read_file(path)); }

std::array<std::uint8_t, 32> problem_hash(const TreatmentProblem& problem) {
  const auto bytes = serialize_problem(problem);
  std::array<std::uint8_t, 32> digest{};
  SHA256(bytes.data(), bytes.size(), digest.data());
  return digest;
}

void save_vector(std::span<const double> v, const std::filesystem::path& path) {
  ByteWriter w;
  write_vector_block(w, v);
  write_file(path, w.bytes());
}

std::vector<double> load_vector(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  auto v = read_vector_block(r);
  if (!r.at_end()) r.fail("vector file (trailing bytes)");
  return v;
}

}  // namespace rtopt
