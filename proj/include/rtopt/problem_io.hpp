#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rtopt/byte_io.hpp"
#include "rtopt/problem.hpp"
#include "rtopt/sparse_matrix.hpp"

namespace rtopt {

// Problem file layout (all integers little-endian):
//
//   "RTOPTPRB"                 8-byte magic
//   u32 version                currently 1
//   u64 manifest_length
//   manifest                   UTF-8 text, see docs/problem-format.md
//   u64 block_count
//   block_count x (u64 offset, u64 length)   offsets from start of file
//   blocks                     matrix or vector blocks, concatenated
//
// Floats in the manifest use shortest round-trip formatting, so load(save(p)) == p bit for bit.

inline constexpr std::uint32_t kProblemFormatVersion = 1;

/// u64 rows, u64 cols, u64 nnz, u64 row_offsets[rows+1], u32 col_indices[nnz], f64 values[nnz].
void write_matrix_block(ByteWriter& out, const SparseMatrix& m);
SparseMatrix read_matrix_block(ByteReader& in);

/// u64 n, f64 values[n]. Also the format of the solver's final-x file.
void write_vector_block(ByteWriter& out, std::span<const double> v);
std::vector<double> read_vector_block(ByteReader& in);

std::vector<std::uint8_t> serialize_problem(const TreatmentProblem& problem);
TreatmentProblem deserialize_problem(std::span<const std::uint8_t> bytes);

void save_problem(const TreatmentProblem& problem, const std::filesystem::path& path);
TreatmentProblem load_problem(const std::filesystem::path& path);

/// SHA-256 of the serialized problem; leader and workers compare it during the handshake.
std::array<std::uint8_t, 32> problem_hash(const TreatmentProblem& problem);

void save_vector(std::span<const double> v, const std::filesystem::path& path);
std::vector<double> load_vector(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace rtopt
