#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "admmprune/model.hpp"
#include "admmprune/tensor.hpp"
#include "json.hpp"

namespace admmprune {

enum class IndexScheme { csr_absolute, csr_relative };

const char* to_string(IndexScheme s);
IndexScheme index_scheme_from(const std::string& s);  // "abs"/"rel" or the full names

struct BlockShape {
  std::size_t rows = 64;
  std::size_t cols = 64;
};

/// Sparse matrix in one of the two CSR variants.
///
/// Absolute: blocks are visited block-row-major; per block the values, the
/// in-block column indices and r+1 cumulative row extents are appended.
/// Relative: one row-major scan of the whole matrix; `indices` holds gap-1 in
/// `index_bits` bits (the first gap is counted from position -1). Dummy zeros
/// are appended to `values` whenever a gap exceeds 2^index_bits.
struct SparseEncoding {
  IndexScheme scheme = IndexScheme::csr_relative;
  std::size_t rows = 0;
  std::size_t cols = 0;
  BlockShape block;
  unsigned index_bits = 0;
  std::vector<double> values;
  std::vector<std::uint32_t> indices;
  std::vector<std::uint32_t> row_extents;
  std::size_t dummy_zero_count = 0;

  std::size_t nonzero_count() const { return values.size() - dummy_zero_count; }
  /// Count of stored numbers: sum over blocks of 2n + r + 1 (absolute) or
  /// 2(n + dummies) (relative).
  std::size_t stored_numbers() const;
  /// Exact bit count when values take `weight_bits` bits.
  double storage_bits(unsigned weight_bits) const;
};

SparseEncoding encode_csr_absolute(const GemmMatrix& m, BlockShape block = {});
SparseEncoding encode_csr_relative(const GemmMatrix& m, unsigned bits);
GemmMatrix decode(const SparseEncoding& e);

/// Distances between consecutive nonzeros of a row-major scan, the first one
/// measured from position -1.
std::vector<std::size_t> nonzero_gaps(std::span<const double> values);
/// Sum over gaps of ceil(gap / 2^bits) - 1.
std::size_t dummy_zero_count(std::span<const std::size_t> gaps, unsigned bits);

/// Bits of the absolute block model: per block n(w + ceil(log2 block.cols)) +
/// (r + 1) ceil(log2(n + 1)).
double absolute_storage_bits(const GemmMatrix& m, unsigned weight_bits, BlockShape block = {});

enum class StorageRegime { automatic, nonstructured, structured };

struct StorageReport {
  bool structured = false;
  std::size_t dense_count = 0;   // weights of the uncompressed layers in scope
  std::size_t weight_count = 0;  // n
  unsigned quant_bits = 32;      // w
  unsigned index_bits = 0;       // i (relative scheme); 0 for structured
  std::size_t dummy_zeros = 0;
  IndexScheme scheme = IndexScheme::csr_relative;  // index total shown first
  double weight_store_bytes = 0.0;
  double relative_bytes = 0.0;
  double absolute_bytes = 0.0;

  double dense_bytes() const { return static_cast<double>(dense_count) * 4.0; }
  double prune_rate() const;
  /// Dense 32-bit bytes over the relative total (weight store when structured).
  double compression_rate() const;
  double primary_total_bytes() const;
};

/// Relative-scheme report for one set of matrices and a given index width.
StorageReport relative_report(const std::vector<GemmMatrix>& mats, unsigned quant_bits, unsigned index_bits);

/// Best index width in [1, 32] for the relative scheme; ties go to fewer bits.
/// An all-zero input gives n = 0 and 1 bit.
std::pair<unsigned, StorageReport> optimize_index_bits(const std::vector<GemmMatrix>& mats, unsigned quant_bits);
std::pair<unsigned, StorageReport> optimize_index_bits(const GemmMatrix& m, unsigned quant_bits);

/// Report over the matrices. Structured reports keep only the live rows and
/// columns of each matrix and carry no index storage. `automatic` treats the
/// input as structured when every matrix is exactly its live rows x live columns.
StorageReport storage_report(const std::vector<GemmMatrix>& mats, unsigned quant_bits,
                             StorageRegime regime = StorageRegime::automatic,
                             IndexScheme scheme = IndexScheme::csr_relative,
                             std::optional<unsigned> index_bits = std::nullopt);

struct StorageScope {
  bool conv_only = true;
};

/// Report over the model's weight matrices (GEMM form for convolutions).
StorageReport storage_report(const Model& model, unsigned quant_bits, StorageRegime regime = StorageRegime::automatic,
                             IndexScheme scheme = IndexScheme::csr_relative, StorageScope scope = {});

/// Bits implied by the quantization levels of the layers in scope, or 32.
unsigned inferred_quant_bits(const Model& model, StorageScope scope = {});

bool is_group_dense(const GemmMatrix& m);

/// Human-readable size with decimal units, two decimals (e.g. "0.26MB", "102.00KB").
std::string format_bytes(double bytes);
std::string format_bytes(double bytes, const std::string& unit);

struct StorageRow {
  std::string method;
  std::optional<double> accuracy;
  StorageReport report;
};

std::string storage_table_text(const std::vector<StorageRow>& rows);
std::string storage_table_csv(const std::vector<StorageRow>& rows);
nlohmann::json to_json(const StorageReport& r);
StorageReport storage_report_from_json(const nlohmann::json& j);

/// Standalone matrix file: {"rows": R, "cols": C, "values": [...]} (row-major).
GemmMatrix read_matrix_file(const std::string& path);

}  // namespace admmprune
