#include "admmprune/storage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

#include "admmprune/checkpoint.hpp"
#include "admmprune/mnist.hpp"

namespace admmprune {

using nlohmann::json;

const char* to_string(IndexScheme s) {
  return s == IndexScheme::csr_absolute ? "csr_absolute" : "csr_relative";
}

IndexScheme index_scheme_from(const std::string& s) {
  if (s == "abs" || s == "absolute" || s == "csr_absolute") return IndexScheme::csr_absolute;
  if (s == "rel" || s == "relative" || s == "csr_relative") return IndexScheme::csr_relative;
  throw std::invalid_argument("unknown index scheme '" + s + "' (expected rel or abs)");
}

namespace {

// ceil(log2(x)) for x >= 1.
unsigned ceil_log2(std::size_t x) {
  return x <= 1 ? 0u : static_cast<unsigned>(std::bit_width(x - 1));
}

unsigned column_index_bits(const BlockShape& b) { return std::max(1u, ceil_log2(b.cols)); }

void check_matrix(const GemmMatrix& m) {
  if (m.values.size() != m.rows * m.cols) throw ShapeError("matrix value count does not match its dimensions");
}

}  // namespace

std::size_t SparseEncoding::stored_numbers() const {
  if (scheme == IndexScheme::csr_relative) return values.size() + indices.size();
  // values + column indices + (r + 1) extents per block
  return values.size() + indices.size() + row_extents.size();
}

double SparseEncoding::storage_bits(unsigned weight_bits) const {
  if (scheme == IndexScheme::csr_relative) {
    return static_cast<double>(values.size()) * (weight_bits + index_bits);
  }
  double bits = 0.0;
  const unsigned col_bits = column_index_bits(block);
  std::size_t pos = 0;
  for (std::size_t br = 0; br < rows; br += block.rows) {
    const std::size_t r = std::min(block.rows, rows - br);
    for (std::size_t bc = 0; bc < cols; bc += block.cols) {
      const std::size_t nb = row_extents[pos + r];
      bits += static_cast<double>(nb) * (weight_bits + col_bits) +
              static_cast<double>(r + 1) * ceil_log2(nb + 1);
      pos += r + 1;
    }
  }
  return bits;
}

SparseEncoding encode_csr_absolute(const GemmMatrix& m, BlockShape block) {
  check_matrix(m);
  if (block.rows < 1 || block.cols < 1) throw std::invalid_argument("block dimensions must be >= 1");
  SparseEncoding e;
  e.scheme = IndexScheme::csr_absolute;
  e.rows = m.rows;
  e.cols = m.cols;
  e.block = block;
  e.index_bits = column_index_bits(block);
  for (std::size_t br = 0; br < m.rows; br += block.rows) {
    const std::size_t r_end = std::min(m.rows, br + block.rows);
    for (std::size_t bc = 0; bc < m.cols; bc += block.cols) {
      const std::size_t c_end = std::min(m.cols, bc + block.cols);
      std::uint32_t count = 0;
      e.row_extents.push_back(0);
      for (std::size_t r = br; r < r_end; ++r) {
        for (std::size_t c = bc; c < c_end; ++c) {
          const double v = m.at(r, c);
          if (v != 0.0) {
            e.values.push_back(v);
            e.indices.push_back(static_cast<std::uint32_t>(c - bc));
            ++count;
          }
        }
        e.row_extents.push_back(count);
      }
    }
  }
  return e;
}

std::vector<std::size_t> nonzero_gaps(std::span<const double> values) {
  std::vector<std::size_t> gaps;
  std::size_t last = 0;  // position + 1 of the previous nonzero
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k] != 0.0) {
      gaps.push_back(k + 1 - last);
      last = k + 1;
    }
  }
  return gaps;
}

std::size_t dummy_zero_count(std::span<const std::size_t> gaps, unsigned bits) {
  if (bits < 1 || bits > 32) throw std::invalid_argument("index bits must be in [1, 32]");
  const std::uint64_t span = std::uint64_t{1} << bits;
  std::size_t d = 0;
  for (std::size_t g : gaps) d += static_cast<std::size_t>((g + span - 1) / span - 1);
  return d;
}

SparseEncoding encode_csr_relative(const GemmMatrix& m, unsigned bits) {
  check_matrix(m);
  if (bits < 1 || bits > 32) throw std::invalid_argument("index bits must be in [1, 32]");
  SparseEncoding e;
  e.scheme = IndexScheme::csr_relative;
  e.rows = m.rows;
  e.cols = m.cols;
  e.index_bits = bits;
  const std::uint64_t span = std::uint64_t{1} << bits;
  std::size_t last = 0;
  for (std::size_t k = 0; k < m.values.size(); ++k) {
    if (m.values[k] == 0.0) continue;
    std::uint64_t gap = k + 1 - last;
    while (gap > span) {
      e.values.push_back(0.0);
      e.indices.push_back(static_cast<std::uint32_t>(span - 1));
      ++e.dummy_zero_count;
      gap -= span;
    }
    e.values.push_back(m.values[k]);
    e.indices.push_back(static_cast<std::uint32_t>(gap - 1));
    last = k + 1;
  }
  return e;
}

GemmMatrix decode(const SparseEncoding& e) {
  GemmMatrix m{e.rows, e.cols, std::vector<double>(e.rows * e.cols, 0.0)};
  if (e.values.size() != e.indices.size()) throw FormatError("encoding has mismatched value and index arrays");
  if (e.scheme == IndexScheme::csr_relative) {
    std::size_t pos = 0;  // position + 1 of the previous entry
    for (std::size_t k = 0; k < e.values.size(); ++k) {
      pos += static_cast<std::size_t>(e.indices[k]) + 1;
      if (pos > m.values.size()) throw FormatError("relative index runs past the matrix end");
      if (e.values[k] != 0.0) m.values[pos - 1] = e.values[k];
    }
    return m;
  }
  std::size_t ext = 0, val = 0;
  for (std::size_t br = 0; br < e.rows; br += e.block.rows) {
    const std::size_t r = std::min(e.block.rows, e.rows - br);
    for (std::size_t bc = 0; bc < e.cols; bc += e.block.cols) {
      if (ext + r >= e.row_extents.size()) {
        throw FormatError("row extent array is too short");
      }
      for (std::size_t i = 0; i < r; ++i) {
        for (std::uint32_t k = e.row_extents[ext + i]; k < e.row_extents[ext + i + 1]; ++k, ++val) {
          if (val >= e.values.size()) throw FormatError("row extents exceed the stored values");
          const std::size_t c = bc + e.indices[val];
          if (c >= e.cols) throw FormatError("column index outside the matrix");
          m.values[(br + i) * e.cols + c] = e.values[val];
        }
      }
      ext += r + 1;
    }
  }
  return m;
}

double absolute_storage_bits(const GemmMatrix& m, unsigned weight_bits, BlockShape block) {
  return encode_csr_absolute(m, block).storage_bits(weight_bits);
}

double StorageReport::prune_rate() const {
  if (weight_count == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(dense_count) / static_cast<double>(weight_count);
}

double StorageReport::compression_rate() const {
  const double total = structured ? weight_store_bytes : relative_bytes;
  if (total == 0.0) return std::numeric_limits<double>::infinity();
  return dense_bytes() / total;
}

double StorageReport::primary_total_bytes() const {
  if (structured) return weight_store_bytes;
  return scheme == IndexScheme::csr_relative ? relative_bytes : absolute_bytes;
}

namespace {

struct MatrixStats {
  std::size_t dense = 0;
  std::size_t nonzero = 0;
  std::vector<std::size_t> gaps;
};

std::vector<MatrixStats> gather(const std::vector<GemmMatrix>& mats) {
  std::vector<MatrixStats> out;
  for (const auto& m : mats) {
    check_matrix(m);
    MatrixStats s;
    s.dense = m.values.size();
    s.gaps = nonzero_gaps(m.values);
    s.nonzero = s.gaps.size();
    out.push_back(std::move(s));
  }
  return out;
}

StorageReport relative_from_stats(const std::vector<MatrixStats>& stats, unsigned w, unsigned bits) {
  StorageReport r;
  r.quant_bits = w;
  r.index_bits = bits;
  for (const auto& s : stats) {
    r.dense_count += s.dense;
    r.weight_count += s.nonzero;
    r.dummy_zeros += dummy_zero_count(s.gaps, bits);
  }
  r.weight_store_bytes = static_cast<double>(r.weight_count) * w / 8.0;
  r.relative_bytes = static_cast<double>(r.weight_count + r.dummy_zeros) * (w + bits) / 8.0;
  return r;
}

void check_quant_bits(unsigned w) {
  if (w < 1 || w > 64) throw std::invalid_argument("quantization bits must be in [1, 64]");
}

}  // namespace

StorageReport relative_report(const std::vector<GemmMatrix>& mats, unsigned quant_bits, unsigned index_bits) {
  check_quant_bits(quant_bits);
  return relative_from_stats(gather(mats), quant_bits, index_bits);
}

std::pair<unsigned, StorageReport> optimize_index_bits(const std::vector<GemmMatrix>& mats, unsigned quant_bits) {
  check_quant_bits(quant_bits);
  const auto stats = gather(mats);
  unsigned best_bits = 1;
  StorageReport best = relative_from_stats(stats, quant_bits, 1);
  for (unsigned b = 2; b <= 32; ++b) {
    StorageReport r = relative_from_stats(stats, quant_bits, b);
    if (r.relative_bytes < best.relative_bytes) {
      best = r;
      best_bits = b;
    }
  }
  return {best_bits, best};
}

std::pair<unsigned, StorageReport> optimize_index_bits(const GemmMatrix& m, unsigned quant_bits) {
  return optimize_index_bits(std::vector<GemmMatrix>{m}, quant_bits);
}

namespace {

std::pair<std::size_t, std::size_t> live_extent(const GemmMatrix& m) {
  std::vector<char> row(m.rows, 0), col(m.cols, 0);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c)
      if (m.at(r, c) != 0.0) row[r] = col[c] = 1;
  return {static_cast<std::size_t>(std::count(row.begin(), row.end(), 1)),
          static_cast<std::size_t>(std::count(col.begin(), col.end(), 1))};
}

}  // namespace

bool is_group_dense(const GemmMatrix& m) {
  auto [r, c] = live_extent(m);
  return count_nonzero(std::span<const double>(m.values)) == r * c;
}

StorageReport storage_report(const std::vector<GemmMatrix>& mats, unsigned quant_bits, StorageRegime regime,
                             IndexScheme scheme, std::optional<unsigned> index_bits) {
  check_quant_bits(quant_bits);
  bool structured = regime == StorageRegime::structured;
  if (regime == StorageRegime::automatic) {
    structured = std::all_of(mats.begin(), mats.end(), [](const GemmMatrix& m) { return is_group_dense(m); });
  }
  StorageReport r;
  if (structured) {
    r.structured = true;
    r.quant_bits = quant_bits;
    for (const auto& m : mats) {
      check_matrix(m);
      auto [lr, lc] = live_extent(m);
      r.dense_count += m.values.size();
      r.weight_count += lr * lc;
    }
    r.weight_store_bytes = static_cast<double>(r.weight_count) * quant_bits / 8.0;
    r.relative_bytes = r.absolute_bytes = r.weight_store_bytes;
  } else {
    r = index_bits ? relative_report(mats, quant_bits, *index_bits) : optimize_index_bits(mats, quant_bits).second;
    double abs_bits = 0.0;
    for (const auto& m : mats) abs_bits += absolute_storage_bits(m, quant_bits);
    r.absolute_bytes = abs_bits / 8.0;
  }
  r.scheme = scheme;
  return r;
}

namespace {

std::vector<GemmMatrix> model_matrices(const Model& model, StorageScope scope) {
  std::vector<GemmMatrix> mats;
  for (const auto& layer : model.layers) {
    if (scope.conv_only && layer.kind() != LayerKind::conv) continue;
    mats.push_back(as_matrix(layer.weights));
  }
  if (mats.empty()) throw std::invalid_argument("model has no layers in the storage scope");
  return mats;
}

}  // namespace

StorageReport storage_report(const Model& model, unsigned quant_bits, StorageRegime regime, IndexScheme scheme,
                             StorageScope scope) {
  return storage_report(model_matrices(model, scope), quant_bits, regime, scheme);
}

unsigned inferred_quant_bits(const Model& model, StorageScope scope) {
  unsigned bits = 0;
  for (const auto& layer : model.layers) {
    if (scope.conv_only && layer.kind() != LayerKind::conv) continue;
    if (!layer.quantization) return 32;
    bits = std::max(bits, std::max(1u, ceil_log2(layer.quantization->level_count)));
  }
  return bits == 0 ? 32 : bits;
}

std::string format_bytes(double bytes, const std::string& unit) {
  double scale = 1.0;
  if (unit == "KB") scale = 1e3;
  else if (unit == "MB") scale = 1e6;
  else if (unit == "GB") scale = 1e9;
  else if (unit != "B") throw std::invalid_argument("unknown size unit '" + unit + "'");
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << bytes / scale << unit;
  return out.str();
}

std::string format_bytes(double bytes) {
  if (bytes >= 1e6) return format_bytes(bytes, "MB");
  return format_bytes(bytes, "KB");
}

namespace {

std::string fmt(double v, int precision) {
  if (std::isinf(v)) return "inf";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::vector<std::string> row_cells(const StorageRow& row) {
  const auto& r = row.report;
  return {row.method,
          row.accuracy ? fmt(*row.accuracy * 100.0, 2) + "%" : "-",
          fmt(r.prune_rate(), 1) + "x",
          std::to_string(r.weight_count),
          std::to_string(r.quant_bits),
          format_bytes(r.weight_store_bytes),
          r.structured ? "-" : std::to_string(r.index_bits),
          format_bytes(r.relative_bytes),
          format_bytes(r.absolute_bytes),
          fmt(r.compression_rate(), 1) + "x"};
}

const std::vector<std::string> kHeader = {"Method",        "Accuracy",     "CONV Prune Rate", "CONV No. of Weights",
                                          "CONV Quant Bits", "CONV Weight Store", "Index Bits",
                                          "Weight+Index (Relative)", "Weight+Index (Absolute)",
                                          "CONV Compress Rate"};

}  // namespace

std::string storage_table_text(const std::vector<StorageRow>& rows) {
  std::vector<std::vector<std::string>> cells{kHeader};
  for (const auto& r : rows) cells.push_back(row_cells(r));
  std::vector<std::size_t> width(kHeader.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  std::ostringstream out;
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t c = 0; c < cells[l].size(); ++c) {
      if (c) out << "  ";
      if (c == 0) out << std::left;
      else out << std::right;
      out << std::setw(static_cast<int>(width[c])) << cells[l][c];
    }
    out << '\n';
    if (l == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

std::string storage_table_csv(const std::vector<StorageRow>& rows) {
  std::ostringstream out;
  out << "method,accuracy,prune_rate,weights,quant_bits,weight_store_bytes,index_bits,relative_bytes,"
         "absolute_bytes,compression_rate,structured,dummy_zeros\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::string method = row.method;
    if (method.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char ch : method) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
      method = q + "\"";
    }
    out << method << ',' << (row.accuracy ? fmt(*row.accuracy, 6) : "") << ',' << fmt(r.prune_rate(), 4) << ','
        << r.weight_count << ',' << r.quant_bits << ',' << fmt(r.weight_store_bytes, 3) << ','
        << (r.structured ? 0u : r.index_bits) << ',' << fmt(r.relative_bytes, 3) << ','
        << fmt(r.absolute_bytes, 3) << ',' << fmt(r.compression_rate(), 4) << ',' << (r.structured ? 1 : 0)
        << ',' << r.dummy_zeros << '\n';
  }
  return out.str();
}

json to_json(const StorageReport& r) {
  return json{{"structured", r.structured},
              {"dense_count", r.dense_count},
              {"weight_count", r.weight_count},
              {"quant_bits", r.quant_bits},
              {"index_bits", r.index_bits},
              {"dummy_zeros", r.dummy_zeros},
              {"scheme", to_string(r.scheme)},
              {"weight_store_bytes", r.weight_store_bytes},
              {"relative_bytes", r.relative_bytes},
              {"absolute_bytes", r.absolute_bytes},
              {"prune_rate", std::isinf(r.prune_rate()) ? json(nullptr) : json(r.prune_rate())},
              {"compression_rate", std::isinf(r.compression_rate()) ? json(nullptr) : json(r.compression_rate())}};
}

StorageReport storage_report_from_json(const json& j) {
  StorageReport r;
  r.structured = j.at("structured").get<bool>();
  r.dense_count = j.at("dense_count").get<std::size_t>();
  r.weight_count = j.at("weight_count").get<std::size_t>();
  r.quant_bits = j.at("quant_bits").get<unsigned>();
  r.index_bits = j.at("index_bits").get<unsigned>();
  r.dummy_zeros = j.at("dummy_zeros").get<std::size_t>();
  r.scheme = index_scheme_from(j.at("scheme").get<std::string>());
  r.weight_store_bytes = j.at("weight_store_bytes").get<double>();
  r.relative_bytes = j.at("relative_bytes").get<double>();
  r.absolute_bytes = j.at("absolute_bytes").get<double>();
  return r;
}

GemmMatrix read_matrix_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  GemmMatrix m;
  try {
    m.rows = j.at("rows").get<std::size_t>();
    m.cols = j.at("cols").get<std::size_t>();
    m.values = j.at("values").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (m.values.size() != m.rows * m.cols) {
    throw FormatError(path + ": expected " + std::to_string(m.rows * m.cols) + " values, found " +
                      std::to_string(m.values.size()));
  }
  return m;
}

}  // namespace admmprune
