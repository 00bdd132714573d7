#pragma once

#include <optional>
#include <string>
#include <vector>

#include "admmprune/comparator.hpp"
#include "json.hpp"

namespace admmprune {

/// A size as printed in a table, e.g. "0.26MB": value, unit and the number
/// of decimals shown.
struct PrintedSize {
  double value = 0.0;
  std::string unit;
  int decimals = 0;

  double bytes() const;
};

PrintedSize parse_printed_size(const std::string& text);
double unit_scale(const std::string& unit);

struct PublishedRow {
  std::string method;
  std::string regime;  // baseline, nonstructured, structured
  bool ours = false;
  std::string pair;    // matches a non-structured row with a structured one
  std::optional<double> accuracy;  // percent
  double prune_rate = 1.0;
  double weights = 0.0;
  std::optional<unsigned> quant_bits;
  std::optional<unsigned> index_bits;
  std::optional<PrintedSize> weight_store;
  std::optional<PrintedSize> relative;
  std::optional<PrintedSize> absolute;
  std::optional<double> compress_rate;
};

struct PublishedTable {
  std::string id;
  std::string network;
  std::string dataset;
  std::string unit;
  std::vector<PublishedRow> rows;

  const PublishedRow& baseline() const;
};

std::vector<PublishedTable> parse_published_tables(const nlohmann::json& j);
std::vector<PublishedTable> load_published_tables(const std::string& path);

struct RecomputedRow {
  PublishedRow row;
  double dense_bytes = 0.0;         // baseline weights x 32 bit
  double weight_store_bytes = 0.0;  // n * w / 8
  std::optional<double> weight_store_deviation;          // computed / printed - 1
  std::optional<double> weight_store_display_deviation;  // after rounding to the printed decimals
  std::optional<double> relative_lower_bytes;     // n (w + i) / 8, no dummy zeros
  std::optional<double> relative_expected_bytes;  // dummy zeros of a uniformly random pattern
  std::optional<double> relative_ratio;           // printed / lower bound
  std::optional<double> compress_rate;            // dense / (relative lower bound or weight store)
};

struct RatePair {
  std::string table;
  std::string pair;
  double nonstructured_rate = 0.0;
  double structured_rate = 0.0;
  double ratio = 0.0;          // structured / non-structured
  double ratio_percent = 0.0;  // rounded to a whole percent
  ComputeVerdict verdict;
};

struct RecomputedTable {
  PublishedTable table;
  std::vector<RecomputedRow> rows;
};

struct TablesResult {
  std::vector<RecomputedTable> tables;
  std::vector<RatePair> pairs;
  PprModel ppr;
};

/// Expected dummy zeros for n nonzeros spread uniformly over `positions`
/// slots with b-bit gaps: n q / (1 - q), q = (1 - n/positions)^(2^b).
double expected_dummy_zeros(double n, double positions, unsigned bits);

TablesResult recompute_tables(const std::vector<PublishedTable>& tables, const PprModel& ppr = {});

std::string tables_text(const TablesResult& r);
std::string tables_csv(const TablesResult& r);
nlohmann::json to_json(const TablesResult& r);

}  // namespace admmprune
