#include "admmprune/published_tables.hpp"

#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "admmprune/checkpoint.hpp"
#include "admmprune/mnist.hpp"

namespace admmprune {

using nlohmann::json;

double unit_scale(const std::string& unit) {
  if (unit == "B") return 1.0;
  if (unit == "KB") return 1e3;
  if (unit == "MB") return 1e6;
  if (unit == "GB") return 1e9;
  throw std::invalid_argument("unknown size unit '" + unit + "'");
}

double PrintedSize::bytes() const { return value * unit_scale(unit); }

PrintedSize parse_printed_size(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) ++pos;
  if (pos == 0) throw std::invalid_argument("size '" + text + "' has no number");
  PrintedSize s;
  const std::string number = text.substr(0, pos);
  s.value = std::stod(number);
  const auto dot = number.find('.');
  s.decimals = dot == std::string::npos ? 0 : static_cast<int>(number.size() - dot - 1);
  s.unit = text.substr(pos);
  unit_scale(s.unit);
  return s;
}

const PublishedRow& PublishedTable::baseline() const {
  for (const auto& r : rows)
    if (r.regime == "baseline") return r;
  throw std::invalid_argument("table '" + id + "' has no baseline row");
}

namespace {

std::optional<PrintedSize> size_field(const json& row, const char* key) {
  if (!row.contains(key) || row.at(key).is_null()) return std::nullopt;
  return parse_printed_size(row.at(key).get<std::string>());
}

template <typename T>
std::optional<T> opt_field(const json& row, const char* key) {
  if (!row.contains(key) || row.at(key).is_null()) return std::nullopt;
  return row.at(key).get<T>();
}

}  // namespace

std::vector<PublishedTable> parse_published_tables(const json& j) {
  if (j.value("format", "") != "admmprune-published-tables") {
    throw FormatError("not a published-tables file (format tag missing or wrong)");
  }
  if (j.value("version", 0) != 1) throw FormatError("unsupported published-tables version");
  std::vector<PublishedTable> out;
  const auto& tables = j.at("tables");
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const auto& jt = tables[t];
    PublishedTable table;
    try {
      table.id = jt.at("id").get<std::string>();
      table.network = jt.value("network", "");
      table.dataset = jt.value("dataset", "");
      table.unit = jt.at("unit").get<std::string>();
      unit_scale(table.unit);
      for (const auto& jr : jt.at("rows")) {
        PublishedRow r;
        r.method = jr.at("method").get<std::string>();
        r.regime = jr.at("regime").get<std::string>();
        if (r.regime != "baseline" && r.regime != "nonstructured" && r.regime != "structured") {
          throw std::invalid_argument("unknown regime '" + r.regime + "'");
        }
        r.ours = jr.value("ours", false);
        r.pair = jr.value("pair", "");
        r.accuracy = opt_field<double>(jr, "accuracy");
        r.prune_rate = jr.at("prune_rate").get<double>();
        r.weights = jr.at("weights").get<double>();
        r.quant_bits = opt_field<unsigned>(jr, "quant_bits");
        r.index_bits = opt_field<unsigned>(jr, "index_bits");
        r.weight_store = size_field(jr, "weight_store");
        r.relative = size_field(jr, "relative");
        r.absolute = size_field(jr, "absolute");
        r.compress_rate = opt_field<double>(jr, "compress_rate");
        table.rows.push_back(std::move(r));
      }
      table.baseline();
    } catch (const std::exception& e) {
      throw FormatError("tables[" + std::to_string(t) + "]: " + e.what());
    }
    out.push_back(std::move(table));
  }
  return out;
}

std::vector<PublishedTable> load_published_tables(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  try {
    return parse_published_tables(j);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

double expected_dummy_zeros(double n, double positions, unsigned bits) {
  if (n <= 0.0 || positions <= 0.0) return 0.0;
  const double p = std::min(1.0, n / positions);
  const double q = std::pow(1.0 - p, std::ldexp(1.0, static_cast<int>(bits)));
  return n * q / (1.0 - q);
}

TablesResult recompute_tables(const std::vector<PublishedTable>& tables, const PprModel& ppr) {
  TablesResult out;
  out.ppr = ppr;
  for (const auto& t : tables) {
    RecomputedTable rt;
    rt.table = t;
    const double dense_weights = t.baseline().weights;
    for (const auto& r : t.rows) {
      RecomputedRow c;
      c.row = r;
      c.dense_bytes = dense_weights * 4.0;
      const unsigned w = r.quant_bits.value_or(32);
      c.weight_store_bytes = r.weights * w / 8.0;
      if (r.weight_store) {
        const double printed = r.weight_store->bytes();
        c.weight_store_deviation = c.weight_store_bytes / printed - 1.0;
        const double scale = unit_scale(r.weight_store->unit);
        const double factor = std::pow(10.0, r.weight_store->decimals);
        const double shown = std::round(c.weight_store_bytes / scale * factor) / factor;
        c.weight_store_display_deviation = shown / r.weight_store->value - 1.0;
      }
      double total = c.weight_store_bytes;
      if (r.regime == "nonstructured" && r.index_bits) {
        const unsigned i = *r.index_bits;
        c.relative_lower_bytes = r.weights * (w + i) / 8.0;
        c.relative_expected_bytes = (r.weights + expected_dummy_zeros(r.weights, dense_weights, i)) * (w + i) / 8.0;
        if (r.relative) c.relative_ratio = r.relative->bytes() / *c.relative_lower_bytes;
        total = *c.relative_lower_bytes;
      }
      if (r.quant_bits) c.compress_rate = c.dense_bytes / total;
      rt.rows.push_back(std::move(c));
    }
    // Pair our non-structured and structured rows by label.
    for (const auto& ns : t.rows) {
      if (!ns.ours || ns.regime != "nonstructured") continue;
      for (const auto& s : t.rows) {
        if (!s.ours || s.regime != "structured" || s.pair != ns.pair) continue;
        RatePair p;
        p.table = t.id;
        p.pair = ns.pair;
        p.nonstructured_rate = ns.prune_rate;
        p.structured_rate = s.prune_rate;
        p.ratio = s.prune_rate / ns.prune_rate;
        p.ratio_percent = std::round(p.ratio * 100.0);
        p.verdict = decide_compute(ns.prune_rate, s.prune_rate, ppr);
        out.pairs.push_back(p);
      }
    }
    out.tables.push_back(std::move(rt));
  }
  return out;
}

namespace {

std::string fixed(double v, int p) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(p) << v;
  return o.str();
}

std::string in_unit(double bytes, const std::string& unit, int decimals = 3) {
  return fixed(bytes / unit_scale(unit), decimals) + unit;
}

std::string pct(std::optional<double> v) { return v ? fixed(*v * 100.0, 1) + "%" : "-"; }

std::string printed(const std::optional<PrintedSize>& s) {
  return s ? fixed(s->value, s->decimals) + s->unit : "N/A";
}

}  // namespace

std::string tables_text(const TablesResult& r) {
  std::ostringstream out;
  for (const auto& t : r.tables) {
    out << t.table.id << " (" << t.table.network << ", " << t.table.dataset << ")\n";
    out << std::left << std::setw(16) << "Method" << std::right << std::setw(9) << "Rate" << std::setw(12)
        << "Weights" << std::setw(5) << "Bits" << std::setw(10) << "Store" << std::setw(13) << "Store(calc)"
        << std::setw(8) << "dev" << std::setw(6) << "Idx" << std::setw(9) << "Rel" << std::setw(13)
        << "Rel(n(w+i))" << std::setw(13) << "Rel(random)" << std::setw(8) << "ratio" << std::setw(9) << "CR"
        << std::setw(10) << "CR(calc)" << '\n';
    for (const auto& c : t.rows) {
      const auto& row = c.row;
      const std::string label = row.method + (row.regime == "baseline" ? "" : row.regime == "structured" ? " (s)" : " (ns)");
      out << std::left << std::setw(16) << label << std::right << std::setw(9) << fixed(row.prune_rate, 1) + "x"
          << std::setw(12) << fixed(row.weights, 0) << std::setw(5)
          << (row.quant_bits ? std::to_string(*row.quant_bits) : "N/A") << std::setw(10) << printed(row.weight_store)
          << std::setw(13) << in_unit(c.weight_store_bytes, t.table.unit) << std::setw(8)
          << pct(c.weight_store_deviation) << std::setw(6)
          << (row.index_bits ? std::to_string(*row.index_bits) : "-") << std::setw(9) << printed(row.relative)
          << std::setw(13) << (c.relative_lower_bytes ? in_unit(*c.relative_lower_bytes, t.table.unit) : "-")
          << std::setw(13) << (c.relative_expected_bytes ? in_unit(*c.relative_expected_bytes, t.table.unit) : "-")
          << std::setw(8) << (c.relative_ratio ? fixed(*c.relative_ratio, 3) : "-") << std::setw(9)
          << (row.compress_rate ? fixed(*row.compress_rate, 1) + "x" : "N/A") << std::setw(10)
          << (c.compress_rate ? fixed(*c.compress_rate, 1) + "x" : "-") << '\n';
    }
    out << '\n';
  }
  out << "Structured vs non-structured pruning rates (PPR " << fixed(r.ppr.nonstructured_ppr, 2) << ")\n";
  for (const auto& p : r.pairs) {
    out << "  " << std::left << std::setw(22) << p.table << std::setw(10) << p.pair << std::right
        << fixed(p.structured_rate, 1) << "x / " << fixed(p.nonstructured_rate, 1) << "x = " << fixed(p.ratio * 100, 1)
        << "% (" << fixed(p.ratio_percent, 0) << "%) -> " << to_string(p.verdict.winner) << " preferred\n";
  }
  return out.str();
}

std::string tables_csv(const TablesResult& r) {
  std::ostringstream out;
  out << "table,method,regime,prune_rate,weights,quant_bits,weight_store_printed,weight_store_bytes,"
         "weight_store_deviation,index_bits,relative_printed,relative_lower_bytes,relative_expected_bytes,"
         "relative_ratio,compress_rate_printed,compress_rate\n";
  auto opt = [](const auto& v) { return v ? fixed(static_cast<double>(*v), 6) : std::string(); };
  for (const auto& t : r.tables) {
    for (const auto& c : t.rows) {
      const auto& row = c.row;
      out << t.table.id << ',' << row.method << ',' << row.regime << ',' << row.prune_rate << ','
          << fixed(row.weights, 0) << ',' << (row.quant_bits ? std::to_string(*row.quant_bits) : "") << ','
          << (row.weight_store ? printed(row.weight_store) : "") << ',' << fixed(c.weight_store_bytes, 3) << ','
          << opt(c.weight_store_deviation) << ',' << (row.index_bits ? std::to_string(*row.index_bits) : "") << ','
          << (row.relative ? printed(row.relative) : "") << ',' << opt(c.relative_lower_bytes) << ','
          << opt(c.relative_expected_bytes) << ',' << opt(c.relative_ratio) << ',' << opt(row.compress_rate) << ','
          << opt(c.compress_rate) << '\n';
    }
  }
  return out.str();
}

json to_json(const TablesResult& r) {
  auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
  json tables = json::array();
  for (const auto& t : r.tables) {
    json rows = json::array();
    for (const auto& c : t.rows) {
      rows.push_back({{"method", c.row.method},
                      {"regime", c.row.regime},
                      {"prune_rate", c.row.prune_rate},
                      {"weights", c.row.weights},
                      {"quant_bits", opt(c.row.quant_bits)},
                      {"index_bits", opt(c.row.index_bits)},
                      {"weight_store_bytes", c.weight_store_bytes},
                      {"weight_store_deviation", opt(c.weight_store_deviation)},
                      {"weight_store_display_deviation", opt(c.weight_store_display_deviation)},
                      {"relative_lower_bytes", opt(c.relative_lower_bytes)},
                      {"relative_expected_bytes", opt(c.relative_expected_bytes)},
                      {"relative_ratio", opt(c.relative_ratio)},
                      {"compress_rate", opt(c.compress_rate)}});
    }
    tables.push_back({{"id", t.table.id}, {"unit", t.table.unit}, {"rows", rows}});
  }
  json pairs = json::array();
  for (const auto& p : r.pairs) {
    pairs.push_back({{"table", p.table},
                     {"pair", p.pair},
                     {"nonstructured_rate", p.nonstructured_rate},
                     {"structured_rate", p.structured_rate},
                     {"ratio", p.ratio},
                     {"ratio_percent", p.ratio_percent},
                     {"compute_winner", to_string(p.verdict.winner)}});
  }
  return json{{"tables", tables}, {"pairs", pairs}};
}

}  // namespace admmprune
