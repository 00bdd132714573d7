#include "admmprune/projections.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace admmprune {

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::none:
      return "none";
    case ConstraintKind::nonstructured:
      return "nonstructured";
    case ConstraintKind::filter:
      return "filter";
    case ConstraintKind::channel:
      return "channel";
    case ConstraintKind::column:
      return "column";
    case ConstraintKind::quantization:
      return "quantization";
  }
  return "?";
}

ConstraintKind constraint_kind_from(const std::string& s) {
  for (auto k : {ConstraintKind::none, ConstraintKind::nonstructured, ConstraintKind::filter,
                 ConstraintKind::channel, ConstraintKind::column, ConstraintKind::quantization}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown constraint kind '" + s + "'");
}

void ConstraintSpec::validate(const Shape4& dims) const {
  auto check_budget = [&](std::size_t groups, const char* what) {
    if (budget > groups) {
      throw std::invalid_argument(std::string(what) + " budget " + std::to_string(budget) +
                                  " exceeds group count " + std::to_string(groups));
    }
  };
  switch (kind) {
    case ConstraintKind::none:
      return;
    case ConstraintKind::nonstructured:
      return check_budget(dims.numel(), "nonstructured");
    case ConstraintKind::filter:
      return check_budget(dims.filters, "filter");
    case ConstraintKind::channel:
      return check_budget(dims.channels, "channel");
    case ConstraintKind::column:
      return check_budget(dims.filter_size(), "column");
    case ConstraintKind::quantization: {
      if (levels.empty()) throw std::invalid_argument("quantization needs at least one level");
      for (double l : levels)
        if (!std::isfinite(l)) throw std::invalid_argument("quantization level is not finite");
      if (levels.size() < 2) return;
      const double d = levels[1] - levels[0];
      if (!(d > 0.0)) throw std::invalid_argument("quantization levels must be strictly increasing");
      for (std::size_t j = 1; j < levels.size(); ++j) {
        const double dj = levels[j] - levels[j - 1];
        if (!(dj > 0.0)) throw std::invalid_argument("quantization levels must be strictly increasing");
        if (std::abs(dj - d) > 1e-9 * std::max(1.0, std::abs(d))) {
          throw std::invalid_argument("quantization levels must be equally spaced");
        }
      }
      return;
    }
  }
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t keep) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  keep = std::min(keep, idx.size());
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace {

ProjectionResult finish(const WeightTensor& x, std::vector<double> z) {
  ProjectionResult r;
  auto xv = x.values();
  r.mask.resize(z.size());
  double dist = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double diff = xv[k] - z[k];
    dist += diff * diff;
    r.mask[k] = z[k] != 0.0;
  }
  r.distance = dist;
  r.projected = WeightTensor(x.kind(), x.dims(), std::move(z));
  return r;
}

}  // namespace

ProjectionResult project_nonstructured(const WeightTensor& x, std::size_t alpha) {
  auto xv = x.values();
  if (alpha > xv.size()) throw std::invalid_argument("nonstructured budget exceeds element count");
  std::vector<double> mag(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) mag[k] = std::abs(xv[k]);
  std::vector<double> z(xv.size(), 0.0);
  for (std::size_t k : top_k_indices(mag, alpha)) z[k] = xv[k];
  return finish(x, std::move(z));
}

ProjectionResult project_groups(const WeightTensor& x, GroupAxis axis, std::size_t keep) {
  const auto& d = x.dims();
  const std::size_t groups = group_count(d, axis);
  if (keep > groups) throw std::invalid_argument(std::string(to_string(axis)) + " budget exceeds group count");
  auto xv = x.values();
  std::vector<double> norms(groups, 0.0);
  for (std::size_t k = 0; k < xv.size(); ++k) norms[group_of(d, axis, k)] += xv[k] * xv[k];
  std::vector<char> kept(groups, 0);
  for (std::size_t g : top_k_indices(norms, keep)) kept[g] = 1;
  std::vector<double> z(xv.size(), 0.0);
  for (std::size_t k = 0; k < xv.size(); ++k)
    if (kept[group_of(d, axis, k)]) z[k] = xv[k];
  return finish(x, std::move(z));
}

ProjectionResult project_filter(const WeightTensor& x, std::size_t beta) {
  return project_groups(x, GroupAxis::filter, beta);
}
ProjectionResult project_channel(const WeightTensor& x, std::size_t gamma) {
  return project_groups(x, GroupAxis::channel, gamma);
}
ProjectionResult project_column(const WeightTensor& x, std::size_t theta) {
  return project_groups(x, GroupAxis::column, theta);
}

double nearest_level(double v, std::span<const double> levels) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  if (it == levels.begin()) return levels.front();
  if (it == levels.end()) return levels.back();
  const double hi = *it;
  const double lo = *(it - 1);
  return (v - lo) <= (hi - v) ? lo : hi;
}

ProjectionResult project_quantization(const WeightTensor& x, std::span<const double> levels) {
  if (levels.empty()) throw std::invalid_argument("quantization needs at least one level");
  auto xv = x.values();
  std::vector<double> z(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) z[k] = nearest_level(xv[k], levels);
  return finish(x, std::move(z));
}

ProjectionResult project(const WeightTensor& x, const ConstraintSpec& spec) {
  spec.validate(x.dims());
  switch (spec.kind) {
    case ConstraintKind::none: {
      auto v = x.values();
      return finish(x, std::vector<double>(v.begin(), v.end()));
    }
    case ConstraintKind::nonstructured:
      return project_nonstructured(x, spec.budget);
    case ConstraintKind::filter:
      return project_filter(x, spec.budget);
    case ConstraintKind::channel:
      return project_channel(x, spec.budget);
    case ConstraintKind::column:
      return project_column(x, spec.budget);
    case ConstraintKind::quantization:
      return project_quantization(x, spec.levels);
  }
  throw std::logic_error("unhandled constraint kind");
}

bool satisfies(const WeightTensor& w, const ConstraintSpec& spec) {
  switch (spec.kind) {
    case ConstraintKind::none:
      return true;
    case ConstraintKind::nonstructured:
      return count_nonzero(w) <= spec.budget;
    case ConstraintKind::filter:
      return count_nonzero_groups(w, GroupAxis::filter) <= spec.budget;
    case ConstraintKind::channel:
      return count_nonzero_groups(w, GroupAxis::channel) <= spec.budget;
    case ConstraintKind::column:
      return count_nonzero_groups(w, GroupAxis::column) <= spec.budget;
    case ConstraintKind::quantization:
      return std::all_of(w.values().begin(), w.values().end(), [&](double v) {
        return std::binary_search(spec.levels.begin(), spec.levels.end(), v);
      });
  }
  return false;
}

std::vector<double> symmetric_levels(std::size_t count, double spacing) {
  if (count < 1) throw std::invalid_argument("level count must be >= 1");
  if (!(spacing > 0.0)) throw std::invalid_argument("level spacing must be > 0");
  std::vector<double> levels(count);
  const double center = (static_cast<double>(count) - 1.0) / 2.0;
  for (std::size_t j = 0; j < count; ++j) levels[j] = (static_cast<double>(j) - center) * spacing;
  return levels;
}

double calibrate_spacing(std::span<const double> values, std::size_t count,
                         std::span<const std::uint8_t> include) {
  if (count < 2) throw std::invalid_argument("calibration needs at least two levels");
  std::vector<double> sel;
  sel.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k)
    if (include.empty() || include[k]) sel.push_back(values[k]);
  double max_abs = 0.0;
  for (double v : sel) max_abs = std::max(max_abs, std::abs(v));
  if (sel.empty() || max_abs == 0.0) return 1.0;

  auto cost = [&](double d) {
    const auto lv = symmetric_levels(count, d);
    double s = 0.0;
    for (double v : sel) {
      const double e = v - nearest_level(v, lv);
      s += e * e;
    }
    return s;
  };
  const double d_max = max_abs / ((static_cast<double>(count) - 1.0) / 2.0);
  constexpr int kGrid = 256;
  double best_d = d_max, best_c = cost(d_max);
  for (int g = 1; g < kGrid; ++g) {
    const double d = d_max * g / kGrid;
    const double c = cost(d);
    if (c < best_c) {
      best_c = c;
      best_d = d;
    }
  }
  // Golden-section refinement inside the neighbouring grid cells.
  double lo = std::max(d_max / kGrid * 0.5, best_d - d_max / kGrid);
  double hi = std::min(d_max * 1.0, best_d + d_max / kGrid);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = hi - phi * (hi - lo), b = lo + phi * (hi - lo);
  double ca = cost(a), cb = cost(b);
  for (int it = 0; it < 40; ++it) {
    if (ca <= cb) {
      hi = b;
      b = a;
      cb = ca;
      a = hi - phi * (hi - lo);
      ca = cost(a);
    } else {
      lo = a;
      a = b;
      ca = cb;
      b = lo + phi * (hi - lo);
      cb = cost(b);
    }
  }
  const double refined = ca <= cb ? a : b;
  return std::min(ca, cb) < best_c ? refined : best_d;
}

}  // namespace admmprune
