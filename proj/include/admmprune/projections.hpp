#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "admmprune/tensor.hpp"

namespace admmprune {

enum class ConstraintKind { none, nonstructured, filter, channel, column, quantization };

const char* to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from(const std::string& s);

/// Constraint set of one layer. `budget` is a count (max nonzero weights,
/// filters, channels or column vectors); `levels` is used by quantization.
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::none;
  std::size_t budget = 0;
  std::vector<double> levels;

  static ConstraintSpec none() { return {}; }
  static ConstraintSpec nonstructured(std::size_t alpha) { return {ConstraintKind::nonstructured, alpha, {}}; }
  static ConstraintSpec filter(std::size_t beta) { return {ConstraintKind::filter, beta, {}}; }
  static ConstraintSpec channel(std::size_t gamma) { return {ConstraintKind::channel, gamma, {}}; }
  static ConstraintSpec column(std::size_t theta) { return {ConstraintKind::column, theta, {}}; }
  static ConstraintSpec quantization(std::vector<double> levels) {
    return {ConstraintKind::quantization, 0, std::move(levels)};
  }

  bool is_pruning() const {
    return kind == ConstraintKind::nonstructured || kind == ConstraintKind::filter ||
           kind == ConstraintKind::channel || kind == ConstraintKind::column;
  }

  /// Throws std::invalid_argument when the budget exceeds the group count of
  /// `dims` or the levels are not strictly increasing with constant spacing.
  void validate(const Shape4& dims) const;

  bool operator==(const ConstraintSpec&) const = default;
};

struct ProjectionResult {
  WeightTensor projected;
  std::vector<std::uint8_t> mask;  // 1 where the projected entry is nonzero
  double distance = 0.0;           // squared Euclidean distance moved
};

ProjectionResult project_nonstructured(const WeightTensor& x, std::size_t alpha);
ProjectionResult project_filter(const WeightTensor& x, std::size_t beta);
ProjectionResult project_channel(const WeightTensor& x, std::size_t gamma);
ProjectionResult project_column(const WeightTensor& x, std::size_t theta);
ProjectionResult project_groups(const WeightTensor& x, GroupAxis axis, std::size_t keep);
ProjectionResult project_quantization(const WeightTensor& x, std::span<const double> levels);
ProjectionResult project(const WeightTensor& x, const ConstraintSpec& spec);

/// Nearest level; an exact midpoint goes to the smaller level.
double nearest_level(double v, std::span<const double> levels);

/// True iff `w` lies in the constraint set.
bool satisfies(const WeightTensor& w, const ConstraintSpec& spec);

/// Indices of the `keep` largest scores; equal scores keep the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t keep);

/// M equal-distance levels symmetric about zero: (j - (M-1)/2) * spacing.
/// Zero is a level iff M is odd.
std::vector<double> symmetric_levels(std::size_t count, double spacing);

/// Spacing minimizing the projection distance of `values` onto
/// symmetric_levels(count, spacing), found by a grid sweep over
/// (0, max|v| / ((count-1)/2)] followed by golden-section refinement.
/// Only entries with a nonzero `include` flag (all when empty) are considered.
double calibrate_spacing(std::span<const double> values, std::size_t count,
                         std::span<const std::uint8_t> include = {});

}  // namespace admmprune
