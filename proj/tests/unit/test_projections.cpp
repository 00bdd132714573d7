#include <gtest/gtest.h>

#include <random>

#include "admmprune/projections.hpp"
#include "oracles.hpp"

using namespace admmprune;

namespace {

WeightTensor random_small(std::mt19937_64& rng, bool ties) {
  std::uniform_int_distribution<std::size_t> a(1, 4), b(1, 3), hw(1, 2);
  while (true) {
    const Shape4 d{a(rng), b(rng), hw(rng), hw(rng)};
    if (d.numel() > 12 || d.channels * d.height * d.width > 10) continue;
    std::vector<double> v(d.numel());
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_int_distribution<int> small(-1, 1);
    for (double& x : v) x = ties ? small(rng) : n(rng);
    return WeightTensor::conv(d.filters, d.channels, d.height, d.width, v);
  }
}

}  // namespace

class GroupProjection : public ::testing::TestWithParam<ConstraintKind> {};

TEST_P(GroupProjection, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(static_cast<unsigned>(GetParam()) * 17);
  for (int t = 0; t < 300; ++t) {
    const auto x = random_small(rng, t % 3 == 0);
    const auto groups = oracle::groups(x.dims(), GetParam());
    ConstraintSpec spec{GetParam(), std::uniform_int_distribution<std::size_t>(0, groups.size())(rng), {}};
    const auto r = project(x, spec);
    const auto bf = oracle::brute_force(x, spec);
    std::vector<bool> kept(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (std::size_t k : groups[g]) kept[g] = kept[g] || r.projected.values()[k] != 0.0;
    EXPECT_EQ(oracle::distance_keeping(x, groups, kept), bf.min_distance);
    EXPECT_NEAR(r.distance, bf.min_distance, 1e-12 * std::max(1.0, bf.min_distance));
    EXPECT_TRUE(satisfies(r.projected, spec));
  }
}

TEST_P(GroupProjection, IsIdempotentAndMaskIsSupport) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    const auto x = random_small(rng, false);
    const std::size_t n = oracle::groups(x.dims(), GetParam()).size();
    ConstraintSpec spec{GetParam(), n / 2, {}};
    const auto once = project(x, spec);
    const auto twice = project(once.projected, spec);
    EXPECT_EQ(twice.projected, once.projected);
    EXPECT_EQ(twice.distance, 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_EQ(once.mask[k] != 0, once.projected.values()[k] != 0.0);
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, GroupProjection,
                         ::testing::Values(ConstraintKind::nonstructured, ConstraintKind::filter,
                                           ConstraintKind::channel, ConstraintKind::column),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Projection, NonstructuredKeepsLargestMagnitudesLowerIndexOnTies) {
  const auto x = WeightTensor::fc(1, 5, {0.5, -2.0, 1.0, -1.0, 0.1});
  const auto r = project_nonstructured(x, 2);
  EXPECT_EQ(std::vector<double>(r.projected.values().begin(), r.projected.values().end()),
            (std::vector<double>{0, -2.0, 1.0, 0, 0}));
  EXPECT_DOUBLE_EQ(r.distance, 0.25 + 1.0 + 0.01);
}

TEST(Projection, FilterKeepsLargestNormFilters) {
  // Filter norms^2: 2, 8, 1.
  const auto x = WeightTensor::conv(3, 2, 1, 1, {1, 1, 2, 2, 1, 0});
  const auto r = project_filter(x, 1);
  EXPECT_EQ(std::vector<double>(r.projected.values().begin(), r.projected.values().end()),
            (std::vector<double>{0, 0, 2, 2, 0, 0}));
  EXPECT_DOUBLE_EQ(r.distance, 3.0);
}

TEST(Projection, ColumnAndChannelViews) {
  // 2 filters x 2 channels x 1 x 2: columns are (b, d) pairs across filters.
  const auto x = WeightTensor::conv(2, 2, 1, 2, {1, 0, 0, 3, 1, 0, 0, 3});
  const auto col = project_column(x, 1);
  EXPECT_EQ(count_nonzero(col.projected), 2u);
  EXPECT_EQ(col.projected.at(0, 1, 0, 1), 3.0);
  EXPECT_EQ(col.projected.at(1, 1, 0, 1), 3.0);
  const auto ch = project_channel(x, 1);
  EXPECT_EQ(ch.projected.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(ch.projected.at(0, 1, 0, 1), 3.0);
}

TEST(Projection, ZeroAndFullBudgets) {
  std::mt19937_64 rng(5);
  const auto x = random_small(rng, false);
  const auto none = project_nonstructured(x, 0);
  EXPECT_EQ(count_nonzero(none.projected), 0u);
  const auto all = project_nonstructured(x, x.size());
  EXPECT_EQ(all.projected, x);
  EXPECT_EQ(all.distance, 0.0);
}

TEST(Projection, QuantizationNearestLevelMidpointGoesDown) {
  const std::vector<double> levels{-1.0, 0.0, 1.0};
  EXPECT_EQ(nearest_level(0.5, levels), 0.0);
  EXPECT_EQ(nearest_level(-0.5, levels), -1.0);
  EXPECT_EQ(nearest_level(0.51, levels), 1.0);
  EXPECT_EQ(nearest_level(7.0, levels), 1.0);
  EXPECT_EQ(nearest_level(-7.0, levels), -1.0);
  const auto x = WeightTensor::fc(1, 4, {0.2, 0.5, -0.9, 3.0});
  const auto r = project_quantization(x, levels);
  EXPECT_EQ(std::vector<double>(r.projected.values().begin(), r.projected.values().end()),
            (std::vector<double>{0.0, 0.0, -1.0, 1.0}));
  EXPECT_DOUBLE_EQ(r.distance, 0.04 + 0.25 + 0.01 + 4.0);
}

TEST(Projection, QuantizationMatchesPerEntryOracle) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 300; ++t) {
    const std::size_t m = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
    const auto levels = symmetric_levels(m, std::uniform_real_distribution<double>(0.1, 1.0)(rng));
    const auto x = random_small(rng, false);
    const ConstraintSpec spec = ConstraintSpec::quantization(levels);
    const auto r = project(x, spec);
    const auto bf = oracle::brute_force(x, spec);
    EXPECT_NEAR(r.distance, bf.min_distance, 1e-12 * std::max(1.0, bf.min_distance));
    EXPECT_TRUE(satisfies(r.projected, spec));
  }
}

TEST(Projection, SymmetricLevelsContainZeroIffOdd) {
  for (std::size_t m = 1; m <= 9; ++m) {
    const auto l = symmetric_levels(m, 0.25);
    ASSERT_EQ(l.size(), m);
    EXPECT_EQ(std::find(l.begin(), l.end(), 0.0) != l.end(), m % 2 == 1);
    for (std::size_t j = 1; j < m; ++j) EXPECT_NEAR(l[j] - l[j - 1], 0.25, 1e-15);
    EXPECT_NEAR(l.front(), -l.back(), 1e-15);
  }
  EXPECT_THROW(symmetric_levels(0, 1.0), std::invalid_argument);
  EXPECT_THROW(symmetric_levels(3, 0.0), std::invalid_argument);
}

TEST(Projection, CalibratedSpacingBeatsNaiveGrid) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(500);
  for (double& x : v) x = n(rng);
  auto dist = [&](double spacing) {
    const auto l = symmetric_levels(8, spacing);
    double s = 0.0;
    for (double x : v) s += (x - nearest_level(x, l)) * (x - nearest_level(x, l));
    return s;
  };
  const double best = calibrate_spacing(v, 8);
  double max_abs = 0.0;
  for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  EXPECT_LT(dist(best), dist(max_abs / 3.5));
  for (double f : {0.9, 0.95, 1.05, 1.1}) EXPECT_LE(dist(best), dist(best * f) + 1e-12);
}

TEST(Projection, SpecValidation) {
  const Shape4 d{4, 2, 3, 3};
  EXPECT_NO_THROW(ConstraintSpec::filter(4).validate(d));
  EXPECT_THROW(ConstraintSpec::filter(5).validate(d), std::invalid_argument);
  EXPECT_THROW(ConstraintSpec::channel(3).validate(d), std::invalid_argument);
  EXPECT_THROW(ConstraintSpec::column(19).validate(d), std::invalid_argument);
  EXPECT_THROW(ConstraintSpec::nonstructured(73).validate(d), std::invalid_argument);
  EXPECT_THROW(ConstraintSpec::quantization({0.0, 1.0, 3.0}).validate(d), std::invalid_argument);
  EXPECT_THROW(ConstraintSpec::quantization({1.0, 0.0}).validate(d), std::invalid_argument);
  EXPECT_NO_THROW(ConstraintSpec::quantization({-0.5, 0.5}).validate(d));
}

TEST(Projection, TopKPrefersLowerIndexOnTies) {
  const std::vector<double> s{1.0, 3.0, 3.0, 2.0, 3.0};
  auto k = top_k_indices(s, 2);
  std::sort(k.begin(), k.end());
  EXPECT_EQ(k, (std::vector<std::size_t>{1, 2}));
}

TEST(Projection, KindNamesRoundTrip) {
  for (auto k : {ConstraintKind::none, ConstraintKind::nonstructured, ConstraintKind::filter, ConstraintKind::channel,
                 ConstraintKind::column, ConstraintKind::quantization})
    EXPECT_EQ(constraint_kind_from(to_string(k)), k);
  EXPECT_THROW(constraint_kind_from("diagonal"), std::invalid_argument);
}
