#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "admmprune/checkpoint.hpp"
#include "admmprune/mnist.hpp"
#include "admmprune/model.hpp"
#include "admmprune/tensor.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace admmprune;

namespace {

WeightTensor random_conv(std::mt19937_64& rng, std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(a * b * c * d);
  for (double& x : v) x = n(rng);
  return WeightTensor::conv(a, b, c, d, v);
}

}  // namespace

TEST(Tensor, RejectsMismatchedValueCount) {
  EXPECT_THROW(WeightTensor::conv(2, 2, 3, 3, std::vector<double>(5)), ShapeError);
  EXPECT_THROW(WeightTensor::fc(2, 3, std::vector<double>(7)), ShapeError);
}

TEST(Tensor, RequireFiniteNamesContext) {
  auto w = WeightTensor::fc(1, 2, {1.0, std::nan("")});
  try {
    w.require_finite("conv9");
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("conv9"), std::string::npos);
  }
}

TEST(Tensor, StructuredViewsMatchIndependentGrouping) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<std::size_t> s(1, 4);
    const auto w = random_conv(rng, s(rng), s(rng), s(rng), s(rng));
    const std::pair<GroupAxis, ConstraintKind> axes[] = {{GroupAxis::filter, ConstraintKind::filter},
                                                         {GroupAxis::channel, ConstraintKind::channel},
                                                         {GroupAxis::column, ConstraintKind::column}};
    for (auto [axis, kind] : axes) {
      auto view = structured_view(w, axis);
      auto ref = oracle::groups(w.dims(), kind);
      ASSERT_EQ(view.size(), ref.size());
      ASSERT_EQ(group_count(w.dims(), axis), ref.size());
      for (std::size_t g = 0; g < ref.size(); ++g) {
        std::sort(view[g].begin(), view[g].end());
        std::sort(ref[g].begin(), ref[g].end());
        EXPECT_EQ(view[g], ref[g]);
        for (std::size_t k : ref[g]) EXPECT_EQ(group_of(w.dims(), axis, k), g);
      }
    }
  }
}

TEST(Tensor, GemmRoundTripAndLayout) {
  std::mt19937_64 rng(2);
  const auto w = random_conv(rng, 3, 2, 2, 2);
  const GemmMatrix m = to_gemm(w);
  EXPECT_EQ(m.rows, 3u);
  EXPECT_EQ(m.cols, 8u);
  EXPECT_EQ(m.at(1, 5), w.at(1, 1, 0, 1));
  EXPECT_EQ(from_gemm(m, w.dims()), w);
}

TEST(Tensor, CountsNonzeroGroups) {
  auto w = WeightTensor::conv(2, 2, 1, 1, {1, 0, 0, 0});
  EXPECT_EQ(count_nonzero(w), 1u);
  EXPECT_EQ(count_nonzero_groups(w, GroupAxis::filter), 1u);
  EXPECT_EQ(count_nonzero_groups(w, GroupAxis::channel), 1u);
  EXPECT_EQ(count_nonzero_groups(w, GroupAxis::column), 1u);
}

TEST(Model, LenetShapesAndParameterCount) {
  const Model m = make_architecture("lenet5", 1);
  const auto shapes = feature_shapes(m);
  ASSERT_EQ(shapes.size(), 6u);
  EXPECT_EQ(shapes[1], (FeatureShape{6, 14, 14}));
  EXPECT_EQ(shapes[2], (FeatureShape{16, 5, 5}));
  EXPECT_EQ(shapes.back(), (FeatureShape{10, 1, 1}));
  EXPECT_EQ(pruning_rate(m).total, 150u + 2400 + 48000 + 10080 + 840);
  EXPECT_EQ(parameter_count(make_architecture("lenet5-caffe", 1)), 431080u);
}

TEST(Model, UnknownArchitectureThrows) { EXPECT_THROW(make_architecture("resnet", 1), std::invalid_argument); }

TEST(Model, ValidateRejectsBrokenChain) {
  Model m = make_architecture("lenet5", 1);
  m.layers[2].weights = WeightTensor::fc(120, 401);
  EXPECT_THROW(m.validate(), ShapeError);
}

TEST(Model, PruningRateIsExactAndInfiniteWhenEmpty) {
  Model m = fixture::toy_model(3, 1);
  const auto before = pruning_rate(m);
  EXPECT_DOUBLE_EQ(before.rate(), 1.0);
  for (auto& l : m.layers)
    for (double& v : l.weights.mutable_values()) v = 0.0;
  EXPECT_TRUE(std::isinf(pruning_rate(m).rate()));
  EXPECT_EQ(pruning_rate(m, is_conv_layer).total, 36u);
}

TEST(Model, FilterPropagationFreezesConsumers) {
  Model m = fixture::toy_model(3, 2);
  auto w = m.layers[0].weights.mutable_values();
  for (std::size_t k = 9; k < 18; ++k) w[k] = 0.0;  // filter 1
  const Model p = propagate_filter_pruning(m, 0, {1});
  const Layer& next = p.layers[1];
  ASSERT_FALSE(next.mask.empty());
  // fc1 reads channel 1 at flat columns 9..17 of each row.
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 36; ++c) {
      const std::size_t k = r * 36 + c;
      const bool consumer = c >= 9 && c < 18;
      EXPECT_EQ(next.mask[k] == 0, consumer);
      if (consumer) EXPECT_EQ(next.weights.values()[k], 0.0);
    }
  EXPECT_EQ(p.layers[0].bias.values[1], 0.0);
  ASSERT_FALSE(p.layers[0].bias_mask.empty());
  EXPECT_EQ(p.layers[0].bias_mask[1], 0);

  std::string notice;
  const Model last = propagate_filter_pruning(m, 2, {0}, &notice);
  EXPECT_EQ(last, m);
  EXPECT_FALSE(notice.empty());
}

TEST(Model, CompactRemovesDeadFiltersWithoutChangingOutputs) {
  Model m = fixture::toy_model(3, 3);
  auto w = m.layers[0].weights.mutable_values();
  for (std::size_t k = 0; k < 9; ++k) w[k] = 0.0;
  m = propagate_filter_pruning(m, 0, {0});
  const Model c = compact(m);
  EXPECT_EQ(c.layers[0].weights.dims().filters, 3u);
  EXPECT_EQ(c.layers[1].weights.dims().channels, 27u);
  const Dataset d = fixture::toy_dataset(m.input, 3, 16, 5);
  const auto a = forward(m, batch_of(d, 0, 16));
  const auto b = forward(c, batch_of(d, 0, 16));
  ASSERT_EQ(a.logits.size(), b.logits.size());
  for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  fixture::TempDir tmp;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Model m = make_architecture(seed % 2 ? "lenet5" : "lenet5-caffe", seed);
    m.layers[1].mask.assign(m.layers[1].weights.size(), 1);
    m.layers[1].mask[3] = 0;
    m.layers[0].quantization = QuantizationInfo{4, 0.1 / 3.0};
    const auto path = tmp.path() / "m.json";
    save_checkpoint(m, path);
    EXPECT_EQ(load_checkpoint(path), m);
  }
}

TEST(Checkpoint, RejectsWrongFormat) {
  fixture::TempDir tmp;
  const auto path = tmp.path() / "bad.json";
  write_text_atomic(path, R"({"format": "something-else", "version": 1})");
  EXPECT_ANY_THROW(load_checkpoint(path));
}

TEST(Mnist, ReadsIdxFiles) {
  fixture::TempDir tmp;
  fixture::write_synthetic_mnist(tmp.path(), 12, 5, 1);
  const Dataset train = load_mnist(tmp.path(), Split::train);
  const Dataset test = load_mnist(tmp.path(), Split::test);
  EXPECT_EQ(train.count, 12u);
  EXPECT_EQ(test.count, 5u);
  EXPECT_EQ(train.image_size(), 784u);
  for (double v : train.images) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(train.head(3).count, 3u);
}

TEST(Mnist, RejectsBadMagicAndTruncation) {
  fixture::TempDir tmp;
  fixture::write_synthetic_mnist(tmp.path(), 4, 4, 1);
  {
    std::fstream f(tmp.path() / "train-images-idx3-ubyte", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(3);
    f.put(0x01);
  }
  EXPECT_THROW(read_idx_images(tmp.path() / "train-images-idx3-ubyte"), FormatError);
  std::filesystem::resize_file(tmp.path() / "t10k-labels-idx1-ubyte", 9);
  EXPECT_THROW(read_idx_labels(tmp.path() / "t10k-labels-idx1-ubyte"), FormatError);
  EXPECT_ANY_THROW(load_mnist(tmp.path() / "missing", Split::train));
}
