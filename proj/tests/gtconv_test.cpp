#include <gtest/gtest.h>

#include "support.hpp"
#include "tsdet/gtconv.hpp"

namespace tsdet {
namespace {

using testing::max_abs_diff;
using testing::random_conv;
using testing::random_tensor;
using testing::random_layer;
using testing::zero_generators;

TEST(FrameSequenceBuffer, PadsWithOldestFrame) {
  FrameSequenceBuffer<double> buf(4);
  EXPECT_THROW(buf.window(), InvalidInput);
  const TensorD a({1, 1, 1}, 1.0), b({1, 1, 1}, 2.0);
  buf.push(a);
  buf.push(b);
  const TensorD w = buf.window();
  ASSERT_EQ(w.dims(), (Shape{4, 1, 1, 1}));
  EXPECT_EQ(w.values()(0), 1.0);
  EXPECT_EQ(w.values()(1), 1.0);
  EXPECT_EQ(w.values()(2), 1.0);
  EXPECT_EQ(w.values()(3), 2.0);
  for (int k = 3; k <= 6; ++k) buf.push(TensorD({1, 1, 1}, k));
  EXPECT_EQ(buf.size(), 4u);
  EXPECT_EQ(buf.window().values()(0), 3.0);
  EXPECT_THROW(buf.push(TensorD({1, 2, 1}, 0.0)), InvalidInput);
  EXPECT_THROW(FrameSequenceBuffer<double>(0), InvalidInput);
}

TEST(TemporalSummary, ZeroParametersGiveZero) {
  SynthRng rng(51);
  auto layer = GtConvLayer<double>::identity_calibration(make_conv2d<double>(2, 3, 3), 4);
  const TensorD seq = random_tensor(rng, {4, 3, 5, 5});
  const TensorD s = temporal_summary(seq, layer);
  ASSERT_EQ(s.dims(), (Shape{4, 4, 1, 1}));
  EXPECT_TRUE((s.values() == 0.0).all());
}

TEST(TemporalSummary, ConstantInputWithIdentityAggregation) {
  // F = identity 1x1 on both branches, neutral BN, eps 0: S = ReLU(2v).
  auto layer = GtConvLayer<double>::identity_calibration(make_conv2d<double>(2, 2, 3), 2);
  for (auto* f : {&layer.f_agg_gap, &layer.f_agg_sap}) {
    f->weight(0, 0, 0, 0, 0) = 1.0;
    f->weight(1, 1, 0, 0, 0) = 1.0;
  }
  layer.sap_attn.weight.values().setConstant(0.7);
  TensorD seq({3, 2, 4, 4});
  for (Index t = 0; t < 3; ++t) {
    for (Index i = 0; i < 16; ++i) {
      seq.values()(t * 32 + i) = 0.4;
      seq.values()(t * 32 + 16 + i) = -0.3;
    }
  }
  const TensorD s = temporal_summary(seq, layer);
  for (Index t = 0; t < 3; ++t) {
    EXPECT_NEAR(s(t, 0, 0, 0), 0.8, 1e-12);
    EXPECT_EQ(s(t, 1, 0, 0), 0.0);
  }
}

TEST(TemporalSummary, SingleFrameBufferIsAccepted) {
  SynthRng rng(52);
  const auto layer = random_layer(rng, 2, 3, 2);
  FrameSequenceBuffer<double> buf(1);
  buf.push(random_tensor(rng, {2, 4, 4}));
  EXPECT_EQ(temporal_summary(buf.window(), layer).dims(), (Shape{1, 2, 1, 1}));
}

TEST(CalibrationFactors, ZeroGeneratorsGiveOne) {
  SynthRng rng(53);
  auto layer = random_layer(rng, 2, 3, 4);
  zero_generators(layer);
  const auto alpha = calibration_factors(random_tensor(rng, {4, 4, 1, 1}), layer);
  EXPECT_TRUE((alpha.weight == 1.0).all());
  EXPECT_TRUE((alpha.bias == 1.0).all());
}

TEST(CalibrationFactors, BiasOnlyGenerator) {
  SynthRng rng(54);
  auto layer = random_layer(rng, 2, 3, 4);
  zero_generators(layer);
  layer.f_b.bias.values().setConstant(0.5);
  const auto alpha = calibration_factors(random_tensor(rng, {4, 4, 1, 1}), layer);
  EXPECT_TRUE((alpha.bias == 1.5).all());
  EXPECT_TRUE((alpha.weight == 1.0).all());
}

TEST(CalibrationFactors, LinearInSummaryForBiasFreeGenerator) {
  SynthRng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    auto layer = random_layer(rng, 2, 3, 4);
    layer.f_w.bias.values().setZero();
    const TensorD s = random_tensor(rng, {4, 4, 1, 1});
    const auto a1 = calibration_factors(s, layer);
    const auto a2 = calibration_factors(2.0 * s, layer);
    ASSERT_LT(((a2.weight - 1.0) - 2.0 * (a1.weight - 1.0)).abs().maxCoeff(), 1e-12);
  }
}

TEST(CalibrationFactors, UsesNewestTemporalIndex) {
  // f_w reads only the last tap of its [3,1,1] kernel, i.e. the frame after
  // the current one, which is zero padding at the newest index.
  auto layer = GtConvLayer<double>::identity_calibration(make_conv2d<double>(1, 1, 1), 1);
  layer.f_w.weight(0, 0, 2, 0, 0) = 1.0;
  layer.f_b.weight(0, 0, 1, 0, 0) = 1.0;
  const TensorD s({3, 1, 1, 1}, {0.25, 0.5, 0.75});
  const auto alpha = calibration_factors(s, layer);
  EXPECT_EQ(alpha.weight[0], 1.0);
  EXPECT_EQ(alpha.bias[0], 1.75);
}

TEST(GtConvForward, ScalingByConstantFactors) {
  SynthRng rng(56);
  auto layer = random_layer(rng, 2, 3, 4);
  zero_generators(layer);
  layer.base.bias.values().setZero();
  layer.f_w.bias.values().setConstant(1.0);  // alpha_w = 2
  const TensorD x = random_tensor(rng, {2, 5, 6});
  FrameSequenceBuffer<double> buf(4);
  buf.push(x);
  const TensorD y = gtconv_forward(x, buf, layer);
  EXPECT_LT(max_abs_diff(y, 2.0 * conv2d(x, layer.base)), 1e-12);
}

TEST(GtConvForward, ZeroFactorAnnihilatesChannel) {
  SynthRng rng(57);
  auto layer = random_layer(rng, 2, 2, 3);
  zero_generators(layer);
  layer.base.bias(1) = 0.0;
  layer.f_w.bias(1) = -1.0;  // alpha_w = (1, 0)
  const TensorD x = random_tensor(rng, {2, 4, 4});
  FrameSequenceBuffer<double> buf;
  buf.push(x);
  const TensorD y = gtconv_forward(x, buf, layer);
  EXPECT_TRUE((y.frame(1).values() == 0.0).all());
  EXPECT_LT(max_abs_diff(y.frame(0), conv2d(x, layer.base).frame(0)), 1e-12);
}

TEST(GtConvForward, RequiresCurrentFrameInBuffer) {
  SynthRng rng(58);
  const auto layer = random_layer(rng, 1, 1, 1);
  FrameSequenceBuffer<double> buf;
  const TensorD x = random_tensor(rng, {1, 3, 3});
  EXPECT_THROW(gtconv_forward(x, buf, layer), InvalidInput);
  buf.push(random_tensor(rng, {1, 3, 3}));
  EXPECT_THROW(gtconv_forward(x, buf, layer), InvalidInput);
}

TEST(GtConvProperty, ZeroGeneratorsReduceToConv2d) {
  SynthRng rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    const Index cin = 1 + trial % 3, cout = 1 + trial % 4, cs = 1 + trial % 5;
    auto layer = random_layer(rng, cin, cout, cs);
    zero_generators(layer);
    FrameSequenceBuffer<double> buf(1 + trial % 4);
    TensorD x;
    for (int t = 0; t <= trial % 6; ++t) {
      x = random_tensor(rng, {cin, 3 + trial % 4, 2 + trial % 5});
      buf.push(x);
    }
    ASSERT_LT(max_abs_diff(gtconv_forward(x, buf, layer), conv2d(x, layer.base)), 1e-6);
  }
}

TEST(GtConvProperty, ScalingCovariance) {
  SynthRng rng(60);
  for (int trial = 0; trial < 50; ++trial) {
    auto layer = random_layer(rng, 2, 3, 2);
    layer.base.bias.values().setZero();
    const TensorD x = random_tensor(rng, {2, 4, 4});
    FrameSequenceBuffer<double> buf;
    buf.push(random_tensor(rng, {2, 4, 4}));
    buf.push(x);
    const auto alpha = calibration_factors(temporal_summary(buf.window(), layer), layer);
    const double c = rng.uniform(-2.0, 3.0);
    auto scaled = alpha;
    scaled.weight *= c;
    const TensorD y = conv2d(x, calibrated(layer.base, alpha));
    const TensorD yc = conv2d(x, calibrated(layer.base, scaled));
    ASSERT_LT(max_abs_diff(yc, c * y), 1e-9);
    ASSERT_LT(max_abs_diff(y, gtconv_forward(x, buf, layer)), 1e-12);
  }
}

TEST(GtConvProperty, SameHistorySameOutput) {
  SynthRng rng(61);
  const auto layer = random_layer(rng, 2, 2, 3);
  std::vector<TensorD> history;
  for (int t = 0; t < 7; ++t) history.push_back(random_tensor(rng, {2, 4, 3}));
  FrameSequenceBuffer<double> a(4), b(4);
  for (const auto& f : history) a.push(f);
  b.push(random_tensor(rng, {2, 4, 3}));  // evicted long before the end
  for (const auto& f : history) b.push(f);
  EXPECT_EQ(gtconv_forward(history.back(), a, layer), gtconv_forward(history.back(), b, layer));
}

TEST(GtConvProperty, ColdStartEqualsConstantHistory) {
  SynthRng rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const auto layer = random_layer(rng, 2, 3, 2);
    const TensorD x = random_tensor(rng, {2, 4, 4});
    FrameSequenceBuffer<double> cold(4), warm(4);
    cold.push(x);
    for (int t = 0; t < 4; ++t) warm.push(x);
    const TensorD y = gtconv_forward(x, cold, layer);
    EXPECT_TRUE(y.values().allFinite());
    EXPECT_EQ(y, gtconv_forward(x, warm, layer));
  }
}

TEST(LoadGtConv, ReportsMissingNames) {
  NamedTensors w;
  w["gtconv.base.weight"] = TensorD({1, 1, 3, 3}, 0.0);
  try {
    load_gtconv<double>(w);
    FAIL() << "expected missing weights";
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gtconv.base.bias"), std::string::npos);
    EXPECT_NE(msg.find("gtconv.bn.var"), std::string::npos);
    EXPECT_EQ(msg.find("gtconv.base.weight"), std::string::npos);
  }
}

TEST(LoadGtConv, BuildsLayerWithSamePadding) {
  NamedTensors w;
  w["gtconv.base.weight"] = TensorD({2, 1, 3, 3}, 0.1);
  w["gtconv.base.bias"] = TensorD({2}, 0.0);
  for (const char* agg : {"gtconv.f_agg_gap", "gtconv.f_agg_sap"}) {
    w[std::string(agg) + ".weight"] = TensorD({3, 1, 1, 1, 1}, 1.0);
    w[std::string(agg) + ".bias"] = TensorD({3}, 0.0);
  }
  for (const char* gen : {"gtconv.f_w", "gtconv.f_b"}) {
    w[std::string(gen) + ".weight"] = TensorD({2, 3, 3, 1, 1}, 0.0);
    w[std::string(gen) + ".bias"] = TensorD({2}, 0.0);
  }
  w["gtconv.sap_attn.weight"] = TensorD({1, 1, 1, 1}, 0.0);
  w["gtconv.sap_attn.bias"] = TensorD({1}, 0.0);
  w["gtconv.bn.mean"] = TensorD({3}, 0.0);
  w["gtconv.bn.var"] = TensorD({3}, 1.0);
  w["gtconv.bn.gamma"] = TensorD({3}, 1.0);
  w["gtconv.bn.beta"] = TensorD({3}, 0.0);
  const auto layer = load_gtconv<double>(w);
  EXPECT_EQ(layer.base.padding, 1);
  EXPECT_EQ(layer.f_w.padding, 1);
  EXPECT_EQ(layer.f_agg_gap.padding, 0);
  EXPECT_EQ(layer.bn.eps, 1e-5);
  const TensorD x({1, 5, 4}, 1.0);
  FrameSequenceBuffer<double> buf;
  buf.push(x);
  EXPECT_EQ(gtconv_forward(x, buf, layer).dims(), (Shape{2, 5, 4}));

  w["gtconv.f_w.weight"] = TensorD({3, 3, 3, 1, 1}, 0.0);
  EXPECT_THROW(load_gtconv<double>(w), InvalidInput);
}

}  // namespace
}  // namespace tsdet
