#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tsdet/synthgen.hpp"
#include "tsdet/tsio.hpp"

namespace tsdet {
namespace {

using testing::slurp;

std::string format(const SequenceDataset& ds, BoxFormat f) {
  std::ostringstream os;
  format_detections(os, ds, f);
  return os.str();
}

TEST(SynthRng, MatchesStandardEngine) {
  // mt19937_64 10000th output is fixed by the standard.
  SynthRng rng(5489);
  std::uint64_t v = 0;
  for (int k = 0; k < 10000; ++k) v = rng.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(SynthRng, UniformAndNormalMoments) {
  SynthRng rng(3);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Synthgen, Deterministic) {
  SynthConfig cfg;
  cfg.seed = 11;
  const auto a = generate_ground_truth(cfg);
  const auto b = generate_ground_truth(cfg);
  EXPECT_EQ(format(a, BoxFormat::ground_truth), format(b, BoxFormat::ground_truth));
  EXPECT_EQ(format(corrupt_candidates(a, cfg), BoxFormat::predictions),
            format(corrupt_candidates(b, cfg), BoxFormat::predictions));
}

TEST(Synthgen, SeedChangesOutput) {
  SynthConfig a, b;
  a.seed = 1;
  b.seed = 2;
  EXPECT_NE(format(generate_ground_truth(a), BoxFormat::ground_truth),
            format(generate_ground_truth(b), BoxFormat::ground_truth));
}

TEST(Synthgen, GoldenSeed42) {
  SynthConfig cfg;
  cfg.seed = 42;
  const auto gt = generate_ground_truth(cfg);
  const std::string dir = TSDET_TEST_DATA;
  EXPECT_EQ(format(gt, BoxFormat::ground_truth), slurp(dir + "/synth42_gt.txt"));
  EXPECT_EQ(format(corrupt_candidates(gt, cfg), BoxFormat::predictions),
            slurp(dir + "/synth42_cand.txt"));
}

TEST(Synthgen, StaticObjectWithoutOcclusion) {
  SynthConfig cfg;
  cfg.velocity_x = cfg.velocity_y = 0.0;
  cfg.occlusion_prob = 0.0;
  cfg.n_frames = 50;
  const auto gt = generate_ground_truth(cfg);
  ASSERT_EQ(gt.size(), 50u);
  for (const auto& f : gt) {
    ASSERT_EQ(f.boxes.size(), 1u);
    EXPECT_EQ(f.boxes[0], gt[0].boxes[0]);
  }
}

TEST(Synthgen, FullOcclusionGivesOnlyNegativeFrames) {
  SynthConfig cfg;
  cfg.occlusion_prob = 1.0;
  cfg.n_frames = 40;
  for (const auto& f : generate_ground_truth(cfg)) EXPECT_TRUE(f.boxes.empty());
}

TEST(Synthgen, PerfectCorrelationNoJitterGivesExactCopies) {
  SynthConfig cfg;
  cfg.rho = 1.0;
  cfg.box_jitter = 0.0;
  cfg.dropout_prob = 0.0;
  cfg.n_frames = 30;
  const auto gt = generate_ground_truth(cfg);
  const auto cand = corrupt_candidates(gt, cfg);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (gt[f].boxes.empty()) continue;
    ASSERT_EQ(cand[f].boxes.size(), cfg.candidates);
    for (const auto& b : cand[f].boxes) EXPECT_DOUBLE_EQ(iou(b, gt[f].boxes[0]), 1.0);
  }
}

TEST(Synthgen, PerfectCorrelationTopScoreIsBestLocalized) {
  SynthConfig cfg;
  cfg.rho = 1.0;
  cfg.seed = 9;
  const auto gt = generate_ground_truth(cfg);
  const auto stats = measure_discrepancy(gt, corrupt_candidates(gt, cfg));
  EXPECT_GT(stats.positive_frames, 400u);
  EXPECT_EQ(stats.discrepant_frames, 0u);
  EXPECT_NEAR(stats.mean_rank_correlation, 1.0, 1e-12);
}

TEST(Synthgen, UncorrelatedScoresAreMostlyDiscrepant) {
  SynthConfig cfg;
  cfg.rho = 0.0;
  cfg.seed = 7;
  const auto gt = generate_ground_truth(cfg);
  const auto stats = measure_discrepancy(gt, corrupt_candidates(gt, cfg));
  EXPECT_GT(static_cast<double>(stats.discrepant_frames) / stats.positive_frames, 0.5);
}

TEST(Synthgen, RankCorrelationFollowsDial) {
  double prev = -2.0;
  for (double rho : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    SynthConfig cfg;
    cfg.rho = rho;
    cfg.seed = 21;
    const auto gt = generate_ground_truth(cfg);
    const auto c = measure_discrepancy(gt, corrupt_candidates(gt, cfg)).mean_rank_correlation;
    EXPECT_GT(c, prev) << rho;
    prev = c;
  }
}

TEST(Synthgen, OutputIsValid) {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.velocity_x = 3.0;  // runs into the border and gets clamped
    cfg.box_jitter = 0.5;
    cfg.false_positive_prob = 0.5;
    const auto gt = generate_ground_truth(cfg);
    const auto cand = corrupt_candidates(gt, cfg);
    EXPECT_NO_THROW(validate(gt));
    EXPECT_NO_THROW(validate(cand));
    for (const auto& f : gt) {
      for (const auto& b : f.boxes) {
        EXPECT_GE(b.x1, 0.0);
        EXPECT_LE(b.x2, cfg.image_w);
      }
    }
    for (const auto& f : cand) {
      for (const auto& b : f.boxes) {
        EXPECT_GE(b.score, 0.0);
        EXPECT_LE(b.score, 1.0);
      }
    }
  }
}

TEST(Synthgen, InvalidConfig) {
  SynthConfig cfg;
  cfg.rho = 1.5;
  EXPECT_THROW(generate_ground_truth(cfg), InvalidInput);
  cfg = {};
  cfg.occlusion_prob = -0.1;
  EXPECT_THROW(cfg.validate(), InvalidInput);
  cfg = {};
  cfg.candidates = 0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(Synthgen, ApplyConfig) {
  SynthConfig cfg;
  apply_config(cfg, {{"rho", "0.25"}, {"n_frames", "12"}, {"seed", "99"}});
  EXPECT_DOUBLE_EQ(cfg.rho, 0.25);
  EXPECT_EQ(cfg.n_frames, 12u);
  EXPECT_EQ(cfg.seed, 99u);
  try {
    apply_config(cfg, {{"rhoo", "0.1"}});
    FAIL() << "expected unknown key error";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.code(), FormatError::Code::unknown_key);
    EXPECT_NE(std::string(e.what()).find("rhoo"), std::string::npos);
  }
  EXPECT_THROW(apply_config(cfg, {{"n_frames", "1.5"}}), FormatError);
}

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {10, 20, 30}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 1, 1}, {3, 2, 1}), 0.0);
  EXPECT_DOUBLE_EQ(spearman({1}, {1}), 0.0);
  // Ties take the average rank: ranks (0.5, 0.5, 2) vs (0, 1, 2).
  EXPECT_NEAR(spearman({1, 1, 2}, {1, 2, 3}), std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(RenderFrame, BlobIsBrighterThanBackground) {
  SynthConfig cfg;
  cfg.brightness_min = cfg.brightness_max = 1.0;
  const FrameDetections f{"s", 0, {{100, 100, 300, 300, 1.0, 0}}};
  const auto img = render_frame(cfg, f, 64, 48);
  ASSERT_EQ(img.dims(), (Shape{1, 48, 64}));
  EXPECT_GT(img(0, 20, 20), img(0, 45, 60) + 0.3);
  EXPECT_GE(img.values().minCoeff(), 0.0);
  EXPECT_LE(img.values().maxCoeff(), 1.0);
  const auto again = render_frame(cfg, f, 64, 48);
  EXPECT_EQ(testing::max_abs_diff(img, again), 0.0);
  EXPECT_THROW(render_frame(cfg, f, 0, 10), InvalidInput);
}

}  // namespace
}  // namespace tsdet
