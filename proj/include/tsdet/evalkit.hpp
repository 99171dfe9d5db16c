#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsdet/detgeom.hpp"

namespace tsdet {

/// Area range used to bucket ground truths (COCO small/medium/large).
struct AreaRange {
  double lo = 0.0;
  double hi = 1e10;

  bool contains(double a) const { return a >= lo && a <= hi; }

  static AreaRange all() { return {0.0, 1e10}; }
  static AreaRange small() { return {0.0, 32.0 * 32.0}; }
  static AreaRange medium() { return {32.0 * 32.0, 96.0 * 96.0}; }
  static AreaRange large() { return {96.0 * 96.0, 1e10}; }
};

/// Matching of one frame's predictions against its ground truths.
struct MatchResult {
  struct Prediction {
    std::size_t index = 0;              // position in the input list
    double score = 0.0;
    std::optional<std::size_t> gt;     // matched ground truth
    double iou = 0.0;                   // IoU with the matched ground truth
    bool ignored = false;               // excluded from AP (area filtering)
  };

  std::vector<Prediction> predictions;  // sorted by score, descending
  std::vector<bool> gt_covered;
  std::vector<bool> gt_ignored;
  double iou_threshold = 0.5;

  std::size_t true_positives() const;
  std::size_t false_positives() const;
  std::size_t false_negatives() const;
  std::size_t ground_truths() const;  // non-ignored
};

/// Greedy score-descending matching: each prediction takes the
/// highest-IoU unmatched ground truth with IoU >= iou_thresh. Score ties keep
/// the lower input index first. Ground truths outside `range` are ignored, as
/// are predictions matched to them and unmatched predictions outside it.
MatchResult match(std::span<const Box> preds, std::span<const Box> gts, double iou_thresh,
                  AreaRange range = AreaRange::all());

/// 101-point interpolated AP over matches pooled from many frames. Returns
/// nullopt when there are no (non-ignored) ground truths.
std::optional<double> average_precision(std::span<const MatchResult> frames);

/// One (prediction, ground-truth) pair of frames to evaluate together.
struct EvalFrame {
  std::vector<Box> preds;
  std::vector<Box> gts;
};

/// Default 0.50:0.05:0.95.
std::vector<double> default_iou_thresholds();

/// lo:step:hi inclusive, rounded to 1e-9 to avoid drift.
std::vector<double> iou_range(double lo, double step, double hi);

struct ApSummary {
  std::vector<std::pair<double, std::optional<double>>> per_threshold;
  std::optional<double> mean;       // over all thresholds
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::optional<double> sub_range;  // mean over [sub_lo, sub_hi]
  double sub_lo = 0.5;
  double sub_hi = 0.75;
};

ApSummary ap_over_range(std::span<const EvalFrame> frames, std::span<const double> thresholds,
                        AreaRange range = AreaRange::all(), double sub_lo = 0.5,
                        double sub_hi = 0.75);

struct MetricsReport {
  ApSummary ap;
  std::optional<double> ap_small, ap_medium, ap_large;
  double score_threshold = 0.5;
  double match_iou = 0.5;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean_iou = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct EvalOptions {
  std::vector<double> thresholds = default_iou_thresholds();
  double score_threshold = 0.5;
  double match_iou = 0.5;
  double sub_lo = 0.5;
  double sub_hi = 0.75;
};

/// Full report: AP over the thresholds, area-bucketed AP (s/m/l) over the
/// same thresholds, and P/R/F1/mean IoU at the operating point.
MetricsReport evaluate(std::span<const EvalFrame> frames, const EvalOptions& opts = {});

/// f1 = 2PR/(P+R), 0 when P+R = 0.
double f1_score(double precision, double recall);

/// `name<TAB>value` lines. Undefined APs print as "undefined".
void write_report(std::ostream& out, const MetricsReport& r);

/// Per-frame hit/miss of every ground truth.
struct TraceRow {
  std::size_t frame_index = 0;
  std::vector<int> recalled;
};

/// `frames` in temporal order; predictions below `score_thresh` are dropped
/// before matching at `iou_thresh`.
std::vector<TraceRow> recall_trace(std::span<const EvalFrame> frames,
                                   std::span<const std::size_t> frame_indices,
                                   double iou_thresh = 0.5, double score_thresh = 0.5);

struct FalsePositiveStats {
  std::size_t frames = 0;
  std::size_t fp_boxes = 0;
  std::size_t frames_with_fp = 0;
  double rate = 0.0;      // frames_with_fp / frames
  double box_rate = 0.0;  // fp_boxes / frames
};

/// Statistics over frames known to contain no objects. Every box at or above
/// `score_thresh` is a false positive.
FalsePositiveStats false_positive_rate(std::span<const std::vector<Box>> negative_frames,
                                       double score_thresh);

}  // namespace tsdet
