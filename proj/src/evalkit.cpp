#include "tsdet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace tsdet {

std::size_t MatchResult::true_positives() const {
  return static_cast<std::size_t>(std::count_if(
      predictions.begin(), predictions.end(),
      [](const Prediction& p) { return !p.ignored && p.gt.has_value(); }));
}

std::size_t MatchResult::false_positives() const {
  return static_cast<std::size_t>(std::count_if(
      predictions.begin(), predictions.end(),
      [](const Prediction& p) { return !p.ignored && !p.gt.has_value(); }));
}

std::size_t MatchResult::ground_truths() const {
  return static_cast<std::size_t>(std::count(gt_ignored.begin(), gt_ignored.end(), false));
}

std::size_t MatchResult::false_negatives() const {
  std::size_t n = 0;
  for (std::size_t g = 0; g < gt_covered.size(); ++g) {
    if (!gt_ignored[g] && !gt_covered[g]) ++n;
  }
  return n;
}

MatchResult match(std::span<const Box> preds, std::span<const Box> gts, double iou_thresh,
                  AreaRange range) {
  for (const auto& b : preds) validate(b);
  for (const auto& b : gts) validate(b);

  MatchResult r;
  r.iou_threshold = iou_thresh;
  r.gt_covered.assign(gts.size(), false);
  r.gt_ignored.resize(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g) {
    r.gt_ignored[g] = !range.contains(gts[g].width() * gts[g].height());
  }

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });

  for (const std::size_t pi : order) {
    MatchResult::Prediction p;
    p.index = pi;
    p.score = preds[pi].score;
    // Non-ignored ground truths take precedence over ignored ones.
    for (const bool want_ignored : {false, true}) {
      double best = iou_thresh;
      std::optional<std::size_t> best_g;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (r.gt_ignored[g] != want_ignored || r.gt_covered[g]) continue;
        const double v = detail::iou_unchecked(preds[pi], gts[g]);
        if (v >= best && (!best_g || v > best)) {
          best = v;
          best_g = g;
        }
      }
      if (best_g) {
        p.gt = best_g;
        p.iou = best;
        r.gt_covered[*best_g] = true;
        p.ignored = want_ignored;
        break;
      }
    }
    if (!p.gt) p.ignored = !range.contains(preds[pi].width() * preds[pi].height());
    r.predictions.push_back(p);
  }
  return r;
}

std::optional<double> average_precision(std::span<const MatchResult> frames) {
  struct Hit {
    double score;
    bool tp;
  };
  std::vector<Hit> hits;
  std::size_t n_gt = 0;
  for (const auto& f : frames) {
    n_gt += f.ground_truths();
    for (const auto& p : f.predictions) {
      if (!p.ignored) hits.push_back({p.score, p.gt.has_value()});
    }
  }
  if (n_gt == 0) return std::nullopt;

  std::stable_sort(hits.begin(), hits.end(),
                   [](const Hit& a, const Hit& b) { return a.score > b.score; });
  std::vector<double> recall(hits.size()), precision(hits.size());
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    (hits[k].tp ? tp : fp) += 1.0;
    recall[k] = tp / static_cast<double>(n_gt);
    precision[k] = tp / (tp + fp);
  }
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }

  double sum = 0.0;
  for (int s = 0; s <= 100; ++s) {
    const double r = s / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

std::vector<double> iou_range(double lo, double step, double hi) {
  if (!(step > 0.0) || hi < lo) throw InvalidInput("IoU range needs step > 0 and lo <= hi");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= n; ++k) {
    out.push_back(std::round((lo + static_cast<double>(k) * step) * 1e9) / 1e9);
  }
  return out;
}

std::vector<double> default_iou_thresholds() { return iou_range(0.5, 0.05, 0.95); }

namespace {

std::optional<double> mean_of(const std::vector<std::optional<double>>& xs) {
  if (xs.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& x : xs) {
    if (!x) return std::nullopt;
    s += *x;
  }
  return s / static_cast<double>(xs.size());
}

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

ApSummary ap_over_range(std::span<const EvalFrame> frames, std::span<const double> thresholds,
                        AreaRange range, double sub_lo, double sub_hi) {
  if (thresholds.empty()) throw InvalidInput("empty IoU threshold list");
  ApSummary out;
  out.sub_lo = sub_lo;
  out.sub_hi = sub_hi;
  std::vector<std::optional<double>> all, sub;
  std::vector<MatchResult> matches(frames.size());
  for (const double t : thresholds) {
    for (std::size_t f = 0; f < frames.size(); ++f) {
      matches[f] = match(frames[f].preds, frames[f].gts, t, range);
    }
    const auto ap = average_precision(matches);
    out.per_threshold.emplace_back(t, ap);
    all.push_back(ap);
    if (t >= sub_lo - 1e-9 && t <= sub_hi + 1e-9) sub.push_back(ap);
    if (near(t, 0.5)) out.ap50 = ap;
    if (near(t, 0.75)) out.ap75 = ap;
  }
  out.mean = mean_of(all);
  out.sub_range = mean_of(sub);
  return out;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

MetricsReport evaluate(std::span<const EvalFrame> frames, const EvalOptions& opts) {
  MetricsReport r;
  r.ap = ap_over_range(frames, opts.thresholds, AreaRange::all(), opts.sub_lo, opts.sub_hi);
  r.ap_small = ap_over_range(frames, opts.thresholds, AreaRange::small()).mean;
  r.ap_medium = ap_over_range(frames, opts.thresholds, AreaRange::medium()).mean;
  r.ap_large = ap_over_range(frames, opts.thresholds, AreaRange::large()).mean;
  r.score_threshold = opts.score_threshold;
  r.match_iou = opts.match_iou;

  double iou_sum = 0.0;
  for (const auto& f : frames) {
    std::vector<Box> kept;
    std::copy_if(f.preds.begin(), f.preds.end(), std::back_inserter(kept),
                 [&](const Box& b) { return b.score >= opts.score_threshold; });
    const MatchResult m = match(kept, f.gts, opts.match_iou);
    r.tp += m.true_positives();
    r.fp += m.false_positives();
    r.fn += m.false_negatives();
    for (const auto& p : m.predictions) {
      if (p.gt) iou_sum += p.iou;
    }
  }
  const auto tp = static_cast<double>(r.tp);
  r.precision = r.tp + r.fp > 0 ? tp / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn > 0 ? tp / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = f1_score(r.precision, r.recall);
  r.mean_iou = r.tp > 0 ? iou_sum / tp : 0.0;
  return r;
}

void write_report(std::ostream& out, const MetricsReport& r) {
  auto line = [&](const std::string& name, std::optional<double> v) {
    out << name << '\t';
    if (v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      out << buf;
    } else {
      out << "undefined";
    }
    out << '\n';
  };
  char name[64];
  for (const auto& [t, ap] : r.ap.per_threshold) {
    std::snprintf(name, sizeof name, "AP@%.2f", t);
    line(name, ap);
  }
  line("AP", r.ap.mean);
  line("AP50", r.ap.ap50);
  line("AP75", r.ap.ap75);
  std::snprintf(name, sizeof name, "AP_%.2f-%.2f", r.ap.sub_lo, r.ap.sub_hi);
  line(name, r.ap.sub_range);
  line("AP_s", r.ap_small);
  line("AP_m", r.ap_medium);
  line("AP_l", r.ap_large);
  line("score_threshold", r.score_threshold);
  line("match_iou", r.match_iou);
  line("precision", r.precision);
  line("recall", r.recall);
  line("f1", r.f1);
  line("mean_iou", r.mean_iou);
  out << "tp\t" << r.tp << "\nfp\t" << r.fp << "\nfn\t" << r.fn << '\n';
}

std::vector<TraceRow> recall_trace(std::span<const EvalFrame> frames,
                                   std::span<const std::size_t> frame_indices, double iou_thresh,
                                   double score_thresh) {
  if (frame_indices.size() != frames.size()) {
    throw InvalidInput("recall_trace: one frame index per frame required");
  }
  std::vector<TraceRow> rows;
  rows.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::vector<Box> kept;
    std::copy_if(frames[f].preds.begin(), frames[f].preds.end(), std::back_inserter(kept),
                 [&](const Box& b) { return b.score >= score_thresh; });
    const MatchResult m = match(kept, frames[f].gts, iou_thresh);
    TraceRow row{frame_indices[f], {}};
    for (bool covered : m.gt_covered) row.recalled.push_back(covered ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

FalsePositiveStats false_positive_rate(std::span<const std::vector<Box>> negative_frames,
                                       double score_thresh) {
  if (negative_frames.empty()) throw InvalidInput("false_positive_rate: no negative frames");
  FalsePositiveStats s;
  s.frames = negative_frames.size();
  for (const auto& frame : negative_frames) {
    const auto n = static_cast<std::size_t>(std::count_if(
        frame.begin(), frame.end(), [&](const Box& b) { return b.score >= score_thresh; }));
    s.fp_boxes += n;
    if (n > 0) ++s.frames_with_fp;
  }
  s.rate = static_cast<double>(s.frames_with_fp) / static_cast<double>(s.frames);
  s.box_rate = static_cast<double>(s.fp_boxes) / static_cast<double>(s.frames);
  return s;
}

}  // namespace tsdet
