#include "tsdet/synthgen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>

namespace tsdet {

namespace {

constexpr std::uint64_t kCandidateStream = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kRasterStream = 0xD1B54A32D192ED03ull;
constexpr double kScoreEps = 1e-6;

Box clamp_to_image(Box b, const SynthConfig& cfg, double min_size = 2.0) {
  const double w = cfg.image_w, h = cfg.image_h;
  b.x1 = std::clamp(b.x1, 0.0, w - min_size);
  b.y1 = std::clamp(b.y1, 0.0, h - min_size);
  b.x2 = std::clamp(b.x2, b.x1 + min_size, w);
  b.y2 = std::clamp(b.y2, b.y1 + min_size, h);
  return b;
}

Box jitter(const Box& g, double sigma, const SynthConfig& cfg, SynthRng& rng) {
  const double sw = sigma * g.width(), sh = sigma * g.height();
  Box b = g;
  b.x1 += sw * rng.normal();
  b.y1 += sh * rng.normal();
  b.x2 += sw * rng.normal();
  b.y2 += sh * rng.normal();
  if (b.x2 < b.x1) std::swap(b.x1, b.x2);
  if (b.y2 < b.y1) std::swap(b.y1, b.y2);
  return clamp_to_image(b, cfg);
}

double clamp_score(double s) { return std::clamp(s, kScoreEps, 1.0 - kScoreEps); }

}  // namespace

double SynthRng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw InvalidInput(std::string("synthgen: ") + name + " must lie in [0, 1]");
    }
  };
  prob(occlusion_prob, "occlusion_prob");
  prob(dropout_prob, "dropout_prob");
  prob(false_positive_prob, "false_positive_prob");
  prob(false_positive_score_max, "false_positive_score_max");
  prob(brightness_min, "brightness_min");
  prob(brightness_max, "brightness_max");
  if (brightness_min > brightness_max) throw InvalidInput("synthgen: brightness_min > max");
  if (!(rho >= -1.0 && rho <= 1.0)) throw InvalidInput("synthgen: rho must lie in [-1, 1]");
  if (!(box_jitter >= 0.0)) throw InvalidInput("synthgen: box_jitter must be >= 0");
  if (candidates < 1) throw InvalidInput("synthgen: candidates must be >= 1");
  if (image_w < 8 || image_h < 8) throw InvalidInput("synthgen: image must be at least 8x8");
  if (!(size_min >= 4.0 && size_min <= size_max)) {
    throw InvalidInput("synthgen: need 4 <= size_min <= size_max");
  }
  if (size_max > image_w || size_max > image_h) {
    throw InvalidInput("synthgen: size_max exceeds the image");
  }
  if (sequence_id.empty() || sequence_id.find_first_of(" \t\r\n") != std::string::npos) {
    throw InvalidInput("synthgen: sequence_id must be non-empty without whitespace");
  }
}

void apply_config(SynthConfig& cfg, const ConfigSection& section) {
  using Setter = std::function<void(const std::string&)>;
  auto real = [](double& dst) {
    return Setter([&dst](const std::string& v) {
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), dst);
      if (ec != std::errc() || p != v.data() + v.size()) throw InvalidInput("not a number: " + v);
    });
  };
  auto integer = [](auto& dst) {
    return Setter([&dst](const std::string& v) {
      const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), dst);
      if (ec != std::errc() || p != v.data() + v.size()) {
        throw InvalidInput("not an integer: " + v);
      }
    });
  };
  const std::map<std::string, Setter> setters{
      {"sequence_id", [&](const std::string& v) { cfg.sequence_id = v; }},
      {"n_frames", integer(cfg.n_frames)},
      {"image_w", integer(cfg.image_w)},
      {"image_h", integer(cfg.image_h)},
      {"start_x", real(cfg.start_x)},
      {"start_y", real(cfg.start_y)},
      {"velocity_x", real(cfg.velocity_x)},
      {"velocity_y", real(cfg.velocity_y)},
      {"size_min", real(cfg.size_min)},
      {"size_max", real(cfg.size_max)},
      {"brightness_min", real(cfg.brightness_min)},
      {"brightness_max", real(cfg.brightness_max)},
      {"occlusion_prob", real(cfg.occlusion_prob)},
      {"dropout_prob", real(cfg.dropout_prob)},
      {"rho", real(cfg.rho)},
      {"candidates", integer(cfg.candidates)},
      {"box_jitter", real(cfg.box_jitter)},
      {"false_positive_prob", real(cfg.false_positive_prob)},
      {"false_positive_score_max", real(cfg.false_positive_score_max)},
      {"seed", integer(cfg.seed)},
  };
  for (const auto& [key, value] : section) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw FormatError(FormatError::Code::unknown_key, "unknown config key '" + key + "'");
    }
    try {
      it->second(value);
    } catch (const InvalidInput& e) {
      throw FormatError(FormatError::Code::malformed_line,
                        "config key '" + key + "': " + e.what());
    }
  }
}

SequenceDataset generate_ground_truth(const SynthConfig& cfg) {
  cfg.validate();
  SynthRng rng(cfg.seed);
  const double size_w = rng.uniform(cfg.size_min, cfg.size_max);
  const double size_h = rng.uniform(cfg.size_min, cfg.size_max);
  const double half_w = size_w / 2.0, half_h = size_h / 2.0;

  SequenceDataset ds;
  ds.reserve(cfg.n_frames);
  for (std::size_t t = 0; t < cfg.n_frames; ++t) {
    FrameDetections frame{cfg.sequence_id, t, {}};
    const bool occluded = rng.bernoulli(cfg.occlusion_prob);
    const double cx = std::clamp(cfg.start_x + cfg.velocity_x * static_cast<double>(t), half_w,
                                 cfg.image_w - half_w);
    const double cy = std::clamp(cfg.start_y + cfg.velocity_y * static_cast<double>(t), half_h,
                                 cfg.image_h - half_h);
    if (!occluded) {
      frame.boxes.push_back({cx - half_w, cy - half_h, cx + half_w, cy + half_h, 1.0, 0});
    }
    ds.push_back(std::move(frame));
  }
  return ds;
}

SequenceDataset corrupt_candidates(const SequenceDataset& gt, const SynthConfig& cfg) {
  cfg.validate();
  SynthRng rng(cfg.seed ^ kCandidateStream);
  SequenceDataset out;
  out.reserve(gt.size());
  for (const auto& frame : gt) {
    FrameDetections cand{frame.sequence_id, frame.frame_index, {}};
    const double brightness = rng.uniform(cfg.brightness_min, cfg.brightness_max);
    const bool dropped = rng.bernoulli(cfg.dropout_prob);
    const bool spurious = rng.bernoulli(cfg.false_positive_prob);

    if (frame.boxes.empty()) {
      if (spurious) {
        const double w = rng.uniform(cfg.size_min, cfg.size_max);
        const double h = rng.uniform(cfg.size_min, cfg.size_max);
        const double x = rng.uniform(0.0, cfg.image_w - w);
        const double y = rng.uniform(0.0, cfg.image_h - h);
        const Box anchor{x, y, x + w, y + h, 0.0, 0};
        for (std::size_t c = 0; c < cfg.candidates; ++c) {
          Box b = jitter(anchor, cfg.box_jitter, cfg, rng);
          b.score = clamp_score(brightness * rng.uniform(0.0, cfg.false_positive_score_max));
          cand.boxes.push_back(b);
        }
      }
      out.push_back(std::move(cand));
      continue;
    }

    for (const Box& g : frame.boxes) {
      std::vector<Box> boxes;
      std::vector<double> ious;
      for (std::size_t c = 0; c < cfg.candidates; ++c) {
        Box b = jitter(g, cfg.box_jitter, cfg, rng);
        ious.push_back(detail::iou_unchecked(b, g));
        boxes.push_back(b);
      }
      const auto [lo, hi] = std::minmax_element(ious.begin(), ious.end());
      const double span = *hi - *lo;
      const double weight = std::abs(cfg.rho);
      for (std::size_t c = 0; c < boxes.size(); ++c) {
        const double n = span > 1e-12 ? (ious[c] - *lo) / span : 1.0;
        const double signal = cfg.rho >= 0.0 ? n : 1.0 - n;
        const double noise = rng.uniform();
        boxes[c].score = clamp_score(brightness * (weight * signal + (1.0 - weight) * noise));
      }
      if (!dropped) cand.boxes.insert(cand.boxes.end(), boxes.begin(), boxes.end());
    }
    out.push_back(std::move(cand));
  }
  return out;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

DiscrepancyStats measure_discrepancy(const SequenceDataset& gt, const SequenceDataset& cand) {
  if (gt.size() != cand.size()) throw InvalidInput("measure_discrepancy: frame count mismatch");
  DiscrepancyStats s;
  double corr_sum = 0.0;
  std::size_t corr_n = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (gt[f].boxes.empty() || cand[f].boxes.empty()) continue;
    const Box& g = gt[f].boxes.front();
    std::vector<double> scores, ious;
    for (const auto& b : cand[f].boxes) {
      scores.push_back(b.score);
      ious.push_back(iou(b, g));
    }
    ++s.positive_frames;
    const auto top = std::max_element(scores.begin(), scores.end()) - scores.begin();
    const double best_iou = *std::max_element(ious.begin(), ious.end());
    if (ious[static_cast<std::size_t>(top)] < best_iou) ++s.discrepant_frames;
    const double spread = best_iou - *std::min_element(ious.begin(), ious.end());
    if (scores.size() >= 2 && spread > 0.0) {
      corr_sum += spearman(scores, ious);
      ++corr_n;
    }
  }
  s.mean_rank_correlation = corr_n ? corr_sum / static_cast<double>(corr_n) : 0.0;
  return s;
}

TensorD render_frame(const SynthConfig& cfg, const FrameDetections& gt, int width, int height) {
  if (width < 1 || height < 1) throw InvalidInput("render_frame: raster must be non-empty");
  SynthRng rng((cfg.seed ^ kRasterStream) + gt.frame_index);
  const double brightness = rng.uniform(cfg.brightness_min, cfg.brightness_max);
  const double sx = static_cast<double>(width) / cfg.image_w;
  const double sy = static_cast<double>(height) / cfg.image_h;
  TensorD img({1, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = 0.25 + 0.05 * std::sin(0.3 * x) * std::cos(0.2 * y) + 0.02 * rng.normal();
      for (const auto& b : gt.boxes) {
        const double cx = 0.5 * (b.x1 + b.x2) * sx, cy = 0.5 * (b.y1 + b.y2) * sy;
        const double rx = std::max(0.5 * b.width() * sx, 0.5);
        const double ry = std::max(0.5 * b.height() * sy, 0.5);
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        v += 0.6 * std::exp(-2.0 * (dx * dx + dy * dy));
      }
      img(0, y, x) = std::clamp(brightness * v, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace tsdet
