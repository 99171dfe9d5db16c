#pragma once

// Seeded generators and from-definition reference implementations shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tsdet/cli.hpp"
#include "tsdet/detgeom.hpp"
#include "tsdet/gtconv.hpp"
#include "tsdet/hqim.hpp"
#include "tsdet/pacgraph.hpp"
#include "tsdet/synthgen.hpp"
#include "tsdet/tensor.hpp"

namespace tsdet::testing {

// ---------------------------------------------------------------------------
// Generators

inline Box random_box(SynthRng& rng, double extent = 100.0, double min_size = 1.0,
                      double max_size = 40.0) {
  const double w = rng.uniform(min_size, max_size);
  const double h = rng.uniform(min_size, max_size);
  const double x = rng.uniform(0.0, extent);
  const double y = rng.uniform(0.0, extent);
  return {x, y, x + w, y + h, rng.uniform(), 0};
}

/// Boxes jittered around a few anchors so that clusters with IoU above 0.8
/// occur often.
inline std::vector<Box> random_clustered_boxes(SynthRng& rng, std::size_t n) {
  std::vector<Box> anchors;
  const std::size_t n_anchor = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
  for (std::size_t a = 0; a < n_anchor; ++a) anchors.push_back(random_box(rng, 60.0, 10.0, 40.0));
  std::vector<Box> out;
  for (std::size_t k = 0; k < n; ++k) {
    const Box& a = anchors[static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_anchor))];
    const double s = rng.uniform(0.0, 0.15);
    Box b = a;
    b.x1 += s * a.width() * rng.normal();
    b.y1 += s * a.height() * rng.normal();
    b.x2 = std::max(b.x1 + 1.0, b.x2 + s * a.width() * rng.normal());
    b.y2 = std::max(b.y1 + 1.0, b.y2 + s * a.height() * rng.normal());
    // Coarse score grid makes exact ties common.
    b.score = rng.bernoulli(0.3) ? std::round(rng.uniform() * 10.0) / 10.0 : rng.uniform();
    if (rng.bernoulli(0.05)) b = out.empty() ? b : Box{out.back().x1, out.back().y1,
                                                       out.back().x2, out.back().y2,
                                                       rng.uniform(), 0};
    out.push_back(b);
  }
  return out;
}

inline TensorD random_tensor(SynthRng& rng, Shape dims, double scale = 1.0) {
  TensorD t(std::move(dims));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = scale * rng.normal();
  return t;
}

inline ConvParams<double> random_conv(SynthRng& rng, Index cout, Index cin, Index kh, Index kw,
                                      Index stride, Index pad, double scale = 0.5) {
  return {random_tensor(rng, {cout, cin, kh, kw}, scale), random_tensor(rng, {cout}, scale),
          stride, pad};
}

inline ConvParams<double> random_conv3d(SynthRng& rng, Index cout, Index cin, Index kt) {
  return {random_tensor(rng, {cout, cin, kt, 1, 1}, 0.5), random_tensor(rng, {cout}, 0.5), 1,
          kt / 2};
}

/// Every parameter random, including the calibration generators.
inline GtConvLayer<double> random_layer(SynthRng& rng, Index cin, Index cout, Index cs) {
  GtConvLayer<double> layer{random_conv(rng, cout, cin, 3, 3, 1, 1),
                            random_conv3d(rng, cs, cin, 1),
                            random_conv3d(rng, cs, cin, 1),
                            BatchNormParams<double>::neutral(cs, 1e-5),
                            random_conv3d(rng, cout, cs, 3),
                            random_conv3d(rng, cout, cs, 3),
                            random_conv(rng, 1, cin, 1, 1, 1, 0)};
  for (Index c = 0; c < cs; ++c) {
    layer.bn.mean[c] = 0.1 * rng.normal();
    layer.bn.var[c] = rng.uniform(0.5, 2.0);
    layer.bn.gamma[c] = rng.uniform(0.5, 1.5);
    layer.bn.beta[c] = 0.1 * rng.normal();
  }
  layer.validate();
  return layer;
}

inline void zero_generators(GtConvLayer<double>& layer) {
  for (auto* g : {&layer.f_w, &layer.f_b}) {
    g->weight.values().setZero();
    g->bias.values().setZero();
  }
}

inline ConvLstmCell<double> random_cell(SynthRng& rng, Index in, Index hidden, Index k = 3) {
  const Index cat = in + hidden;
  return {random_conv(rng, hidden, cat, k, k, 1, k / 2), random_conv(rng, hidden, cat, k, k, 1, k / 2),
          random_conv(rng, hidden, cat, k, k, 1, k / 2), random_conv(rng, hidden, cat, k, k, 1, k / 2),
          random_conv(rng, hidden, hidden, 3, 3, 1, 1)};
}

inline AccumulatorStack<double> random_stack(SynthRng& rng, Index c, std::size_t k) {
  AccumulatorStack<double> s;
  for (std::size_t r = 0; r < AccumulatorStack<double>::reducers_for(k); ++r) {
    s.reducers.push_back(random_conv(rng, c / 2, c, 3, 3, 1, 1));
  }
  return s;
}

// ---------------------------------------------------------------------------
// From-definition references

inline double iou_reference(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

/// Corrected scores recomputed per box from the definitions: every other box
/// is scanned for each of L, H, max P_L and the best high neighbor.
inline std::vector<double> pac_reference(const std::vector<Box>& boxes, double theta,
                                         double delta) {
  const std::size_t n = boxes.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = boxes[i].score;
    std::vector<std::size_t> low, high;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = iou_reference(boxes[i], boxes[j]);
      if (!(v > theta) || !(v > delta)) continue;
      if (boxes[j].score < p) low.push_back(j);
      if (boxes[j].score > p) high.push_back(j);
    }
    double e = 0.0;
    if (!low.empty()) {
      double best = 0.0;
      for (std::size_t j : low) {
        bool is_max = true;
        for (std::size_t k : low) is_max = is_max && boxes[k].score <= boxes[j].score;
        if (is_max) best = boxes[j].score;
      }
      const double q = static_cast<double>(low.size());
      e = q / (q + 1.0) * (1.0 - p) * best;
    }
    double s = 0.0;
    if (!high.empty()) {
      double best_iou = 0.0;
      for (std::size_t j : high) {
        bool top = true;
        for (std::size_t k : high) top = top && boxes[k].score <= boxes[j].score;
        if (top) best_iou = std::max(best_iou, iou_reference(boxes[i], boxes[j]));
      }
      s = p * best_iou;
    }
    out[i] = std::clamp(p + e - s, 0.0, 1.0);
  }
  return out;
}

/// Greedy NMS written from scratch: repeatedly take the best remaining box.
inline std::vector<Box> nms_reference(std::vector<Box> boxes, double thresh) {
  std::vector<Box> kept;
  std::vector<bool> gone(boxes.size(), false);
  for (;;) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (gone[i]) continue;
      if (best == boxes.size() || boxes[i].score > boxes[best].score) best = i;
    }
    if (best == boxes.size()) return kept;
    kept.push_back(boxes[best]);
    gone[best] = true;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (!gone[i] && iou_reference(boxes[i], boxes[best]) > thresh) gone[i] = true;
    }
  }
}

/// Direct loop-nest 2D cross-correlation with zero padding.
inline TensorD conv2d_reference(const TensorD& x, const ConvParams<double>& p) {
  const Index cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  const Index cout = p.weight.extent(0), kh = p.weight.extent(2), kw = p.weight.extent(3);
  const Index ho = (h + 2 * p.padding - kh) / p.stride + 1;
  const Index wo = (w + 2 * p.padding - kw) / p.stride + 1;
  TensorD y({cout, ho, wo});
  for (Index o = 0; o < cout; ++o) {
    for (Index r = 0; r < ho; ++r) {
      for (Index c = 0; c < wo; ++c) {
        double acc = p.bias(o);
        for (Index i = 0; i < cin; ++i) {
          for (Index u = 0; u < kh; ++u) {
            for (Index v = 0; v < kw; ++v) {
              const Index yy = r * p.stride + u - p.padding;
              const Index xx = c * p.stride + v - p.padding;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              acc += p.weight(o, i, u, v) * x(i, yy, xx);
            }
          }
        }
        y(o, r, c) = acc;
      }
    }
  }
  return y;
}

/// Temporal convolution by loops over [T, C, H, W].
inline TensorD conv3d_reference(const TensorD& x, const ConvParams<double>& p) {
  const Index t = x.extent(0), cin = x.extent(1), h = x.extent(2), w = x.extent(3);
  const Index cout = p.weight.extent(0), kt = p.weight.extent(2);
  const Index to = t + 2 * p.padding - kt + 1;
  TensorD y({to, cout, h, w});
  for (Index s = 0; s < to; ++s) {
    for (Index o = 0; o < cout; ++o) {
      for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) {
          double acc = p.bias(o);
          for (Index i = 0; i < cin; ++i) {
            for (Index u = 0; u < kt; ++u) {
              const Index tt = s + u - p.padding;
              if (tt >= 0 && tt < t) acc += p.weight(o, i, u, 0, 0) * x(tt, i, r, c);
            }
          }
          y(s, o, r, c) = acc;
        }
      }
    }
  }
  return y;
}

inline double max_abs_diff(const TensorD& a, const TensorD& b) {
  if (a.dims() != b.dims()) return INFINITY;
  return (a.values() - b.values()).abs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Filesystem and CLI helpers

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("tsdet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace tsdet::testing
