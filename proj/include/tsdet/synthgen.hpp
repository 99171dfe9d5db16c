#pragma once

// Deterministic synthetic video sequences: one moving blob per sequence,
// frame-to-frame heterogeneity (brightness, occlusion, detector dropout) and
// jittered candidate boxes whose scores are only partly correlated with their
// localization quality.
//
// Random numbers come from std::mt19937_64, whose output sequence is fixed by
// the C++ standard. Real values are derived without <random> distributions
// (their algorithms are implementation-defined):
//   uniform01 = (next() >> 11) * 2^-53
//   normal    = Box-Muller on two uniforms: sqrt(-2 ln(1-u1)) * cos(2 pi u2)
// so generated files are identical across platforms and standard libraries.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsdet/detgeom.hpp"
#include "tsdet/tensor.hpp"
#include "tsdet/tsio.hpp"

namespace tsdet {

class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

 private:
  std::mt19937_64 engine_;
};

struct SynthConfig {
  std::string sequence_id = "synth";
  std::size_t n_frames = 500;
  int image_w = 640;
  int image_h = 480;

  // Blob trajectory; the box is clamped to stay inside the image.
  double start_x = 320.0;
  double start_y = 240.0;
  double velocity_x = 0.6;
  double velocity_y = -0.3;
  double size_min = 60.0;
  double size_max = 140.0;

  // Heterogeneity.
  double brightness_min = 0.7;
  double brightness_max = 1.0;
  double occlusion_prob = 0.05;  // frame has no object (negative frame)
  double dropout_prob = 0.05;    // object present, detector emits nothing

  // Precision-confidence discrepancy.
  double rho = 0.0;              // score-IoU correlation dial in [-1, 1]
  std::size_t candidates = 8;    // candidates per positive frame
  double box_jitter = 0.12;      // corner std-dev as a fraction of box size
  double false_positive_prob = 0.1;  // spurious cluster on a negative frame
  double false_positive_score_max = 0.6;

  std::uint64_t seed = 42;

  void validate() const;
};

/// Applies `[synthgen]` keys from a config; unknown keys raise FormatError
/// naming the key.
void apply_config(SynthConfig& cfg, const ConfigSection& section);

/// One ground-truth box per visible frame; occluded frames are empty.
SequenceDataset generate_ground_truth(const SynthConfig& cfg);

/// Jittered, scored candidate boxes for every frame of `gt`.
SequenceDataset corrupt_candidates(const SequenceDataset& gt, const SynthConfig& cfg);

struct DiscrepancyStats {
  std::size_t positive_frames = 0;   // frames with a GT and candidates
  std::size_t discrepant_frames = 0; // top-score candidate is not the best-IoU one
  double mean_rank_correlation = 0.0;  // Spearman, over frames where defined
};

DiscrepancyStats measure_discrepancy(const SequenceDataset& gt, const SequenceDataset& cand);

/// Spearman rank correlation (average ranks for ties); 0 when undefined.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Grayscale raster [1, height, width] of one frame: a textured background
/// with a bright elliptical blob inside `gt` (scaled from image to raster
/// coordinates), multiplied by the frame brightness.
TensorD render_frame(const SynthConfig& cfg, const FrameDetections& gt, int width, int height);

}  // namespace tsdet
