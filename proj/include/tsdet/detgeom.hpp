#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsdet {

/// Raised when a value violates a domain invariant (degenerate box, bad
/// threshold, mismatched shapes).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box in corner format (x1, y1, x2, y2) with a detection score.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  double score = 0.0;
  int label = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  friend bool operator==(const Box&, const Box&) = default;
};

/// True when the box has strictly positive area and a score in [0, 1].
bool is_valid(const Box& b);

/// Throws InvalidInput naming the violated invariant.
void validate(const Box& b);

double area(const Box& b);

/// Intersection over union. Boxes touching only along an edge give 0.
double iou(const Box& a, const Box& b);

namespace detail {
// Skips validation; callers must have validated both boxes.
inline double iou_unchecked(const Box& a, const Box& b) {
  const double iw = (a.x2 < b.x2 ? a.x2 : b.x2) - (a.x1 > b.x1 ? a.x1 : b.x1);
  const double ih = (a.y2 < b.y2 ? a.y2 : b.y2) - (a.y1 > b.y1 ? a.y1 : b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.width() * a.height() + b.width() * b.height() - inter;
  return inter / uni;
}
}  // namespace detail

/// Boxes of one frame of one video sequence.
struct FrameDetections {
  std::string sequence_id;
  std::size_t frame_index = 0;
  std::vector<Box> boxes;

  friend bool operator==(const FrameDetections&, const FrameDetections&) = default;
};

/// Frames of one or more sequences, in file order.
using SequenceDataset = std::vector<FrameDetections>;

/// Checks every box and that frame indices strictly increase per sequence.
void validate(const SequenceDataset& ds);

}  // namespace tsdet
