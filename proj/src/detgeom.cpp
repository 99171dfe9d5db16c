#include "tsdet/detgeom.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace tsdet {

bool is_valid(const Box& b) {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 < b.x2 && b.y1 < b.y2 && b.score >= 0.0 &&
         b.score <= 1.0;
}

void validate(const Box& b) {
  if (is_valid(b)) return;
  std::ostringstream os;
  os << "invalid box (" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", " << b.y2
     << ", score " << b.score << ")";
  if (!(b.x1 < b.x2 && b.y1 < b.y2)) {
    os << ": non-positive area";
  } else if (!(b.score >= 0.0 && b.score <= 1.0)) {
    os << ": score outside [0, 1]";
  } else {
    os << ": non-finite coordinate";
  }
  throw InvalidInput(os.str());
}

double area(const Box& b) {
  validate(b);
  return b.width() * b.height();
}

double iou(const Box& a, const Box& b) {
  validate(a);
  validate(b);
  return detail::iou_unchecked(a, b);
}

void validate(const SequenceDataset& ds) {
  std::map<std::string, std::size_t> last;
  for (const auto& frame : ds) {
    for (const auto& b : frame.boxes) validate(b);
    auto [it, inserted] = last.try_emplace(frame.sequence_id, frame.frame_index);
    if (!inserted) {
      if (frame.frame_index <= it->second) {
        throw InvalidInput("sequence '" + frame.sequence_id + "': frame " +
                           std::to_string(frame.frame_index) + " does not follow frame " +
                           std::to_string(it->second));
      }
      it->second = frame.frame_index;
    }
  }
}

}  // namespace tsdet
