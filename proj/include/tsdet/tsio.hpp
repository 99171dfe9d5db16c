#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsdet/detgeom.hpp"
#include "tsdet/tensor.hpp"

namespace tsdet {

/// Error raised by the file readers. `line` is 1-based for text formats and
/// 0 when not applicable.
class FormatError : public std::runtime_error {
 public:
  enum class Code {
    io,
    malformed_line,
    invalid_box,
    frame_order,
    bad_magic,
    truncated,
    duplicate_name,
    extent_overflow,
    invalid_name,
    invalid_extent,
    unknown_key,
  };

  FormatError(Code code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), code_(code), line_(line) {}

  Code code() const { return code_; }
  std::size_t line() const { return line_; }

 private:
  Code code_;
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Detection / ground-truth text streams.
//
// One frame per line:
//   <sequence_id> <frame_index> [x1 y1 x2 y2 score]...   (predictions)
//   <sequence_id> <frame_index> [x1 y1 x2 y2]...         (ground truth)
// Blank lines and lines starting with '#' are skipped. Values are written
// with 6 decimal places; that formatting is the canonical form used for
// equality of golden files.

enum class BoxFormat { predictions, ground_truth };

SequenceDataset parse_detections(std::istream& in, BoxFormat format);
void format_detections(std::ostream& out, const SequenceDataset& ds, BoxFormat format);

SequenceDataset read_detections(const std::filesystem::path& path, BoxFormat format);
void write_detections(const SequenceDataset& ds, const std::filesystem::path& path,
                      BoxFormat format);

// ---------------------------------------------------------------------------
// TSDW1 weights container.
//
//   magic   "TSDW1\n"
//   entry*  u16 name length | name bytes | u8 rank | u32 extent * rank |
//           f32 value * prod(extents)
//
// All integers and floats are little-endian. Names are non-empty and use
// [A-Za-z0-9_.]; ranks and extents are >= 1. Values widen to double on load.

using NamedTensors = std::map<std::string, TensorD>;

NamedTensors decode_weights(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_weights(const NamedTensors& weights);

NamedTensors read_weights(const std::filesystem::path& path);
void write_weights(const NamedTensors& weights, const std::filesystem::path& path);

/// Names from `required` absent in `weights`, in the order given.
std::vector<std::string> missing_names(const NamedTensors& weights,
                                       const std::vector<std::string>& required);

// ---------------------------------------------------------------------------
// 8-bit binary PGM (P5) rasters as [1, H, W] tensors with values in [0, 1].

TensorD read_pgm(const std::filesystem::path& path);
void write_pgm(const TensorD& image, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// INI-style config: `[section]` headers and `key = value` lines.

using ConfigSection = std::map<std::string, std::string>;
using Config = std::map<std::string, ConfigSection>;

Config read_config(const std::filesystem::path& path);
Config parse_config(std::istream& in);

}  // namespace tsdet
