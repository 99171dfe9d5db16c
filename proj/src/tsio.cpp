#include "tsdet/tsio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace tsdet {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& reason) {
  throw FormatError(FormatError::Code::malformed_line,
                    "line " + std::to_string(line_no) + ": " + reason, line_no);
}

double parse_real(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    malformed(line_no, "expected a number, got '" + std::string(tok) + "'");
  }
  return v;
}

std::size_t parse_index(std::string_view tok, std::size_t line_no) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    malformed(line_no, "expected a frame index, got '" + std::string(tok) + "'");
  }
  return v;
}

void put_real(std::ostream& out, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out << buf;
}

}  // namespace

SequenceDataset parse_detections(std::istream& in, BoxFormat format) {
  const std::size_t arity = format == BoxFormat::predictions ? 5 : 4;
  SequenceDataset ds;
  std::map<std::string, std::size_t> last_frame;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens.front().front() == '#') continue;
    if (tokens.size() < 2) malformed(line_no, "missing frame index");
    if ((tokens.size() - 2) % arity != 0) {
      malformed(line_no, "box values must come in groups of " + std::to_string(arity) + ", got " +
                             std::to_string(tokens.size() - 2) + " values");
    }

    FrameDetections frame;
    frame.sequence_id = std::string(tokens[0]);
    frame.frame_index = parse_index(tokens[1], line_no);
    for (std::size_t t = 2; t < tokens.size(); t += arity) {
      Box b;
      b.x1 = parse_real(tokens[t], line_no);
      b.y1 = parse_real(tokens[t + 1], line_no);
      b.x2 = parse_real(tokens[t + 2], line_no);
      b.y2 = parse_real(tokens[t + 3], line_no);
      b.score = arity == 5 ? parse_real(tokens[t + 4], line_no) : 1.0;
      if (!is_valid(b)) {
        try {
          validate(b);
        } catch (const InvalidInput& e) {
          throw FormatError(FormatError::Code::invalid_box,
                            "line " + std::to_string(line_no) + ": " + e.what(), line_no);
        }
      }
      frame.boxes.push_back(b);
    }

    auto [it, inserted] = last_frame.try_emplace(frame.sequence_id, frame.frame_index);
    if (!inserted) {
      if (frame.frame_index <= it->second) {
        throw FormatError(FormatError::Code::frame_order,
                          "line " + std::to_string(line_no) + ": frame " +
                              std::to_string(frame.frame_index) + " of sequence '" +
                              frame.sequence_id + "' does not follow frame " +
                              std::to_string(it->second),
                          line_no);
      }
      it->second = frame.frame_index;
    }
    ds.push_back(std::move(frame));
  }
  return ds;
}

void format_detections(std::ostream& out, const SequenceDataset& ds, BoxFormat format) {
  for (const auto& frame : ds) {
    out << frame.sequence_id << ' ' << frame.frame_index;
    for (const auto& b : frame.boxes) {
      for (double v : {b.x1, b.y1, b.x2, b.y2}) {
        out << ' ';
        put_real(out, v);
      }
      if (format == BoxFormat::predictions) {
        out << ' ';
        put_real(out, b.score);
      }
    }
    out << '\n';
  }
}

SequenceDataset read_detections(const std::filesystem::path& path, BoxFormat format) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open " + path.string());
  return parse_detections(in, format);
}

void write_detections(const SequenceDataset& ds, const std::filesystem::path& path,
                      BoxFormat format) {
  for (const auto& frame : ds) {
    if (frame.sequence_id.empty() ||
        frame.sequence_id.find_first_of(" \t\r\n") != std::string::npos) {
      throw InvalidInput("sequence id '" + frame.sequence_id + "' is empty or has whitespace");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write " + path.string());
  format_detections(out, ds, format);
  if (!out) throw FormatError(FormatError::Code::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "TSDW1\n";

bool valid_name_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.';
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Code::truncated,
                        std::string("truncated weights file while reading ") + what +
                            " at byte " + std::to_string(pos_));
    }
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(k)];
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

void check_name(const std::string& name) {
  if (name.empty()) throw FormatError(FormatError::Code::invalid_name, "empty tensor name");
  for (unsigned char c : name) {
    if (!valid_name_char(c)) {
      throw FormatError(FormatError::Code::invalid_name, "invalid character in tensor name '" +
                                                             name + "'");
    }
  }
}

}  // namespace

NamedTensors decode_weights(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError(FormatError::Code::bad_magic, "not a TSDW1 weights file");
  }
  r.str(kMagic.size(), "magic");

  NamedTensors out;
  while (!r.done()) {
    const std::uint16_t name_len = r.u16("name length");
    std::string name = r.str(name_len, "name");
    check_name(name);
    const std::uint8_t rank = r.u8("rank");
    if (rank == 0) {
      throw FormatError(FormatError::Code::invalid_extent, "tensor '" + name + "' has rank 0");
    }
    Shape dims;
    std::uint64_t count = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const std::uint32_t e = r.u32("extent");
      if (e == 0) {
        throw FormatError(FormatError::Code::invalid_extent,
                          "tensor '" + name + "' has a zero extent");
      }
      count *= e;
      if (count > std::numeric_limits<std::uint32_t>::max()) {
        throw FormatError(FormatError::Code::extent_overflow,
                          "tensor '" + name + "' element count overflows");
      }
      dims.push_back(static_cast<Index>(e));
    }
    r.need(count * 4, "values");
    TensorD t(dims);
    for (std::uint64_t k = 0; k < count; ++k) {
      t.values()[static_cast<Index>(k)] = std::bit_cast<float>(r.u32("value"));
    }
    if (!out.emplace(name, std::move(t)).second) {
      throw FormatError(FormatError::Code::duplicate_name, "duplicate tensor name '" + name + "'");
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_weights(const NamedTensors& weights) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  for (const auto& [name, t] : weights) {
    check_name(name);
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError(FormatError::Code::invalid_name, "tensor name too long");
    }
    if (t.rank() > 255) throw FormatError(FormatError::Code::invalid_extent, "rank above 255");
    out.push_back(static_cast<std::uint8_t>(name.size() & 0xff));
    out.push_back(static_cast<std::uint8_t>(name.size() >> 8));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(t.rank()));
    std::uint64_t count = 1;
    for (Index d : t.dims()) {
      count *= static_cast<std::uint64_t>(d);
      if (d > std::numeric_limits<std::uint32_t>::max() ||
          count > std::numeric_limits<std::uint32_t>::max()) {
        throw FormatError(FormatError::Code::extent_overflow,
                          "tensor '" + name + "' is too large for TSDW1");
      }
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (Index k = 0; k < t.size(); ++k) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.values()[k])));
    }
  }
  return out;
}

NamedTensors read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

void write_weights(const NamedTensors& weights, const std::filesystem::path& path) {
  const auto bytes = encode_weights(weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Code::io, "write failed for " + path.string());
}

std::vector<std::string> missing_names(const NamedTensors& weights,
                                       const std::vector<std::string>& required) {
  std::vector<std::string> missing;
  for (const auto& n : required) {
    if (!weights.contains(n)) missing.push_back(n);
  }
  return missing;
}

// ---------------------------------------------------------------------------

TensorD read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open " + path.string());
  std::string magic;
  long width = 0, height = 0, maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw FormatError(FormatError::Code::bad_magic, path.string() + ": not an 8-bit P5 image");
  }
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> raster(static_cast<std::size_t>(width * height));
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) {
    throw FormatError(FormatError::Code::truncated, path.string() + ": truncated raster");
  }
  TensorD img({1, height, width});
  for (std::size_t k = 0; k < raster.size(); ++k) {
    img.values()[static_cast<Index>(k)] = raster[k] / static_cast<double>(maxval);
  }
  return img;
}

void write_pgm(const TensorD& image, const std::filesystem::path& path) {
  if (image.rank() != 3 || image.extent(0) != 1) {
    throw InvalidInput("write_pgm expects [1,H,W], got " + shape_str(image.dims()));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatError::Code::io, "cannot write " + path.string());
  out << "P5\n" << image.extent(2) << ' ' << image.extent(1) << "\n255\n";
  for (Index k = 0; k < image.size(); ++k) {
    const double v = std::clamp(image.values()[k], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  if (!out) throw FormatError(FormatError::Code::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------

Config parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError(FormatError::Code::malformed_line, "config: " + e.message(), e.line());
  }
  Config cfg;
  for (const auto& [key, node] : tree) {
    if (node.empty()) {
      cfg[""][key] = node.data();
      continue;
    }
    auto& section = cfg[key];
    for (const auto& [k, v] : node) section[k] = v.data();
  }
  return cfg;
}

Config read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Code::io, "cannot open " + path.string());
  return parse_config(in);
}

}  // namespace tsdet
