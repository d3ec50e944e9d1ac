#include "measground/io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "measground/error.hpp"

namespace measground::io {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
  out << content;
  if (!out) fail(ErrorKind::IoFailure, "short write to " + path.string());
}

json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::SchemaViolation, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

std::vector<json> read_jsonl(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::SchemaViolation, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += row.dump();
    out += '\n';
  }
  write_text(path, out);
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& data) : data_(data) {}

  std::string token() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    return data_.substr(start, pos_ - start);
  }

  std::uint64_t number(const fs::path& path) {
    const std::string t = token();
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
      fail(ErrorKind::DimensionMismatch, path.string() + ": bad PNM header field '" + t + "'");
    return std::stoull(t);
  }

  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      if (std::isspace(static_cast<unsigned char>(data_[pos_]))) {
        ++pos_;
      } else if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

Pnm read_pnm(const fs::path& path) {
  const std::string data = read_text(path);
  HeaderReader reader(data);
  const std::string magic = reader.token();
  Pnm img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    fail(ErrorKind::DimensionMismatch, path.string() + ": unsupported PNM magic '" + magic + "'");
  }
  img.width = reader.number(path);
  img.height = reader.number(path);
  const auto maxval = reader.number(path);
  if (maxval == 0 || maxval > 65535)
    fail(ErrorKind::DimensionMismatch, path.string() + ": maxval out of range");
  img.maxval = static_cast<std::uint32_t>(maxval);

  const std::size_t bytes_per_sample = img.maxval < 256 ? 1 : 2;
  const std::size_t count = img.width * img.height * img.channels;
  const std::size_t offset = reader.raster_offset();
  if (offset > data.size() || data.size() - offset != count * bytes_per_sample)
    fail(ErrorKind::DimensionMismatch, path.string() + ": raster size does not match header " +
                                           std::to_string(img.width) + "x" + std::to_string(img.height));

  img.samples.resize(count);
  const auto* raw = reinterpret_cast<const unsigned char*>(data.data() + offset);
  for (std::size_t i = 0; i < count; ++i) {
    img.samples[i] = bytes_per_sample == 1
                         ? raw[i]
                         : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    if (img.samples[i] > img.maxval)
      fail(ErrorKind::DimensionMismatch, path.string() + ": sample exceeds maxval");
  }
  return img;
}

std::string encode_pnm(const Pnm& img) {
  if (img.channels != 1 && img.channels != 3)
    fail(ErrorKind::InvalidArgument, "PNM supports 1 or 3 channels");
  if (img.samples.size() != img.width * img.height * img.channels)
    fail(ErrorKind::DimensionMismatch, "PNM sample count does not match dimensions");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n" + std::to_string(img.maxval) + "\n";
  const bool wide = img.maxval >= 256;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t s : img.samples) {
    if (wide) out.push_back(static_cast<char>(s >> 8));
    out.push_back(static_cast<char>(s & 0xFF));
  }
  return out;
}

void write_pnm(const fs::path& path, const Pnm& img) { write_text(path, encode_pnm(img)); }

fs::path with_suffix(const fs::path& stem, const std::string& suffix) {
  return fs::path(stem.string() + suffix);
}

void write_float_plane(const fs::path& stem, const FloatPlane& plane) {
  const auto h = plane.header.at("height").get<std::size_t>();
  const auto w = plane.header.at("width").get<std::size_t>();
  const auto c = plane.header.at("channels").get<std::size_t>();
  if (plane.samples.size() != h * w * c)
    fail(ErrorKind::DimensionMismatch, "float plane sample count does not match header");
  std::string raw(plane.samples.size() * 4, '\0');
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(plane.samples[i]);
    for (int b = 0; b < 4; ++b) raw[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  write_text(with_suffix(stem, ".bin"), raw);
  write_json(with_suffix(stem, ".json"), plane.header);
}

FloatPlane read_float_plane(const fs::path& stem) {
  FloatPlane plane;
  plane.header = read_json(with_suffix(stem, ".json"));
  std::size_t h = 0, w = 0, c = 0;
  try {
    h = plane.header.at("height").get<std::size_t>();
    w = plane.header.at("width").get<std::size_t>();
    c = plane.header.at("channels").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, stem.string() + ".json: " + e.what());
  }
  const std::string raw = read_text(with_suffix(stem, ".bin"));
  if (raw.size() != h * w * c * 4)
    fail(ErrorKind::DimensionMismatch, stem.string() + ".bin: size does not match header");
  plane.samples.resize(h * w * c);
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
    plane.samples[i] = std::bit_cast<float>(bits);
  }
  return plane;
}

}  // namespace measground::io
