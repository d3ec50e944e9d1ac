#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/image.hpp"

namespace measground::io {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& content);

json read_json(const fs::path& path);
/// Pretty-printed with a trailing newline; numbers use shortest round-trip form.
void write_json(const fs::path& path, const json& value);

/// One JSON value per non-empty line. Parse failures name the 1-based line.
std::vector<json> read_jsonl(const fs::path& path);
void write_jsonl(const fs::path& path, const std::vector<json>& rows);

/// Binary PNM (P5 single channel, P6 three channels). Samples are one byte
/// when maxval < 256, otherwise two bytes big-endian.
struct Pnm {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> samples;
};

Pnm read_pnm(const fs::path& path);
void write_pnm(const fs::path& path, const Pnm& image);
std::string encode_pnm(const Pnm& image);

/// Raw little-endian float32 samples at `<stem>.bin` described by `<stem>.json`.
/// The header must contain "height", "width" and "channels"; other keys pass through.
struct FloatPlane {
  json header;
  std::vector<float> samples;
};

void write_float_plane(const fs::path& stem, const FloatPlane& plane);
FloatPlane read_float_plane(const fs::path& stem);

fs::path with_suffix(const fs::path& stem, const std::string& suffix);

}  // namespace measground::io
