#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "measground/image.hpp"
#include "measground/linalg.hpp"

namespace measground {

struct CameraMetadata {
  double iso = 100.0;
  double exposure_time = 1.0 / 60.0;  // seconds
  double aperture = 4.0;              // f-number
  std::string device_id;
  std::optional<std::string> scene_id;
  std::optional<std::string> session_id;

  friend bool operator==(const CameraMetadata&, const CameraMetadata&) = default;
};

enum class CfaPattern { RGGB, BGGR, GRBG, GBRG };

std::string_view to_string(CfaPattern pattern);
std::optional<CfaPattern> parse_cfa_pattern(std::string_view text);

/// Colour index (0=R, 1=G, 2=B) of the CFA site at (y, x).
int cfa_color(CfaPattern pattern, std::size_t y, std::size_t x);

/// Index 0..3 of the site within its 2x2 tile, row-major. Black levels are per site.
inline std::size_t cfa_site(std::size_t y, std::size_t x) { return (y % 2) * 2 + (x % 2); }

struct RawCapture {
  std::string capture_id;
  Plane<std::uint16_t> mosaic;
  CfaPattern cfa_pattern = CfaPattern::RGGB;
  std::array<double, 4> black_level{};
  double white_level = 65535.0;
  std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
  Mat3 cam_to_xyz = identity3();
  CameraMetadata metadata;
  std::string raw_path;

  friend bool operator==(const RawCapture&, const RawCapture&) = default;
};

/// Throws MalformedSidecar (or DimensionMismatch for odd mosaics) on any violated invariant.
void validate(const CameraMetadata& metadata);
void validate(const RawCapture& capture);

nlohmann::json metadata_to_json(const CameraMetadata& metadata);
/// Strict: unknown keys, wrong types and non-positive values raise MalformedSidecar.
CameraMetadata metadata_from_json(const nlohmann::json& j);

/// Sidecar JSON for a capture (everything except the mosaic raster).
nlohmann::json sidecar_to_json(const RawCapture& capture);

/// Bundle directory layout: `mosaic.pgm` (P5, maxval 65535) + `capture.json`.
RawCapture load_capture_bundle(const std::filesystem::path& dir);
void save_capture_bundle(const RawCapture& capture, const std::filesystem::path& dir);

/// Axis-aligned rectangle whose radiance is background * multiplier.
struct TextPatch {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  double multiplier = 1.0;
};

/// Neutral (grey) synthetic scene. Radiance is expressed in units of the
/// sensor's dynamic range, so 1.0 maps to white_level.
struct SyntheticSceneSpec {
  std::string capture_id = "synthetic";
  std::size_t width = 64;
  std::size_t height = 64;
  CfaPattern cfa_pattern = CfaPattern::RGGB;
  double background = 0.25;
  std::vector<TextPatch> patches;
  double noise_sigma = 0.0;
  // A power-of-two range keeps dyadic scene levels exactly representable as codes.
  double black_level = 64.0;
  double white_level = 64.0 + 16384.0;
  std::array<double, 3> wb_gains{1.0, 1.0, 1.0};
  Mat3 cam_to_xyz = identity3();
  CameraMetadata metadata{100.0, 1.0 / 60.0, 4.0, "synthetic-cam", std::nullopt, std::nullopt};
};

nlohmann::json scene_spec_to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec scene_spec_from_json(const nlohmann::json& j);

struct SyntheticCapture {
  RawCapture capture;
  /// Noise-free scene radiance per pixel, before sensor clipping and code rounding.
  Plane<double> scene;
};

/// Pure function of (spec, seed). Throws InvalidSpec for out-of-bounds patches,
/// odd dimensions, negative radiance or noise.
SyntheticCapture synth_capture(const SyntheticSceneSpec& spec, std::uint64_t seed);

}  // namespace measground
