#include "measground/capture_model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "measground/error.hpp"
#include "measground/io.hpp"

namespace measground {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(CfaPattern pattern) {
  switch (pattern) {
    case CfaPattern::RGGB: return "RGGB";
    case CfaPattern::BGGR: return "BGGR";
    case CfaPattern::GRBG: return "GRBG";
    case CfaPattern::GBRG: return "GBRG";
  }
  return "RGGB";
}

std::optional<CfaPattern> parse_cfa_pattern(std::string_view text) {
  if (text == "RGGB") return CfaPattern::RGGB;
  if (text == "BGGR") return CfaPattern::BGGR;
  if (text == "GRBG") return CfaPattern::GRBG;
  if (text == "GBRG") return CfaPattern::GBRG;
  return std::nullopt;
}

int cfa_color(CfaPattern pattern, std::size_t y, std::size_t x) {
  const std::string_view letters = to_string(pattern);
  switch (letters[cfa_site(y, x)]) {
    case 'R': return 0;
    case 'G': return 1;
    default: return 2;
  }
}

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::MalformedSidecar, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(ErrorKind::MalformedSidecar, "unknown key '" + it.key() + "' in " + where);
  }
}

const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail(ErrorKind::MalformedSidecar, std::string("missing '") + key + "' in " + where);
  return *it;
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) fail(ErrorKind::MalformedSidecar, what + " must be a number");
  return j.get<double>();
}

std::string as_string(const json& j, const std::string& what) {
  if (!j.is_string()) fail(ErrorKind::MalformedSidecar, what + " must be a string");
  return j.get<std::string>();
}

}  // namespace

void validate(const CameraMetadata& m) {
  if (!positive_finite(m.iso)) fail(ErrorKind::MalformedSidecar, "metadata.iso must be finite and > 0");
  if (!positive_finite(m.exposure_time))
    fail(ErrorKind::MalformedSidecar, "metadata.exposure_time must be finite and > 0");
  if (!positive_finite(m.aperture)) fail(ErrorKind::MalformedSidecar, "metadata.aperture must be finite and > 0");
  if (m.device_id.empty()) fail(ErrorKind::MalformedSidecar, "metadata.device_id must be non-empty");
}

void validate(const RawCapture& c) {
  if (c.capture_id.empty()) fail(ErrorKind::MalformedSidecar, "capture_id must be non-empty");
  if (c.mosaic.height() == 0 || c.mosaic.width() == 0 || c.mosaic.height() % 2 != 0 ||
      c.mosaic.width() % 2 != 0)
    fail(ErrorKind::DimensionMismatch, "mosaic must have even, non-zero dimensions (got " +
                                           std::to_string(c.mosaic.width()) + "x" +
                                           std::to_string(c.mosaic.height()) + ")");
  if (!std::isfinite(c.white_level)) fail(ErrorKind::MalformedSidecar, "white_level must be finite");
  for (double b : c.black_level) {
    if (!std::isfinite(b) || b < 0.0) fail(ErrorKind::MalformedSidecar, "black_level must be finite and >= 0");
    if (!(c.white_level > b))
      fail(ErrorKind::MalformedSidecar, "white_level must exceed every black_level entry (degenerate calibration)");
  }
  for (double g : c.wb_gains)
    if (!positive_finite(g)) fail(ErrorKind::MalformedSidecar, "wb_gains must be finite and > 0");
  if (!all_finite(c.cam_to_xyz)) fail(ErrorKind::MalformedSidecar, "cam_to_xyz must be finite");
  if (!is_invertible(c.cam_to_xyz)) fail(ErrorKind::MalformedSidecar, "cam_to_xyz is singular");
  validate(c.metadata);
}

json metadata_to_json(const CameraMetadata& m) {
  json j = {{"iso", m.iso}, {"exposure_time", m.exposure_time}, {"aperture", m.aperture}, {"device_id", m.device_id}};
  if (m.scene_id) j["scene_id"] = *m.scene_id;
  if (m.session_id) j["session_id"] = *m.session_id;
  return j;
}

CameraMetadata metadata_from_json(const json& j) {
  check_keys(j, {"iso", "exposure_time", "aperture", "device_id", "scene_id", "session_id"}, "metadata");
  CameraMetadata m;
  m.iso = number(require(j, "iso", "metadata"), "metadata.iso");
  m.exposure_time = number(require(j, "exposure_time", "metadata"), "metadata.exposure_time");
  m.aperture = number(require(j, "aperture", "metadata"), "metadata.aperture");
  m.device_id = as_string(require(j, "device_id", "metadata"), "metadata.device_id");
  if (j.contains("scene_id")) m.scene_id = as_string(j["scene_id"], "metadata.scene_id");
  if (j.contains("session_id")) m.session_id = as_string(j["session_id"], "metadata.session_id");
  validate(m);
  return m;
}

json sidecar_to_json(const RawCapture& c) {
  json matrix = json::array();
  for (const auto& row : c.cam_to_xyz) matrix.push_back({row[0], row[1], row[2]});
  return {{"capture_id", c.capture_id},
          {"cfa_pattern", std::string(to_string(c.cfa_pattern))},
          {"black_level", c.black_level},
          {"white_level", c.white_level},
          {"wb_gains", c.wb_gains},
          {"cam_to_xyz", matrix},
          {"metadata", metadata_to_json(c.metadata)},
          {"raw_path", c.raw_path}};
}

namespace {

void parse_sidecar(const json& j, RawCapture& c) {
  check_keys(j, {"capture_id", "cfa_pattern", "black_level", "white_level", "wb_gains", "cam_to_xyz", "metadata",
                 "raw_path"},
             "capture.json");
  c.capture_id = as_string(require(j, "capture_id", "capture.json"), "capture_id");

  const std::string cfa = as_string(require(j, "cfa_pattern", "capture.json"), "cfa_pattern");
  const auto pattern = parse_cfa_pattern(cfa);
  if (!pattern) fail(ErrorKind::MalformedSidecar, "unknown cfa_pattern '" + cfa + "'");
  c.cfa_pattern = *pattern;

  const json& black = require(j, "black_level", "capture.json");
  if (black.is_number()) {
    c.black_level.fill(black.get<double>());
  } else if (black.is_array() && black.size() == 4) {
    for (std::size_t i = 0; i < 4; ++i) c.black_level[i] = number(black[i], "black_level");
  } else {
    fail(ErrorKind::MalformedSidecar, "black_level must be a number or an array of 4 numbers");
  }

  c.white_level = number(require(j, "white_level", "capture.json"), "white_level");

  const json& wb = require(j, "wb_gains", "capture.json");
  if (!wb.is_array() || wb.size() != 3) fail(ErrorKind::MalformedSidecar, "wb_gains must be an array of 3 numbers");
  for (std::size_t i = 0; i < 3; ++i) c.wb_gains[i] = number(wb[i], "wb_gains");

  const json& m = require(j, "cam_to_xyz", "capture.json");
  if (!m.is_array() || m.size() != 3) fail(ErrorKind::MalformedSidecar, "cam_to_xyz must be 3x3");
  for (std::size_t r = 0; r < 3; ++r) {
    if (!m[r].is_array() || m[r].size() != 3) fail(ErrorKind::MalformedSidecar, "cam_to_xyz must be 3x3");
    for (std::size_t k = 0; k < 3; ++k) c.cam_to_xyz[r][k] = number(m[r][k], "cam_to_xyz");
  }

  c.metadata = metadata_from_json(require(j, "metadata", "capture.json"));
  c.raw_path = as_string(require(j, "raw_path", "capture.json"), "raw_path");
}

}  // namespace

RawCapture load_capture_bundle(const fs::path& dir) {
  const fs::path sidecar_path = dir / "capture.json";
  const fs::path mosaic_path = dir / "mosaic.pgm";
  if (!fs::exists(sidecar_path)) fail(ErrorKind::MissingFile, sidecar_path.string());
  if (!fs::exists(mosaic_path)) fail(ErrorKind::MissingFile, mosaic_path.string());

  json sidecar;
  try {
    sidecar = json::parse(io::read_text(sidecar_path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::MalformedSidecar, sidecar_path.string() + ": " + e.what());
  }

  RawCapture c;
  parse_sidecar(sidecar, c);

  const io::Pnm pgm = io::read_pnm(mosaic_path);
  if (pgm.channels != 1) fail(ErrorKind::DimensionMismatch, mosaic_path.string() + " must be a P5 greymap");
  c.mosaic = Plane<std::uint16_t>(pgm.height, pgm.width);
  std::copy(pgm.samples.begin(), pgm.samples.end(), c.mosaic.storage().begin());

  validate(c);
  return c;
}

void save_capture_bundle(const RawCapture& capture, const fs::path& dir) {
  validate(capture);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  io::Pnm pgm;
  pgm.width = capture.mosaic.width();
  pgm.height = capture.mosaic.height();
  pgm.channels = 1;
  pgm.maxval = 65535;
  pgm.samples = capture.mosaic.storage();
  io::write_pnm(dir / "mosaic.pgm", pgm);
  io::write_json(dir / "capture.json", sidecar_to_json(capture));
}

json scene_spec_to_json(const SyntheticSceneSpec& s) {
  json patches = json::array();
  for (const auto& p : s.patches)
    patches.push_back({{"x", p.x}, {"y", p.y}, {"width", p.width}, {"height", p.height}, {"multiplier", p.multiplier}});
  json matrix = json::array();
  for (const auto& row : s.cam_to_xyz) matrix.push_back({row[0], row[1], row[2]});
  return {{"capture_id", s.capture_id},     {"width", s.width},
          {"height", s.height},             {"cfa_pattern", std::string(to_string(s.cfa_pattern))},
          {"background", s.background},     {"patches", patches},
          {"noise_sigma", s.noise_sigma},   {"black_level", s.black_level},
          {"white_level", s.white_level},   {"wb_gains", s.wb_gains},
          {"cam_to_xyz", matrix},           {"metadata", metadata_to_json(s.metadata)}};
}

SyntheticSceneSpec scene_spec_from_json(const json& j) {
  SyntheticSceneSpec s;
  try {
    if (j.contains("capture_id")) s.capture_id = j.at("capture_id").get<std::string>();
    if (j.contains("width")) s.width = j.at("width").get<std::size_t>();
    if (j.contains("height")) s.height = j.at("height").get<std::size_t>();
    if (j.contains("cfa_pattern")) {
      const auto p = parse_cfa_pattern(j.at("cfa_pattern").get<std::string>());
      if (!p) fail(ErrorKind::InvalidSpec, "unknown cfa_pattern");
      s.cfa_pattern = *p;
    }
    if (j.contains("background")) s.background = j.at("background").get<double>();
    if (j.contains("noise_sigma")) s.noise_sigma = j.at("noise_sigma").get<double>();
    if (j.contains("black_level")) s.black_level = j.at("black_level").get<double>();
    if (j.contains("white_level")) s.white_level = j.at("white_level").get<double>();
    if (j.contains("wb_gains")) s.wb_gains = j.at("wb_gains").get<std::array<double, 3>>();
    if (j.contains("cam_to_xyz")) s.cam_to_xyz = j.at("cam_to_xyz").get<Mat3>();
    if (j.contains("metadata")) s.metadata = metadata_from_json(j.at("metadata"));
    if (j.contains("patches")) {
      for (const auto& p : j.at("patches")) {
        s.patches.push_back({p.at("x").get<std::size_t>(), p.at("y").get<std::size_t>(),
                             p.at("width").get<std::size_t>(), p.at("height").get<std::size_t>(),
                             p.value("multiplier", 1.0)});
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidSpec, e.what());
  }
  return s;
}

SyntheticCapture synth_capture(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  if (spec.width == 0 || spec.height == 0 || spec.width % 2 != 0 || spec.height % 2 != 0)
    fail(ErrorKind::InvalidSpec, "scene dimensions must be even and non-zero");
  if (!(spec.background >= 0.0) || !std::isfinite(spec.background))
    fail(ErrorKind::InvalidSpec, "background must be finite and >= 0");
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma))
    fail(ErrorKind::InvalidSpec, "noise_sigma must be finite and >= 0");
  for (const auto& p : spec.patches) {
    if (p.width == 0 || p.height == 0 || p.x + p.width > spec.width || p.y + p.height > spec.height)
      fail(ErrorKind::InvalidSpec, "text patch at (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                       ") is out of bounds");
    if (!(p.multiplier >= 0.0) || !std::isfinite(p.multiplier))
      fail(ErrorKind::InvalidSpec, "patch multiplier must be finite and >= 0");
  }

  SyntheticCapture out;
  out.scene = Plane<double>(spec.height, spec.width, spec.background);
  for (const auto& p : spec.patches)
    for (std::size_t y = p.y; y < p.y + p.height; ++y)
      for (std::size_t x = p.x; x < p.x + p.width; ++x) out.scene(y, x) = spec.background * p.multiplier;

  RawCapture& c = out.capture;
  c.capture_id = spec.capture_id;
  c.cfa_pattern = spec.cfa_pattern;
  c.black_level.fill(spec.black_level);
  c.white_level = spec.white_level;
  c.wb_gains = spec.wb_gains;
  c.cam_to_xyz = spec.cam_to_xyz;
  c.metadata = spec.metadata;
  c.raw_path = "synthetic://" + spec.capture_id;
  c.mosaic = Plane<std::uint16_t>(spec.height, spec.width);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double range = spec.white_level - spec.black_level;
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      // Sensor sees radiance / wb so that white balancing restores a neutral scene.
      double level = out.scene(y, x) / spec.wb_gains[cfa_color(spec.cfa_pattern, y, x)];
      if (spec.noise_sigma > 0.0) level += spec.noise_sigma * noise(rng);
      const double code = std::round(spec.black_level + level * range);
      c.mosaic(y, x) = static_cast<std::uint16_t>(std::clamp(code, 0.0, 65535.0));
    }
  }
  validate(c);
  return out;
}

}  // namespace measground
