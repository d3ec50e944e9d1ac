#include "measground/meas_xyz.hpp"

#include <algorithm>
#include <cmath>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/log.hpp"

namespace measground {

Plane<double> normalize_mosaic(const RawCapture& capture) {
  for (double b : capture.black_level)
    if (!(capture.white_level > b))
      fail(ErrorKind::DegenerateCalibration, "white_level must exceed every black level");

  const auto& mosaic = capture.mosaic;
  Plane<double> out(mosaic.height(), mosaic.width());
  for (std::size_t y = 0; y < mosaic.height(); ++y) {
    for (std::size_t x = 0; x < mosaic.width(); ++x) {
      const double black = capture.black_level[cfa_site(y, x)];
      const double v = (static_cast<double>(mosaic(y, x)) - black) / (capture.white_level - black);
      out(y, x) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Plane<std::uint8_t> saturation_mask(const RawCapture& capture) {
  const auto& mosaic = capture.mosaic;
  Plane<std::uint8_t> out(mosaic.height(), mosaic.width());
  for (std::size_t i = 0; i < mosaic.size(); ++i)
    out.values()[i] = static_cast<double>(mosaic.values()[i]) >= capture.white_level ? 1 : 0;
  return out;
}

namespace {

// Reflect-101: -1 -> 1, n -> n - 2.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto limit = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= limit) i = 2 * (limit - 1) - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

Image3d demosaic_bilinear(const Plane<double>& m, CfaPattern pattern) {
  const std::size_t h = m.height();
  const std::size_t w = m.width();
  if (h % 2 != 0 || w % 2 != 0) fail(ErrorKind::DimensionMismatch, "demosaic needs even dimensions");

  Image3d out(h, w, 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const int own = cfa_color(pattern, y, x);
      double sum[3] = {0.0, 0.0, 0.0};
      int count[3] = {0, 0, 0};
      // Fixed neighbourhood order keeps results bit-reproducible.
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const std::size_t yy = reflect(static_cast<std::ptrdiff_t>(y) + dy, h);
          const std::size_t xx = reflect(static_cast<std::ptrdiff_t>(x) + dx, w);
          const int c = cfa_color(pattern, yy, xx);
          sum[c] += m(yy, xx);
          ++count[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = c == own ? m(y, x) : sum[c] / count[c];
      }
    }
  }
  return out;
}

double white_pixel_scale(const RawCapture& capture) {
  const Vec3 white = multiply(capture.cam_to_xyz, {capture.wb_gains[0], capture.wb_gains[1], capture.wb_gains[2]});
  const double s = std::max({white[0], white[1], white[2]});
  if (!(s > 0.0) || !std::isfinite(s))
    fail(ErrorKind::DegenerateCalibration, "full-scale white pixel has no positive XYZ component");
  return s;
}

MeasXyzImage meas_xyz_transform(const RawCapture& capture) {
  const Image3d rgb = demosaic_bilinear(normalize_mosaic(capture), capture.cfa_pattern);
  const double scale = white_pixel_scale(capture);

  MeasXyzImage out;
  out.capture_id = capture.capture_id;
  out.metadata = capture.metadata;
  out.data = Image3d(rgb.height(), rgb.width(), 3);
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
    const Vec3 balanced = {rgb.at(p, 0) * capture.wb_gains[0], rgb.at(p, 1) * capture.wb_gains[1],
                           rgb.at(p, 2) * capture.wb_gains[2]};
    const Vec3 xyz = multiply(capture.cam_to_xyz, balanced);
    for (std::size_t c = 0; c < 3; ++c) {
      double v = xyz[c];
      if (v < 0.0) {
        v = 0.0;
        ++out.negative_clamped;
      }
      out.data.at(p, c) = std::min(v / scale, 1.0);
    }
  }
  if (out.negative_clamped > 0)
    log::debug("meas_xyz.negative_clamped", {{"capture_id", out.capture_id}, {"samples", out.negative_clamped}});
  return out;
}

void export_meas_xyz(const MeasXyzImage& image, const std::filesystem::path& stem) {
  io::FloatPlane plane;
  plane.header = {{"capture_id", image.capture_id},
                  {"height", image.data.height()},
                  {"width", image.data.width()},
                  {"channels", 3},
                  {"range", {0, 1}},
                  {"metadata", metadata_to_json(image.metadata)}};
  plane.samples.reserve(image.data.values().size());
  for (double v : image.data.values()) plane.samples.push_back(static_cast<float>(v));
  io::write_float_plane(stem, plane);
}

MeasXyzImage import_meas_xyz(const std::filesystem::path& stem) {
  io::FloatPlane plane = io::read_float_plane(stem);
  MeasXyzImage out;
  try {
    if (plane.header.at("channels").get<int>() != 3)
      fail(ErrorKind::SchemaViolation, stem.string() + ": Meas.-XYZ planes have 3 channels");
    out.capture_id = plane.header.at("capture_id").get<std::string>();
    if (plane.header.contains("metadata")) out.metadata = metadata_from_json(plane.header.at("metadata"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaViolation, stem.string() + ": " + e.what());
  }
  out.data = Image3d(plane.header.at("height").get<std::size_t>(), plane.header.at("width").get<std::size_t>(), 3);
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    const double v = plane.samples[i];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      fail(ErrorKind::SchemaViolation, stem.string() + ": sample outside [0, 1]");
    out.data.values()[i] = v;
  }
  return out;
}

}  // namespace measground
