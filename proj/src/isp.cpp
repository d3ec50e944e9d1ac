#include "measground/isp.hpp"

#include <cmath>

#include "measground/error.hpp"
#include "measground/io.hpp"

namespace measground {

using nlohmann::json;

void validate(const RenderParams& p) {
  if (!std::isfinite(p.exposure_gain) || !(p.exposure_gain > 0.0))
    fail(ErrorKind::InvalidArgument, "exposure_gain must be finite and > 0");
  if (p.bit_depth < 1 || p.bit_depth > 16) fail(ErrorKind::InvalidArgument, "bit_depth must be in [1, 16]");
  if (!all_finite(p.xyz_to_linear_srgb) || !is_invertible(p.xyz_to_linear_srgb))
    fail(ErrorKind::SingularMatrix, "xyz_to_linear_srgb is not invertible");
}

json params_to_json(const RenderParams& p) {
  json matrix = json::array();
  for (const auto& row : p.xyz_to_linear_srgb) matrix.push_back({row[0], row[1], row[2]});
  return {{"exposure_gain", p.exposure_gain},
          {"bit_depth", p.bit_depth},
          {"xyz_to_linear_srgb", matrix},
          {"transfer", p.transfer == Transfer::SrgbPiecewise ? "SRGB_PIECEWISE" : "IDENTITY"},
          {"quantize", p.quantize}};
}

RenderParams params_from_json(const json& j) {
  RenderParams p;
  try {
    if (j.contains("exposure_gain")) p.exposure_gain = j.at("exposure_gain").get<double>();
    if (j.contains("bit_depth")) p.bit_depth = j.at("bit_depth").get<int>();
    if (j.contains("xyz_to_linear_srgb")) p.xyz_to_linear_srgb = j.at("xyz_to_linear_srgb").get<Mat3>();
    if (j.contains("transfer")) {
      const auto t = j.at("transfer").get<std::string>();
      if (t == "SRGB_PIECEWISE") {
        p.transfer = Transfer::SrgbPiecewise;
      } else if (t == "IDENTITY") {
        p.transfer = Transfer::Identity;
      } else {
        fail(ErrorKind::SchemaViolation, "unknown transfer '" + t + "'");
      }
    }
    if (j.contains("quantize")) p.quantize = j.at("quantize").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, std::string("render params: ") + e.what());
  }
  validate(p);
  return p;
}

RenderedRgb::RenderedRgb(std::size_t height, std::size_t width, RenderParams params, std::string capture_id)
    : height_(height), width_(width), params_(params), capture_id_(std::move(capture_id)),
      clip_mask_(height, width) {
  if (params_.quantize) {
    codes_.assign(height * width * 3, 0);
  } else {
    values_.assign(height * width * 3, 0.0);
  }
}

double RenderedRgb::encoded(std::size_t pixel, std::size_t channel) const {
  const std::size_t i = pixel * 3 + channel;
  if (params_.quantize) return static_cast<double>(codes_[i]) / static_cast<double>(params_.max_code());
  return values_[i];
}

double srgb_oetf(double v) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::DomainError, "srgb_oetf input outside [0, 1]");
  using K = SrgbConstants;
  if (v <= K::encode_threshold) return K::linear_slope * v;
  if (v == 1.0) return 1.0;  // 1.055 - 0.055 rounds to 1 - 2^-53
  return K::scale * std::pow(v, 1.0 / K::gamma) - K::offset;
}

double srgb_eotf(double v) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::DomainError, "srgb_eotf input outside [0, 1]");
  using K = SrgbConstants;
  if (v <= K::decode_threshold) return v / K::linear_slope;
  if (v == 1.0) return 1.0;
  return std::pow((v + K::offset) / K::scale, K::gamma);
}

std::uint32_t quantize(double v, int bits) {
  if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::DomainError, "quantize input outside [0, 1]");
  if (bits < 1 || bits > 16) fail(ErrorKind::InvalidArgument, "bits must be in [1, 16]");
  const double full = static_cast<double>((1u << bits) - 1u);
  return static_cast<std::uint32_t>(std::round(v * full));
}

RenderedRgb render_proxy(const MeasXyzImage& z, const RenderParams& params) {
  validate(params);
  const Image3d& xyz = z.data;
  RenderedRgb out(xyz.height(), xyz.width(), params, z.capture_id);
  auto& mask = out.clip_mask().storage();
  for (std::size_t p = 0; p < xyz.pixel_count(); ++p) {
    const Vec3 exposed = {params.exposure_gain * xyz.at(p, 0), params.exposure_gain * xyz.at(p, 1),
                          params.exposure_gain * xyz.at(p, 2)};
    const Vec3 lin = multiply(params.xyz_to_linear_srgb, exposed);
    std::uint8_t flags = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      double v = lin[c];
      if (v > 1.0) {
        v = 1.0;
        flags |= static_cast<std::uint8_t>(1u << c);
      } else if (v < 0.0) {
        v = 0.0;
        flags |= static_cast<std::uint8_t>(1u << (3 + c));
      }
      const double enc = params.transfer == Transfer::SrgbPiecewise ? srgb_oetf(v) : v;
      if (params.quantize) {
        out.codes()[p * 3 + c] = static_cast<std::uint16_t>(quantize(enc, params.bit_depth));
      } else {
        out.values()[p * 3 + c] = enc;
      }
    }
    mask[p] = flags;
  }
  return out;
}

std::vector<RenderedRgb> make_bracket(const MeasXyzImage& z, const std::vector<double>& exposures,
                                      const RenderParams& base) {
  if (exposures.empty()) fail(ErrorKind::EmptyBracket, "exposure bracket is empty");
  std::vector<RenderedRgb> out;
  out.reserve(exposures.size());
  for (double e : exposures) {
    RenderParams p = base;
    p.exposure_gain = e;
    out.push_back(render_proxy(z, p));
  }
  return out;
}

void export_rendered(const RenderedRgb& image, const std::filesystem::path& stem) {
  if (!image.params().quantize) fail(ErrorKind::InvalidArgument, "PPM export needs a quantized render");
  io::Pnm ppm;
  ppm.width = image.width();
  ppm.height = image.height();
  ppm.channels = 3;
  ppm.maxval = image.params().max_code();
  ppm.samples = image.codes();
  io::write_pnm(io::with_suffix(stem, ".ppm"), ppm);
  io::write_json(io::with_suffix(stem, ".json"),
                 {{"capture_id", image.capture_id()}, {"params", params_to_json(image.params())}});
}

RenderedRgb import_rendered(const std::filesystem::path& stem) {
  const json header = io::read_json(io::with_suffix(stem, ".json"));
  std::string capture_id;
  RenderParams params;
  try {
    capture_id = header.at("capture_id").get<std::string>();
    params = params_from_json(header.at("params"));
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaViolation, stem.string() + ".json: " + e.what());
  }
  const io::Pnm ppm = io::read_pnm(io::with_suffix(stem, ".ppm"));
  if (ppm.channels != 3 || ppm.maxval != params.max_code())
    fail(ErrorKind::DimensionMismatch, stem.string() + ".ppm does not match its header");
  RenderedRgb out(ppm.height, ppm.width, params, capture_id);
  out.codes() = ppm.samples;
  return out;
}

}  // namespace measground
