#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "measground/image.hpp"
#include "measground/linalg.hpp"
#include "measground/meas_xyz.hpp"

namespace measground {

/// Piecewise sRGB transfer constants, kept in one table so encode and decode agree bit-exactly.
struct SrgbConstants {
  static constexpr double encode_threshold = 0.0031308;
  static constexpr double decode_threshold = 0.04045;
  static constexpr double linear_slope = 12.92;
  static constexpr double scale = 1.055;
  static constexpr double offset = 0.055;
  static constexpr double gamma = 2.4;
};

/// XYZ (D65) -> linear sRGB, 7 decimals.
inline constexpr Mat3 kXyzToLinearSrgbD65 = {{{3.2404542, -1.5371385, -0.4985314},
                                             {-0.9692660, 1.8760108, 0.0415560},
                                             {0.0556434, -0.2040259, 1.0572252}}};

inline std::vector<double> default_bracket() { return {0.5, 1.0, 2.0, 4.0}; }

enum class Transfer { SrgbPiecewise, Identity };

struct RenderParams {
  double exposure_gain = 1.0;
  int bit_depth = 8;
  Mat3 xyz_to_linear_srgb = kXyzToLinearSrgbD65;
  Transfer transfer = Transfer::SrgbPiecewise;
  bool quantize = true;

  std::uint32_t max_code() const { return (1u << bit_depth) - 1u; }
  friend bool operator==(const RenderParams&, const RenderParams&) = default;
};

/// Throws InvalidArgument for non-positive gain or bit depth outside [1, 16],
/// SingularMatrix for a non-invertible colour matrix.
void validate(const RenderParams& params);

nlohmann::json params_to_json(const RenderParams& params);
RenderParams params_from_json(const nlohmann::json& j);

/// Clip flags per pixel: bit c set when channel c exceeded 1 before clipping,
/// bit (3 + c) set when it was below 0.
namespace clip_bits {
inline constexpr std::uint8_t kHighAny = 0b000111;
inline constexpr std::uint8_t kLowAny = 0b111000;
}  // namespace clip_bits

class RenderedRgb {
 public:
  RenderedRgb() = default;
  RenderedRgb(std::size_t height, std::size_t width, RenderParams params, std::string capture_id);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }
  const RenderParams& params() const noexcept { return params_; }
  const std::string& capture_id() const noexcept { return capture_id_; }

  /// Integer codes, interleaved RGB. Only populated when params().quantize.
  const std::vector<std::uint16_t>& codes() const noexcept { return codes_; }
  std::vector<std::uint16_t>& codes() noexcept { return codes_; }
  /// Encoded reals in [0, 1]. Only populated when !params().quantize.
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  /// Forward-render clip flags (see clip_bits). Not persisted in PPM exports.
  const Plane<std::uint8_t>& clip_mask() const noexcept { return clip_mask_; }
  Plane<std::uint8_t>& clip_mask() noexcept { return clip_mask_; }

  /// Encoded value in [0, 1] regardless of quantization.
  double encoded(std::size_t pixel, std::size_t channel) const;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  RenderParams params_;
  std::string capture_id_;
  std::vector<std::uint16_t> codes_;
  std::vector<double> values_;
  Plane<std::uint8_t> clip_mask_;
};

/// Linear -> encoded. DomainError outside [0, 1].
double srgb_oetf(double v);
/// Encoded -> linear (inverse of srgb_oetf, branch at 0.04045). DomainError outside [0, 1].
double srgb_eotf(double v);

/// round(v * (2^bits - 1)), half away from zero. DomainError outside [0, 1].
std::uint32_t quantize(double v, int bits);

/// Exposure gain, colour matrix, clip to [0, 1], transfer, optional quantization.
RenderedRgb render_proxy(const MeasXyzImage& z, const RenderParams& params);

/// One render per exposure gain, in the given order; other parameters come from `base`.
std::vector<RenderedRgb> make_bracket(const MeasXyzImage& z, const std::vector<double>& exposures,
                                      const RenderParams& base = {});

/// Binary PPM (P6, maxval 2^bits - 1) at `<stem>.ppm` plus `<stem>.json`
/// carrying capture_id and RenderParams. Requires a quantized render.
void export_rendered(const RenderedRgb& image, const std::filesystem::path& stem);
RenderedRgb import_rendered(const std::filesystem::path& stem);

}  // namespace measground
