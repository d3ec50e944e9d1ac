#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "measground/capture_model.hpp"
#include "measground/image.hpp"

namespace measground {

/// Dense linear XYZ observation in [0, 1], same geometry as the source mosaic.
struct MeasXyzImage {
  Image3d data;  // height x width x 3
  std::string capture_id;
  CameraMetadata metadata;
  /// XYZ samples that were negative after matrixing and clamped to zero.
  std::size_t negative_clamped = 0;
};

/// Per-site clamp((code - black) / (white - black), 0, 1).
Plane<double> normalize_mosaic(const RawCapture& capture);

/// Sites whose raw code is at or above white_level.
Plane<std::uint8_t> saturation_mask(const RawCapture& capture);

/// Bilinear demosaic: every missing colour at a site is the mean of the
/// same-colour sites in its 3x3 neighbourhood, with reflect-101 padding at
/// the borders (which preserves CFA parity on even-sized mosaics). Sampled
/// colours pass through unchanged.
Image3d demosaic_bilinear(const Plane<double>& normalized, CfaPattern pattern);

/// Scale S that maps a full-scale, white-balanced neutral pixel to a maximum
/// XYZ component of 1: S = max_c (cam_to_xyz * wb_gains)_c.
double white_pixel_scale(const RawCapture& capture);

/// RAW -> Meas.-XYZ: normalize, demosaic, white balance, matrix to XYZ,
/// clamp negatives, divide by white_pixel_scale, clamp to [0, 1].
MeasXyzImage meas_xyz_transform(const RawCapture& capture);

/// Float32 plane export: `<stem>.bin` + `<stem>.json` header
/// {capture_id, height, width, channels: 3, range: [0, 1], metadata}.
void export_meas_xyz(const MeasXyzImage& image, const std::filesystem::path& stem);
MeasXyzImage import_meas_xyz(const std::filesystem::path& stem);

}  // namespace measground
