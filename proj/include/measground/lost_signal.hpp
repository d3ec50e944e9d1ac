#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "measground/image.hpp"
#include "measground/isp.hpp"
#include "measground/meas_xyz.hpp"

namespace measground {

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Default residual threshold: two 8-bit code steps.
inline constexpr double kDefaultTau = 2.0 / 255.0;

struct LostSignalReport {
  std::string capture_id;
  double exposure_gain = 1.0;
  int bits = 8;
  double tau = kDefaultTau;

  Plane<double> residual_map;     // |Y(z) - Y(recovered)|
  Image3d channel_residual;       // per-channel |z - recovered|
  Plane<std::uint8_t> lost_mask;  // residual > tau
  double clipped_fraction = 0.0;
  double p99_original = 0.0;
  double p99_recovered = 0.0;
  std::vector<HistogramBin> histogram;
};

/// Undo a render: dequantize, inverse transfer, inverse colour matrix, divide
/// by the exposure gain. No clamping, so the result may leave [0, 1].
Image3d invert_render(const RenderedRgb& rendered);

/// Nearest-rank percentile (q in (0, 1]) of `values`; 0 for an empty span.
double nearest_rank_percentile(std::span<const double> values, double q);

/// Compare the original observation against its recovery. `forward_clip_mask`
/// is the clip mask of the render that produced `recovered`; a pixel counts as
/// clipped when any channel exceeded 1 in that render.
LostSignalReport lost_signal_residual(const MeasXyzImage& z, const Image3d& recovered,
                                      const Plane<std::uint8_t>& forward_clip_mask, double tau, int bins);

/// Render, invert and analyse in one step; fills gain/bits/capture metadata.
LostSignalReport analyze_lost_signal(const MeasXyzImage& z, const RenderParams& params, double tau = kDefaultTau,
                                     int bins = 32);

/// Writes residual_y.{bin,json}, residual_xyz.{bin,json}, lost_mask.pgm,
/// histogram.csv and summary.json into `out_dir`.
void emit_report(const LostSignalReport& report, const std::filesystem::path& out_dir);

nlohmann::json summary_json(const LostSignalReport& report);

}  // namespace measground
