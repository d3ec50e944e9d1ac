#include "measground/lost_signal.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "measground/error.hpp"
#include "measground/io.hpp"

namespace measground {

using nlohmann::json;

Image3d invert_render(const RenderedRgb& r) {
  const RenderParams& params = r.params();
  validate(params);
  const Mat3 to_xyz = inverse(params.xyz_to_linear_srgb);
  Image3d out(r.height(), r.width(), 3);
  for (std::size_t p = 0; p < r.pixel_count(); ++p) {
    Vec3 lin{};
    for (std::size_t c = 0; c < 3; ++c) {
      const double enc = r.encoded(p, c);
      lin[c] = params.transfer == Transfer::SrgbPiecewise ? srgb_eotf(enc) : enc;
    }
    const Vec3 xyz = multiply(to_xyz, lin);
    for (std::size_t c = 0; c < 3; ++c) out.at(p, c) = xyz[c] / params.exposure_gain;
  }
  return out;
}

double nearest_rank_percentile(std::span<const double> values, double q) {
  if (values.empty()) return 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

LostSignalReport lost_signal_residual(const MeasXyzImage& z, const Image3d& recovered,
                                      const Plane<std::uint8_t>& clip_mask, double tau, int bins) {
  const Image3d& orig = z.data;
  if (!orig.same_shape(recovered) || clip_mask.height() != orig.height() || clip_mask.width() != orig.width())
    fail(ErrorKind::ShapeMismatch, "original, recovered and clip mask must share geometry");
  if (!(tau > 0.0)) fail(ErrorKind::InvalidArgument, "tau must be > 0");
  if (bins < 2) fail(ErrorKind::InvalidArgument, "bins must be >= 2");

  LostSignalReport report;
  report.capture_id = z.capture_id;
  report.tau = tau;
  const std::size_t h = orig.height();
  const std::size_t w = orig.width();
  const std::size_t n = orig.pixel_count();
  report.residual_map = Plane<double>(h, w);
  report.channel_residual = Image3d(h, w, 3);
  report.lost_mask = Plane<std::uint8_t>(h, w);

  std::vector<double> y_orig(n), y_rec(n);
  std::size_t clipped = 0;
  double max_residual = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c)
      report.channel_residual.at(p, c) = std::abs(orig.at(p, c) - recovered.at(p, c));
    y_orig[p] = orig.at(p, 1);
    y_rec[p] = recovered.at(p, 1);
    const double res = std::abs(y_orig[p] - y_rec[p]);
    report.residual_map.values()[p] = res;
    report.lost_mask.values()[p] = res > tau ? 1 : 0;
    max_residual = std::max(max_residual, res);
    if (clip_mask.values()[p] & clip_bits::kHighAny) ++clipped;
  }
  report.clipped_fraction = n == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(n);
  report.p99_original = nearest_rank_percentile(y_orig, 0.99);
  report.p99_recovered = nearest_rank_percentile(y_rec, 0.99);

  if (max_residual == 0.0) {
    report.histogram.push_back({0.0, 0.0, n});
  } else {
    const auto nb = static_cast<std::size_t>(bins);
    const double width = max_residual / static_cast<double>(nb);
    report.histogram.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      report.histogram[b].lo = width * static_cast<double>(b);
      report.histogram[b].hi = b + 1 == nb ? max_residual : width * static_cast<double>(b + 1);
    }
    for (double res : report.residual_map.values()) {
      auto b = static_cast<std::size_t>(res / width);
      report.histogram[std::min(b, nb - 1)].count += 1;
    }
  }
  return report;
}

LostSignalReport analyze_lost_signal(const MeasXyzImage& z, const RenderParams& params, double tau, int bins) {
  const RenderedRgb rendered = render_proxy(z, params);
  LostSignalReport report = lost_signal_residual(z, invert_render(rendered), rendered.clip_mask(), tau, bins);
  report.exposure_gain = params.exposure_gain;
  report.bits = params.bit_depth;
  return report;
}

json summary_json(const LostSignalReport& r) {
  return {{"capture_id", r.capture_id},       {"exposure_gain", r.exposure_gain},
          {"clipped_fraction", r.clipped_fraction}, {"p99_original", r.p99_original},
          {"p99_recovered", r.p99_recovered}, {"tau", r.tau},
          {"bits", r.bits}};
}

void emit_report(const LostSignalReport& r, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::IoFailure, "cannot create " + out_dir.string());

  const std::size_t h = r.residual_map.height();
  const std::size_t w = r.residual_map.width();

  io::FloatPlane y;
  y.header = {{"capture_id", r.capture_id}, {"height", h}, {"width", w}, {"channels", 1}, {"quantity", "abs_delta_Y"}};
  for (double v : r.residual_map.values()) y.samples.push_back(static_cast<float>(v));
  io::write_float_plane(out_dir / "residual_y", y);

  io::FloatPlane xyz;
  xyz.header = {{"capture_id", r.capture_id}, {"height", h}, {"width", w}, {"channels", 3}, {"quantity", "abs_delta_XYZ"}};
  for (double v : r.channel_residual.values()) xyz.samples.push_back(static_cast<float>(v));
  io::write_float_plane(out_dir / "residual_xyz", xyz);

  io::Pnm mask;
  mask.width = w;
  mask.height = h;
  mask.channels = 1;
  mask.maxval = 255;
  for (std::uint8_t v : r.lost_mask.values()) mask.samples.push_back(v ? 255 : 0);
  io::write_pnm(out_dir / "lost_mask.pgm", mask);

  std::ostringstream csv;
  csv.precision(17);
  csv << "bin_lo,bin_hi,count\n";
  for (const auto& b : r.histogram) csv << b.lo << ',' << b.hi << ',' << b.count << '\n';
  io::write_text(out_dir / "histogram.csv", csv.str());

  io::write_json(out_dir / "summary.json", summary_json(r));
}

}  // namespace measground
