#include <gtest/gtest.h>

#include <random>

#include "measground/error.hpp"
#include "measground/io.hpp"
#include "measground/meas_xyz.hpp"
#include "test_support.hpp"

using namespace measground;
using measground::testing::TempDir;

namespace {

RawCapture capture_4x4(std::uint16_t fill) {
  RawCapture c;
  c.capture_id = "c4";
  c.mosaic = Plane<std::uint16_t>(4, 4, fill);
  c.black_level = {64, 64, 64, 64};
  c.white_level = 1023;
  c.metadata.device_id = "cam";
  c.raw_path = "/raw/c4";
  return c;
}

}  // namespace

TEST(Normalize, BlackWhiteAndMidCode) {
  RawCapture c = capture_4x4(64);
  c.mosaic(0, 1) = 1023;
  c.mosaic(1, 0) = 543;
  c.mosaic(1, 1) = 2000;  // above white: saturates
  c.mosaic(0, 0) = 10;    // below black: clamps to 0
  const Plane<double> n = normalize_mosaic(c);
  EXPECT_EQ(n(0, 2), 0.0);
  EXPECT_EQ(n(0, 1), 1.0);
  EXPECT_NEAR(n(1, 0), 479.0 / 959.0, 1e-15);
  EXPECT_NEAR(n(1, 0), 0.4994786235662148, 1e-15);
  EXPECT_EQ(n(1, 1), 1.0);
  EXPECT_EQ(n(0, 0), 0.0);
  const auto sat = saturation_mask(c);
  EXPECT_EQ(sat(1, 1), 1);
  EXPECT_EQ(sat(0, 1), 1);
  EXPECT_EQ(sat(1, 0), 0);
}

TEST(Normalize, PerSiteBlackLevels) {
  RawCapture c = capture_4x4(200);
  c.black_level = {100, 150, 50, 200};
  const Plane<double> n = normalize_mosaic(c);
  EXPECT_NEAR(n(0, 0), 100.0 / 923.0, 1e-15);
  EXPECT_NEAR(n(0, 1), 50.0 / 873.0, 1e-15);
  EXPECT_NEAR(n(1, 0), 150.0 / 973.0, 1e-15);
  EXPECT_EQ(n(1, 1), 0.0);
}

TEST(Demosaic, ConstantMosaicGivesConstantRgb) {
  for (auto pattern : {CfaPattern::RGGB, CfaPattern::BGGR, CfaPattern::GRBG, CfaPattern::GBRG}) {
    const Image3d rgb = demosaic_bilinear(Plane<double>(6, 8, 0.375), pattern);
    for (double v : rgb.values()) EXPECT_EQ(v, 0.375);
  }
}

TEST(Demosaic, PeriodicRedTile) {
  Plane<double> m(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) m(y, x) = (y % 2 == 0 && x % 2 == 0) ? 1.0 : 0.0;
  const Image3d rgb = demosaic_bilinear(m, CfaPattern::RGGB);
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
    EXPECT_EQ(rgb.at(p, 0), 1.0);
    EXPECT_EQ(rgb.at(p, 1), 0.0);
    EXPECT_EQ(rgb.at(p, 2), 0.0);
  }
}

TEST(Demosaic, MatchesBruteForceOracle) {
  // m[y][x] = ((5y + 3x) mod 7) / 7 on a 4x4 RGGB mosaic; expected values from tests/oracles/oracle.py.
  static const double expected[4][4][3] = {
      {{0.0, 0.5714285714285714, 0.14285714285714285},
       {0.42857142857142855, 0.42857142857142855, 0.14285714285714285},
       {0.8571428571428571, 0.4642857142857143, 0.07142857142857142},
       {0.8571428571428571, 0.2857142857142857, 0.0}},
      {{0.21428571428571427, 0.7142857142857143, 0.14285714285714285},
       {0.39285714285714285, 0.6428571428571429, 0.14285714285714285},
       {0.5714285714285714, 0.5714285714285714, 0.07142857142857142},
       {0.5714285714285714, 0.5357142857142857, 0.0}},
      {{0.42857142857142855, 0.6428571428571429, 0.35714285714285715},
       {0.35714285714285715, 0.8571428571428571, 0.35714285714285715},
       {0.2857142857142857, 0.5357142857142857, 0.2857142857142857},
       {0.2857142857142857, 0.7142857142857143, 0.21428571428571427}},
      {{0.42857142857142855, 0.14285714285714285, 0.5714285714285714},
       {0.35714285714285715, 0.4642857142857143, 0.5714285714285714},
       {0.2857142857142857, 0.0, 0.5},
       {0.2857142857142857, 0.35714285714285715, 0.42857142857142855}}};
  Plane<double> m(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) m(y, x) = static_cast<double>((5 * y + 3 * x) % 7) / 7.0;
  const Image3d rgb = demosaic_bilinear(m, CfaPattern::RGGB);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(rgb.at(y, x, c), expected[y][x][c], 1e-15) << y << x << c;
}

TEST(Demosaic, LinearInScale) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Plane<double> m(8, 6);
  for (auto& v : m.storage()) v = u(rng);
  for (double alpha : {0.25, 0.5, 0.8, 1.0}) {
    Plane<double> scaled = m;
    for (auto& v : scaled.storage()) v *= alpha;
    const Image3d a = demosaic_bilinear(m, CfaPattern::GBRG);
    const Image3d b = demosaic_bilinear(scaled, CfaPattern::GBRG);
    for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_NEAR(b.values()[i], alpha * a.values()[i], 1e-15);
  }
}

TEST(Demosaic, RejectsOddDimensions) { EXPECT_THROW(demosaic_bilinear(Plane<double>(3, 4), CfaPattern::RGGB), Error); }

TEST(MeasXyz, BlackCaptureIsZero) {
  const MeasXyzImage z = meas_xyz_transform(capture_4x4(64));
  for (double v : z.data.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(z.capture_id, "c4");
}

TEST(MeasXyz, ConstantHalfWithIdentity) {
  RawCapture c = capture_4x4(64);
  c.black_level = {0, 0, 0, 0};
  c.white_level = 1000;
  c.mosaic = Plane<std::uint16_t>(4, 4, 500);
  const double s = white_pixel_scale(c);
  EXPECT_EQ(s, 1.0);
  const MeasXyzImage z = meas_xyz_transform(c);
  for (double v : z.data.values()) EXPECT_EQ(v, 0.5 / s);
}

TEST(MeasXyz, WhiteScaleUsesBalancedMatrix) {
  RawCapture c = capture_4x4(64);
  c.wb_gains = {2.0, 1.0, 1.5};
  c.cam_to_xyz = {{{0.4, 0.4, 0.2}, {0.2, 0.7, 0.1}, {0.0, 0.1, 0.9}}};
  // M * wb = (0.8+0.4+0.3, 0.4+0.7+0.15, 0.1+1.35) = (1.5, 1.25, 1.45)
  EXPECT_NEAR(white_pixel_scale(c), 1.5, 1e-15);
  // Saturated neutral sensor maps to Y <= 1 and its largest channel to 1.
  c.mosaic = Plane<std::uint16_t>(4, 4, 1023);
  const MeasXyzImage z = meas_xyz_transform(c);
  EXPECT_NEAR(z.data.at(0, 0, 0), 1.0, 1e-15);
  EXPECT_NEAR(z.data.at(0, 0, 1), 1.25 / 1.5, 1e-15);
}

TEST(MeasXyz, NegativesClampAndAreCounted) {
  RawCapture c = capture_4x4(500);
  c.cam_to_xyz = {{{1.0, -2.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
  const MeasXyzImage z = meas_xyz_transform(c);
  EXPECT_EQ(z.negative_clamped, 16u);
  for (std::size_t p = 0; p < z.data.pixel_count(); ++p) EXPECT_EQ(z.data.at(p, 0), 0.0);
}

TEST(MeasXyz, RangeAndLinearityOverRandomCaptures) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticSceneSpec spec;
    spec.width = 16;
    spec.height = 12;
    spec.background = 0.1 + 0.3 * u(rng);
    spec.patches = {TextPatch{2, 2, 6, 4, 1.0 + u(rng)}};
    spec.noise_sigma = 0.01;
    spec.wb_gains = {1.5 + u(rng), 1.0, 1.2 + u(rng)};
    spec.cam_to_xyz = {{{0.41, 0.36, 0.18}, {0.21, 0.72, 0.07}, {0.02, 0.12, 0.95}}};
    const RawCapture a = synth_capture(spec, static_cast<std::uint64_t>(trial)).capture;
    // Build alpha*A directly on (code - black) so both captures sit below white.
    const double alpha = 0.5;
    RawCapture b = a;
    RawCapture a_even = a;
    for (std::size_t i = 0; i < a.mosaic.size(); ++i) {
      const double above = std::max(0.0, static_cast<double>(a.mosaic.storage()[i]) - a.black_level[0]);
      const double even = 2.0 * std::floor(above / 2.0);
      a_even.mosaic.storage()[i] = static_cast<std::uint16_t>(a.black_level[0] + even);
      b.mosaic.storage()[i] = static_cast<std::uint16_t>(a.black_level[0] + alpha * even);
    }
    const MeasXyzImage za = meas_xyz_transform(a_even);
    const MeasXyzImage zb = meas_xyz_transform(b);
    for (std::size_t i = 0; i < za.data.values().size(); ++i) {
      EXPECT_GE(za.data.values()[i], 0.0);
      EXPECT_LE(za.data.values()[i], 1.0);
      EXPECT_NEAR(zb.data.values()[i], alpha * za.data.values()[i], 1e-9);
    }
  }
}

TEST(MeasXyz, NeutralAxisPreserved) {
  SyntheticSceneSpec spec;
  spec.background = 0.3;
  spec.patches = {TextPatch{8, 8, 16, 8, 2.5}};
  const MeasXyzImage z = meas_xyz_transform(synth_capture(spec, 0).capture);
  // Bilinear interpolation fringes within one pixel of the patch border; everywhere
  // else the 3x3 neighbourhood is flat and a grey scene must stay grey.
  auto inside = [](long y, long x) { return y >= 8 && y < 16 && x >= 8 && x < 24; };
  auto near_border = [&](std::size_t y, std::size_t x) {
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx)
        if (inside(long(y) + dy, long(x) + dx) != inside(long(y), long(x))) return true;
    return false;
  };
  std::size_t checked = 0;
  for (std::size_t y = 0; y < z.data.height(); ++y) {
    for (std::size_t x = 0; x < z.data.width(); ++x) {
      if (near_border(y, x)) continue;
      const std::size_t p = y * z.data.width() + x;
      EXPECT_NEAR(z.data.at(p, 0), z.data.at(p, 1), 1e-9) << y << "," << x;
      EXPECT_NEAR(z.data.at(p, 2), z.data.at(p, 1), 1e-9) << y << "," << x;
      ++checked;
    }
  }
  EXPECT_GT(checked, 3500u);
}

TEST(MeasXyz, Deterministic) {
  SyntheticSceneSpec spec;
  spec.noise_sigma = 0.02;
  const RawCapture c = synth_capture(spec, 5).capture;
  EXPECT_EQ(meas_xyz_transform(c).data, meas_xyz_transform(c).data);
}

TEST(MeasXyz, ExportImportRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(1);
  MeasXyzImage z = measground::testing::random_meas_xyz(rng, 6, 10);
  for (auto& v : z.data.values()) v = static_cast<float>(v);  // plane stores float32
  z.capture_id = "rt";
  z.metadata.scene_id = "scene";
  export_meas_xyz(z, dir / "rt");
  const MeasXyzImage back = import_meas_xyz(dir / "rt");
  EXPECT_EQ(back.data, z.data);
  EXPECT_EQ(back.capture_id, "rt");
  EXPECT_EQ(back.metadata, z.metadata);
  const auto header = io::read_json(dir / "rt.json");
  EXPECT_EQ(header.at("channels"), 3);
  EXPECT_EQ(header.at("height"), 6);
  EXPECT_EQ(header.at("width"), 10);
  EXPECT_EQ(header.at("range"), nlohmann::json::array({0, 1}));
}

TEST(MeasXyz, ImportRejectsMissingPlane) {
  TempDir dir;
  EXPECT_THROW(import_meas_xyz(dir / "absent"), Error);
}
