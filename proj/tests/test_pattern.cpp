#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cavecheck/pattern.hpp"
#include "cavecheck/random.hpp"

using namespace cavecheck;
using namespace cavecheck::pattern;

namespace {

ScreenRect front() { return RigConfig::default_cave().screens[0]; }

struct Pair {
  RasterImage left;
  RasterImage right;
};

Pair default_pair(const PatternSpec& spec = {}) {
  return {generate_pattern(front(), spec, EyeSide::Left), generate_pattern(front(), spec, EyeSide::Right)};
}

Capture capture(const ScreenFault& f, const PatternSpec& spec = {}) {
  const Pair p = default_pair(spec);
  return simulate_capture(p.left, p.right, f, front());
}

// Golden digest of the default front-screen left-eye PPM.
constexpr std::uint64_t kGoldenLeft = 0xdcc947c2c24fb28dULL;

}  // namespace

TEST(GeneratePattern, GridlineColumns) {
  const auto cols = gridline_columns(front(), PatternSpec{});
  ASSERT_EQ(cols.size(), 20u);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(cols[k], static_cast<int>(std::lround(k * 1024 * 0.1524 / 3.0)));
}

TEST(GeneratePattern, GridlinesAtSixInchSpacing) {
  const auto cols = gridline_columns(front(), PatternSpec{});
  const double px = 3.0 / 1024;
  for (std::size_t k = 1; k < cols.size(); ++k) EXPECT_NEAR((cols[k] - cols[k - 1]) * px, 0.1524, px);
  // Other-eye bar regions are blanked, so skip gridlines that cross them.
  const RasterImage img = generate_pattern(front(), PatternSpec{}, EyeSide::Left);
  const auto blanked = bar_columns(PatternSpec{}, EyeSide::Right, 1024);
  const int row = 5;
  for (int c : cols) {
    if (std::find(blanked.begin(), blanked.end(), c) != blanked.end()) continue;
    EXPECT_NE(img.at(c, row), Rgb{}) << "column " << c;
  }
}

TEST(GeneratePattern, EachEyeHasOnlyItsBars) {
  const Pair p = default_pair();
  const auto a = bar_columns(PatternSpec{}, EyeSide::Left, 1024);
  const auto b = bar_columns(PatternSpec{}, EyeSide::Right, 1024);
  const auto grid = gridline_columns(front(), PatternSpec{});
  auto is_grid = [&](int x) { return std::find(grid.begin(), grid.end(), x) != grid.end(); };
  const int row = 100;
  for (int x : a) {
    EXPECT_EQ(p.left.at(x, row), (Rgb{255, 255, 255}));
    if (!is_grid(x)) EXPECT_EQ(p.right.at(x, row), Rgb{});
  }
  for (int x : b) {
    EXPECT_EQ(p.right.at(x, row), (Rgb{255, 255, 255}));
    if (!is_grid(x)) EXPECT_EQ(p.left.at(x, row), Rgb{});
  }
}

TEST(GeneratePattern, BarsSpanFullHeight) {
  const Pair p = default_pair();
  const int x = bar_columns(PatternSpec{}, EyeSide::Left, 1024).front();
  EXPECT_NE(p.left.at(x, 0), Rgb{});
  EXPECT_NE(p.left.at(x, 1023), Rgb{});
}

TEST(GeneratePattern, Deterministic) {
  EXPECT_EQ(write_ppm(default_pair().left), write_ppm(default_pair().left));
}

TEST(GeneratePattern, GoldenChecksum) {
  EXPECT_EQ(fnv1a64(write_ppm(default_pair().left)), kGoldenLeft);
}

TEST(GeneratePattern, SpacingErrors) {
  PatternSpec spec;
  spec.grid_spacing = 0.005;  // under 2 px at 1024 px over 3 m
  EXPECT_THROW(generate_pattern(front(), spec, EyeSide::Left), ConfigError);
  spec.grid_spacing = -1;
  EXPECT_THROW(generate_pattern(front(), spec, EyeSide::Left), ConfigError);
}

TEST(GeneratePattern, DoubleSpacingHalvesLines) {
  PatternSpec spec;
  spec.grid_spacing = 0.3048;
  EXPECT_EQ(gridline_columns(front(), spec).size(), 10u);
}

TEST(SimulateCapture, NoFaultsIdentity) {
  const Pair p = default_pair();
  const Capture c = simulate_capture(p.left, p.right, ScreenFault{}, front());
  EXPECT_EQ(c.left, p.left);
  EXPECT_EQ(c.right, p.right);
}

TEST(SimulateCapture, GenlockBreakSplitsRows) {
  ScreenFault f;
  f.genlock_break_row = 400;
  const Pair p = default_pair();
  const Capture c = simulate_capture(p.left, p.right, f, front());
  const int xb = bar_columns(PatternSpec{}, EyeSide::Right, 1024).front();
  EXPECT_EQ(c.left.at(xb, 399), p.left.at(xb, 399));
  EXPECT_EQ(c.left.at(xb, 400), (Rgb{255, 255, 255}));
  EXPECT_EQ(c.right.at(xb, 400), Rgb{});
}

TEST(SimulateCapture, GhostLeakRounding) {
  RasterImage l(8, 8, Rgb{255, 255, 255}), r(8, 8, Rgb{});
  ScreenFault f;
  f.ghost_leak = 0.1;
  const Capture c = simulate_capture(l, r, f, front());
  EXPECT_EQ(c.left.at(3, 3).r, 230);
  EXPECT_EQ(c.right.at(3, 3).r, 25);
}

TEST(SimulateCapture, ColorGainClamps) {
  RasterImage l(8, 8, Rgb{200, 100, 50}), r = l;
  ScreenFault f;
  f.color_gain = {1.5, 1.0, 0.8};
  const Capture c = simulate_capture(l, r, f, front());
  EXPECT_EQ(c.left.at(0, 0), (Rgb{255, 100, 40}));
}

TEST(DetectGenlock, ExactRows) {
  for (int row : {1, 400, 1023}) {
    ScreenFault f;
    f.genlock_break_row = row;
    const Capture c = capture(f);
    const auto r = detect_genlock_break(c.left, c.right, PatternSpec{});
    ASSERT_TRUE(r.break_row) << row;
    EXPECT_EQ(*r.break_row, row);
    EXPECT_FALSE(r.swapped);
  }
}

TEST(DetectGenlock, NoneWithoutFault) {
  const Capture c = capture(ScreenFault{});
  const auto r = detect_genlock_break(c.left, c.right, PatternSpec{});
  EXPECT_FALSE(r.break_row);
  EXPECT_FALSE(r.swapped);
}

TEST(DetectGenlock, RowZeroIsSwap) {
  ScreenFault f;
  f.genlock_break_row = 0;
  const Capture c = capture(f);
  const auto r = detect_genlock_break(c.left, c.right, PatternSpec{});
  EXPECT_FALSE(r.break_row);
  EXPECT_TRUE(r.swapped);
}

TEST(DetectGenlock, SoundOverAllRowsOfSmallScreen) {
  ScreenRect s = front();
  s.pixels_w = 256;
  s.pixels_h = 64;
  PatternSpec spec;
  spec.grid_spacing = 0.1524;
  const RasterImage l = generate_pattern(s, spec, EyeSide::Left);
  const RasterImage r = generate_pattern(s, spec, EyeSide::Right);
  for (int row = 1; row < 64; ++row) {
    ScreenFault f;
    f.genlock_break_row = row;
    const Capture c = simulate_capture(l, r, f, s);
    const auto res = detect_genlock_break(c.left, c.right, spec);
    ASSERT_TRUE(res.break_row);
    EXPECT_EQ(*res.break_row, row);
  }
}

TEST(DetectGenlock, AmbiguousTransitions) {
  const Pair p = default_pair();
  RasterImage l = p.left, r = p.right;
  // Rows [300, 500) swapped only: two transitions.
  for (int y = 300; y < 500; ++y)
    for (int x = 0; x < 1024; ++x) {
      l.set(x, y, p.right.at(x, y));
      r.set(x, y, p.left.at(x, y));
    }
  try {
    detect_genlock_break(l, r, PatternSpec{});
    FAIL() << "expected AmbiguousBreakError";
  } catch (const AmbiguousBreakError& e) {
    EXPECT_EQ(e.candidate_rows(), (std::vector<int>{300, 500}));
  }
}

TEST(EstimateGhosting, Levels) {
  for (double g : {0.0, 0.1, 0.3}) {
    ScreenFault f;
    f.ghost_leak = g;
    const Capture c = capture(f);
    EXPECT_NEAR(estimate_ghosting(c.left, c.right, PatternSpec{}), g, g == 0.0 ? 1.0 / 255 : 0.004) << g;
  }
}

TEST(EstimateGhosting, MonotoneAndWithinQuantization) {
  double prev = -1.0;
  for (double g = 0.0; g < 0.5; g += 0.02) {
    ScreenFault f;
    f.ghost_leak = g;
    const Capture c = capture(f);
    const double est = estimate_ghosting(c.left, c.right, PatternSpec{});
    EXPECT_GE(est, prev);
    EXPECT_NEAR(est, g, 1.0 / 255 + 0.5 / 255);
    prev = est;
  }
}

TEST(CompareColor, IdenticalAndBlueGain) {
  const Capture a = capture(ScreenFault{});
  const auto same = compare_color(a.left, a.left);
  for (double r : same.ratio) EXPECT_NEAR(r, 1.0, 1e-12);
  EXPECT_FALSE(same.flagged);
  ScreenFault f;
  f.color_gain = {1.0, 1.0, 0.8};
  const Capture b = capture(f);
  const auto cmp = compare_color(a.left, b.left);
  EXPECT_NEAR(cmp.ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(cmp.ratio[2], 0.8, 0.01);
  EXPECT_TRUE(cmp.flagged);
}

TEST(CompareColor, SaturatedSamplesExcluded) {
  // A gain above 1 clamps the full-amplitude bars; the ratio still comes
  // out right from the unsaturated half-amplitude bars.
  const Capture a = capture(ScreenFault{});
  ScreenFault f;
  f.color_gain = {1.3, 1.0, 1.0};
  const Capture b = capture(f);
  const auto cmp = compare_color(a.left, b.left);
  EXPECT_NEAR(cmp.ratio[0], 1.3, 0.01);
  EXPECT_GT(cmp.samples[0], 0u);
}

TEST(GridLinearity, Identity) {
  const Capture c = capture(ScreenFault{});
  const auto r = check_grid_linearity(c.left, front(), PatternSpec{});
  EXPECT_LT(r.max_residual_px, 0.5);
  EXPECT_NEAR(r.fitted(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(r.fitted(0, 2), 0.0, 1e-9);
}

TEST(GridLinearity, TwoPixelShift) {
  ScreenFault f;
  f.projector_affine(0, 2) = 2 * 3.0 / 1024;
  const Capture c = capture(f);
  const auto r = check_grid_linearity(c.left, front(), PatternSpec{});
  EXPECT_NEAR(r.fitted(0, 2), 2.0, 0.2);
  EXPECT_LT(r.max_residual_px, 0.5);
}

TEST(GridLinearity, OnePercentScale) {
  ScreenFault f;
  f.projector_affine(0, 0) = 1.01;
  f.projector_affine(1, 1) = 1.01;
  const Capture c = capture(f);
  const auto r = check_grid_linearity(c.left, front(), PatternSpec{});
  EXPECT_NEAR(r.fitted(0, 0), 1.01, 0.002);
  EXPECT_NEAR(r.fitted(1, 1), 1.01, 0.002);
}

TEST(Ppm, BlackEightByEight) {
  const std::string bytes = write_ppm(RasterImage(8, 8));
  const std::string header = "P6\n8 8\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 192);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  EXPECT_EQ(bytes.substr(header.size()), std::string(192, '\0'));
}

TEST(Ppm, TopRowFirst) {
  RasterImage img(8, 8);
  img.set(0, 7, Rgb{9, 8, 7});
  const std::string bytes = write_ppm(img);
  EXPECT_EQ(static_cast<unsigned char>(bytes[11]), 9);
}

TEST(Ppm, RoundTripRandomImages) {
  std::mt19937 rng(4);
  for (int n = 0; n < 20; ++n) {
    const int w = 8 + static_cast<int>(rng() % 40), h = 8 + static_cast<int>(rng() % 40);
    RasterImage img(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.set(x, y, Rgb{static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()),
                          static_cast<std::uint8_t>(rng())});
    EXPECT_EQ(read_ppm(write_ppm(img)), img);
  }
  const RasterImage p = default_pair().left;
  EXPECT_EQ(read_ppm(write_ppm(p)), p);
}

TEST(Ppm, RejectsMalformed) {
  EXPECT_THROW(read_ppm("P3\n8 8\n255\n"), ConfigError);
  EXPECT_THROW(read_ppm("P6\n8 8\n255\n" + std::string(10, '\0')), ConfigError);
  EXPECT_THROW(read_ppm("P6\n8 8\n65535\n" + std::string(384, '\0')), ConfigError);
}
