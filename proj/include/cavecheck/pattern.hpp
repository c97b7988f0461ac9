#pragma once

// Projector test pattern and analysis of simulated per-eye captures.
//
// The pattern carries gridlines at a fixed physical spacing, a color bar
// band, and two sets of full-height stereo bars: set A appears only in the
// left-eye image and set B only in the right-eye image. Raster rows are
// stored bottom-up (row 0 is the bottom of the screen) to match screen
// coordinates; PPM output flips to top-first.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cavecheck/geom.hpp"
#include "cavecheck/rig.hpp"

namespace cavecheck::pattern {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class RasterImage {
 public:
  RasterImage(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  std::uint8_t channel(int x, int y, int c) const {
    return pixels_[offset(x, y) + static_cast<std::size_t>(c)];
  }
  void set_channel(int x, int y, int c, std::uint8_t v) {
    pixels_[offset(x, y) + static_cast<std::size_t>(c)] = v;
  }

  const std::vector<std::uint8_t>& pixels() const { return pixels_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;  // RGB8, row 0 at the bottom
};

struct PatternSpec {
  double grid_spacing = 0.1524;  // m; six inches
  int line_width = 1;            // px
  // Color bar band as fractions of the image height. The upper half of the
  // band holds full-amplitude bars, the lower half the same hues at half
  // amplitude so gain errors above 1 still leave unsaturated samples.
  double colorbar_bottom = 0.42;
  double colorbar_top = 0.58;
  std::vector<Rgb> colorbar_colors = {
      {255, 255, 255}, {255, 255, 0}, {0, 255, 255}, {0, 255, 0},
      {255, 0, 255},   {255, 0, 0},   {0, 0, 255},   {0, 0, 0}};
  // Stereo bar centers as fractions of the image width.
  std::vector<double> bars_left = {0.10, 0.30, 0.50, 0.70, 0.90};
  std::vector<double> bars_right = {0.20, 0.40, 0.60, 0.80};
  int bar_width = 8;  // px

  void validate() const;
};

/// Pixel columns covered by one eye's stereo bars.
std::vector<int> bar_columns(const PatternSpec& spec, EyeSide eye, int width);
/// Gridline centers in pixel index space (before line_width expansion).
std::vector<int> gridline_columns(const ScreenRect& screen, const PatternSpec& spec);
std::vector<int> gridline_rows(const ScreenRect& screen, const PatternSpec& spec);
/// [begin, end) rows of the color bar band.
std::pair<int, int> colorbar_rows(const PatternSpec& spec, int height);

/// Throws ConfigError when the gridline spacing is under 2 px or the spec is
/// otherwise invalid.
RasterImage generate_pattern(const ScreenRect& screen, const PatternSpec& spec,
                             EyeSide eye);

struct Capture {
  RasterImage left;
  RasterImage right;
};

/// What each eye sees through the glasses for one screen's faults: genlock
/// break, then ghost leak, then color gain, then projector affine
/// (nearest-neighbor resampling).
Capture simulate_capture(const RasterImage& left, const RasterImage& right,
                         const ScreenFault& fault, const ScreenRect& screen);

struct GenlockResult {
  std::optional<int> break_row;  // first row showing the other eye's view
  bool swapped = false;          // whole frame shows the other eye's view
};

class AmbiguousBreakError : public std::runtime_error {
 public:
  AmbiguousBreakError(std::vector<int> rows, const std::string& what)
      : std::runtime_error(what), rows_(std::move(rows)) {}
  const std::vector<int>& candidate_rows() const { return rows_; }

 private:
  std::vector<int> rows_;
};

GenlockResult detect_genlock_break(const RasterImage& seen_left,
                                   const RasterImage& seen_right,
                                   const PatternSpec& spec);

/// Leak fraction: wrong-eye bar intensity over total bar intensity, pooled
/// over both eyes.
double estimate_ghosting(const RasterImage& seen_left,
                         const RasterImage& seen_right, const PatternSpec& spec);

struct ColorComparison {
  std::array<double, 3> ratio{};  // b / a per channel
  std::array<std::size_t, 3> samples{};
  bool flagged = false;           // any ratio outside [0.95, 1.05]
};

/// Channel means of b over a across the color bar band. Saturated samples
/// (255 in either image) are left out.
ColorComparison compare_color(const RasterImage& seen_a, const RasterImage& seen_b,
                              const PatternSpec& spec = {});

struct LinearityResult {
  Affine2 fitted;  // measured = fitted * (expected_x, expected_y, 1), pixels
  double max_residual_px = 0.0;
  std::size_t samples = 0;
};

LinearityResult check_grid_linearity(const RasterImage& seen,
                                     const ScreenRect& screen,
                                     const PatternSpec& spec);

/// Binary P6, maxval 255, header "P6\n<w> <h>\n255\n", rows top-first.
std::string write_ppm(const RasterImage& img);
RasterImage read_ppm(std::string_view bytes);

}  // namespace cavecheck::pattern
