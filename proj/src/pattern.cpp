#include "cavecheck/pattern.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace cavecheck::pattern {

namespace {

std::uint8_t round_half_up(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

int nearest_index(double x) { return static_cast<int>(std::floor(x + 0.5)); }

std::vector<int> gridlines(int pixels, double extent_m, double spacing) {
  const double step = pixels * spacing / extent_m;
  if (!(step >= 2.0)) {
    throw ConfigError("pattern: gridline spacing is under 2 px");
  }
  std::vector<int> out;
  for (int k = 0;; ++k) {
    const int c = nearest_index(k * step);
    if (c >= pixels) break;
    out.push_back(c);
  }
  return out;
}

}  // namespace

RasterImage::RasterImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  if (width < 8 || height < 8) {
    throw ConfigError("raster image must be at least 8x8");
  }
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

Rgb RasterImage::at(int x, int y) const {
  const std::size_t o = offset(x, y);
  return Rgb{pixels_[o], pixels_[o + 1], pixels_[o + 2]};
}

void RasterImage::set(int x, int y, Rgb c) {
  const std::size_t o = offset(x, y);
  pixels_[o] = c.r;
  pixels_[o + 1] = c.g;
  pixels_[o + 2] = c.b;
}

void PatternSpec::validate() const {
  if (!(grid_spacing > 0.0)) throw ConfigError("pattern: grid_spacing must be > 0");
  if (line_width < 1) throw ConfigError("pattern: line_width must be >= 1");
  if (bar_width < 1) throw ConfigError("pattern: bar_width must be >= 1");
  if (!(0.0 <= colorbar_bottom && colorbar_bottom < colorbar_top && colorbar_top <= 1.0)) {
    throw ConfigError("pattern: color bar band must satisfy 0 <= bottom < top <= 1");
  }
  if (colorbar_colors.empty()) throw ConfigError("pattern: no color bars");
  for (double a : bars_left) {
    for (double b : bars_right) {
      if (std::abs(a - b) < 1e-12) {
        throw ConfigError("pattern: stereo bar sets must be disjoint");
      }
    }
  }
}

std::vector<int> bar_columns(const PatternSpec& spec, EyeSide eye, int width) {
  const auto& centers = eye == EyeSide::Left ? spec.bars_left : spec.bars_right;
  std::set<int> cols;
  for (double f : centers) {
    const int first = nearest_index(f * width) - spec.bar_width / 2;
    for (int j = 0; j < spec.bar_width; ++j) {
      const int c = first + j;
      if (c >= 0 && c < width) cols.insert(c);
    }
  }
  return {cols.begin(), cols.end()};
}

std::vector<int> gridline_columns(const ScreenRect& screen, const PatternSpec& spec) {
  return gridlines(screen.pixels_w, screen_basis(screen).width, spec.grid_spacing);
}

std::vector<int> gridline_rows(const ScreenRect& screen, const PatternSpec& spec) {
  return gridlines(screen.pixels_h, screen_basis(screen).height, spec.grid_spacing);
}

std::pair<int, int> colorbar_rows(const PatternSpec& spec, int height) {
  return {static_cast<int>(std::floor(spec.colorbar_bottom * height)),
          static_cast<int>(std::floor(spec.colorbar_top * height))};
}

RasterImage generate_pattern(const ScreenRect& screen, const PatternSpec& spec,
                             EyeSide eye) {
  spec.validate();
  const int W = screen.pixels_w;
  const int H = screen.pixels_h;
  RasterImage img(W, H);
  const Rgb white{255, 255, 255};
  const auto [band_lo, band_hi] = colorbar_rows(spec, H);
  const auto in_band = [&](int y) { return y >= band_lo && y < band_hi; };
  const int lead = (spec.line_width - 1) / 2;

  // Color bars: full amplitude on top, half amplitude below.
  const int band_mid = (band_lo + band_hi) / 2;
  const int nbars = static_cast<int>(spec.colorbar_colors.size());
  for (int y = band_lo; y < band_hi; ++y) {
    const bool half = y < band_mid;
    for (int x = 0; x < W; ++x) {
      Rgb c = spec.colorbar_colors[static_cast<std::size_t>(
          std::min(nbars - 1, x * nbars / W))];
      if (half) c = Rgb{static_cast<std::uint8_t>(c.r / 2 + (c.r ? 1 : 0)),
                        static_cast<std::uint8_t>(c.g / 2 + (c.g ? 1 : 0)),
                        static_cast<std::uint8_t>(c.b / 2 + (c.b ? 1 : 0))};
      img.set(x, y, c);
    }
  }

  for (int c : gridline_columns(screen, spec)) {
    for (int j = 0; j < spec.line_width; ++j) {
      const int x = c - lead + j;
      if (x < 0 || x >= W) continue;
      for (int y = 0; y < H; ++y) {
        if (!in_band(y)) img.set(x, y, white);
      }
    }
  }
  for (int r : gridline_rows(screen, spec)) {
    for (int j = 0; j < spec.line_width; ++j) {
      const int y = r - lead + j;
      if (y < 0 || y >= H || in_band(y)) continue;
      for (int x = 0; x < W; ++x) img.set(x, y, white);
    }
  }

  // Stereo bars span the full height; the other eye's bar columns stay dark.
  const EyeSide other = eye == EyeSide::Left ? EyeSide::Right : EyeSide::Left;
  for (int x : bar_columns(spec, other, W)) {
    for (int y = 0; y < H; ++y) img.set(x, y, Rgb{});
  }
  for (int x : bar_columns(spec, eye, W)) {
    for (int y = 0; y < H; ++y) img.set(x, y, white);
  }
  return img;
}

Capture simulate_capture(const RasterImage& left, const RasterImage& right,
                         const ScreenFault& fault, const ScreenRect& screen) {
  if (left.width() != right.width() || left.height() != right.height()) {
    throw ConfigError("simulate_capture: image sizes differ");
  }
  const int W = left.width();
  const int H = left.height();
  Capture out{left, right};

  if (fault.genlock_break_row) {
    const int k = std::clamp(*fault.genlock_break_row, 0, H);
    for (int y = k; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        out.left.set(x, y, right.at(x, y));
        out.right.set(x, y, left.at(x, y));
      }
    }
  }

  if (fault.ghost_leak > 0.0) {
    const double g = fault.ghost_leak;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        for (int c = 0; c < 3; ++c) {
          const int l = out.left.channel(x, y, c);
          const int r = out.right.channel(x, y, c);
          const std::uint8_t seen_l = round_half_up((1.0 - g) * l + g * r);
          // Leaked light leaves one eye and reaches the other.
          out.left.set_channel(x, y, c, seen_l);
          out.right.set_channel(x, y, c, static_cast<std::uint8_t>(l + r - seen_l));
        }
      }
    }
  }

  if (fault.color_gain != std::array<double, 3>{1.0, 1.0, 1.0}) {
    for (RasterImage* img : {&out.left, &out.right}) {
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < 3; ++c)
            img->set_channel(x, y, c,
                             round_half_up(img->channel(x, y, c) * fault.color_gain[c]));
    }
  }

  if (fault.projector_affine != identity_affine()) {
    const ScreenBasis b = screen_basis(screen);
    Eigen::Matrix3d forward = Eigen::Matrix3d::Identity();
    forward.topRows<2>() = fault.projector_affine;
    const Eigen::Matrix3d inverse = forward.inverse();
    const double mx = b.width / W;   // m per px
    const double my = b.height / H;
    for (RasterImage* img : {&out.left, &out.right}) {
      const RasterImage src = *img;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const Eigen::Vector3d s =
              inverse * Eigen::Vector3d((x + 0.5) * mx, (y + 0.5) * my, 1.0);
          const int sx = static_cast<int>(std::floor(s.x() / mx));
          const int sy = static_cast<int>(std::floor(s.y() / my));
          img->set(x, y, (sx >= 0 && sx < W && sy >= 0 && sy < H) ? src.at(sx, sy) : Rgb{});
        }
      }
    }
  }
  return out;
}

namespace {

double mean_over_columns(const RasterImage& img, int y, const std::vector<int>& cols) {
  double sum = 0.0;
  for (int x : cols) {
    const Rgb p = img.at(x, y);
    sum += p.r + p.g + p.b;
  }
  return cols.empty() ? 0.0 : sum / (3.0 * cols.size());
}

}  // namespace

GenlockResult detect_genlock_break(const RasterImage& seen_left,
                                   const RasterImage& seen_right,
                                   const PatternSpec& spec) {
  const int W = seen_left.width();
  const int H = seen_left.height();
  const auto cols_a = bar_columns(spec, EyeSide::Left, W);
  const auto cols_b = bar_columns(spec, EyeSide::Right, W);

  // +1: row shows the correct eye's bars, -1: the other eye's, 0: undecided.
  std::vector<int> state(static_cast<std::size_t>(H), 0);
  for (int y = 0; y < H; ++y) {
    const double score = (mean_over_columns(seen_left, y, cols_a) -
                          mean_over_columns(seen_left, y, cols_b)) +
                         (mean_over_columns(seen_right, y, cols_b) -
                          mean_over_columns(seen_right, y, cols_a));
    state[static_cast<std::size_t>(y)] = score > 0.0 ? 1 : (score < 0.0 ? -1 : 0);
  }

  std::vector<int> transitions;
  int previous = 0;
  bool any_correct = false;
  bool any_swapped = false;
  for (int y = 0; y < H; ++y) {
    const int s = state[static_cast<std::size_t>(y)];
    if (s == 0) continue;
    any_correct |= s > 0;
    any_swapped |= s < 0;
    if (previous != 0 && s != previous) transitions.push_back(y);
    previous = s;
  }
  if (transitions.size() > 1) {
    std::string rows;
    for (int r : transitions) rows += (rows.empty() ? "" : ", ") + std::to_string(r);
    throw AmbiguousBreakError(transitions,
                              "detect_genlock_break: multiple transitions at rows " + rows);
  }
  GenlockResult result;
  if (transitions.size() == 1) {
    result.break_row = transitions.front();
  } else if (any_swapped && !any_correct) {
    result.swapped = true;
  }
  return result;
}

double estimate_ghosting(const RasterImage& seen_left,
                         const RasterImage& seen_right, const PatternSpec& spec) {
  const int W = seen_left.width();
  const auto cols_a = bar_columns(spec, EyeSide::Left, W);
  const auto cols_b = bar_columns(spec, EyeSide::Right, W);
  double wrong = 0.0;
  double correct = 0.0;
  for (int y = 0; y < seen_left.height(); ++y) {
    wrong += mean_over_columns(seen_left, y, cols_b) + mean_over_columns(seen_right, y, cols_a);
    correct += mean_over_columns(seen_left, y, cols_a) + mean_over_columns(seen_right, y, cols_b);
  }
  const double total = wrong + correct;
  return total > 0.0 ? wrong / total : 0.0;
}

ColorComparison compare_color(const RasterImage& seen_a, const RasterImage& seen_b,
                              const PatternSpec& spec) {
  if (seen_a.width() != seen_b.width() || seen_a.height() != seen_b.height()) {
    throw ConfigError("compare_color: image sizes differ");
  }
  const int W = seen_a.width();
  std::vector<bool> skip(static_cast<std::size_t>(W), false);
  for (EyeSide e : {EyeSide::Left, EyeSide::Right})
    for (int x : bar_columns(spec, e, W)) skip[static_cast<std::size_t>(x)] = true;

  const auto [lo, hi] = colorbar_rows(spec, seen_a.height());
  std::array<double, 3> sum_a{};
  std::array<double, 3> sum_b{};
  ColorComparison out;
  for (int y = lo; y < hi; ++y) {
    for (int x = 0; x < W; ++x) {
      if (skip[static_cast<std::size_t>(x)]) continue;
      for (int c = 0; c < 3; ++c) {
        const int a = seen_a.channel(x, y, c);
        const int b = seen_b.channel(x, y, c);
        if (a == 0 || a == 255 || b == 255) continue;
        sum_a[c] += a;
        sum_b[c] += b;
        ++out.samples[c];
      }
    }
  }
  for (int c = 0; c < 3; ++c) {
    out.ratio[c] = out.samples[c] ? sum_b[c] / sum_a[c] : std::nan("");
    if (!(out.ratio[c] >= 0.95 && out.ratio[c] <= 1.05)) out.flagged = true;
  }
  return out;
}

namespace {

struct Run {
  int begin;
  int end;  // exclusive
};

bool bright(const RasterImage& img, int x, int y) {
  const Rgb p = img.at(x, y);
  return p.r + p.g + p.b > 3 * 127;
}

// Solve measured = [a b c] * (x, y, 1) in least squares.
Eigen::RowVector3d fit_row(const std::vector<Eigen::Vector3d>& rows_xy1,
                           const std::vector<double>& measured) {
  Eigen::MatrixXd A(rows_xy1.size(), 3);
  Eigen::VectorXd m(measured.size());
  for (std::size_t i = 0; i < rows_xy1.size(); ++i) {
    A.row(static_cast<Eigen::Index>(i)) = rows_xy1[i].transpose();
    m(static_cast<Eigen::Index>(i)) = measured[i];
  }
  return A.colPivHouseholderQr().solve(m).transpose();
}

}  // namespace

LinearityResult check_grid_linearity(const RasterImage& seen,
                                     const ScreenRect& screen,
                                     const PatternSpec& spec) {
  const int W = seen.width();
  const int H = seen.height();
  const auto cols = gridline_columns(screen, spec);
  const auto rows = gridline_rows(screen, spec);
  const double step_x = W * spec.grid_spacing / screen_basis(screen).width;
  const double step_y = H * spec.grid_spacing / screen_basis(screen).height;
  const auto [band_lo, band_hi] = colorbar_rows(spec, H);
  const int max_run = spec.line_width + 2;
  const int lead = (spec.line_width - 1) / 2;

  // Centers in pixel-edge coordinates, matching 0.5 * (begin + end) of a run.
  auto expected_center = [&](int c) { return c - lead + 0.5 * spec.line_width; };

  // Vertical lines: scan rows away from the color band.
  std::vector<Eigen::Vector3d> vx;
  std::vector<double> vm;
  for (int y = 0; y < H; ++y) {
    if (y >= band_lo - 2 && y < band_hi + 2) continue;
    int x = 0;
    while (x < W) {
      if (!bright(seen, x, y)) { ++x; continue; }
      Run run{x, x};
      while (run.end < W && bright(seen, run.end, y)) ++run.end;
      x = run.end;
      if (run.end - run.begin > max_run) continue;
      const double measured = 0.5 * (run.begin + run.end);
      const auto nearest = std::min_element(cols.begin(), cols.end(), [&](int a, int b) {
        return std::abs(expected_center(a) - measured) < std::abs(expected_center(b) - measured);
      });
      const double expect = expected_center(*nearest);
      if (std::abs(expect - measured) > 0.4 * step_x) continue;
      vx.emplace_back(expect, y + 0.5, 1.0);
      vm.push_back(measured);
    }
  }

  std::vector<Eigen::Vector3d> hx;
  std::vector<double> hm;
  for (int x = 0; x < W; ++x) {
    int y = 0;
    while (y < H) {
      if (!bright(seen, x, y)) { ++y; continue; }
      Run run{y, y};
      while (run.end < H && bright(seen, x, run.end)) ++run.end;
      y = run.end;
      if (run.end - run.begin > max_run) continue;
      const double measured = 0.5 * (run.begin + run.end);
      const auto nearest = std::min_element(rows.begin(), rows.end(), [&](int a, int b) {
        return std::abs(expected_center(a) - measured) < std::abs(expected_center(b) - measured);
      });
      const double expect = expected_center(*nearest);
      if (std::abs(expect - measured) > 0.4 * step_y) continue;
      hx.emplace_back(x + 0.5, expect, 1.0);
      hm.push_back(measured);
    }
  }

  if (vx.size() < 3 || hx.size() < 3) {
    throw ConfigError("check_grid_linearity: too few gridline samples");
  }
  LinearityResult out;
  out.fitted.row(0) = fit_row(vx, vm);
  out.fitted.row(1) = fit_row(hx, hm);
  for (std::size_t i = 0; i < vx.size(); ++i) {
    out.max_residual_px = std::max(out.max_residual_px,
                                   std::abs(out.fitted.row(0).dot(vx[i]) - vm[i]));
  }
  for (std::size_t i = 0; i < hx.size(); ++i) {
    out.max_residual_px = std::max(out.max_residual_px,
                                   std::abs(out.fitted.row(1).dot(hx[i]) - hm[i]));
  }
  out.samples = vx.size() + hx.size();
  return out;
}

std::string write_ppm(const RasterImage& img) {
  std::string out = "P6\n" + std::to_string(img.width()) + " " +
                    std::to_string(img.height()) + "\n255\n";
  const std::size_t row_bytes = static_cast<std::size_t>(img.width()) * 3;
  out.reserve(out.size() + row_bytes * img.height());
  const auto& px = img.pixels();
  for (int y = img.height() - 1; y >= 0; --y) {
    const auto* row = px.data() + row_bytes * static_cast<std::size_t>(y);
    out.append(reinterpret_cast<const char*>(row), row_bytes);
  }
  return out;
}

RasterImage read_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& msg) -> void {
    throw ConfigError("read_ppm: " + msg);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) fail("header value too large");
      ++pos;
    }
    if (pos == start) fail("expected a number in header");
    return v;
  };
  if (bytes.substr(0, 2) != "P6") fail("not a binary P6 file");
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (maxval != 255) fail("only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail("missing whitespace after maxval");
  }
  ++pos;
  const std::size_t row_bytes = static_cast<std::size_t>(w) * 3;
  if (bytes.size() - pos != row_bytes * static_cast<std::size_t>(h)) {
    fail("pixel data size does not match header");
  }
  RasterImage img(static_cast<int>(w), static_cast<int>(h));
  for (long y = 0; y < h; ++y) {
    const std::size_t src = pos + row_bytes * static_cast<std::size_t>(h - 1 - y);
    for (long x = 0; x < w; ++x) {
      const std::size_t o = src + static_cast<std::size_t>(x) * 3;
      img.set(static_cast<int>(x), static_cast<int>(y),
              Rgb{static_cast<std::uint8_t>(bytes[o]), static_cast<std::uint8_t>(bytes[o + 1]),
                  static_cast<std::uint8_t>(bytes[o + 2])});
    }
  }
  return img;
}

}  // namespace cavecheck::pattern
