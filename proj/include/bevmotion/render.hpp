#pragma once

#include "bevmotion/core.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace bevmotion {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct RenderOptions {
  double max_magnitude = 10.0;  // meters mapped to full saturation and value
  int grid_lines = 0;           // draw white lines every N cells; 0 = off
};

/// Color-wheel encoding: hue is the displacement angle, saturation and value
/// both scale with magnitude (clamped at max_magnitude). Zero motion is black.
Rgb flow_color(const Vec2& d, double max_magnitude);

struct Image {
  int width = 0, height = 0;
  std::vector<Rgb> pixels;  // row-major
  const Rgb& at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// One image per grid cell: image row = grid row, image column = grid column.
/// Cells outside the validity mask are black.
Image render_step(const MotionStack& stack, int step, const RenderOptions& opt = {});

/// Binary portable pixmap (P6, maxval 255).
void write_ppm(std::ostream& os, const Image& img);

}  // namespace bevmotion
