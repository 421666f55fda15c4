#include "bevmotion/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace bevmotion {

Rgb flow_color(const Vec2& d, double max_magnitude) {
  const double mag = d.norm();
  if (mag == 0.0 || !(max_magnitude > 0.0)) return {};
  const double sv = std::min(mag / max_magnitude, 1.0);
  double hue = std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
  if (hue < 0.0) hue += 360.0;

  // HSV -> RGB with s = v = sv.
  const double c = sv * sv;
  const double hp = hue / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = sv - c;
  auto q = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return {q(r + m), q(g + m), q(b + m)};
}

Image render_step(const MotionStack& stack, int step, const RenderOptions& opt) {
  if (step < 0 || step >= stack.steps()) throw Error("render_step: step outside the stack");
  const GridSpec& g = stack.grid();
  Image img;
  img.width = g.W();
  img.height = g.H();
  img.pixels.assign(g.cell_count(), Rgb{});
  if (opt.grid_lines > 0) {
    for (int r = 0; r < g.H(); ++r) {
      for (int c = 0; c < g.W(); ++c) {
        if (r % opt.grid_lines == 0 || c % opt.grid_lines == 0) img.pixels[g.flat({r, c})] = {255, 255, 255};
      }
    }
  }
  for (std::size_t k = 0; k < stack.size(); ++k) {
    img.pixels[stack.cells()[k]] = flow_color(stack.at(step, k), opt.max_magnitude);
  }
  return img;
}

void write_ppm(std::ostream& os, const Image& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (const auto& p : img.pixels) {
    os.put(static_cast<char>(p.r));
    os.put(static_cast<char>(p.g));
    os.put(static_cast<char>(p.b));
  }
  if (!os) throw Error("failed writing image");
}

}  // namespace bevmotion
