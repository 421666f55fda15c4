#include "bevmotion/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bevmotion {

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

// Number of whole voxels spanning `extent`, or -1 if it is not an integer.
int whole_bins(double extent, double voxel) {
  const double n = extent / voxel;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(r * voxel - extent) > 1e-9 * std::max(1.0, std::abs(extent))) return -1;
  return static_cast<int>(r);
}

int bin_of(double v, const Range& r, double voxel, int n) {
  if (!(v >= r.lo) || !(v < r.hi)) return -1;
  const int b = static_cast<int>(std::floor((v - r.lo) / voxel));
  return std::clamp(b, 0, n - 1);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> fields, const std::string& detail)
    : Error("invalid configuration (" + join(fields) + "): " + detail), fields_(std::move(fields)) {}

GridSpec GridSpec::make(Range x, Range y, Range z, double voxel_xy, double voxel_z) {
  std::vector<std::string> bad;
  std::ostringstream why;
  auto check_axis = [&](const char* name, const Range& r, double voxel, int& out) {
    if (!(r.extent() > 0.0) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
      bad.emplace_back(name);
      why << name << " has no positive extent; ";
      return;
    }
    if (!(voxel > 0.0)) return;
    out = whole_bins(r.extent(), voxel);
    if (out < 0) {
      bad.emplace_back(name);
      why << name << " extent " << r.extent() << " is not a multiple of " << voxel << "; ";
    }
  };
  if (!(voxel_xy > 0.0)) {
    bad.emplace_back("voxel_xy");
    why << "voxel_xy must be > 0; ";
  }
  if (!(voxel_z > 0.0)) {
    bad.emplace_back("voxel_z");
    why << "voxel_z must be > 0; ";
  }
  GridSpec g;
  check_axis("x_range", x, voxel_xy, g.h_);
  check_axis("y_range", y, voxel_xy, g.w_);
  check_axis("z_range", z, voxel_z, g.c_);
  if (!bad.empty()) throw ConfigError(bad, why.str());
  g.x_ = x;
  g.y_ = y;
  g.z_ = z;
  g.voxel_xy_ = voxel_xy;
  g.voxel_z_ = voxel_z;
  return g;
}

int GridSpec::bin_x(double x) const { return bin_of(x, x_, voxel_xy_, h_); }
int GridSpec::bin_y(double y) const { return bin_of(y, y_, voxel_xy_, w_); }
int GridSpec::bin_z(double z) const { return bin_of(z, z_, voxel_z_, c_); }

Vec2 GridSpec::cell_center(CellIndex c) const {
  return {x_.lo + (c.row + 0.5) * voxel_xy_, y_.lo + (c.col + 0.5) * voxel_xy_};
}

Config validate_config(const Config& cfg) {
  std::vector<std::string> bad;
  std::ostringstream why;
  auto require = [&](bool ok, const char* field, const char* rule) {
    if (!ok) {
      bad.emplace_back(field);
      why << field << " " << rule << "; ";
    }
  };
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };

  require(finite_pos(cfg.theta_c), "theta_c", "must be > 0");
  require(finite_pos(cfg.theta_b), "theta_b", "must be > 0");
  require(cfg.d_c >= 1, "d_c", "must be >= 1");
  require(finite_nonneg(cfg.alpha), "alpha", "must be >= 0");
  require(finite_nonneg(cfg.beta), "beta", "must be >= 0");
  require(finite_nonneg(cfg.gamma), "gamma", "must be >= 0");
  require(cfg.T >= 2, "T", "must be >= 2");
  require(cfg.T_prime >= 1, "T_prime", "must be >= 1");
  require(finite_pos(cfg.frame_dt), "frame_dt", "must be > 0");
  require(finite_pos(cfg.sinkhorn_epsilon), "sinkhorn_epsilon", "must be > 0");
  require(cfg.sinkhorn_iters >= 1, "sinkhorn_iters", "must be >= 1");
  require(finite_pos(cfg.sinkhorn_tol), "sinkhorn_tol", "must be > 0");
  require(cfg.outer_rounds >= 0, "outer_rounds", "must be >= 0");
  require(cfg.opt_steps >= 0, "opt_steps", "must be >= 0");
  require(finite_pos(cfg.opt_lr), "opt_lr", "must be > 0");
  require(finite_nonneg(cfg.opt_norm_smoothing), "opt_norm_smoothing", "must be >= 0");
  require(finite_pos(cfg.smooth_l1_delta), "smooth_l1_delta", "must be > 0");
  require(finite_nonneg(cfg.static_speed_threshold), "static_speed_threshold", "must be >= 0");
  require(cfg.ground_iterations >= 1, "ground_iterations", "must be >= 1");
  require(finite_pos(cfg.ground_dist_tol), "ground_dist_tol", "must be > 0");
  require(cfg.knn_k >= 1, "knn_k", "must be >= 1");

  try {
    (void)cfg.grid();
  } catch (const ConfigError& e) {
    for (const auto& f : e.fields()) bad.push_back(f);
    why << "grid: " << e.what() << "; ";
  }
  if (!bad.empty()) throw ConfigError(bad, why.str());
  return cfg;
}

const char* to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

MotionStack::MotionStack(GridSpec grid, Direction dir, int steps, std::vector<std::int32_t> cells)
    : grid_(std::move(grid)), dir_(dir), steps_(steps), cells_(std::move(cells)) {
  if (steps_ < 0) throw Error("MotionStack: negative step count");
  std::sort(cells_.begin(), cells_.end());
  cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
  for (auto f : cells_) {
    if (f < 0 || static_cast<std::size_t>(f) >= grid_.cell_count()) {
      throw Error("MotionStack: cell index outside grid");
    }
  }
  values_.assign(static_cast<std::size_t>(steps_) * cells_.size() * 2, 0.0);
}

std::optional<std::size_t> MotionStack::find(std::int32_t flat) const {
  auto it = std::lower_bound(cells_.begin(), cells_.end(), flat);
  if (it == cells_.end() || *it != flat) return std::nullopt;
  return static_cast<std::size_t>(it - cells_.begin());
}

Vec2 MotionStack::sample(int step, CellIndex c) const {
  if (!grid_.contains(c)) return Vec2::Zero();
  auto k = find(grid_.flat(c));
  return k ? at(step, *k) : Vec2::Zero();
}

std::vector<std::uint8_t> MotionStack::mask() const {
  std::vector<std::uint8_t> m(grid_.cell_count(), 0);
  for (auto f : cells_) m[f] = 1;
  return m;
}

std::vector<double> MotionStack::dense() const {
  const std::size_t hw = grid_.cell_count();
  std::vector<double> out(static_cast<std::size_t>(steps_) * hw * 2, 0.0);
  for (int s = 0; s < steps_; ++s) {
    for (std::size_t k = 0; k < cells_.size(); ++k) {
      const std::size_t o = (s * hw + cells_[k]) * 2;
      const Vec2 v = at(s, k);
      out[o] = v.x();
      out[o + 1] = v.y();
    }
  }
  return out;
}

void check_sequence(const SceneSequence& seq, const Config& cfg) {
  if (seq.frames.empty()) throw Error("scene sequence has no frames");
  if (seq.current >= seq.frames.size()) throw Error("current frame index outside the sequence");
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const double dt = seq.frames[i].timestamp - seq.frames[i - 1].timestamp;
    if (!(dt > 0.0) || std::abs(dt - cfg.frame_dt) > 1e-6) {
      std::ostringstream os;
      os << "frame " << i << " timestamp spacing " << dt << " s differs from frame_dt " << cfg.frame_dt;
      throw Error(os.str());
    }
  }
  for (const auto& f : seq.frames) {
    for (const auto& p : f.points) {
      if (!p.allFinite()) throw Error("scene sequence contains a non-finite point");
    }
  }
  if (seq.ground_truth && seq.ground_truth->grid() != cfg.grid()) {
    throw Error("ground-truth grid does not match the configured grid");
  }
}

}  // namespace bevmotion
