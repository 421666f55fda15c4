#include "bevmotion/synth.hpp"

#include "bevmotion/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace bevmotion {

namespace {

struct SurfacePoint {
  Vec2 local;  // object frame, meters from the footprint center
  double z = 0.0;
  int face = 0;
};

struct Face {
  Vec2 center;  // object frame
  Vec2 normal;  // outward, object frame
};

std::array<Face, 4> faces_of(const ObjectSpec& o) {
  const double hl = 0.5 * o.length, hw = 0.5 * o.width;
  return {{{{hl, 0}, {1, 0}}, {{-hl, 0}, {-1, 0}}, {{0, hw}, {0, 1}}, {{0, -hw}, {0, -1}}}};
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Fixed sample set on the side faces; the same samples are reused in every
// frame so that noise-free points translate exactly with the object.
std::vector<SurfacePoint> sample_surface(const ObjectSpec& o, std::mt19937_64& rng) {
  std::vector<SurfacePoint> pts;
  const double hl = 0.5 * o.length, hw = 0.5 * o.width;
  const double h = o.height - o.base_z;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto face = [&](int id, Vec2 a, Vec2 b) {
    const double area = (b - a).norm() * h;
    const auto n = static_cast<std::size_t>(std::llround(o.density * area));
    for (std::size_t i = 0; i < n; ++i) {
      const double s = unit(rng);
      pts.push_back({a + s * (b - a), o.base_z + unit(rng) * h, id});
    }
  };
  face(0, {hl, -hw}, {hl, hw});
  face(1, {-hl, -hw}, {-hl, hw});
  face(2, {-hl, hw}, {hl, hw});
  face(3, {-hl, -hw}, {hl, -hw});
  return pts;
}

Vec2 rotate(const Vec2& v, double heading) {
  const double c = std::cos(heading), s = std::sin(heading);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

bool occluded(const Vec3& p, const std::vector<OcclusionSector>& sectors, int frame) {
  if (sectors.empty()) return false;
  double ang = std::atan2(p.y(), p.x()) * 180.0 / std::numbers::pi;
  for (const auto& s : sectors) {
    double rel = std::fmod(ang - (s.start + s.drift * frame), 360.0);
    if (rel < 0) rel += 360.0;
    if (rel < s.width) return true;
  }
  return false;
}

}  // namespace

void validate_recipe(const SceneRecipe& r) {
  auto fail = [&](const std::string& msg) { throw Error("recipe '" + r.name + "': " + msg); };
  for (std::size_t i = 0; i < r.objects.size(); ++i) {
    const auto& o = r.objects[i];
    const std::string tag = "object " + std::to_string(i) + " ";
    if (!(o.density > 0.0)) fail(tag + "density must be > 0");
    if (!(o.length > 0.0) || !(o.width > 0.0)) fail(tag + "footprint must have positive size");
    if (!(o.height > o.base_z)) fail(tag + "height must exceed base_z");
    if (!o.velocity.allFinite() || !o.position.allFinite() || !std::isfinite(o.heading)) {
      fail(tag + "pose and velocity must be finite");
    }
  }
  if (!(r.ground.density >= 0.0)) fail("ground density must be >= 0");
  if (r.ground.density > 0.0 && (!(r.ground.x.extent() > 0) || !(r.ground.y.extent() > 0))) {
    fail("ground extent must be positive");
  }
  if (!(r.ground.z_noise >= 0.0)) fail("ground z noise must be >= 0");
  if (!(r.sensor_noise >= 0.0)) fail("sensor noise must be >= 0");
  if (!(r.dropout >= 0.0 && r.dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (r.clutter < 0) fail("clutter count must be >= 0");
  if (r.objects.empty() && r.ground.density == 0.0) fail("degenerate scene: no objects and no ground");
}

std::size_t current_index(const Config& cfg) { return static_cast<std::size_t>(std::max(cfg.T - 1, cfg.T_prime)); }

std::size_t sequence_length(const Config& cfg) { return current_index(cfg) + cfg.T_prime + 1; }

SceneSequence generate(const SceneRecipe& recipe, const Config& cfg) {
  validate_recipe(recipe);
  const GridSpec grid = cfg.grid();
  SceneSequence seq;
  seq.current = current_index(cfg);
  const std::size_t n_frames = sequence_length(cfg);

  std::vector<std::vector<SurfacePoint>> surfaces;
  for (std::size_t i = 0; i < recipe.objects.size(); ++i) {
    std::mt19937_64 rng(mix(recipe.seed, 1000 + i));
    surfaces.push_back(sample_surface(recipe.objects[i], rng));
  }

  const auto& gs = recipe.ground;
  const auto ground_count = static_cast<std::size_t>(std::llround(gs.density * gs.x.extent() * gs.y.extent()));

  for (std::size_t k = 0; k < n_frames; ++k) {
    std::mt19937_64 rng(mix(recipe.seed, k));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double tau = (static_cast<double>(k) - static_cast<double>(seq.current)) * cfg.frame_dt;
    const int frame_no = static_cast<int>(k);

    PointFrame frame;
    frame.timestamp = static_cast<double>(k) * cfg.frame_dt;
    std::vector<int> ids;
    auto emit = [&](Vec3 p, int id) {
      // Random draws happen before any rejection so each point consumes the
      // same amount of randomness regardless of the outcome.
      const bool drop = unit(rng) < recipe.dropout;
      const Vec3 n(noise(rng), noise(rng), noise(rng));
      if (drop) return;
      if (recipe.sensor_noise > 0.0) p += recipe.sensor_noise * n;
      if (occluded(p, recipe.occlusions, frame_no)) return;
      frame.points.push_back(p);
      ids.push_back(id);
    };

    for (std::size_t g = 0; g < ground_count; ++g) {
      const double x = gs.x.lo + unit(rng) * gs.x.extent();
      const double y = gs.y.lo + unit(rng) * gs.y.extent();
      emit({x, y, gs.z_noise * noise(rng)}, -1);
    }
    for (std::size_t i = 0; i < recipe.objects.size(); ++i) {
      const auto& o = recipe.objects[i];
      const Vec2 center = o.position + tau * o.velocity;
      const auto faces = faces_of(o);
      std::array<bool, 4> visible{true, true, true, true};
      // A sensor inside the footprint sees every face from within.
      const Vec2 sensor_local = rotate(-center, -o.heading);
      const bool inside = std::abs(sensor_local.x()) < 0.5 * o.length && std::abs(sensor_local.y()) < 0.5 * o.width;
      if (recipe.self_occlusion && !inside) {
        for (int f = 0; f < 4; ++f) {
          const Vec2 fc = center + rotate(faces[f].center, o.heading);
          visible[f] = rotate(faces[f].normal, o.heading).dot(-fc) > 0.0;
        }
      }
      for (const auto& sp : surfaces[i]) {
        const Vec2 xy = center + rotate(sp.local, o.heading);
        if (!visible[sp.face]) {
          // Keep the random stream aligned with the visible case.
          (void)unit(rng);
          (void)noise(rng), (void)noise(rng), (void)noise(rng);
          continue;
        }
        emit({xy.x(), xy.y(), sp.z}, static_cast<int>(i) + 1);
      }
    }
    for (int c = 0; c < recipe.clutter; ++c) {
      const double x = gs.x.lo + unit(rng) * gs.x.extent();
      const double y = gs.y.lo + unit(rng) * gs.y.extent();
      const double z = 0.5 + 1.5 * unit(rng);
      emit({x, y, z}, 0);
    }
    seq.frames.push_back(std::move(frame));
    seq.instance_ids.push_back(std::move(ids));
  }

  // Ground truth on the current frame's occupied cells.
  const PointFrame& cur = seq.frames[seq.current];
  const auto& cur_ids = seq.instance_ids[seq.current];
  std::map<std::int32_t, int> owner;  // flat cell -> lowest object id
  std::vector<std::int32_t> cells;
  for (std::size_t p = 0; p < cur.points.size(); ++p) {
    const auto& pt = cur.points[p];
    const int r = grid.bin_x(pt.x()), c = grid.bin_y(pt.y()), z = grid.bin_z(pt.z());
    if (r < 0 || c < 0 || z < 0) continue;
    const std::int32_t f = grid.flat({r, c});
    cells.push_back(f);
    if (cur_ids[p] > 0) {
      auto it = owner.find(f);
      if (it == owner.end() || cur_ids[p] < it->second) owner[f] = cur_ids[p];
    }
  }
  MotionStack gt(grid, Direction::forward, cfg.T_prime, std::move(cells));
  for (const auto& [flat, id] : owner) {
    const auto k = *gt.find(flat);
    const Vec2 v = recipe.objects[id - 1].velocity;
    for (int s = 0; s < cfg.T_prime; ++s) gt.set(s, k, (s + 1) * cfg.frame_dt * v);
  }
  seq.ground_truth = std::move(gt);
  return seq;
}

namespace {

ObjectSpec car(Vec2 pos, double heading, double speed, double density) {
  ObjectSpec o;
  o.position = pos;
  o.heading = heading;
  o.velocity = speed * Vec2(std::cos(heading), std::sin(heading));
  o.density = density;
  return o;
}

// Places `speeds.size()` cars in a disc, rejecting centers closer than
// `min_gap` to one another or to the sensor.
std::vector<ObjectSpec> scatter(std::mt19937_64& rng, const std::vector<double>& speeds, double radius,
                                double min_gap, double density) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ObjectSpec> objs;
  for (double sp : speeds) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const Vec2 pos((2 * unit(rng) - 1) * radius, (2 * unit(rng) - 1) * radius);
      const double heading = 2 * std::numbers::pi * unit(rng);
      bool ok = pos.norm() > 5.0;
      for (const auto& o : objs) ok = ok && (o.position - pos).norm() >= min_gap;
      if (ok || attempt == 999) {
        objs.push_back(car(pos, heading, sp, density));
        break;
      }
    }
  }
  return objs;
}

}  // namespace

std::vector<SceneRecipe> recipe_suite(const std::string& name, std::uint64_t base_seed) {
  std::vector<SceneRecipe> out;
  if (name == "smoke") {
    SceneRecipe stat;
    stat.name = "smoke_static";
    stat.objects = {car({6.0, 4.0}, 0.3, 0.0, 20.0), car({-7.0, -3.0}, 1.2, 0.0, 20.0)};
    stat.ground = {{-12, 12}, {-12, 12}, 1.5, 0.03};
    stat.sensor_noise = 0.02;
    stat.dropout = 0.1;
    stat.seed = mix(base_seed, 1);

    SceneRecipe single;
    single.name = "smoke_single";
    single.objects = {car({6.0, 3.0}, 0.0, 2.0, 20.0)};
    single.ground = {{-12, 12}, {-12, 12}, 1.5, 0.03};
    single.sensor_noise = 0.01;
    single.dropout = 0.05;
    single.seed = mix(base_seed, 2);

    SceneRecipe mixed;
    mixed.name = "smoke_mixed";
    mixed.objects = {car({-6.0, 6.0}, 0.0, 0.0, 20.0), car({5.0, -6.0}, 0.0, 4.0, 20.0),
                     car({-4.0, -8.0}, std::numbers::pi / 2, 8.0, 20.0)};
    mixed.ground = {{-12, 12}, {-12, 12}, 1.5, 0.03};
    mixed.sensor_noise = 0.02;
    mixed.dropout = 0.1;
    mixed.clutter = 10;
    mixed.occlusions = {{100.0, 15.0, 3.0}};
    mixed.seed = mix(base_seed, 3);
    out = {stat, single, mixed};
  } else if (name == "ablation") {
    // One long-range mover per scene: with theta_c = 3 the matching cost is
    // flat beyond ~2.5 m, so several fast objects would share one pool of
    // unmatched mass. Slow objects stay within the cost's reach at 1 s.
    const std::vector<double> slow = {1.0, 1.5, 2.0, 2.5};
    const std::vector<double> fast = {6.0, 7.0, 8.0};
    std::mt19937_64 rng(mix(base_seed, 20));
    for (int s = 0; s < 20; ++s) {
      SceneRecipe r;
      r.name = "ablation_" + std::to_string(s);
      std::vector<double> sp = {0.0, slow[s % 4], fast[s % 3]};
      sp.push_back(slow[std::uniform_int_distribution<int>(0, 3)(rng)]);
      sp.push_back(0.0);
      r.objects = scatter(rng, sp, 16.0, 8.0, 20.0);
      r.ground = {{-20, 20}, {-20, 20}, 1.0, 0.03};
      r.sensor_noise = 0.03;
      r.dropout = 0.1;
      r.occlusions = {{std::uniform_real_distribution<double>(0, 360)(rng), 6.0, 0.5}};
      r.seed = mix(base_seed, 100 + s);
      out.push_back(std::move(r));
    }
  } else if (name == "divergence") {
    const std::vector<double> speeds = {0, 2, 4, 6, 8, 10};
    std::mt19937_64 rng(mix(base_seed, 30));
    for (int s = 0; s < 10; ++s) {
      SceneRecipe r;
      r.name = "divergence_" + std::to_string(s);
      std::vector<double> sp;
      for (int i = 0; i < 5; ++i) sp.push_back(speeds[std::uniform_int_distribution<int>(0, 5)(rng)]);
      r.objects = scatter(rng, sp, 16.0, 7.0, 20.0);
      r.ground = {{-20, 20}, {-20, 20}, 1.0, 0.03};
      r.sensor_noise = 0.03;
      r.dropout = 0.3;
      r.clutter = 40;
      std::uniform_real_distribution<double> ang(0, 360);
      r.occlusions = {{ang(rng), 40.0, 9.0}, {ang(rng), 30.0, -7.0}};
      r.seed = mix(base_seed, 200 + s);
      out.push_back(std::move(r));
    }
  } else {
    throw Error("unknown recipe suite '" + name + "'; expected smoke, ablation or divergence");
  }
  return out;
}

}  // namespace bevmotion
