#pragma once

#include "bevmotion/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bevmotion {

/// Box-shaped object translating at constant velocity. Points lie on the
/// vertical side faces between base_z and height.
struct ObjectSpec {
  double length = 4.5;  // along heading
  double width = 1.8;
  double height = 1.6;
  double base_z = 0.3;
  Vec2 position = Vec2::Zero();  // footprint center at the current frame
  double heading = 0.0;          // radians
  Vec2 velocity = Vec2::Zero();  // m/s
  double density = 20.0;         // points per m^2 of side surface
};

struct GroundSpec {
  Range x{-20.0, 20.0};
  Range y{-20.0, 20.0};
  double density = 1.0;  // points per m^2
  double z_noise = 0.03;
};

/// Angular sector (degrees, around the sensor at the origin) whose points are
/// deleted. The sector rotates by `drift` degrees per frame.
struct OcclusionSector {
  double start = 0.0;
  double width = 0.0;
  double drift = 0.0;
};

struct SceneRecipe {
  std::string name;
  std::vector<ObjectSpec> objects;
  GroundSpec ground;
  double sensor_noise = 0.0;  // per-coordinate std, meters
  double dropout = 0.0;       // per point per frame, [0, 1)
  std::vector<OcclusionSector> occlusions;
  int clutter = 0;  // static stray points resampled every frame
  // Cull faces pointing away from the sensor at the origin.
  bool self_occlusion = true;
  std::uint64_t seed = 0;
};

/// Throws Error describing the first invalid field.
void validate_recipe(const SceneRecipe& recipe);

/// Number of frames generate() produces, and the index of the current frame.
std::size_t sequence_length(const Config& cfg);
std::size_t current_index(const Config& cfg);

/// Frames current - P .. current + T' with P = max(T - 1, T'), timestamps
/// k * frame_dt. Ground truth covers every cell occupied in the current frame:
/// object cells carry t * frame_dt * velocity, everything else zero.
SceneSequence generate(const SceneRecipe& recipe, const Config& cfg);

/// Deterministic fixture suites: "smoke", "ablation", "divergence".
std::vector<SceneRecipe> recipe_suite(const std::string& name, std::uint64_t base_seed = 0);

}  // namespace bevmotion
