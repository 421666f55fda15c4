#pragma once

#include "bevmotion/core.hpp"
#include "bevmotion/eval.hpp"
#include "bevmotion/losses.hpp"
#include "bevmotion/optimizer.hpp"
#include "bevmotion/synth.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bevmotion::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Config: flat object, keys named after Config members. Parsing is strict:
// every key must be present and unknown keys are rejected.
json config_to_json(const Config& cfg);
Config config_from_json(const json& j);
Config load_config(const fs::path& path);

json recipe_to_json(const SceneRecipe& r);
SceneRecipe recipe_from_json(const json& j);

json metrics_to_json(const BucketedMetrics& m);
json loss_report_to_json(const LossReport& r);
json divergence_to_json(const DivergenceReport& r);
json opt_state_to_json(const OptState& st, const std::optional<BucketedMetrics>& metrics);

// Point frame: "BEVM", u16 version 1, u64 count, count * (f32 x, f32 y, f32 z),
// all little-endian.
void write_points(std::ostream& os, const PointFrame& frame);
PointFrame read_points(std::istream& is);

// Motion field: "MFLD", u16 version 1, grid echo (x/y/z ranges and the two
// voxel sizes as f64, then u32 H, W, C), u8 direction, u32 T', then per step
// H*W (f32 dx, f32 dy) pairs row-major, then a row-major validity bitmask of
// ceil(H*W / 8) bytes, least significant bit first.
void write_field(std::ostream& os, const MotionStack& stack);
MotionStack read_field(std::istream& is);

void save_field(const fs::path& path, const MotionStack& stack);
MotionStack load_field(const fs::path& path);

/// Writes manifest.json, frame_XXX.bin files and, when present, gt.mfld.
void write_archive(const fs::path& dir, const SceneSequence& seq, const Config& cfg, const SceneRecipe* recipe);

struct Archive {
  SceneSequence sequence;
  GridSpec grid;
  double frame_dt = 0.0;
  json manifest;
};

/// Reads an archive and checks it against `cfg` (grid and frame spacing).
Archive read_archive(const fs::path& dir, const Config& cfg);

void write_json(const fs::path& path, const json& j);

}  // namespace bevmotion::io
