#include "bevmotion/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace bevmotion::io {

namespace {

constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    os.put(static_cast<char>((static_cast<std::make_unsigned_t<T>>(v) >> (8 * i)) & 0xFF));
  }
}
void put_f32(std::ostream& os, double v) { put(os, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
void put_f64(std::ostream& os, double v) { put(os, std::bit_cast<std::uint64_t>(v)); }

template <typename T>
T get(std::istream& is) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw Error("unexpected end of file");
    v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return static_cast<T>(v);
}
double get_f32(std::istream& is) { return std::bit_cast<float>(get<std::uint32_t>(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get<std::uint64_t>(is)); }

void expect_magic(std::istream& is, const char* magic) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
    throw Error(std::string("bad magic: expected ") + magic);
  }
  const auto version = get<std::uint16_t>(is);
  if (version != kVersion) throw Error("unsupported " + std::string(magic) + " version " + std::to_string(version));
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError({key}, std::string(key) + " must be a [lo, hi] pair of numbers");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json stats_json(const BucketStats& s) {
  json j;
  j["mean"] = s.mean ? json(*s.mean) : json(nullptr);
  j["median"] = s.median ? json(*s.median) : json(nullptr);
  j["count"] = s.count;
  return j;
}

json grid_json(const GridSpec& g) {
  json j;
  j["x_range"] = range_json(g.x_range());
  j["y_range"] = range_json(g.y_range());
  j["z_range"] = range_json(g.z_range());
  j["voxel_xy"] = g.voxel_xy();
  j["voxel_z"] = g.voxel_z();
  j["H"] = g.H();
  j["W"] = g.W();
  j["C"] = g.C();
  return j;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return is;
}

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

// --- config ----------------------------------------------------------------

json config_to_json(const Config& c) {
  json j;
  j["theta_c"] = c.theta_c;
  j["theta_b"] = c.theta_b;
  j["d_c"] = c.d_c;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["gamma"] = c.gamma;
  j["T"] = c.T;
  j["T_prime"] = c.T_prime;
  j["frame_dt"] = c.frame_dt;
  j["sinkhorn_epsilon"] = c.sinkhorn_epsilon;
  j["sinkhorn_iters"] = c.sinkhorn_iters;
  j["sinkhorn_tol"] = c.sinkhorn_tol;
  j["outer_rounds"] = c.outer_rounds;
  j["opt_steps"] = c.opt_steps;
  j["opt_lr"] = c.opt_lr;
  j["opt_norm_smoothing"] = c.opt_norm_smoothing;
  j["smooth_l1_delta"] = c.smooth_l1_delta;
  j["static_speed_threshold"] = c.static_speed_threshold;
  j["rng_seed"] = c.rng_seed;
  j["x_range"] = range_json(c.x_range);
  j["y_range"] = range_json(c.y_range);
  j["z_range"] = range_json(c.z_range);
  j["voxel_xy"] = c.voxel_xy;
  j["voxel_z"] = c.voxel_z;
  j["ground_iterations"] = c.ground_iterations;
  j["ground_dist_tol"] = c.ground_dist_tol;
  j["knn_k"] = c.knn_k;
  j["backward_exp_weighting"] = c.backward_exp_weighting;
  j["label_mode"] = c.label_mode == LabelMode::barycentric ? "barycentric" : "raw_product";
  return j;
}

Config config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError({"<root>"}, "config must be a JSON object");
  const json ref = config_to_json(Config{});
  std::vector<std::string> unknown, missing;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ref.contains(it.key())) unknown.push_back(it.key());
  }
  for (auto it = ref.begin(); it != ref.end(); ++it) {
    if (!j.contains(it.key())) missing.push_back(it.key());
  }
  if (!unknown.empty()) throw ConfigError(unknown, "unknown config key(s)");
  if (!missing.empty()) throw ConfigError(missing, "missing config key(s)");

  Config c;
  auto num = [&](const char* key, auto& out) {
    const json& v = j.at(key);
    using T = std::decay_t<decltype(out)>;
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError({key}, std::string(key) + " must be a number");
    } else {
      if (!v.is_number_integer()) throw ConfigError({key}, std::string(key) + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
          throw ConfigError({key}, std::string(key) + " must be non-negative");
        }
      }
    }
    out = v.get<T>();
  };
  num("theta_c", c.theta_c);
  num("theta_b", c.theta_b);
  num("d_c", c.d_c);
  num("alpha", c.alpha);
  num("beta", c.beta);
  num("gamma", c.gamma);
  num("T", c.T);
  num("T_prime", c.T_prime);
  num("frame_dt", c.frame_dt);
  num("sinkhorn_epsilon", c.sinkhorn_epsilon);
  num("sinkhorn_iters", c.sinkhorn_iters);
  num("sinkhorn_tol", c.sinkhorn_tol);
  num("outer_rounds", c.outer_rounds);
  num("opt_steps", c.opt_steps);
  num("opt_lr", c.opt_lr);
  num("opt_norm_smoothing", c.opt_norm_smoothing);
  num("smooth_l1_delta", c.smooth_l1_delta);
  num("static_speed_threshold", c.static_speed_threshold);
  num("rng_seed", c.rng_seed);
  c.x_range = range_from(j.at("x_range"), "x_range");
  c.y_range = range_from(j.at("y_range"), "y_range");
  c.z_range = range_from(j.at("z_range"), "z_range");
  num("voxel_xy", c.voxel_xy);
  num("voxel_z", c.voxel_z);
  num("ground_iterations", c.ground_iterations);
  num("ground_dist_tol", c.ground_dist_tol);
  num("knn_k", c.knn_k);
  if (!j.at("backward_exp_weighting").is_boolean()) {
    throw ConfigError({"backward_exp_weighting"}, "backward_exp_weighting must be a boolean");
  }
  c.backward_exp_weighting = j.at("backward_exp_weighting").get<bool>();
  const json& mode = j.at("label_mode");
  if (mode == "barycentric") c.label_mode = LabelMode::barycentric;
  else if (mode == "raw_product") c.label_mode = LabelMode::raw_product;
  else throw ConfigError({"label_mode"}, "label_mode must be \"barycentric\" or \"raw_product\"");
  return validate_config(c);
}

Config load_config(const fs::path& path) {
  auto is = open_in(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// --- recipes ---------------------------------------------------------------

json recipe_to_json(const SceneRecipe& r) {
  json j;
  j["name"] = r.name;
  j["seed"] = r.seed;
  j["sensor_noise"] = r.sensor_noise;
  j["dropout"] = r.dropout;
  j["clutter"] = r.clutter;
  j["self_occlusion"] = r.self_occlusion;
  j["ground"] = {{"x", range_json(r.ground.x)},
                 {"y", range_json(r.ground.y)},
                 {"density", r.ground.density},
                 {"z_noise", r.ground.z_noise}};
  j["occlusions"] = json::array();
  for (const auto& o : r.occlusions) j["occlusions"].push_back({{"start", o.start}, {"width", o.width}, {"drift", o.drift}});
  j["objects"] = json::array();
  for (const auto& o : r.objects) {
    j["objects"].push_back({{"length", o.length},
                            {"width", o.width},
                            {"height", o.height},
                            {"base_z", o.base_z},
                            {"position", vec2_json(o.position)},
                            {"heading", o.heading},
                            {"velocity", vec2_json(o.velocity)},
                            {"density", o.density}});
  }
  return j;
}

SceneRecipe recipe_from_json(const json& j) {
  try {
    SceneRecipe r;
    r.name = j.value("name", std::string("scene"));
    r.seed = j.value("seed", std::uint64_t{0});
    r.sensor_noise = j.value("sensor_noise", 0.0);
    r.dropout = j.value("dropout", 0.0);
    r.clutter = j.value("clutter", 0);
    r.self_occlusion = j.value("self_occlusion", true);
    if (j.contains("ground")) {
      const json& g = j.at("ground");
      if (g.contains("x")) r.ground.x = range_from(g.at("x"), "ground.x");
      if (g.contains("y")) r.ground.y = range_from(g.at("y"), "ground.y");
      r.ground.density = g.value("density", r.ground.density);
      r.ground.z_noise = g.value("z_noise", r.ground.z_noise);
    }
    for (const auto& o : j.value("occlusions", json::array())) {
      r.occlusions.push_back({o.at("start").get<double>(), o.at("width").get<double>(), o.value("drift", 0.0)});
    }
    for (const auto& o : j.at("objects")) {
      ObjectSpec s;
      s.length = o.value("length", s.length);
      s.width = o.value("width", s.width);
      s.height = o.value("height", s.height);
      s.base_z = o.value("base_z", s.base_z);
      if (o.contains("position")) s.position = vec2_from(o.at("position"));
      s.heading = o.value("heading", 0.0);
      if (o.contains("velocity")) s.velocity = vec2_from(o.at("velocity"));
      s.density = o.value("density", s.density);
      r.objects.push_back(s);
    }
    validate_recipe(r);
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed recipe: ") + e.what());
  }
}

// --- reports ---------------------------------------------------------------

json metrics_to_json(const BucketedMetrics& m) {
  json j;
  j["horizon"] = m.horizon;
  for (int b = 0; b < 3; ++b) j[to_string(static_cast<SpeedBucket>(b))] = stats_json(m.buckets[b]);
  j["per_step"] = json::array();
  for (const auto& step : m.per_step) {
    json s;
    for (int b = 0; b < 3; ++b) s[to_string(static_cast<SpeedBucket>(b))] = stats_json(step[b]);
    j["per_step"].push_back(s);
  }
  return j;
}

json loss_report_to_json(const LossReport& r) {
  json j;
  j["total"] = r.total;
  j["terms"] = json::array();
  for (const auto& e : r.terms) j["terms"].push_back({{"name", e.name}, {"weight", e.weight}, {"value", e.term.value}});
  return j;
}

json divergence_to_json(const DivergenceReport& r) {
  json j;
  j["cells"] = r.error.size();
  j["spearman"] = r.spearman ? json(*r.spearman) : json(nullptr);
  j["binned_divergence"] = r.binned_divergence;
  j["binned_error"] = r.binned_error;
  return j;
}

json opt_state_to_json(const OptState& st, const std::optional<BucketedMetrics>& metrics) {
  json j;
  j["rounds"] = st.rounds;
  j["converged"] = st.converged;
  j["round_loss"] = st.round_loss;
  j["label_error"] = st.label_error;
  j["step_loss"] = st.step_loss;
  j["warnings"] = st.warnings;
  j["metrics"] = metrics ? metrics_to_json(*metrics) : json(nullptr);
  return j;
}

// --- binary formats --------------------------------------------------------

void write_points(std::ostream& os, const PointFrame& frame) {
  os.write("BEVM", 4);
  put(os, kVersion);
  put(os, static_cast<std::uint64_t>(frame.points.size()));
  for (const auto& p : frame.points) {
    put_f32(os, p.x());
    put_f32(os, p.y());
    put_f32(os, p.z());
  }
  if (!os) throw Error("failed writing point frame");
}

PointFrame read_points(std::istream& is) {
  expect_magic(is, "BEVM");
  const auto n = get<std::uint64_t>(is);
  PointFrame f;
  f.points.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
  for (std::uint64_t i = 0; i < n; ++i) {
    const double x = get_f32(is), y = get_f32(is), z = get_f32(is);
    f.points.emplace_back(x, y, z);
  }
  return f;
}

void write_field(std::ostream& os, const MotionStack& s) {
  const GridSpec& g = s.grid();
  os.write("MFLD", 4);
  put(os, kVersion);
  for (const Range& r : {g.x_range(), g.y_range(), g.z_range()}) {
    put_f64(os, r.lo);
    put_f64(os, r.hi);
  }
  put_f64(os, g.voxel_xy());
  put_f64(os, g.voxel_z());
  put(os, static_cast<std::uint32_t>(g.H()));
  put(os, static_cast<std::uint32_t>(g.W()));
  put(os, static_cast<std::uint32_t>(g.C()));
  put(os, static_cast<std::uint8_t>(s.direction()));
  put(os, static_cast<std::uint32_t>(s.steps()));
  const auto dense = s.dense();
  for (double v : dense) put_f32(os, v);
  const auto mask = s.mask();
  std::vector<std::uint8_t> bits((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  os.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  if (!os) throw Error("failed writing motion field");
}

MotionStack read_field(std::istream& is) {
  expect_magic(is, "MFLD");
  Range r[3];
  for (auto& x : r) {
    x.lo = get_f64(is);
    x.hi = get_f64(is);
  }
  const double vxy = get_f64(is), vz = get_f64(is);
  const auto h = get<std::uint32_t>(is), w = get<std::uint32_t>(is), c = get<std::uint32_t>(is);
  const GridSpec g = GridSpec::make(r[0], r[1], r[2], vxy, vz);
  if (static_cast<std::uint32_t>(g.H()) != h || static_cast<std::uint32_t>(g.W()) != w ||
      static_cast<std::uint32_t>(g.C()) != c) {
    throw Error("motion field grid echo is inconsistent");
  }
  const auto dir = get<std::uint8_t>(is);
  if (dir > 1) throw Error("motion field has an invalid direction byte");
  const auto steps = get<std::uint32_t>(is);
  if (steps > 1024) throw Error("motion field has an implausible step count");
  const std::size_t hw = g.cell_count();
  std::vector<double> dense(static_cast<std::size_t>(steps) * hw * 2);
  for (auto& v : dense) v = get_f32(is);
  std::vector<std::uint8_t> bits((hw + 7) / 8);
  if (!is.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()))) {
    throw Error("motion field bitmask truncated");
  }
  std::vector<std::int32_t> cells;
  for (std::size_t i = 0; i < hw; ++i) {
    if (bits[i / 8] >> (i % 8) & 1u) cells.push_back(static_cast<std::int32_t>(i));
  }
  MotionStack s(g, static_cast<Direction>(dir), static_cast<int>(steps), cells);
  for (std::uint32_t t = 0; t < steps; ++t) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < hw; ++i) {
      const std::size_t o = (t * hw + i) * 2;
      if (k < cells.size() && cells[k] == static_cast<std::int32_t>(i)) {
        s.set(static_cast<int>(t), k++, Vec2(dense[o], dense[o + 1]));
      } else if (dense[o] != 0.0 || dense[o + 1] != 0.0) {
        throw Error("motion field has a nonzero value outside its validity mask");
      }
    }
  }
  return s;
}

void save_field(const fs::path& path, const MotionStack& stack) {
  auto os = open_out(path);
  write_field(os, stack);
}

MotionStack load_field(const fs::path& path) {
  auto is = open_in(path);
  try {
    return read_field(is);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
  if (!os) throw Error("failed writing " + path.string());
}

// --- archives --------------------------------------------------------------

void write_archive(const fs::path& dir, const SceneSequence& seq, const Config& cfg, const SceneRecipe* recipe) {
  fs::create_directories(dir);
  json m;
  m["format"] = "bevmotion-scene";
  m["version"] = kVersion;
  m["name"] = recipe ? recipe->name : std::string("scene");
  m["grid"] = grid_json(cfg.grid());
  m["frame_count"] = seq.frames.size();
  m["current_index"] = seq.current;
  m["frame_dt"] = cfg.frame_dt;
  m["seed"] = recipe ? recipe->seed : cfg.rng_seed;
  m["frames"] = json::array();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::ostringstream name;
    name << "frame_" << std::setw(3) << std::setfill('0') << i << ".bin";
    auto os = open_out(dir / name.str());
    write_points(os, seq.frames[i]);
    m["frames"].push_back({{"file", name.str()}, {"timestamp", seq.frames[i].timestamp}});
  }
  if (seq.ground_truth) {
    save_field(dir / "gt.mfld", *seq.ground_truth);
    m["ground_truth"] = "gt.mfld";
  } else {
    m["ground_truth"] = nullptr;
  }
  m["recipe"] = recipe ? recipe_to_json(*recipe) : json(nullptr);
  write_json(dir / "manifest.json", m);
}

Archive read_archive(const fs::path& dir, const Config& cfg) {
  Archive a;
  {
    auto is = open_in(dir / "manifest.json");
    try {
      a.manifest = json::parse(is);
    } catch (const json::parse_error& e) {
      throw Error("manifest " + (dir / "manifest.json").string() + ": " + e.what());
    }
  }
  const json& m = a.manifest;
  try {
    if (m.at("format") != "bevmotion-scene") throw Error("not a bevmotion scene archive");
    if (m.at("version") != kVersion) throw Error("unsupported archive version");
    const json& g = m.at("grid");
    a.grid = GridSpec::make(range_from(g.at("x_range"), "x_range"), range_from(g.at("y_range"), "y_range"),
                            range_from(g.at("z_range"), "z_range"), g.at("voxel_xy").get<double>(),
                            g.at("voxel_z").get<double>());
    a.frame_dt = m.at("frame_dt").get<double>();
    const auto count = m.at("frame_count").get<std::size_t>();
    const json& frames = m.at("frames");
    if (!frames.is_array() || frames.size() != count) throw Error("manifest frame count does not match its frame list");
    for (const auto& fr : frames) {
      auto is = open_in(dir / fr.at("file").get<std::string>());
      PointFrame f = read_points(is);
      f.timestamp = fr.at("timestamp").get<double>();
      a.sequence.frames.push_back(std::move(f));
    }
    a.sequence.current = m.at("current_index").get<std::size_t>();
    if (!m.at("ground_truth").is_null()) {
      a.sequence.ground_truth = load_field(dir / m.at("ground_truth").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (a.grid != cfg.grid()) throw Error("archive grid does not match the configured grid");
  if (std::abs(a.frame_dt - cfg.frame_dt) > 1e-9) throw Error("archive frame_dt does not match the configuration");
  check_sequence(a.sequence, cfg);
  return a;
}

}  // namespace bevmotion::io
