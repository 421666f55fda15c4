#include "bevmotion/gradcheck.hpp"
#include "bevmotion/io.hpp"
#include "bevmotion/optimizer.hpp"
#include "bevmotion/parallel.hpp"
#include "bevmotion/render.hpp"
#include "bevmotion/synth.hpp"
#include "bevmotion/transport.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace bevmotion;
namespace fs = std::filesystem;
using io::json;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

Config effective_config(const Globals& g) {
  Config cfg = g.config_path.empty() ? Config{} : io::load_config(g.config_path);
  if (g.seed) cfg.rng_seed = *g.seed;
  return validate_config(cfg);
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

// One scene writes straight into `out`; several get one subdirectory each.
fs::path scene_out(const fs::path& out, const std::vector<std::string>& scenes, std::size_t i) {
  if (scenes.size() == 1) return out;
  return out / fs::path(scenes[i]).lexically_normal().filename();
}

std::string scene_name(const io::Archive& a, const fs::path& dir) {
  if (a.manifest.contains("name") && a.manifest["name"].is_string()) return a.manifest["name"];
  return dir.lexically_normal().filename().string();
}

MotionStack truth_for(const MotionStack& gt, Direction dir) {
  if (dir == Direction::forward) return gt;
  // Constant-velocity scenes: the past displacement is the negated future one.
  MotionStack b(gt.grid(), Direction::backward, gt.steps(), gt.cells());
  for (std::size_t i = 0; i < gt.values().size(); ++i) b.values()[i] = -gt.values()[i];
  return b;
}

json cmd_synth(const Globals& g, const std::string& suite, const std::string& recipe_path, const fs::path& out) {
  const Config cfg = effective_config(g);
  std::vector<SceneRecipe> recipes;
  if (!suite.empty()) {
    recipes = recipe_suite(suite, cfg.rng_seed);
  } else {
    std::ifstream is(recipe_path);
    if (!is) throw Error("cannot open recipe " + recipe_path);
    json j;
    try {
      j = json::parse(is);
    } catch (const json::parse_error& e) {
      throw Error("recipe " + recipe_path + ": " + e.what());
    }
    for (const auto& r : j.is_array() ? j : json::array({j})) recipes.push_back(io::recipe_from_json(r));
    if (g.seed) {
      for (auto& r : recipes) r.seed = *g.seed;
    }
  }
  parallel_for(recipes.size(), g.threads, [&](std::size_t i) {
    const SceneSequence seq = generate(recipes[i], cfg);
    io::write_archive(out / recipes[i].name, seq, cfg, &recipes[i]);
  });
  json res = json::array();
  for (const auto& r : recipes) res.push_back((out / r.name).string());
  return {{"archives", res}};
}

json pseudo_one(const Config& cfg, const fs::path& dir, const fs::path& out, const std::string& direction) {
  const io::Archive a = io::read_archive(dir, cfg);
  const PreparedSequence prep = prepare_sequence(a.sequence, cfg);
  fs::create_directories(out);
  json report;
  report["scene"] = scene_name(a, dir);
  std::vector<Direction> dirs;
  if (direction == "forward" || direction == "both") dirs.push_back(Direction::forward);
  if (direction == "backward" || direction == "both") dirs.push_back(Direction::backward);
  for (Direction d : dirs) {
    const MotionStack zero(cfg.grid(), d, cfg.T_prime, prep.valid);
    const LabelStackResult r = label_stack(prep, zero, cfg);
    const std::string tag = to_string(d);
    io::save_field(out / ("labels_" + tag + ".mfld"), r.labels);
    json j;
    j["file"] = "labels_" + tag + ".mfld";
    json steps = json::array();
    double total = 0.0;
    for (int s = 0; s < r.labels.steps(); ++s) {
      double sum = 0.0;
      for (std::size_t k = 0; k < r.labels.size(); ++k) sum += r.labels.at(s, k).norm();
      total += sum;
      steps.push_back(r.labels.size() ? sum / static_cast<double>(r.labels.size()) : 0.0);
    }
    const double n = static_cast<double>(r.labels.size() * static_cast<std::size_t>(r.labels.steps()));
    j["mean_label_magnitude"] = n > 0 ? total / n : 0.0;
    j["step_mean_label_magnitude"] = steps;
    j["unconverged_steps"] = r.unconverged_steps;
    j["warnings"] = r.warnings;
    if (a.sequence.ground_truth) {
      const MotionStack truth = truth_for(*a.sequence.ground_truth, d);
      j["label_error"] = io::metrics_to_json(bucketed_errors(r.labels, truth, cfg));
    } else {
      j["label_error"] = nullptr;
    }
    report[tag] = j;
  }
  io::write_json(out / "pseudo_stats.json", report);
  return report;
}

json optimize_one(const Config& cfg, const fs::path& dir, const fs::path& out, const LossToggles& toggles) {
  const io::Archive a = io::read_archive(dir, cfg);
  const OptState st = optimize_scene(a.sequence, cfg, toggles);
  std::optional<BucketedMetrics> metrics;
  if (a.sequence.ground_truth) metrics = bucketed_errors(st.forward, *a.sequence.ground_truth, cfg);
  fs::create_directories(out);
  io::save_field(out / "forward.mfld", st.forward);
  io::save_field(out / "backward.mfld", st.backward);
  json j;
  j["scene"] = scene_name(a, dir);
  j["losses"] = toggles.str();
  j["config"] = io::config_to_json(cfg);
  j["state"] = io::opt_state_to_json(st, metrics);
  io::write_json(out / "state.json", j);
  return j;
}

template <typename Fn>
json over_scenes(const Globals& g, const std::vector<std::string>& scenes, const fs::path& out, Fn fn) {
  std::vector<json> res(scenes.size());
  parallel_for(scenes.size(), g.threads, [&](std::size_t i) { res[i] = fn(scenes[i], scene_out(out, scenes, i)); });
  if (res.size() == 1) return res.front();
  return json(res);
}

json cmd_eval(const Globals& g, const fs::path& pred_path, const fs::path& scene, const std::string& out) {
  const Config cfg = effective_config(g);
  const io::Archive a = io::read_archive(scene, cfg);
  if (!a.sequence.ground_truth) throw Error("eval: scene " + scene.string() + " has no ground truth");
  const MotionStack pred = io::load_field(pred_path);
  if (pred.grid() != a.sequence.ground_truth->grid()) throw Error("eval: prediction grid does not match the scene grid");
  if (!pred.same_layout(*a.sequence.ground_truth)) {
    throw Error("eval: prediction steps or validity mask do not match the scene ground truth");
  }
  json j = io::metrics_to_json(bucketed_errors(pred, *a.sequence.ground_truth, cfg));
  if (!out.empty()) io::write_json(out, j);
  return j;
}

json cmd_render(const fs::path& field, const std::string& prefix, const RenderOptions& opt) {
  const MotionStack s = io::load_field(field);
  json files = json::array();
  for (int t = 0; t < s.steps(); ++t) {
    const std::string path = prefix + "_step" + std::to_string(t + 1) + ".ppm";
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    write_ppm(os, render_step(s, t, opt));
    files.push_back(path);
  }
  return {{"images", files}};
}

int cmd_gradcheck(const Globals& g, const GradCheckOptions& base) {
  const Config cfg = effective_config(g);
  const GradCheckFixture fx = make_gradcheck_fixture(cfg, cfg.rng_seed);
  json report = json::array();
  bool ok = true;
  for (const auto& term : standard_terms(fx)) {
    GradCheckOptions opt = base;
    opt.seed = cfg.rng_seed;
    const GradCheckResult r = check_gradient(term, fx.fwd, fx.bwd, opt);
    report.push_back({{"term", r.term},
                      {"points", r.points},
                      {"max_rel_error", r.max_rel_error},
                      {"passed", r.passed}});
    if (!r.passed) {
      ok = false;
      std::cerr << "gradcheck: " << r.term << " failed: relative error " << r.max_rel_error << " > "
                << opt.tolerance << " at " << r.stack << " step " << r.step << " cell (" << r.cell.row << ", "
                << r.cell.col << ") component " << (r.component == 0 ? "dx" : "dy") << " (analytic " << r.analytic
                << ", numeric " << r.numeric << ")\n";
    }
  }
  emit({{"passed", ok}, {"tolerance", base.tolerance}, {"terms", report}});
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised BEV motion fields from optimal-transport pseudo labels"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Config JSON (every key required)");
  app.add_option("--seed", g.seed, "Overrides rng_seed");
  app.add_option("--threads", g.threads, "Worker threads, 0 = hardware concurrency");

  auto* synth = app.add_subcommand("synth", "Generate scene archives");
  std::string suite, recipe;
  fs::path synth_out;
  auto* suite_opt = synth->add_option("--suite", suite, "smoke | ablation | divergence");
  auto* recipe_opt = synth->add_option("--recipe", recipe, "Recipe JSON (object or array)");
  suite_opt->excludes(recipe_opt);
  synth->add_option("out", synth_out, "Output directory")->required();

  auto* pseudo = app.add_subcommand("pseudo", "Pseudo labels with zero pre-warp");
  std::vector<std::string> pseudo_scenes;
  fs::path pseudo_out;
  std::string direction = "forward";
  pseudo->add_option("scenes", pseudo_scenes, "Scene archive directories")->required();
  pseudo->add_option("--out", pseudo_out, "Output directory")->required();
  pseudo->add_option("--direction", direction)->check(CLI::IsMember({"forward", "backward", "both"}));

  auto* optimize = app.add_subcommand("optimize", "Optimize motion fields per scene");
  std::vector<std::string> opt_scenes;
  fs::path opt_out;
  std::string losses = "sup,c,f,b";
  optimize->add_option("scenes", opt_scenes, "Scene archive directories")->required();
  optimize->add_option("--out", opt_out, "Output directory")->required();
  optimize->add_option("--losses", losses, "Comma list from {sup, c, f, b, knn}");

  auto* eval = app.add_subcommand("eval", "Speed-bucketed errors of a motion field");
  fs::path eval_pred, eval_scene;
  std::string eval_out;
  eval->add_option("pred", eval_pred, "Motion field file")->required();
  eval->add_option("scene", eval_scene, "Scene archive directory")->required();
  eval->add_option("--out", eval_out, "Also write the metrics JSON here");

  auto* render = app.add_subcommand("render", "Color-wheel images, one per step");
  fs::path render_field;
  std::string render_prefix;
  RenderOptions ropt;
  render->add_option("field", render_field, "Motion field file")->required();
  render->add_option("prefix", render_prefix, "Output prefix; writes <prefix>_stepN.ppm")->required();
  render->add_option("--max", ropt.max_magnitude, "Magnitude at full saturation (m)");
  render->add_option("--grid", ropt.grid_lines, "White grid line every N cells, 0 = off");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  GradCheckOptions gopt;
  gradcheck->add_option("--tolerance", gopt.tolerance, "Relative error threshold");
  gradcheck->add_option("--points", gopt.points, "Evaluation points per term");
  gradcheck->add_option("--step", gopt.step, "Central-difference step (m)");

  app.add_subcommand("config", "Print the effective config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      if (suite.empty() == recipe.empty()) throw Error("synth: give exactly one of --suite or --recipe");
      emit(cmd_synth(g, suite, recipe, synth_out));
    } else if (*pseudo) {
      const Config cfg = effective_config(g);
      emit(over_scenes(g, pseudo_scenes, pseudo_out, [&](const std::string& s, const fs::path& out) {
        return pseudo_one(cfg, s, out, direction);
      }));
    } else if (*optimize) {
      const Config cfg = effective_config(g);
      const LossToggles toggles = LossToggles::parse(losses);
      emit(over_scenes(g, opt_scenes, opt_out, [&](const std::string& s, const fs::path& out) {
        return optimize_one(cfg, s, out, toggles);
      }));
    } else if (*eval) {
      emit(cmd_eval(g, eval_pred, eval_scene, eval_out));
    } else if (*render) {
      emit(cmd_render(render_field, render_prefix, ropt));
    } else if (*gradcheck) {
      return cmd_gradcheck(g, gopt);
    } else {
      emit(io::config_to_json(effective_config(g)));
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
