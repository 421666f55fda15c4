#include "doctest.h"
#include "helpers.hpp"

#include "bevmotion/optimizer.hpp"

using namespace bevmotion;

namespace {

SceneRecipe suite_scene(const std::string& name) {
  for (auto& r : recipe_suite("smoke")) {
    if (r.name == name) return r;
  }
  throw Error("missing " + name);
}

double mean_magnitude(const MotionStack& s) {
  double sum = 0.0;
  for (int t = 0; t < s.steps(); ++t) {
    for (std::size_t k = 0; k < s.size(); ++k) sum += s.at(t, k).norm();
  }
  return sum / static_cast<double>(s.size() * s.steps());
}

}  // namespace

TEST_CASE("static scene stays near zero") {
  Config cfg;
  cfg.outer_rounds = 3;
  const SceneSequence seq = generate(suite_scene("smoke_static"), cfg);
  const OptState st = optimize_scene(seq, cfg);
  CHECK(st.rounds == 3);
  CHECK(mean_magnitude(st.forward) < 0.05);
  CHECK(mean_magnitude(st.backward) < 0.05);
}

TEST_CASE("single mover is recovered within a cell") {
  const Config cfg;
  const SceneSequence seq = generate(suite_scene("smoke_single"), cfg);
  const OptState st = optimize_scene(seq, cfg);
  const BucketedMetrics m = bucketed_errors(st.forward, *seq.ground_truth, cfg);
  REQUIRE(m[SpeedBucket::slow].count > 0);
  CHECK(*m[SpeedBucket::slow].mean < 0.25);
  CHECK(st.label_error.size() == static_cast<std::size_t>(cfg.outer_rounds));
}

TEST_CASE("zero outer rounds is a no-op") {
  Config cfg;
  cfg.outer_rounds = 0;
  const SceneSequence seq = generate(suite_scene("smoke_single"), cfg);
  const OptState st = optimize_scene(seq, cfg);
  CHECK(st.rounds == 0);
  CHECK(st.round_loss.empty());
  CHECK(st.step_loss.empty());
  for (double v : st.forward.values()) CHECK(v == 0.0);
  for (double v : st.backward.values()) CHECK(v == 0.0);
}

TEST_CASE("recorded loss never increases within a round") {
  for (double lr : {0.01, 0.05, 0.5}) {
    Config cfg;
    cfg.outer_rounds = 2;
    cfg.opt_steps = 60;
    cfg.opt_lr = lr;
    LossToggles t;
    t.knn = true;
    const OptState st = optimize_scene(generate(suite_scene("smoke_mixed"), cfg), cfg, t);
    for (const auto& h : st.step_loss) {
      REQUIRE(h.size() == 60);
      for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] <= h[i - 1]);
    }
  }
}

TEST_CASE("descent on fixed labels reaches them") {
  const Config cfg = test::small_config();
  const GridSpec g = cfg.grid();
  const std::vector<CellIndex> idx = {{4, 4}, {20, 20}};
  MotionStack fwd(g, Direction::forward, cfg.T_prime, test::flat_cells(g, idx));
  MotionStack bwd(g, Direction::backward, cfg.T_prime, test::flat_cells(g, idx));
  MotionStack lf = fwd, lb = bwd;
  for (int t = 0; t < cfg.T_prime; ++t) {
    for (std::size_t k = 0; k < fwd.size(); ++k) {
      lf.set(t, k, (t + 1) * Vec2(0.3, 0.1));
      lb.set(t, k, -(t + 1) * Vec2(0.3, 0.1));
    }
  }
  const LossContext ctx{&lf, &lb, nullptr, nullptr};
  std::vector<double> hist;
  descend(fwd, bwd, ctx, cfg, LossToggles::parse("sup,f,b"), 400, hist);
  CHECK(hist.back() < 1e-4);
  CHECK(label_error(fwd, lf) < 0.02);
}

TEST_CASE("optimization is deterministic") {
  Config cfg;
  cfg.outer_rounds = 2;
  cfg.opt_steps = 40;
  const auto recipes = recipe_suite("smoke");
  const SuiteResult a = run_suite(recipes, cfg, LossToggles{}, 1);
  const SuiteResult b = run_suite(recipes, cfg, LossToggles{}, 3);
  REQUIRE(a.scenes.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a.scenes[i].name == b.scenes[i].name);
    CHECK(a.scenes[i].state.forward == b.scenes[i].state.forward);
    CHECK(a.scenes[i].state.step_loss == b.scenes[i].state.step_loss);
  }
  REQUIRE(a.pooled);
  CHECK(*a.pooled->buckets[0].mean == *b.pooled->buckets[0].mean);
}
