#include "doctest.h"
#include "helpers.hpp"

#include "bevmotion/eval.hpp"
#include "bevmotion/synth.hpp"

using namespace bevmotion;

TEST_CASE("speed buckets") {
  CHECK(classify_speed(0.0, 0.2) == SpeedBucket::static_);
  CHECK(classify_speed(0.19, 0.2) == SpeedBucket::static_);
  CHECK(classify_speed(0.2, 0.2) == SpeedBucket::slow);
  CHECK(classify_speed(5.0, 0.2) == SpeedBucket::slow);
  CHECK(classify_speed(5.0001, 0.2) == SpeedBucket::fast);
}

TEST_CASE("lower median") {
  CHECK_FALSE(lower_median({}));
  CHECK(*lower_median({3.0}) == 3.0);
  CHECK(*lower_median({4.0, 1.0, 3.0, 2.0}) == 2.0);
  CHECK(*lower_median({5.0, 1.0, 3.0}) == 3.0);
}

TEST_CASE("perfect prediction scores zero") {
  SceneRecipe r;
  r.name = "e";
  r.objects = {ObjectSpec{}, ObjectSpec{}};
  r.objects[0].velocity = {3, 0};
  r.objects[1].position = {-6, 5};
  r.objects[1].velocity = {0, 7};
  r.seed = 2;
  const Config cfg;
  const SceneSequence seq = generate(r, cfg);
  const BucketedMetrics m = bucketed_errors(*seq.ground_truth, *seq.ground_truth, cfg);
  CHECK(m.horizon == 5);
  CHECK(m.per_step.size() == 5);
  for (const auto& b : m.buckets) {
    REQUIRE(b.count > 0);
    CHECK(*b.mean == 0.0);
    CHECK(*b.median == 0.0);
  }
}

TEST_CASE("zero prediction on an 8 m/s mover") {
  SceneRecipe r;
  r.name = "fast";
  ObjectSpec o;
  o.velocity = {8, 0};
  r.objects = {o};
  r.seed = 3;
  const Config cfg;
  const SceneSequence seq = generate(r, cfg);
  const MotionStack& gt = *seq.ground_truth;
  const MotionStack zero(gt.grid(), Direction::forward, gt.steps(), gt.cells());
  const BucketedMetrics m = bucketed_errors(zero, gt, cfg);
  REQUIRE(m[SpeedBucket::fast].count > 0);
  CHECK(std::abs(*m[SpeedBucket::fast].mean - 8.0) < 1e-6);
  CHECK_FALSE(m[SpeedBucket::slow].mean);
}

TEST_CASE("speed exactly 5 m/s is slow") {
  const Config cfg = test::small_config();
  const GridSpec g = cfg.grid();
  MotionStack gt(g, Direction::forward, 5, test::flat_cells(g, {{1, 1}, {2, 2}}));
  for (int t = 0; t < 5; ++t) gt.set(t, 0, {1.0 * (t + 1), 0.0});
  const MotionStack zero(g, Direction::forward, 5, gt.cells());
  const BucketedMetrics m = bucketed_errors(zero, gt, cfg);
  CHECK(m[SpeedBucket::slow].count == 1);
  CHECK(m[SpeedBucket::fast].count == 0);
  CHECK(m[SpeedBucket::static_].count == 1);
  MotionStack other(g, Direction::forward, 5, test::flat_cells(g, {{1, 1}}));
  CHECK_THROWS_AS(bucketed_errors(other, gt, cfg), Error);
}

TEST_CASE("spearman") {
  CHECK(*spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(*spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // Ties take average ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
  CHECK(*spearman({1, 1, 2}, {1, 2, 3}) == doctest::Approx(0.8660254));
  CHECK_FALSE(spearman({1, 2}, {1, 2}));
  CHECK_FALSE(spearman({1, 1, 1}, {1, 2, 3}));
}

TEST_CASE("divergence") {
  const Config cfg = test::small_config();
  const GridSpec g = cfg.grid();
  std::vector<CellIndex> idx;
  for (int i = 0; i < 20; ++i) idx.push_back({i, 2 * i});
  MotionStack gt(g, Direction::forward, 3, test::flat_cells(g, idx));
  test::fill_random(gt, 1);
  MotionStack fwd = gt;
  MotionStack bwd(g, Direction::backward, 3, gt.cells());
  for (std::size_t i = 0; i < gt.values().size(); ++i) bwd.values()[i] = -gt.values()[i];

  DivergenceReport r = divergence_report(fwd, bwd, gt);
  for (double d : r.divergence) CHECK(d == 0.0);
  CHECK_FALSE(r.spearman);

  // Half the cells carry both a forward error and a matching backward corruption.
  for (std::size_t k = 0; k < gt.size(); k += 2) {
    const double e = 0.1 * (1 + k);
    for (int t = 0; t < 3; ++t) {
      fwd.set(t, k, fwd.at(t, k) + Vec2(e, 0.0));
      bwd.set(t, k, bwd.at(t, k) + Vec2(0.0, e));
    }
  }
  r = divergence_report(fwd, bwd, gt, 4);
  REQUIRE(r.spearman);
  CHECK(*r.spearman > 0.8);
  CHECK(r.binned_error.size() == 4);
  CHECK(r.binned_error.back() > r.binned_error.front());

  MotionStack tiny(g, Direction::forward, 1, test::flat_cells(g, {{1, 1}, {2, 2}}));
  MotionStack tiny_b(g, Direction::backward, 1, tiny.cells());
  CHECK_FALSE(divergence_report(tiny, tiny_b, tiny).spearman);
}
