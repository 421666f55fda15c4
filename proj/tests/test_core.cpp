#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>

using namespace bevmotion;

namespace {

bool names(const ConfigError& e, const std::string& field) {
  return std::find(e.fields().begin(), e.fields().end(), field) != e.fields().end();
}

}  // namespace

TEST_CASE("default config is accepted") {
  const Config cfg;
  CHECK(cfg.theta_c == 3.0);
  CHECK(cfg.d_c == 3);
  CHECK(cfg.theta_b == 10.0);
  CHECK(cfg.alpha == 0.05);
  CHECK(cfg.beta == 0.1);
  CHECK(cfg.gamma == 1.0);
  CHECK(cfg.T == 5);
  CHECK(cfg.T_prime == 5);
  CHECK(validate_config(cfg) == cfg);
  const GridSpec g = cfg.grid();
  CHECK(g.H() == 256);
  CHECK(g.W() == 256);
  CHECK(g.C() == 13);
}

TEST_CASE("invalid config fields are named") {
  Config cfg;
  cfg.theta_c = 0.0;
  try {
    validate_config(cfg);
    FAIL("accepted theta_c = 0");
  } catch (const ConfigError& e) {
    CHECK(names(e, "theta_c"));
    CHECK(std::string(e.what()).find("theta_c") != std::string::npos);
  }

  cfg = Config{};
  cfg.T_prime = 0;
  try {
    validate_config(cfg);
    FAIL("accepted T_prime = 0");
  } catch (const ConfigError& e) {
    CHECK(names(e, "T_prime"));
  }

  cfg = Config{};
  cfg.d_c = -1;
  cfg.sinkhorn_epsilon = 0.0;
  try {
    validate_config(cfg);
    FAIL("accepted two bad fields");
  } catch (const ConfigError& e) {
    CHECK(names(e, "d_c"));
    CHECK(names(e, "sinkhorn_epsilon"));
  }

  cfg = Config{};
  cfg.voxel_xy = 0.3;  // 64 / 0.3 is not an integer
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("grid bins are half open") {
  const GridSpec g = Config{}.grid();
  CHECK(g.bin_x(-32.0) == 0);
  CHECK(g.bin_x(32.0) == -1);
  CHECK(g.bin_x(31.999) == 255);
  CHECK(g.bin_x(0.1) == 128);
  CHECK(g.bin_z(0.0) == 7);
  CHECK(g.bin_z(2.2) == -1);
  const Vec2 c = g.cell_center({128, 128});
  CHECK(c.x() == doctest::Approx(0.125));
  CHECK(c.y() == doctest::Approx(0.125));
  CHECK(g.unflat(g.flat({3, 7})) == CellIndex{3, 7});
}

TEST_CASE("motion stack reads zero outside its mask") {
  const GridSpec g = test::small_config().grid();
  MotionStack s(g, Direction::forward, 2, {g.flat({5, 5}), g.flat({1, 2}), g.flat({5, 5})});
  CHECK(s.size() == 2);
  CHECK(s.cells().front() == g.flat({1, 2}));
  s.set(1, *s.find(g.flat({5, 5})), Vec2(1.0, -2.0));
  CHECK(s.sample(1, {5, 5}) == Vec2(1.0, -2.0));
  CHECK(s.sample(1, {5, 6}) == Vec2::Zero());
  CHECK(s.sample(0, {5, 5}) == Vec2::Zero());
  const auto dense = s.dense();
  CHECK(dense.size() == 2 * g.cell_count() * 2);
  const auto mask = s.mask();
  CHECK(std::count(mask.begin(), mask.end(), 1) == 2);
}

TEST_CASE("sequence timestamps must follow frame_dt") {
  const Config cfg;
  SceneSequence seq;
  for (int i = 0; i < 3; ++i) seq.frames.push_back({i * cfg.frame_dt, {}});
  CHECK_NOTHROW(check_sequence(seq, cfg));
  seq.frames[2].timestamp = 0.5;
  CHECK_THROWS_AS(check_sequence(seq, cfg), Error);
  seq.frames[2].timestamp = 0.1;
  CHECK_THROWS_AS(check_sequence(seq, cfg), Error);
}
