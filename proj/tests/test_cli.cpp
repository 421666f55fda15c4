#include "doctest.h"
#include "helpers.hpp"

#include "bevmotion/io.hpp"

#include <cstdio>
#include <fstream>

using namespace bevmotion;
using io::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::string& args, const fs::path& work) {
  const fs::path err = work / "stderr.txt";
  const std::string cmd = "cd '" + work.string() + "' && '" BEVMOTION_CLI "' " + args + " 2> '" + err.string() + "'";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream es(err);
  r.err.assign(std::istreambuf_iterator<char>(es), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

json parse_out(const Run& r) {
  INFO(r.err);
  REQUIRE(r.code == 0);
  return json::parse(r.out);
}

}  // namespace

TEST_CASE("synth writes one archive per scene") {
  const fs::path w = test::scratch_dir("cli_synth");
  const json j = parse_out(cli("synth --suite smoke out", w));
  CHECK(j["archives"].size() == 3);
  for (const char* n : {"smoke_static", "smoke_single", "smoke_mixed"}) CHECK(fs::exists(w / "out" / n / "manifest.json"));

  parse_out(cli("synth --suite smoke again", w));
  for (const auto& f : fs::directory_iterator(w / "out" / "smoke_mixed")) {
    CHECK(slurp(f.path()) == slurp(w / "again" / "smoke_mixed" / f.path().filename()));
  }
  parse_out(cli("--seed 7 synth --suite smoke seven", w));
  CHECK(slurp(w / "seven/smoke_single/frame_000.bin") != slurp(w / "out/smoke_single/frame_000.bin"));
}

TEST_CASE("ablation suite has twenty scenes") {
  const fs::path w = test::scratch_dir("cli_ablation");
  CHECK(parse_out(cli("--threads 0 synth --suite ablation out", w))["archives"].size() == 20);
}

TEST_CASE("pseudo labels") {
  const fs::path w = test::scratch_dir("cli_pseudo");
  parse_out(cli("synth --suite smoke out", w));
  const json j = parse_out(cli("pseudo out/smoke_static --out ps --direction both", w));
  CHECK(j["forward"]["mean_label_magnitude"].get<double>() < 0.05);
  CHECK(j["backward"]["mean_label_magnitude"].get<double>() < 0.05);
  CHECK(fs::exists(w / "ps/labels_forward.mfld"));
  CHECK(fs::exists(w / "ps/pseudo_stats.json"));

  const json b = parse_out(cli("pseudo out/smoke_single --out pb --direction backward", w));
  CHECK(b.contains("backward"));
  CHECK_FALSE(b.contains("forward"));
  const MotionStack lb = io::load_field(w / "pb/labels_backward.mfld");
  CHECK(lb.direction() == Direction::backward);

  const json multi = parse_out(cli("pseudo out/smoke_static out/smoke_single --out pm", w));
  CHECK(multi.size() == 2);
  CHECK(fs::exists(w / "pm/smoke_single/labels_forward.mfld"));
}

TEST_CASE("config errors name the key") {
  const fs::path w = test::scratch_dir("cli_config");
  json cfg = io::config_to_json(Config{});
  cfg.erase("knn_k");
  std::ofstream(w / "cfg.json") << cfg.dump();
  const Run r = cli("--config cfg.json synth --suite smoke out", w);
  CHECK(r.code != 0);
  CHECK(r.out.empty());
  CHECK(r.err.find("knn_k") != std::string::npos);

  std::ofstream(w / "broken.json") << "{";
  CHECK(cli("--config broken.json config", w).code != 0);

  std::ofstream(w / "full.json") << io::config_to_json(Config{}).dump();
  CHECK(parse_out(cli("--config full.json config", w)) == io::config_to_json(Config{}));
}

TEST_CASE("optimize, eval and render") {
  const fs::path w = test::scratch_dir("cli_opt");
  parse_out(cli("synth --suite smoke out", w));
  Config cfg;
  cfg.outer_rounds = 2;
  cfg.opt_steps = 30;
  std::ofstream(w / "cfg.json") << io::config_to_json(cfg).dump();

  const Run bad = cli("--config cfg.json optimize out/smoke_single --losses sup,warp --out o", w);
  CHECK(bad.code != 0);
  CHECK(bad.err.find("knn") != std::string::npos);

  const json j = parse_out(cli("--config cfg.json optimize out/smoke_single --losses sup,c --out o1", w));
  CHECK(j["state"]["rounds"] == 2);
  parse_out(cli("--config cfg.json --seed 7 optimize out/smoke_single --losses sup,c --out o2", w));
  parse_out(cli("--config cfg.json --seed 7 optimize out/smoke_single --losses sup,c --out o3", w));
  for (const char* f : {"forward.mfld", "backward.mfld", "state.json"}) {
    CHECK(slurp(w / "o2" / f) == slurp(w / "o3" / f));
  }

  const json m = parse_out(cli("--config cfg.json eval o1/forward.mfld out/smoke_single --out m.json", w));
  CHECK(m["slow"]["count"].get<int>() > 0);
  CHECK(json::parse(slurp(w / "m.json")) == m);

  const json perfect = parse_out(cli("eval out/smoke_mixed/gt.mfld out/smoke_mixed", w));
  for (const char* b : {"static", "slow", "fast"}) {
    CHECK(perfect[b]["mean"] == 0.0);
    CHECK(perfect[b]["median"] == 0.0);
  }
  const Run mismatch = cli("eval o1/forward.mfld out/smoke_mixed", w);
  CHECK(mismatch.code != 0);
  CHECK(mismatch.out.empty());

  const json img = parse_out(cli("render o1/forward.mfld img --grid 16", w));
  CHECK(img["images"].size() == 5);
  const std::string ppm = slurp(w / "img_step5.ppm");
  CHECK(ppm.substr(0, 15) == "P6\n256 256\n255\n");
  CHECK(ppm.size() == 15 + 256 * 256 * 3);
}

TEST_CASE("zero field on an 8 m/s scene") {
  const fs::path w = test::scratch_dir("cli_fast");
  std::ofstream(w / "fast.json") << R"({"name": "fast", "seed": 3, "objects": [{"velocity": [8, 0]}]})";
  parse_out(cli("synth --recipe fast.json out", w));
  const MotionStack gt = io::load_field(w / "out/fast/gt.mfld");
  io::save_field(w / "zero.mfld", MotionStack(gt.grid(), Direction::forward, gt.steps(), gt.cells()));
  const json m = parse_out(cli("eval zero.mfld out/fast", w));
  CHECK(std::abs(m["fast"]["mean"].get<double>() - 8.0) < 1e-6);
}

TEST_CASE("eval without ground truth") {
  const fs::path w = test::scratch_dir("cli_nogt");
  parse_out(cli("synth --suite smoke out", w));
  fs::remove(w / "out/smoke_single/gt.mfld");
  json man = json::parse(slurp(w / "out/smoke_single/manifest.json"));
  man["ground_truth"] = nullptr;
  std::ofstream(w / "out/smoke_single/manifest.json") << man.dump(2);
  const Run r = cli("eval out/smoke_mixed/gt.mfld out/smoke_single", w);
  CHECK(r.code != 0);
  CHECK(r.err.find("no ground truth") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  const fs::path w = test::scratch_dir("cli_grad");
  const json j = parse_out(cli("gradcheck", w));
  CHECK(j["passed"] == true);
  CHECK(j["terms"].size() == 6);
  const Run r = cli("gradcheck --tolerance 1e-12", w);
  CHECK(r.code != 0);
  CHECK(r.err.find("relative error") != std::string::npos);
  CHECK(r.err.find("cell") != std::string::npos);
}

TEST_CASE("usage errors") {
  const fs::path w = test::scratch_dir("cli_usage");
  CHECK(cli("", w).code != 0);
  CHECK(cli("synth out", w).code != 0);
  CHECK(cli("synth --suite nope out", w).code != 0);
  CHECK(cli("pseudo missing --out x", w).code != 0);
  CHECK(cli("render missing.mfld img", w).code != 0);
}
