#include "bevmotion/clustering.hpp"
#include "bevmotion/gradcheck.hpp"
#include "bevmotion/io.hpp"
#include "bevmotion/optimizer.hpp"
#include "bevmotion/render.hpp"
#include "bevmotion/transport.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace bevmotion;
using io::json;

namespace {

Config parse_config(const std::string& text) {
  return text.empty() ? Config{} : io::config_from_json(json::parse(text));
}

std::vector<Vec2> to_points(const Eigen::MatrixX2d& m) {
  std::vector<Vec2> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[i] = m.row(i).transpose();
  return out;
}

Eigen::MatrixX2d from_points(const std::vector<Vec2>& v) {
  Eigen::MatrixX2d m(v.size(), 2);
  for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
  return m;
}

// (steps, H, W, 2) values plus an (H, W) validity mask.
py::dict field_dict(const MotionStack& s) {
  const GridSpec& g = s.grid();
  py::array_t<double> values({static_cast<py::ssize_t>(s.steps()), static_cast<py::ssize_t>(g.H()),
                              static_cast<py::ssize_t>(g.W()), py::ssize_t{2}});
  const auto dense = s.dense();
  std::copy(dense.begin(), dense.end(), values.mutable_data());
  py::array_t<bool> mask({static_cast<py::ssize_t>(g.H()), static_cast<py::ssize_t>(g.W())});
  const auto m = s.mask();
  std::copy(m.begin(), m.end(), mask.mutable_data());
  py::dict d;
  d["direction"] = to_string(s.direction());
  d["values"] = values;
  d["mask"] = mask;
  return d;
}

py::array_t<double> frame_array(const PointFrame& f) {
  py::array_t<double> a({static_cast<py::ssize_t>(f.points.size()), py::ssize_t{3}});
  auto r = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    for (int c = 0; c < 3; ++c) r(i, c) = f.points[i][c];
  }
  return a;
}

py::dict scene_dict(const SceneSequence& seq) {
  py::list frames;
  py::list stamps;
  for (const auto& f : seq.frames) {
    frames.append(frame_array(f));
    stamps.append(f.timestamp);
  }
  py::dict d;
  d["frames"] = frames;
  d["timestamps"] = stamps;
  d["current"] = seq.current;
  d["ground_truth"] = seq.ground_truth ? py::object(field_dict(*seq.ground_truth)) : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_bevmotion, m) {
  m.doc() = "Self-supervised BEV motion fields from optimal-transport pseudo labels";

  // Translators run newest first, so the subclass goes last.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_config", [] { return io::config_to_json(Config{}).dump(); });
  m.def("check_config", [](const std::string& text) { return io::config_to_json(parse_config(text)).dump(); });

  m.def("cost_matrix",
        [](const Eigen::MatrixX2d& s, const Eigen::MatrixX2d& t, double theta_c) {
          return cost_matrix(to_points(s), to_points(t), theta_c).values;
        },
        py::arg("source"), py::arg("target"), py::arg("theta_c") = 3.0);

  m.def("sinkhorn",
        [](const Eigen::MatrixXd& cost, double epsilon, int max_iters, double tol) {
          const TransportPlan p = sinkhorn(CostMatrix{cost, 0.0}, epsilon, max_iters, tol);
          py::dict d;
          d["plan"] = p.values;
          d["converged"] = p.converged;
          d["iterations"] = p.iterations;
          d["marginal_error"] = p.marginal_error;
          return d;
        },
        py::arg("cost"), py::arg("epsilon") = 0.03, py::arg("max_iters") = 200, py::arg("tol") = 1e-6);

  m.def("pseudo_labels",
        [](const Eigen::MatrixXd& plan, const Eigen::MatrixX2d& s, const Eigen::MatrixX2d& t, bool raw) {
          TransportPlan p;
          p.values = plan;
          return from_points(
              pseudo_labels(p, to_points(s), to_points(t), raw ? LabelMode::raw_product : LabelMode::barycentric));
        },
        py::arg("plan"), py::arg("source"), py::arg("target"), py::arg("raw_product") = false);

  m.def("bfs_cluster",
        [](const Eigen::Matrix<int, Eigen::Dynamic, 2>& idx, int d_c) {
          const GridSpec g = Config{}.grid();
          CellSet cs;
          for (Eigen::Index i = 0; i < idx.rows(); ++i) {
            cs.indices.push_back({idx(i, 0), idx(i, 1)});
            cs.coords.push_back(g.cell_center(cs.indices.back()));
          }
          return bfs_cluster(cs, d_c).assignment;
        },
        py::arg("cells"), py::arg("d_c") = 3);

  m.def("smooth_l1",
        [](const Vec2& pred, const Vec2& target, double delta) {
          const SmoothL1 r = smooth_l1(pred, target, delta);
          return py::make_tuple(r.value, r.grad);
        },
        py::arg("pred"), py::arg("target"), py::arg("delta") = 1.0);

  m.def("suite_recipes", [](const std::string& name, std::uint64_t seed) {
    json out = json::array();
    for (const auto& r : recipe_suite(name, seed)) out.push_back(io::recipe_to_json(r));
    return out.dump();
  });

  m.def("generate",
        [](const std::string& recipe, const std::string& config) {
          const SceneRecipe r = io::recipe_from_json(json::parse(recipe));
          SceneSequence seq;
          {
            py::gil_scoped_release release;
            seq = generate(r, parse_config(config));
          }
          return scene_dict(seq);
        },
        py::arg("recipe"), py::arg("config") = "");

  m.def("write_archive",
        [](const std::string& recipe, const std::filesystem::path& dir, const std::string& config) {
          const SceneRecipe r = io::recipe_from_json(json::parse(recipe));
          const Config cfg = parse_config(config);
          py::gil_scoped_release release;
          io::write_archive(dir, generate(r, cfg), cfg, &r);
        },
        py::arg("recipe"), py::arg("dir"), py::arg("config") = "");

  m.def("load_field", [](const std::filesystem::path& p) { return field_dict(io::load_field(p)); });

  m.def("pseudo_labels_for_scene",
        [](const std::filesystem::path& dir, const std::string& direction, const std::string& config) {
          const Config cfg = parse_config(config);
          const Direction d = direction == "backward" ? Direction::backward : Direction::forward;
          if (direction != "forward" && direction != "backward") throw Error("direction must be forward or backward");
          LabelStackResult res;
          {
            py::gil_scoped_release release;
            const io::Archive a = io::read_archive(dir, cfg);
            const PreparedSequence prep = prepare_sequence(a.sequence, cfg);
            res = label_stack(prep, MotionStack(cfg.grid(), d, cfg.T_prime, prep.valid), cfg);
          }
          py::dict out = field_dict(res.labels);
          out["warnings"] = res.warnings;
          out["unconverged_steps"] = res.unconverged_steps;
          return out;
        },
        py::arg("scene"), py::arg("direction") = "forward", py::arg("config") = "");

  m.def("optimize_scene",
        [](const std::filesystem::path& dir, const std::string& losses, const std::string& config) {
          const Config cfg = parse_config(config);
          const LossToggles toggles = LossToggles::parse(losses);
          OptState st;
          std::optional<BucketedMetrics> metrics;
          {
            py::gil_scoped_release release;
            const io::Archive a = io::read_archive(dir, cfg);
            st = optimize_scene(a.sequence, cfg, toggles);
            if (a.sequence.ground_truth) metrics = bucketed_errors(st.forward, *a.sequence.ground_truth, cfg);
          }
          py::dict out;
          out["forward"] = field_dict(st.forward);
          out["backward"] = field_dict(st.backward);
          out["state"] = io::opt_state_to_json(st, metrics).dump();
          return out;
        },
        py::arg("scene"), py::arg("losses") = "sup,c,f,b", py::arg("config") = "");

  m.def("evaluate",
        [](const std::filesystem::path& pred, const std::filesystem::path& dir, const std::string& config) {
          const Config cfg = parse_config(config);
          const io::Archive a = io::read_archive(dir, cfg);
          if (!a.sequence.ground_truth) throw Error("no ground truth in " + dir.string());
          return io::metrics_to_json(bucketed_errors(io::load_field(pred), *a.sequence.ground_truth, cfg)).dump();
        },
        py::arg("pred"), py::arg("scene"), py::arg("config") = "");

  m.def("render",
        [](const std::filesystem::path& field, int step, double max_magnitude, int grid_lines) {
          const Image img = render_step(io::load_field(field), step, RenderOptions{max_magnitude, grid_lines});
          py::array_t<std::uint8_t> a({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
                                       py::ssize_t{3}});
          auto* p = a.mutable_data();
          for (const auto& px : img.pixels) {
            *p++ = px.r;
            *p++ = px.g;
            *p++ = px.b;
          }
          return a;
        },
        py::arg("field"), py::arg("step") = 0, py::arg("max_magnitude") = 10.0, py::arg("grid_lines") = 0);

  m.def("gradcheck",
        [](const std::string& config, double tolerance, int points) {
          const Config cfg = parse_config(config);
          const GradCheckFixture fx = make_gradcheck_fixture(cfg, cfg.rng_seed);
          GradCheckOptions opt;
          opt.tolerance = tolerance;
          opt.points = points;
          opt.seed = cfg.rng_seed;
          py::list out;
          for (const auto& t : standard_terms(fx)) {
            const GradCheckResult r = check_gradient(t, fx.fwd, fx.bwd, opt);
            py::dict d;
            d["term"] = r.term;
            d["passed"] = r.passed;
            d["max_rel_error"] = r.max_rel_error;
            out.append(d);
          }
          return out;
        },
        py::arg("config") = "", py::arg("tolerance") = 1e-5, py::arg("points") = 100);
}
