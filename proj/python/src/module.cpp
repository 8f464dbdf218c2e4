// Python bindings for the localization backend, simulator and metrics.
#include "dualpg/association.hpp"
#include "dualpg/dual_manager.hpp"
#include "dualpg/errors.hpp"
#include "dualpg/evaluation.hpp"
#include "dualpg/experiment.hpp"
#include "dualpg/formats.hpp"
#include "dualpg/graph_io.hpp"
#include "dualpg/simulator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace dualpg;

namespace {

Pose pose_from(const Vec3& p, const Eigen::Vector4d& q) { return Pose(Rotation::from_xyzw(q(0), q(1), q(2), q(3)), p); }

// Trajectory as an (n, 8) array of t x y z qx qy qz qw rows.
Eigen::MatrixXd trajectory_array(const Trajectory& t) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.size()), 8);
  for (std::size_t k = 0; k < t.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out(i, 0) = t[k].t;
    out.block<1, 3>(i, 1) = t[k].pose.translation().transpose();
    out.block<1, 4>(i, 4) = t[k].pose.rotation().xyzw().transpose();
  }
  return out;
}

Trajectory trajectory_from(const Eigen::MatrixXd& a) {
  if (a.cols() != 8) throw InputError("trajectory arrays need 8 columns: t x y z qx qy qz qw");
  Trajectory t;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    t.push_back({a(i, 0), pose_from(a.block<1, 3>(i, 1).transpose(), a.block<1, 4>(i, 4).transpose())});
  }
  return t;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  auto ate_dict = [](const std::optional<AteResult>& a) -> py::object {
    if (!a) return py::none();
    py::dict r;
    r["trans_rmse"] = a->trans_rmse;
    r["rot_rmse_deg"] = a->rot_rmse;
    r["matched"] = a->matched;
    return r;
  };
  d["corrected_ate"] = ate_dict(m.corrected_ate);
  d["raw_ate"] = ate_dict(m.raw_ate);
  if (m.correction) {
    py::list laps;
    for (const Stat& s : m.correction->laps) laps.append(py::make_tuple(s.mean, s.std));
    d["lap_correction"] = laps;
  }
  d["nodes"] = m.nodes;
  d["edges"] = m.edges;
  d["detection_edges"] = m.detection_edges;
  d["keyframes"] = m.keyframes;
  d["landmarks"] = m.landmarks;
  d["accepted_detections"] = m.accepted_detections;
  d["opt_p50_ms"] = m.opt_p50_ms;
  d["opt_p95_ms"] = m.opt_p95_ms;
  d["config_hash"] = m.config_hash;
  d["seed"] = m.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual pose-graph localization backend";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_RuntimeError);
  py::register_exception<DegenerateError>(m, "DegenerateError", PyExc_RuntimeError);

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def(py::init([](const Vec3& p, const Eigen::Vector4d& q) { return pose_from(p, q); }), py::arg("translation"),
           py::arg("quaternion_xyzw") = Eigen::Vector4d(0, 0, 0, 1))
      .def_static("from_matrix", &Pose::from_matrix)
      .def_static("exp", [](const Twist& xi) { return dualpg::exp(xi); })
      .def("log", [](const Pose& p) { return dualpg::log(p); })
      .def("matrix", &Pose::matrix)
      .def("inverse", &Pose::inverse)
      .def_property_readonly("translation", [](const Pose& p) { return Vec3(p.translation()); })
      .def_property_readonly("quaternion_xyzw", [](const Pose& p) { return p.rotation().xyzw(); })
      .def_property_readonly("yaw", [](const Pose& p) { return yaw_of(p.rotation()); })
      .def("__mul__", [](const Pose& a, const Pose& b) { return a * b; })
      .def("__mul__", [](const Pose& a, const Vec3& p) { return Vec3(a * p); })
      .def("__repr__", [](const Pose& p) {
        std::ostringstream s;
        s << "Pose(t=[" << p.translation().transpose() << "], q=[" << p.rotation().xyzw().transpose() << "])";
        return s.str();
      });

  m.def("relative", &relative, "Pose of b expressed in the frame of a");
  m.def("translational_distance", &translational_distance);
  m.def("rotational_distance",
        [](const Pose& a, const Pose& b) { return rotational_distance(a.rotation(), b.rotation()); });

  m.def(
      "hungarian",
      [](const Eigen::MatrixXd& cost) {
        const Assignment a = hungarian(cost);
        return py::make_tuple(a.pairs, a.cost);
      },
      "Minimum-cost assignment; returns (pairs, cost)");

  m.def(
      "align_se3",
      [](const Eigen::MatrixXd& est, const Eigen::MatrixXd& gt) {
        if (est.cols() != 3 || gt.cols() != 3 || est.rows() != gt.rows()) {
          throw InputError("align_se3 expects two (n, 3) arrays of equal length");
        }
        std::vector<Vec3> e, g;
        for (Eigen::Index i = 0; i < est.rows(); ++i) {
          e.push_back(est.row(i).transpose());
          g.push_back(gt.row(i).transpose());
        }
        return align_se3(e, g);
      },
      "Rigid transform T minimizing sum |T est_i - gt_i|^2");
  m.def(
      "ate",
      [](const Eigen::MatrixXd& est, const Eigen::MatrixXd& gt, double tolerance) {
        const AteResult r = ate(trajectory_from(est), trajectory_from(gt), tolerance);
        return py::make_tuple(r.trans_rmse, r.rot_rmse);
      },
      py::arg("est"), py::arg("gt"), py::arg("tolerance") = 1.0 / 60.0,
      "Translational RMSE (m) and rotational RMSE (deg) after SE(3) alignment");
  m.def("percentile", &percentile, py::arg("values"), py::arg("p"));

  py::class_<ExperimentConfig>(m, "Config")
      .def(py::init<>())
      .def(py::init([](const py::dict& values) {
        ExperimentConfig c;
        for (auto [k, v] : values) c.set(py::str(k), py::str(v));
        return c;
      }))
      .def_static("parse", &parse_config)
      .def("set", &ExperimentConfig::set)
      .def("get", &ExperimentConfig::get)
      .def_static("keys", &ExperimentConfig::keys)
      .def("validate", &ExperimentConfig::validate)
      .def("hash", &ExperimentConfig::hash);

  py::class_<SimRun>(m, "SimRun")
      .def_property_readonly("ground_truth", [](const SimRun& s) { return trajectory_array(s.ground_truth); })
      .def_property_readonly("odometry", [](const SimRun& s) { return trajectory_array(s.odometry); })
      .def_property_readonly("lap_stamps", [](const SimRun& s) { return s.lap_stamps; })
      .def_property_readonly("gates",
                             [](const SimRun& s) {
                               std::vector<std::pair<int, Pose>> g;
                               for (const GatePrior& p : s.gates) g.emplace_back(p.semantic_id, p.pose);
                               return g;
                             })
      .def_property_readonly("detection_count", [](const SimRun& s) {
        std::size_t n = 0;
        for (const auto& b : s.detections) n += b.detections.size();
        return n;
      });

  m.def(
      "simulate",
      [](const ExperimentConfig& c, std::uint64_t seed) {
        c.validate();
        NoiseModel noise = c.noise;
        noise.seed = seed;
        return simulate(c.track, noise);
      },
      py::arg("config"), py::arg("seed") = 1);

  m.def(
      "run",
      [](const ExperimentConfig& c, std::uint64_t seed) {
        SimulatedRun r;
        {
          py::gil_scoped_release release;
          r = run_simulated(c, seed);
        }
        py::dict out = metrics_dict(r.metrics);
        out["corrected"] = trajectory_array(r.artifacts.corrected);
        out["raw"] = trajectory_array(r.artifacts.raw);
        out["ground_truth"] = trajectory_array(r.sim.ground_truth);
        return out;
      },
      py::arg("config"), py::arg("seed") = 1, "Simulate one seed and replay it through the backend");

  m.def(
      "ablate",
      [](const ExperimentConfig& c, const std::string& grid, int jobs) {
        AblationResult r;
        {
          py::gil_scoped_release release;
          r = run_ablation(c, grid.empty() ? default_grid() : parse_grid(grid), jobs);
        }
        return ablation_summary_csv(r);
      },
      py::arg("config"), py::arg("grid") = "", py::arg("jobs") = 1, "Ablation summary as CSV text");

  py::class_<DualGraphManager>(m, "DualGraphManager")
      .def(py::init([](const ExperimentConfig& c, const std::vector<std::pair<int, Pose>>& gates) {
             std::vector<GatePrior> g;
             for (const auto& [id, pose] : gates) g.push_back({id, pose});
             return DualGraphManager(c.dual, g);
           }),
           py::arg("config"), py::arg("gates"))
      .def("process_odometry", &DualGraphManager::process_odometry, py::arg("stamp"), py::arg("raw_pose"))
      .def(
          "process_detections",
          [](DualGraphManager& mgr, double stamp, const std::vector<Pose>& detections) {
            std::vector<RawDetection> d;
            for (const Pose& p : detections) d.push_back({p, std::nullopt, stamp});
            return mgr.process_detections(stamp, d);
          },
          py::arg("stamp"), py::arg("detections"), "Body-frame gate poses observed at `stamp`")
      .def("promote_keyframe", [](DualGraphManager& mgr) { return mgr.promote_keyframe().final_chi2; })
      .def("finish", &DualGraphManager::finish)
      .def_property_readonly("correction", &DualGraphManager::correction)
      .def_property_readonly("keyframe_count", &DualGraphManager::keyframe_count)
      .def_property_readonly("accepted_detections", &DualGraphManager::accepted_detections)
      .def_property_readonly("node_count", [](const DualGraphManager& mgr) { return mgr.main_graph().node_count(); })
      .def_property_readonly("edge_count", [](const DualGraphManager& mgr) { return mgr.main_graph().edge_count(); })
      .def("dump_graph", [](const DualGraphManager& mgr) { return dump_graph(mgr.main_graph()); });
}
