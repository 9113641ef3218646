#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hiloc/cli.h"
#include "hiloc/dataset.h"
#include "hiloc/error.h"
#include "hiloc/eval.h"
#include "hiloc/geometry.h"
#include "hiloc/jacobian_check.h"
#include "hiloc/pipeline.h"

namespace py = pybind11;
using namespace hiloc;

namespace {

using TumRows = Eigen::Matrix<double, Eigen::Dynamic, 8, Eigen::RowMajor>;

Trajectory FromRows(const TumRows& rows) {
  Trajectory t;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto r = rows.row(i);
    t.samples.push_back({r[0], Pose::FromQuaternion(Eigen::Quaterniond(r[7], r[4], r[5], r[6]),
                                                    Vec3(r[1], r[2], r[3]))});
  }
  t.Validate();
  return t;
}

TumRows ToRows(const Trajectory& t) {
  TumRows rows(t.size(), 8);
  for (size_t i = 0; i < t.size(); ++i) {
    const Pose& p = t.samples[i].pose;
    const Eigen::Quaterniond q = p.quaternion();
    rows.row(i) << t.samples[i].timestamp, p.translation().x(), p.translation().y(),
        p.translation().z(), q.x(), q.y(), q.z(), q.w();
  }
  return rows;
}

Eigen::Matrix4d ToMatrix(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = p.rotation();
  m.topRightCorner<3, 1>() = p.translation();
  return m;
}

Config ToConfig(const std::map<std::string, std::string>& values) {
  Config c;
  for (const auto& [k, v] : values) c.Set(k, v);
  return c;
}

}  // namespace

PYBIND11_MODULE(_hiloc, m) {
  m.doc() = "Hierarchical visual localization core";

  static py::exception<Error> error(m, "HilocError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("se3_exp", [](const Vec6& xi) { return ToMatrix(Se3Exp(xi)); }, py::arg("twist"),
        "4x4 matrix of Exp(twist); twist is (translation, rotation).");
  m.def("se3_log",
        [](const Eigen::Matrix4d& t) {
          return Se3Log(Pose(t.topLeftCorner<3, 3>(), t.topRightCorner<3, 1>()));
        },
        py::arg("matrix"));
  m.def("project",
        [](const Eigen::Matrix4d& t, const Eigen::Vector4d& k, int width, int height,
           const Vec3& x) {
          const CameraIntrinsics cam{k[0], k[1], k[2], k[3], width, height};
          return Project(Pose(t.topLeftCorner<3, 3>(), t.topRightCorner<3, 1>()), cam, x);
        },
        py::arg("world_to_camera"), py::arg("fx_fy_cx_cy"), py::arg("width"),
        py::arg("height"), py::arg("point"));

  m.def("ate",
        [](const TumRows& est, const TumRows& gt, double max_dt) {
          return AbsoluteTrajectoryError(FromRows(est), FromRows(gt), max_dt).rmse;
        },
        py::arg("est"), py::arg("gt"), py::arg("max_dt") = 0.02,
        "ATE RMSE of N x 8 TUM arrays after rigid alignment.");
  m.def("rpe",
        [](const TumRows& est, const TumRows& gt, int delta, double max_dt) {
          return RelativePoseError(FromRows(est), FromRows(gt), delta, max_dt).rmse;
        },
        py::arg("est"), py::arg("gt"), py::arg("delta") = 1, py::arg("max_dt") = 0.02);
  m.def("load_tum", [](const std::string& path) { return ToRows(LoadTum(path)); },
        py::arg("path"));

  m.def("check_jacobians",
        [](std::uint64_t seed, int trials) {
          const JacobianCheckReport r = CheckJacobians(seed, trials);
          py::dict d;
          for (const auto& e : r.entries) d[py::str(e.name)] = e.max_relative_error;
          return py::make_tuple(r.passed, d);
        },
        py::arg("seed") = 0, py::arg("trials") = 1000);

  m.def("synthesize",
        [](const std::map<std::string, std::string>& config, const std::string& out_dir) {
          const SynthSettings s = SynthSettings::FromConfig(ToConfig(config));
          const SynthDataset d = GenerateDataset(s);
          WriteDataset(out_dir, s, d);
          return d.sequence.frames.size();
        },
        py::arg("config"), py::arg("out_dir"),
        "Write a synthetic dataset; config holds key=value strings.");

  m.def("localize",
        [](const std::string& dataset_dir, const std::string& prior_map,
           const std::map<std::string, std::string>& overrides) {
          const Dataset dataset = OpenDataset(dataset_dir);
          const PipelineConfig pc = MakePipelineConfig(ToConfig(overrides), dataset);
          std::shared_ptr<const VisualMap> prior;
          if (!prior_map.empty()) prior = std::make_shared<const VisualMap>(LoadMap(prior_map));
          Localizer loc(pc, prior);
          {
            py::gil_scoped_release release;
            for (int i = 0; i < dataset.frame_count; ++i) loc.ProcessFrame(LoadFrame(dataset, i));
            loc.Finish();
          }
          return ToRows(loc.trajectory());
        },
        py::arg("dataset_dir"), py::arg("prior_map") = "",
        py::arg("overrides") = std::map<std::string, std::string>{},
        "Camera-to-world trajectory (N x 8 TUM rows); odometry when prior_map is empty.");

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int code = RunCli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a hiloc command in-process: (exit_code, stdout, stderr).");
}
