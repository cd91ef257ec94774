// Python bindings for the gateadapt core: pose algebra, dataset generation,
// model training and evaluation. Heavy entry points release the GIL.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gateadapt/config.hpp"
#include "gateadapt/dataset.hpp"
#include "gateadapt/errors.hpp"
#include "gateadapt/eval.hpp"
#include "gateadapt/nn.hpp"
#include "gateadapt/pose.hpp"
#include "gateadapt/rng.hpp"
#include "gateadapt/sim.hpp"
#include "gateadapt/train.hpp"

namespace py = pybind11;
using namespace gateadapt;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Mat3 mat3_of(const DArray& a) {
  if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 3)
    throw ShapeMismatch("rotation must be a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = a.at(r, c);
  return m;
}

Vec3 vec3_of(const DArray& a) {
  if (a.ndim() != 1 || a.shape(0) != 3)
    throw ShapeMismatch("translation must be a length-3 array");
  return Vec3(a.at(0), a.at(1), a.at(2));
}

DArray array_of_mat3(const Mat3& m) {
  DArray a({3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.mutable_at(r, c) = m(r, c);
  return a;
}

DArray array_of_vec3(const Vec3& v) {
  DArray a(3);
  for (int i = 0; i < 3; ++i) a.mutable_at(i) = v(i);
  return a;
}

// pybind-owned wrapper so checkpoints can move between stages as one object
struct Model {
  ModelParams params;
};

const std::vector<Sequence>& split_of(const Dataset& ds,
                                      const std::string& name) {
  if (name == "sim_train") return ds.sim_train;
  if (name == "sim_val") return ds.sim_val;
  if (name == "real_train") return ds.real_train;
  if (name == "real_val") return ds.real_val;
  if (name == "real_test") return ds.real_test;
  throw ConfigInvalid("unknown split \"" + name + "\"");
}

const Sample& sample_of(const Dataset& ds, const std::string& split, int seq,
                        int frame) {
  const std::vector<Sequence>& s = split_of(ds, split);
  if (seq < 0 || seq >= static_cast<int>(s.size()))
    throw ShapeMismatch("sequence index out of range");
  const Sequence& sq = s[static_cast<std::size_t>(seq)];
  if (frame < 0 || frame >= static_cast<int>(sq.samples.size()))
    throw ShapeMismatch("frame index out of range");
  return sq.samples[static_cast<std::size_t>(frame)];
}

py::dict dict_of_metrics(const EvalMetrics& m) {
  py::dict d;
  d["mse_xyz_cm2"] = m.mse_xyz_cm2;
  d["mae_x_cm"] = m.mae_x_cm;
  d["mae_y_cm"] = m.mae_y_cm;
  d["mae_z_cm"] = m.mae_z_cm;
  d["mae_yaw_deg"] = m.mae_yaw_deg;
  d["rho_x"] = m.rho_x ? py::cast(*m.rho_x) : py::none();
  d["rho_y"] = m.rho_y ? py::cast(*m.rho_y) : py::none();
  d["rho_z"] = m.rho_z ? py::cast(*m.rho_z) : py::none();
  d["rho_yaw"] = m.rho_yaw ? py::cast(*m.rho_yaw) : py::none();
  d["n_test"] = m.n_test;
  return d;
}

py::list list_of_curves(const std::vector<EpochStats>& curves) {
  py::list out;
  for (const EpochStats& e : curves) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["train_loss"] = e.train_loss;
    d["val_loss"] = e.val_loss;
    d["wall_seconds"] = e.wall_seconds;
    out.append(d);
  }
  return out;
}

Pose predict_one(const Model& model, const DArray& frame) {
  if (frame.ndim() != 2) throw ShapeMismatch("frame must be a 2-d array");
  Tensor batch({1, 1, frame.shape(0), frame.shape(1)});
  const auto n = static_cast<std::size_t>(frame.size());
  const double* src = frame.data();
  std::copy(src, src + n, batch.data.begin());
  const ForwardResult fwd = forward_eval(model.params, batch);
  PoseVector9 enc;
  for (int i = 0; i < 9; ++i) enc.v(i) = fwd.out.data[static_cast<std::size_t>(i)];
  return vector9_to_pose(enc);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Self-supervised sim-to-real adaptation for gate pose regression";

  py::register_exception<ConfigInvalid>(m, "ConfigError", PyExc_ValueError);

  // ---- pose algebra -------------------------------------------------------
  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def_static(
          "from_parts",
          [](const DArray& rotation, const DArray& translation) {
            return Pose(Rotation(mat3_of(rotation)), vec3_of(translation));
          },
          py::arg("rotation"), py::arg("translation"))
      .def_static(
          "from_euler",
          [](double yaw, double pitch, double roll, const DArray& translation) {
            return Pose(rot_zyx(yaw, pitch, roll), vec3_of(translation));
          },
          py::arg("yaw"), py::arg("pitch") = 0.0, py::arg("roll") = 0.0,
          py::arg("translation") = DArray(3))
      .def_property_readonly(
          "rotation", [](const Pose& p) { return array_of_mat3(p.rot.m); })
      .def_property_readonly(
          "translation", [](const Pose& p) { return array_of_vec3(p.t); })
      .def_property_readonly("yaw",
                             [](const Pose& p) { return yaw_of(p).radians; })
      .def("__matmul__",
           [](const Pose& a, const Pose& b) { return compose(a, b); })
      .def("inverse", [](const Pose& p) { return inverse(p); })
      .def("__repr__", [](const Pose& p) {
        const YawAngle y = yaw_of(p);
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "Pose(t=[%.4g, %.4g, %.4g], yaw=%.4g)", p.t.x(), p.t.y(),
                      p.t.z(), y.radians);
        return std::string(buf);
      });

  m.def("wrap_angle", &wrap_angle, py::arg("radians"),
        "Wrap an angle to (-pi, pi]; ties map to +pi.");
  m.def("compose", &compose, py::arg("a"), py::arg("b"),
        "Chain two pose maps: (compose(a, b))(p) = a(b(p)).");
  m.def("inverse", &inverse, py::arg("p"));
  m.def("warp_prediction", &warp_prediction, py::arg("p1_hat"), py::arg("o1"),
        py::arg("o2"),
        "Transport a relative gate pose from odometry frame o1 to o2.");
  m.def(
      "yaw_of",
      [](const Pose& p) {
        const YawAngle y = yaw_of(p);
        return py::make_tuple(y.radians, y.gimbal_lock);
      },
      py::arg("p"), "Yaw of the pose as (radians, gimbal_lock).");
  m.def(
      "pose_to_vector9",
      [](const Pose& p) {
        const PoseVector9 enc = pose_to_vector9(p);
        DArray a(9);
        for (int i = 0; i < 9; ++i) a.mutable_at(i) = enc.v(i);
        return a;
      },
      py::arg("p"), "Encode a pose as [t, first two rotation columns].");
  m.def(
      "vector9_to_pose",
      [](const DArray& v) {
        if (v.ndim() != 1 || v.shape(0) != 9)
          throw ShapeMismatch("encoding must be a length-9 array");
        PoseVector9 enc;
        for (int i = 0; i < 9; ++i) enc.v(i) = v.at(i);
        return vector9_to_pose(enc);
      },
      py::arg("v"), "Decode a 9-vector back to a pose (Gram-Schmidt).");

  // ---- configuration ------------------------------------------------------
  py::class_<ExperimentConfig>(m, "Config")
      .def_property_readonly("json", &experiment_config_json)
      .def("__repr__", [](const ExperimentConfig& c) {
        return "Config(" + experiment_config_json(c) + ")";
      });
  m.def("parse_config", &parse_experiment_config, py::arg("text"),
        "Parse an experiment config from a JSON string (strict).");
  m.def("load_config", &load_experiment_config, py::arg("path"),
        "Read and parse an experiment config file.");

  // ---- datasets -----------------------------------------------------------
  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("counts",
                             [](const Dataset& ds) {
                               py::dict d;
                               d["sim_train"] = ds.sim_train.size();
                               d["sim_val"] = ds.sim_val.size();
                               d["real_train"] = ds.real_train.size();
                               d["real_val"] = ds.real_val.size();
                               d["real_test"] = ds.real_test.size();
                               return d;
                             })
      .def(
          "n_frames",
          [](const Dataset& ds, const std::string& split, int seq) {
            const auto& s = split_of(ds, split);
            if (seq < 0 || seq >= static_cast<int>(s.size()))
              throw ShapeMismatch("sequence index out of range");
            return s[static_cast<std::size_t>(seq)].samples.size();
          },
          py::arg("split"), py::arg("seq"))
      .def(
          "frame",
          [](const Dataset& ds, const std::string& split, int seq, int frame) {
            const auto& s = split_of(ds, split);
            if (seq < 0 || seq >= static_cast<int>(s.size()))
              throw ShapeMismatch("sequence index out of range");
            const Sequence& sq = s[static_cast<std::size_t>(seq)];
            if (frame < 0 || frame >= static_cast<int>(sq.samples.size()))
              throw ShapeMismatch("frame index out of range");
            const Image img = sq.image(static_cast<std::size_t>(frame));
            DArray a({img.h, img.w});
            std::copy(img.pixels.begin(), img.pixels.end(), a.mutable_data());
            return a;
          },
          py::arg("split"), py::arg("seq"), py::arg("frame"),
          "Dequantized frame as an (H, W) float array in [0, 1].")
      .def(
          "odom",
          [](const Dataset& ds, const std::string& split, int seq, int frame) {
            return sample_of(ds, split, seq, frame).odom;
          },
          py::arg("split"), py::arg("seq"), py::arg("frame"))
      .def(
          "gt_pose",
          [](const Dataset& ds, const std::string& split, int seq,
             int frame) -> std::optional<Pose> {
            return sample_of(ds, split, seq, frame).gt_gate;
          },
          py::arg("split"), py::arg("seq"), py::arg("frame"),
          "Ground-truth gate pose, or None on unlabeled real frames.");

  m.def(
      "generate_dataset",
      [](const ExperimentConfig& cfg) {
        py::gil_scoped_release release;
        return generate_dataset(cfg.dataset);
      },
      py::arg("config"));
  m.def(
      "save_dataset",
      [](const std::string& dir, const Dataset& ds, const ExperimentConfig& cfg) {
        save_dataset(dir, ds, cfg.dataset);
      },
      py::arg("dir"), py::arg("dataset"), py::arg("config"));
  m.def("load_dataset", &load_dataset, py::arg("dir"));

  // ---- models -------------------------------------------------------------
  py::class_<Model>(m, "Model")
      .def_property_readonly(
          "input_size", [](const Model& m_) { return m_.params.cfg.input_size; })
      .def_property_readonly(
          "n_params", [](const Model& m_) { return m_.params.values.size(); })
      .def("predict", &predict_one, py::arg("frame"),
           "Eval-mode pose prediction for one (H, W) frame in [0, 1].");

  m.def(
      "init_model",
      [](const ExperimentConfig& cfg, std::uint64_t seed) {
        return Model{init_model(cfg.model, seed)};
      },
      py::arg("config"), py::arg("seed"));
  m.def(
      "save_checkpoint",
      [](const std::string& path, const Model& model) {
        save_checkpoint(path, model.params);
      },
      py::arg("path"), py::arg("model"));
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        return Model{load_checkpoint(path).params};
      },
      py::arg("path"));

  // ---- training -----------------------------------------------------------
  m.def(
      "pretrain",
      [](const ExperimentConfig& cfg, const Model& init, const Dataset& ds) {
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return pretrain(cfg.pretrain, init.params, ds.sim_train, ds.sim_val);
        }();
        return py::make_tuple(Model{std::move(r.best)}, list_of_curves(r.curves));
      },
      py::arg("config"), py::arg("init"), py::arg("dataset"),
      "Supervised sim pretraining; returns (best_model, curves).");
  m.def(
      "finetune",
      [](const ExperimentConfig& cfg, const Model& start, const Dataset& ds) {
        TrainResult r = [&] {
          py::gil_scoped_release release;
          return finetune_sc(cfg.finetune, start.params, ds.real_train,
                             ds.real_val, cfg.sampler);
        }();
        return py::make_tuple(Model{std::move(r.best)}, list_of_curves(r.curves));
      },
      py::arg("config"), py::arg("start"), py::arg("dataset"),
      "Self-supervised fine-tuning on real sequences; returns "
      "(best_model, curves).");
  m.def(
      "mean_predictor_pose",
      [](const Dataset& ds) {
        std::vector<Pose> gts;
        for (const Sequence& seq : ds.real_test)
          for (const Sample& s : seq.samples)
            if (s.gt_gate) gts.push_back(*s.gt_gate);
        return vector9_to_pose(mean_predictor(gts));
      },
      py::arg("dataset"),
      "Constant baseline pose: mean over the test labels.");

  // ---- evaluation ---------------------------------------------------------
  m.def(
      "evaluate_model",
      [](const Model& model, const Dataset& ds, const ExperimentConfig& cfg,
         bool pencil) {
        const Predictor pred = pencil ? Predictor::pencil_network(model.params)
                                      : Predictor::network(model.params);
        EvalMetrics metrics = [&] {
          py::gil_scoped_release release;
          return evaluate(pred, ds.real_test, cfg.calibration);
        }();
        return dict_of_metrics(metrics);
      },
      py::arg("model"), py::arg("dataset"), py::arg("config"),
      py::arg("pencil") = false,
      "Calibrated test-set metrics for a network checkpoint.");
  m.def(
      "evaluate_constant",
      [](const Pose& pose, const Dataset& ds, const ExperimentConfig& cfg) {
        return dict_of_metrics(evaluate(
            Predictor::constant_pose(pose_to_vector9(pose)), ds.real_test,
            cfg.calibration));
      },
      py::arg("pose"), py::arg("dataset"), py::arg("config"),
      "Calibrated test-set metrics for a constant-pose predictor.");
}
