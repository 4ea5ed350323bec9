// Copyright 2026 The trspose Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "trs/augment.hpp"
#include "trs/config.hpp"
#include "trs/datagen.hpp"
#include "trs/heatmap.hpp"
#include "trs/model.hpp"
#include "trs/trainer.hpp"

namespace py = pybind11;

namespace {

using Overrides = std::map<std::string, std::string>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

trs::RunConfig make_config(const Overrides& overrides) {
  trs::RunConfig cfg;
  for (const auto& [key, value] : overrides) trs::set_config_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

template <typename T>
py::array_t<T> grid_to_array(const trs::Grid<T>& g, bool drop_channel = false) {
  std::vector<py::ssize_t> shape;
  if (!drop_channel) shape.push_back(g.channels);
  shape.push_back(g.height);
  shape.push_back(g.width);
  py::array_t<T> out(shape);
  std::memcpy(out.mutable_data(), g.data.data(), g.data.size() * sizeof(T));
  return out;
}

trs::Image image_from_array(const FloatArray& a) {
  if (a.ndim() != 2) throw trs::ShapeError("image must be a 2-D (height, width) array");
  trs::Image img(1, static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(img.data.data(), a.data(), img.data.size() * sizeof(float));
  return img;
}

py::array_t<double> pose_to_array(const trs::Pose& pose) {
  py::array_t<double> out({static_cast<py::ssize_t>(pose.size()), py::ssize_t{3}});
  auto r = out.mutable_unchecked<2>();
  for (int j = 0; j < pose.size(); ++j) {
    r(j, 0) = pose[j].x;
    r(j, 1) = pose[j].y;
    r(j, 2) = pose[j].visible ? 1.0 : 0.0;
  }
  return out;
}

trs::Pose pose_from_array(const DoubleArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw trs::ShapeError("keypoints must have shape (joints, 3)");
  auto r = a.unchecked<2>();
  trs::Pose pose(static_cast<int>(a.shape(0)));
  for (int j = 0; j < pose.size(); ++j) pose[j] = {r(j, 0), r(j, 1), r(j, 2) > 0.0};
  return pose;
}

py::dict samples_to_dict(const std::vector<trs::Sample>& samples) {
  py::list images, poses;
  for (const trs::Sample& s : samples) {
    images.append(grid_to_array(s.image, true));
    poses.append(s.pose ? py::object(pose_to_array(*s.pose)) : py::object(py::none()));
  }
  py::dict d;
  d["images"] = images;
  d["keypoints"] = poses;
  return d;
}

py::dict metrics_to_dict(const trs::MetricsRow& r) {
  py::dict d;
  d["iteration"] = r.iteration;
  d["loss_sup"] = r.loss_sup;
  d["loss_un1"] = r.loss_un1;
  d["loss_un2"] = r.loss_un2;
  d["loss_total"] = r.loss_total;
  d["pck_g"] = r.pck_g;
  d["pck_f"] = r.pck_f;
  d["pck_mean"] = r.pck_mean;
  d["pck_r1"] = r.pck_r1;
  d["pck_r2"] = r.pck_r2;
  return d;
}

class PyNetwork {
 public:
  explicit PyNetwork(const Overrides& overrides) : net_(make_config(overrides).arch) {}

  std::size_t parameter_count() const { return net_.layout()->total; }

  py::array_t<float> init(std::uint64_t seed) const {
    const trs::ParameterSet<float> p = net_.init(seed);
    py::array_t<float> out(static_cast<py::ssize_t>(p.size()));
    std::memcpy(out.mutable_data(), p.values.data(), p.size() * sizeof(float));
    return out;
  }

  py::tuple forward(const FloatArray& params, const FloatArray& image) const {
    if (params.ndim() != 1 || static_cast<std::size_t>(params.shape(0)) != parameter_count())
      throw trs::ShapeError("params must be a flat array of " + std::to_string(parameter_count()) + " values");
    trs::ParameterSet<float> p{net_.layout(), std::vector<float>(params.data(), params.data() + params.shape(0))};
    const trs::Image img = image_from_array(image);
    trs::MultiLevelOutput<float> out;
    {
      py::gil_scoped_release release;
      out = net_.forward(p, img);
    }
    return py::make_tuple(grid_to_array(out.level_z.values), grid_to_array(out.level_p.values));
  }

 private:
  trs::Network<float> net_;
};

py::dict train(const Overrides& overrides) {
  const trs::RunConfig cfg = make_config(overrides);
  const trs::SkeletonConfig skeleton = cfg.skeleton();
  const trs::Network<float> net(cfg.arch);
  trs::TrainResult<float> result;
  std::map<std::string, double> totals;
  std::map<std::string, std::string> hashes;
  {
    py::gil_scoped_release release;
    const trs::DatasetSplit split = trs::build_split(cfg.data_seed, cfg.n_labeled, cfg.n_unlabeled, skeleton);
    const std::vector<trs::Sample> validation =
        trs::build_validation(cfg.data_seed, cfg.n_labeled, cfg.n_unlabeled, cfg.n_validation, skeleton);
    result = trs::train(net, split, validation, cfg.training, cfg.pck_reference());
    for (trs::Which w : {trs::Which::g, trs::Which::f, trs::Which::r1, trs::Which::r2, trs::Which::mean_gf}) {
      totals[trs::which_name(w)] = trs::evaluate(net, result.state.ensemble, std::span<const trs::Sample>(validation),
                                                 w, cfg.training.pck_threshold, cfg.pck_reference())
                                       .total;
    }
    for (trs::Role r : trs::kAllRoles) hashes[trs::role_name(r)] = trs::value_hash(result.state.ensemble[r]);
  }
  py::list rows;
  for (const trs::MetricsRow& r : result.history) rows.append(metrics_to_dict(r));
  py::dict out;
  out["iteration"] = result.state.ensemble.iteration;
  out["history"] = rows;
  out["pck"] = totals;
  out["value_hash"] = hashes;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-network semi-supervised keypoint heatmap training.";

  py::register_exception<trs::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<trs::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<trs::InsufficientKeypoints>(m, "InsufficientKeypoints", PyExc_ValueError);

  m.def("version", &trs::version_string);

  m.def(
      "config_keys",
      [] {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const trs::ConfigKey& k : trs::config_keys()) out.emplace_back(k.name, k.default_text, k.help);
        return out;
      },
      "(name, default, help) for every configuration key.");

  m.def(
      "config_json", [](const Overrides& overrides) { return trs::to_json(make_config(overrides)).dump(); },
      py::arg("overrides") = Overrides{}, "Validated configuration with overrides applied, as JSON text.");

  m.def(
      "generate_split",
      [](std::uint64_t seed, int labeled, int unlabeled, int width, int height) {
        const trs::SkeletonConfig skeleton = trs::SkeletonConfig::stick_figure(width, height);
        skeleton.validate();
        const trs::DatasetSplit split = trs::build_split(seed, labeled, unlabeled, skeleton);
        py::dict d;
        d["labeled"] = samples_to_dict(split.labeled);
        d["unlabeled"] = samples_to_dict(split.unlabeled);
        d["joint_names"] = skeleton.joint_names;
        return d;
      },
      py::arg("seed") = 0, py::arg("labeled") = 200, py::arg("unlabeled") = 2000, py::arg("width") = 64,
      py::arg("height") = 64, "Synthetic stick-figure images; keypoints are (joints, 3) arrays of x, y, visible.");

  m.def(
      "encode_heatmaps",
      [](const DoubleArray& keypoints, double sigma, int height, int width, int stride) {
        return grid_to_array(trs::encode<double>(pose_from_array(keypoints), sigma, height, width, stride).values);
      },
      py::arg("keypoints"), py::arg("sigma"), py::arg("height"), py::arg("width"), py::arg("stride"));

  m.def(
      "decode_heatmaps",
      [](const DoubleArray& heatmaps, int stride, double confidence_floor) {
        if (heatmaps.ndim() != 3) throw trs::ShapeError("heatmaps must have shape (joints, height, width)");
        trs::HeatmapStack<double> stack;
        stack.stride = stride;
        stack.values = trs::Grid<double>(static_cast<int>(heatmaps.shape(0)), static_cast<int>(heatmaps.shape(1)),
                                         static_cast<int>(heatmaps.shape(2)));
        std::memcpy(stack.values.data.data(), heatmaps.data(), stack.values.data.size() * sizeof(double));
        return pose_to_array(trs::decode(stack, confidence_floor));
      },
      py::arg("heatmaps"), py::arg("stride"), py::arg("confidence_floor") = trs::kDefaultConfidenceFloor);

  m.def(
      "keypoint_mix",
      [](const FloatArray& image, const DoubleArray& keypoints, int k, int patch_half, std::uint64_t seed) {
        trs::Rng rng(seed);
        const trs::KeypointMixResult r =
            trs::keypoint_mix(image_from_array(image), pose_from_array(keypoints), k, patch_half, rng);
        return py::make_tuple(grid_to_array(r.image, true), r.joints);
      },
      py::arg("image"), py::arg("keypoints"), py::arg("k"), py::arg("patch_half"), py::arg("seed") = 0,
      "Returns the mixed image and the joints whose patches were averaged.");

  py::class_<PyNetwork>(m, "Network")
      .def(py::init<const Overrides&>(), py::arg("overrides") = Overrides{},
           "Network for the architecture given by arch.* overrides.")
      .def_property_readonly("parameter_count", &PyNetwork::parameter_count)
      .def("init", &PyNetwork::init, py::arg("seed"))
      .def("forward", &PyNetwork::forward, py::arg("params"), py::arg("image"),
           "Returns the (level_z, level_p) heatmaps, each (joints, height, width).");

  m.def("train", &train, py::arg("overrides") = Overrides{},
        "Trains on the synthetic split described by the overrides. Returns history, final PCK per network and "
        "value hashes.");
}
