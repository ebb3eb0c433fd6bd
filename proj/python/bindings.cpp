// NumPy-facing bindings. Images are float32 arrays [N, C, H, W] in [0, 1];
// labels are int32 arrays [N].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "tpap/attacks.hpp"
#include "tpap/checkpoint.hpp"
#include "tpap/cli.hpp"
#include "tpap/data.hpp"
#include "tpap/nn.hpp"
#include "tpap/purify.hpp"
#include "tpap/rng.hpp"

namespace py = pybind11;
using namespace tpap;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<Label, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() == 0) throw ShapeError("expected an array with at least one dimension");
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

Labels to_labels(const LabelArray& a) {
  if (a.ndim() != 1) throw ShapeError("labels must be one-dimensional");
  return Labels(a.data(), a.data() + a.size());
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<Label> to_array(const Labels& l) {
  py::array_t<Label> out(static_cast<py::ssize_t>(l.size()));
  std::copy(l.begin(), l.end(), out.mutable_data());
  return out;
}

Shape to_shape(const std::vector<std::size_t>& s) {
  if (s.size() != 3) throw ShapeError("input_shape must be (C, H, W)");
  return s;
}

}  // namespace

PYBIND11_MODULE(_tpap, m) {
  m.doc() = "Adversarial training, attacks and test-time purification";

  auto base = py::register_exception<Error>(m, "TpapError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_static(
          "small_cnn",
          [](const std::vector<std::size_t>& input_shape, std::size_t classes, std::uint64_t seed) {
            return Model(small_cnn_architecture(to_shape(input_shape), classes), seed);
          },
          py::arg("input_shape"), py::arg("num_classes"), py::arg("seed") = 0)
      .def_static(
          "mlp",
          [](const std::vector<std::size_t>& input_shape, const std::vector<std::size_t>& hidden, std::size_t classes,
             std::uint64_t seed) { return Model(mlp_architecture(to_shape(input_shape), hidden, classes), seed); },
          py::arg("input_shape"), py::arg("hidden"), py::arg("num_classes"), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; }, py::arg("path"))
      .def(
          "save",
          [](const Model& model, const std::filesystem::path& p, const std::string& tag) {
            CheckpointMeta meta;
            meta.tag = tag;
            save_checkpoint(model, meta, p);
          },
          py::arg("path"), py::arg("tag") = "python")
      .def_property_readonly("input_shape", [](const Model& model) { return model.input_shape(); })
      .def_property_readonly("num_classes", &Model::num_classes)
      .def_property_readonly("architecture", [](const Model& model) { return model.arch().to_text(); })
      .def("param_checksum", &Model::param_checksum)
      .def("logits", [](const Model& model, const FloatArray& x) { return to_array(forward_logits(model, to_tensor(x))); })
      .def("predict", [](const Model& model, const FloatArray& x) {
        return to_array(predict_labels(forward_logits(model, to_tensor(x))));
      });

  m.def(
      "cross_entropy",
      [](const FloatArray& logits, const LabelArray& labels) {
        return cross_entropy(to_tensor(logits), to_labels(labels));
      },
      py::arg("logits"), py::arg("labels"), "Mean softmax cross-entropy.");

  m.def(
      "fgsm",
      [](const Model& model, const FloatArray& x, const LabelArray& y, float epsilon) {
        return to_array(fgsm(model, to_tensor(x), to_labels(y), AttackSpec::fgsm(epsilon)));
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epsilon") = 8.0f / 255.0f);

  m.def(
      "pgd",
      [](const Model& model, const FloatArray& x, const LabelArray& y, float epsilon, int steps, float alpha,
         bool random_init, std::uint64_t seed) {
        Rng rng(seed);
        return to_array(pgd(model, to_tensor(x), to_labels(y), AttackSpec::pgd(epsilon, steps, alpha, random_init), rng));
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epsilon") = 8.0f / 255.0f, py::arg("steps") = 20,
      py::arg("alpha") = 2.0f / 255.0f, py::arg("random_init") = true, py::arg("seed") = 0);

  // No label argument: purification only ever sees the model's own prediction.
  m.def(
      "purify",
      [](const Model& model, const FloatArray& x, float xi) {
        const PurifyTrace t = purify_batch(model, to_tensor(x), PurifierSpec::radius(xi));
        return py::make_tuple(to_array(t.purified), to_array(t.pre_labels));
      },
      py::arg("model"), py::arg("x"), py::arg("xi") = 8.0f / 255.0f,
      "Returns (purified images, pre-predicted labels).");

  m.def(
      "tpap_predict",
      [](const Model& model, const FloatArray& x, float xi) {
        return to_array(tpap_predict(model, to_tensor(x), PurifierSpec::radius(xi)).labels);
      },
      py::arg("model"), py::arg("x"), py::arg("xi") = 8.0f / 255.0f);

  m.def(
      "make_blobs",
      [](std::size_t classes, std::size_t per_class, std::size_t dims, double separation, std::uint64_t seed) {
        const Dataset d = make_synthetic_blobs(classes, per_class, dims, separation, seed);
        return py::make_tuple(to_array(d.images), to_array(d.labels));
      },
      py::arg("num_classes"), py::arg("per_class"), py::arg("dims"), py::arg("separation") = 10.0,
      py::arg("seed") = 0, "Synthetic Gaussian blobs as (images [N,1,1,dims], labels).");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "tpap");
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a tpap subcommand; returns (exit code, stdout, stderr).");
}
