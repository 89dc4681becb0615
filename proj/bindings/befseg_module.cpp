#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "befseg/config.hpp"
#include "befseg/train.hpp"
#include "befseg/verify.hpp"

namespace py = pybind11;
using namespace befseg;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& a, bool requires_grad) {
    Shape shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t d = 0; d < a.ndim(); ++d)
        shape[static_cast<std::size_t>(d)] = static_cast<std::size_t>(a.shape(d));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from_vector(std::move(shape), std::move(data), requires_grad);
}

py::array_t<double> array_from(const std::vector<double>& values, const Shape& shape) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    py::array_t<double> out(dims);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

Image image_from_array(const DoubleArray& a) {
    if (a.ndim() != 3 || a.shape(0) != 3)
        throw std::invalid_argument("image must have shape [3, height, width]");
    Image img{static_cast<std::size_t>(a.shape(1)), static_cast<std::size_t>(a.shape(2)), {}};
    img.pixels.assign(a.data(), a.data() + a.size());
    return img;
}

LabelMap labels_from_array(const LabelArray& a) {
    if (a.ndim() != 2) throw std::invalid_argument("labels must have shape [height, width]");
    LabelMap lm{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}};
    lm.labels.assign(a.data(), a.data() + a.size());
    return lm;
}

py::array_t<std::uint8_t> labels_to_array(const LabelMap& lm) {
    py::array_t<std::uint8_t> out({py::ssize_t(lm.height), py::ssize_t(lm.width)});
    std::copy(lm.labels.begin(), lm.labels.end(), out.mutable_data());
    return out;
}

ModelConfig config_from_kwargs(std::size_t image_size, std::size_t num_classes,
                               std::size_t num_scales, std::vector<std::size_t> channels,
                               std::size_t queries, std::size_t query_dim,
                               std::size_t decoder_rounds) {
    ModelConfig mc;
    mc.image_size = image_size;
    mc.num_classes = num_classes;
    mc.num_scales = num_scales;
    mc.channels = std::move(channels);
    mc.num_queries = queries;
    mc.query_dim = query_dim;
    mc.decoder_rounds = decoder_rounds;
    mc.validate();
    return mc;
}

}  // namespace

PYBIND11_MODULE(_befseg, m) {
    m.doc() = "boundary-enhanced segmentation core";

    py::class_<Tensor>(m, "Tensor")
        .def_property_readonly("shape",
                               [](const Tensor& t) {
                                   py::tuple s(t.rank());
                                   for (std::size_t i = 0; i < t.rank(); ++i)
                                       s[i] = t.shape()[i];
                                   return s;
                               })
        .def_property_readonly("requires_grad", &Tensor::requires_grad)
        .def_property_readonly(
            "values", [](const Tensor& t) { return array_from(t.values(), t.shape()); })
        .def_property_readonly("grad",
                               [](const Tensor& t) { return array_from(t.grad(), t.shape()); })
        .def("item", &Tensor::item)
        .def("__repr__", [](const Tensor& t) {
            std::string s = "Tensor(shape=[";
            for (std::size_t i = 0; i < t.rank(); ++i)
                s += (i ? ", " : "") + std::to_string(t.shape()[i]);
            return s + "], requires_grad=" + (t.requires_grad() ? "True" : "False") + ")";
        });

    m.def(
        "tensor",
        [](const DoubleArray& a, bool requires_grad) {
            return tensor_from_array(a, requires_grad);
        },
        py::arg("data"), py::arg("requires_grad") = false,
        "Build a tensor from any array-like of float64");

    // the differentiable operations most useful from a notebook
    m.def("add", &add);
    m.def("sub", &sub);
    m.def("mul", &mul);
    m.def("matmul", &matmul);
    m.def("sigmoid", &sigmoid);
    m.def("silu", &silu);
    m.def("softmax", &softmax_lastdim);
    m.def("global_avg_pool", &global_avg_pool);
    m.def("sum_all", &sum_all);
    m.def("mean_all", &mean_all);
    m.def(
        "conv2d",
        [](const Tensor& x, const Tensor& k, std::size_t stride) {
            return conv2d(x, k, stride);
        },
        py::arg("x"), py::arg("kernel"), py::arg("stride") = 1);
    m.def("backward", &backward, py::arg("loss"),
          "Accumulate gradients of a scalar loss into every leaf that requires them");

    m.def(
        "sobel_edge",
        [](const DoubleArray& image) {
            EdgeMap e = sobel_edge(image_from_array(image));
            return array_from(e.values, {e.height, e.width});
        },
        py::arg("image"), "Normalized gradient-magnitude edge map of a [3,H,W] image");

    m.def(
        "generate_scene",
        [](std::uint64_t seed, std::size_t height, std::size_t width,
           std::size_t num_classes) {
            SceneSpec spec;
            spec.height = height;
            spec.width = width;
            spec.num_classes = num_classes;
            Rng rng(seed);
            Sample s = generate_scene(spec, rng);
            return py::make_tuple(array_from(s.image.pixels, {3, height, width}),
                                  labels_to_array(s.labels));
        },
        py::arg("seed"), py::arg("height") = 64, py::arg("width") = 64,
        py::arg("num_classes") = 4,
        "One synthetic scene: ([3,H,W] float64 image, [H,W] uint8 labels)");

    m.def(
        "report_metrics",
        [](const LabelArray& pred, const LabelArray& gt, std::size_t num_classes) {
            ConfusionAccumulator acc(num_classes);
            LabelMap p = labels_from_array(pred), g = labels_from_array(gt);
            accumulate(p, g, acc);
            MetricsReport r = report(acc);
            r.boundary_f1 = boundary_f1(p, g);
            py::dict per;
            for (std::size_t c = 0; c < r.per_class.size(); ++c)
                per[py::str(std::to_string(c))] =
                    py::dict(py::arg("iou") = r.per_class[c].iou,
                             py::arg("dice") = r.per_class[c].dice,
                             py::arg("recall") = r.per_class[c].recall);
            return py::dict(py::arg("miou") = r.miou, py::arg("mdice") = r.mdice,
                            py::arg("mrecall") = r.mrecall,
                            py::arg("boundary_f1") = r.boundary_f1,
                            py::arg("per_class") = per);
        },
        py::arg("pred"), py::arg("gt"), py::arg("num_classes") = 4,
        "Confusion-based segmentation metrics for one prediction");

    m.def(
        "boundary_f1",
        [](const LabelArray& pred, const LabelArray& gt, std::size_t tolerance) {
            LabelMap p = labels_from_array(pred), g = labels_from_array(gt);
            return boundary_f1(p, g, tolerance);
        },
        py::arg("pred"), py::arg("gt"), py::arg("tolerance") = 1);

    py::class_<Model>(m, "Model")
        .def(py::init([](std::uint64_t seed, std::size_t image_size, std::size_t num_classes,
                         std::size_t num_scales, std::vector<std::size_t> channels,
                         std::size_t queries, std::size_t query_dim,
                         std::size_t decoder_rounds) {
                 ModelConfig mc =
                     config_from_kwargs(image_size, num_classes, num_scales,
                                        std::move(channels), queries, query_dim,
                                        decoder_rounds);
                 Rng rng(seed);
                 return std::make_unique<Model>(mc, rng);
             }),
             py::arg("seed") = 0, py::arg("image_size") = 64, py::arg("num_classes") = 4,
             py::arg("num_scales") = 3,
             py::arg("channels") = std::vector<std::size_t>{16, 32, 64},
             py::arg("queries") = 4, py::arg("query_dim") = 32, py::arg("decoder_rounds") = 2)
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def(
            "predict",
            [](const Model& model, const DoubleArray& image) {
                NoGradGuard ng;
                ForwardResult fwd = model.forward(image_from_array(image));
                return labels_to_array(semantic_argmax(fwd.masks_full));
            },
            py::arg("image"), "Per-pixel class labels for a [3,H,W] image")
        .def(
            "masks",
            [](const Model& model, const DoubleArray& image) {
                NoGradGuard ng;
                ForwardResult fwd = model.forward(image_from_array(image));
                return array_from(fwd.masks_full.values(), fwd.masks_full.shape());
            },
            py::arg("image"), "Per-query soft masks [K,H,W] at image resolution")
        .def(
            "loss",
            [](const Model& model, const DoubleArray& image, const LabelArray& labels,
               double lambda1, double lambda2, double lambda3) {
                Image img = image_from_array(image);
                LabelMap gt = labels_from_array(labels);
                NoGradGuard ng;
                ForwardResult fwd = model.forward(img);
                LossBreakdown bd;
                model.loss(fwd, gt, model.edge_targets(img),
                           LossWeights{lambda1, lambda2, lambda3}, &bd);
                return py::dict(py::arg("total") = bd.total, py::arg("cls") = bd.cls,
                                py::arg("mask") = bd.mask, py::arg("edge") = bd.edge);
            },
            py::arg("image"), py::arg("labels"), py::arg("lambda1") = 1.0,
            py::arg("lambda2") = 1.0, py::arg("lambda3") = 0.1,
            "Composite loss terms for one labeled image")
        .def("save", &Model::save, py::arg("path"))
        .def("load", &Model::load, py::arg("path"));

    m.def(
        "run_verification",
        [](bool inject_fault) {
            py::list out;
            for (const verify::CheckResult& r : verify::run_all(inject_fault))
                out.append(py::dict(py::arg("name") = r.name, py::arg("passed") = r.pass,
                                    py::arg("detail") = r.detail));
            return out;
        },
        py::arg("inject_fault") = false,
        "Run the numerical verification suite; each entry reports one check");
}
