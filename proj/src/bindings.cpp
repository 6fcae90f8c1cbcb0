#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "uat/deep_taylor.hpp"
#include "uat/mc.hpp"
#include "uat/network.hpp"
#include "uat/pgm.hpp"
#include "uat/synthgen.hpp"
#include "uat/trainer.hpp"
#include "uat/triage.hpp"

namespace py = pybind11;

namespace {

uat::Tensor tensor_from_numpy(const py::array& arr) {
    auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(arr);
    if (!a) throw std::invalid_argument("expected a float-convertible array");
    std::vector<std::size_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape[i] = static_cast<std::size_t>(a.shape(i));
    uat::Tensor t(shape);
    std::copy(a.data(), a.data() + t.size(), t.data.begin());
    return t;
}

py::array_t<float> numpy_from_tensor(const uat::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

uat::Tensor as_image(const py::array& arr) {
    uat::Tensor t = tensor_from_numpy(arr);
    if (t.shape.size() == 2) t = t.reshaped({1, t.shape[0], t.shape[1]});
    if (t.shape.size() != 3)
        throw std::invalid_argument("image must be HxW or CxHxW");
    return t;
}

// Model bundles the layer config and its weights behind one handle.
struct Model {
    uat::ModelConfig config;
    uat::WeightSet weights;

    std::vector<std::string> class_names() const { return config.class_names; }

    std::vector<std::size_t> input_shape() const {
        return {config.input_shape[0], config.input_shape[1], config.input_shape[2]};
    }

    py::array_t<float> predict(const py::array& image) const {
        auto r = uat::forward(config, weights, as_image(image),
                              uat::ForwardMode::deterministic());
        return numpy_from_tensor(r.probs);
    }

    py::array_t<float> mc_predict(const py::array& image, std::size_t passes,
                                  std::uint64_t seed) const {
        auto s = uat::mc_predict(config, weights, as_image(image), passes, seed);
        return numpy_from_tensor(s.probs);
    }

    py::dict relevance(const py::array& image,
                       std::optional<std::size_t> target) const {
        auto map = uat::relevance(config, weights, as_image(image), target);
        py::dict d;
        d["relevance"] = numpy_from_tensor(map.relevance);
        d["normalized"] = numpy_from_tensor(uat::normalize_map(map));
        d["target_class"] = map.target_class;
        d["output_relevance"] = map.output_relevance;
        d["negative_logit"] = map.negative_logit;
        return d;
    }

    void save(const std::string& path) const {
        uat::save_weights(config, weights, path);
    }
};

Model load_model(const std::string& path) {
    auto [cfg, ws] = uat::load_weights(path);
    return {std::move(cfg), std::move(ws)};
}

uat::LabeledDataset dataset_from_python(const std::vector<py::array>& images,
                                        const std::vector<std::size_t>& labels,
                                        const std::vector<std::string>& class_names) {
    uat::LabeledDataset ds;
    ds.class_names = class_names;
    ds.labels = labels;
    for (const auto& img : images) ds.images.push_back(as_image(img));
    return ds;
}

std::pair<Model, py::array_t<double>> train_reference(
    const std::vector<py::array>& images, const std::vector<std::size_t>& labels,
    const std::vector<std::string>& class_names, std::size_t epochs, double lr,
    double momentum, std::size_t batch_size, double augment, double val_fraction,
    std::uint64_t seed) {
    auto ds = dataset_from_python(images, labels, class_names);
    if (ds.images.empty()) throw std::invalid_argument("train: no images");
    const auto& s = ds.images.front().shape;
    auto cfg = uat::build_reference_model({s[0], s[1], s[2]}, class_names);
    uat::TrainConfig tc;
    tc.epochs = epochs;
    tc.learning_rate = lr;
    tc.momentum = momentum;
    tc.batch_size = batch_size;
    tc.augmentation_limit = augment;
    tc.validation_fraction = val_fraction;
    tc.seed = seed;
    auto [ws, history] = uat::train(cfg, ds, tc);

    py::array_t<double> h({history.size(), static_cast<std::size_t>(3)});
    auto hm = h.mutable_unchecked<2>();
    for (std::size_t e = 0; e < history.size(); ++e) {
        hm(e, 0) = history[e].loss;
        hm(e, 1) = history[e].train_accuracy;
        hm(e, 2) = history[e].val_accuracy;
    }
    return {Model{std::move(cfg), std::move(ws)}, std::move(h)};
}

py::dict summarize_probs(const py::array& probs) {
    uat::PredictiveSample s;
    s.probs = tensor_from_numpy(probs);
    if (s.probs.shape.size() != 2)
        throw std::invalid_argument("summarize: expected a [passes, classes] array");
    auto sum = uat::summarize(s);
    py::dict d;
    d["median"] = sum.median;
    d["p10"] = sum.p10;
    d["p90"] = sum.p90;
    d["predicted_class"] = sum.predicted_class;
    d["confidence"] = sum.confidence;
    return d;
}

std::vector<uat::PredictiveSummary> summaries_from_arrays(
    const std::vector<double>& confidences,
    const std::vector<std::size_t>& predicted, std::size_t n_classes) {
    if (confidences.size() != predicted.size())
        throw std::invalid_argument("confidence/prediction count mismatch");
    std::vector<uat::PredictiveSummary> sums;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        uat::PredictiveSummary s;
        s.median.assign(n_classes, 0.0);
        if (predicted[i] >= n_classes)
            throw std::invalid_argument("predicted class out of range");
        s.median[predicted[i]] = confidences[i];
        s.predicted_class = predicted[i];
        s.confidence = confidences[i];
        sums.push_back(std::move(s));
    }
    return sums;
}

std::vector<double> calibrate(const std::vector<double>& confidences,
                              const std::vector<std::size_t>& predicted,
                              const std::vector<std::string>& class_names,
                              double percentile) {
    auto sums = summaries_from_arrays(confidences, predicted, class_names.size());
    return uat::calibrate_thresholds(sums, {}, class_names, percentile).thresholds;
}

py::dict removal_curve(const std::vector<double>& confidences,
                       const std::vector<std::size_t>& predicted,
                       const std::vector<std::size_t>& labels, std::size_t n_classes,
                       std::size_t window) {
    auto sums = summaries_from_arrays(confidences, predicted, n_classes);
    auto curve = uat::removal_curve(sums, labels, window);
    py::dict d;
    d["raw"] = curve.raw;
    d["smoothed"] = curve.smoothed;
    d["window"] = curve.window;
    return d;
}

py::dict generate_dataset(const std::vector<std::size_t>& counts, std::size_t size,
                          double sigma, double ambiguous, std::uint64_t seed) {
    if (counts.size() != uat::kSynthClasses)
        throw std::invalid_argument("counts needs exactly 5 values");
    uat::SynthSpec spec;
    spec.image_size = size;
    std::copy(counts.begin(), counts.end(), spec.class_counts.begin());
    spec.noise_sigma = sigma;
    spec.ambiguous_fraction = ambiguous;
    spec.seed = seed;
    auto ds = uat::generate_dataset(spec);

    auto pack = [](const uat::LabeledDataset& part, const std::vector<bool>& amb) {
        py::dict d;
        py::list images;
        for (const auto& img : part.images) images.append(numpy_from_tensor(img));
        d["images"] = images;
        d["labels"] = part.labels;
        d["ambiguous"] = std::vector<int>(amb.begin(), amb.end());
        return d;
    };
    py::dict d;
    d["train"] = pack(ds.train, ds.train_ambiguous);
    d["test"] = pack(ds.test, ds.test_ambiguous);
    d["class_names"] = ds.train.class_names;
    return d;
}

}  // namespace

PYBIND11_MODULE(_uat, m) {
    m.doc() = "uncertainty-aware image classification toolkit";

    py::class_<Model>(m, "Model")
        .def_property_readonly("class_names", &Model::class_names)
        .def_property_readonly("input_shape", &Model::input_shape)
        .def("predict", &Model::predict, py::arg("image"))
        .def("mc_predict", &Model::mc_predict, py::arg("image"),
             py::arg("passes") = 1000, py::arg("seed") = 0)
        .def("relevance", &Model::relevance, py::arg("image"),
             py::arg("target") = std::nullopt)
        .def("save", &Model::save, py::arg("path"));

    m.def("load_model", &load_model, py::arg("path"));
    m.def("train_reference", &train_reference, py::arg("images"), py::arg("labels"),
          py::arg("class_names"), py::arg("epochs") = 45, py::arg("lr") = 0.01,
          py::arg("momentum") = 0.9, py::arg("batch_size") = 16,
          py::arg("augment") = 0.10, py::arg("val_fraction") = 0.10,
          py::arg("seed") = 0);
    m.def("summarize", &summarize_probs, py::arg("probs"));
    m.def("calibrate", &calibrate, py::arg("confidences"), py::arg("predicted"),
          py::arg("class_names"), py::arg("percentile") = 10.0);
    m.def("removal_curve", &removal_curve, py::arg("confidences"),
          py::arg("predicted"), py::arg("labels"), py::arg("n_classes"),
          py::arg("window") = 5);
    m.def("generate_dataset", &generate_dataset, py::arg("counts"),
          py::arg("size") = 64, py::arg("sigma") = 0.0, py::arg("ambiguous") = 0.0,
          py::arg("seed") = 0);
    m.def("read_pgm",
          [](const std::string& path) { return numpy_from_tensor(uat::read_pgm(path)); },
          py::arg("path"));
    m.def("write_pgm",
          [](const py::array& image, const std::string& path) {
              uat::write_pgm(as_image(image), path);
          },
          py::arg("image"), py::arg("path"));
}
