#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wmevade/analytics.hpp"
#include "wmevade/detector.hpp"
#include "wmevade/ensemble.hpp"
#include "wmevade/experiment.hpp"
#include "wmevade/model_io.hpp"
#include "wmevade/synth.hpp"

namespace py = pybind11;
using namespace wmevade;

namespace {

Image array_to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
    const auto info = arr.request();
    size_t h, w, c;
    if (info.ndim == 2) {
        h = static_cast<size_t>(info.shape[0]);
        w = static_cast<size_t>(info.shape[1]);
        c = 1;
    } else if (info.ndim == 3) {
        h = static_cast<size_t>(info.shape[0]);
        w = static_cast<size_t>(info.shape[1]);
        c = static_cast<size_t>(info.shape[2]);
    } else {
        throw ShapeError("image array must be (h, w) or (h, w, c)");
    }
    Image img(h, w, c);
    const float* src = static_cast<const float*>(info.ptr);
    std::copy(src, src + img.numel(), img.pixels.begin());
    return img;
}

py::array_t<float> image_to_array(const Image& img) {
    py::array_t<float> arr(img.channels == 1
                               ? std::vector<py::ssize_t>{static_cast<py::ssize_t>(img.height),
                                                          static_cast<py::ssize_t>(img.width)}
                               : std::vector<py::ssize_t>{static_cast<py::ssize_t>(img.height),
                                                          static_cast<py::ssize_t>(img.width),
                                                          static_cast<py::ssize_t>(img.channels)});
    std::copy(img.pixels.begin(), img.pixels.end(), static_cast<float*>(arr.request().ptr));
    return arr;
}

std::vector<Image> arrays_to_images(const py::list& arrays) {
    std::vector<Image> out;
    for (const auto& item : arrays)
        out.push_back(array_to_image(
            py::cast<py::array_t<float, py::array::c_style | py::array::forcecast>>(item)));
    return out;
}

Dataset make_dataset(const py::array_t<float, py::array::c_style | py::array::forcecast>& images,
                     const std::vector<int>& labels, size_t classes) {
    const auto info = images.request();
    if (info.ndim < 3) throw ShapeError("dataset images must be (n, h, w) or (n, h, w, c)");
    Dataset d;
    d.class_count = classes;
    const size_t n = static_cast<size_t>(info.shape[0]);
    const size_t h = static_cast<size_t>(info.shape[1]);
    const size_t w = static_cast<size_t>(info.shape[2]);
    const size_t c = info.ndim == 4 ? static_cast<size_t>(info.shape[3]) : 1;
    const float* src = static_cast<const float*>(info.ptr);
    for (size_t i = 0; i < n; ++i) {
        Image img(h, w, c);
        std::copy(src + i * img.numel(), src + (i + 1) * img.numel(), img.pixels.begin());
        d.images.push_back(std::move(img));
    }
    d.labels = labels;
    d.validate();
    return d;
}

TrainConfig make_cfg(size_t epochs, size_t batch_size, float learning_rate, uint64_t seed,
                     bool shuffle) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    cfg.seed = seed;
    cfg.shuffle = shuffle;
    return cfg;
}

QueryOracle wrap_oracle(const py::function& fn) {
    return [fn](const Image& img) { return py::cast<int>(fn(image_to_array(img))); };
}

// Owns copies of its member models so python lifetimes cannot dangle.
struct PyEnsembleGateway {
    std::vector<Model> models;
    std::unique_ptr<EnsembleGateway> gw;

    PyEnsembleGateway(const std::vector<Model>& members, uint64_t seed) : models(members) {
        std::vector<const Model*> ptrs;
        for (const Model& m : models) ptrs.push_back(&m);
        gw = std::make_unique<EnsembleGateway>(std::move(ptrs), seed);
    }
};

struct PyDetectorGateway {
    Model stolen;
    std::unique_ptr<DetectorGateway> gw;

    PyDetectorGateway(const Model& stolen_model, const Detector& det, uint64_t seed)
        : stolen(stolen_model) {
        gw = std::make_unique<DetectorGateway>(stolen, det, seed);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "trigger-set watermarking, black-box verification and the two evasion gateways";

    py::register_exception<Error>(m, "WmevadeError");

    py::class_<ArchitectureDescriptor>(m, "Architecture")
        .def_static("parse", &ArchitectureDescriptor::parse, py::arg("text"))
        .def("to_text", &ArchitectureDescriptor::to_text)
        .def("parameter_count", &ArchitectureDescriptor::parameter_count)
        .def("class_count", &ArchitectureDescriptor::class_count);
    m.def("conv_classifier_arch", &conv_classifier_arch, py::arg("classes") = 10);
    m.def("dense_classifier_arch", &dense_classifier_arch, py::arg("classes") = 10);
    m.def("detector_arch", &detector_arch, py::arg("feature_width"));

    py::class_<Model>(m, "Model")
        .def_property_readonly("owner_id",
                               [](const Model& m_) { return m_.metadata.owner_id; })
        .def_property_readonly("watermarked",
                               [](const Model& m_) { return m_.metadata.watermarked; })
        .def_property_readonly("classes", [](const Model& m_) { return m_.class_count(); })
        .def_property_readonly("arch_text",
                               [](const Model& m_) { return m_.arch.to_text(); });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init(&make_dataset), py::arg("images"), py::arg("labels"),
             py::arg("classes") = 10)
        .def_property_readonly("size", &Dataset::size)
        .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
        .def("image", [](const Dataset& d, size_t i) { return image_to_array(d.images.at(i)); });

    m.def("make_synth_digits",
          [](size_t count, uint64_t seed, bool train_split) {
              return make_synth_digits(count, seed, train_split ? Split::Train : Split::Test);
          },
          py::arg("count"), py::arg("seed"), py::arg("train_split") = true);
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("save_idx", &save_idx, py::arg("dataset"), py::arg("images_path"),
          py::arg("labels_path"));
    m.def("mean_pixel", &mean_pixel, py::arg("dataset"));

    m.def("init_model",
          [](const ArchitectureDescriptor& arch, uint64_t seed) { return init_model(arch, seed); },
          py::arg("arch"), py::arg("seed"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));

    m.def("train",
          [](const Model& model, const Dataset& data, size_t epochs, size_t batch_size,
             float learning_rate, uint64_t seed, bool shuffle) {
              const TrainResult r = train(
                  model, to_batch(data), make_cfg(epochs, batch_size, learning_rate, seed, shuffle));
              return py::make_tuple(r.model, r.loss_history);
          },
          py::arg("model"), py::arg("data"), py::arg("epochs") = 10, py::arg("batch_size") = 64,
          py::arg("learning_rate") = 0.05f, py::arg("seed") = 0, py::arg("shuffle") = true);

    m.def("predict",
          [](const Model& model, const py::array_t<float, py::array::c_style |
                                                               py::array::forcecast>& image) {
              return predict(model, to_tensor(array_to_image(image)));
          },
          py::arg("model"), py::arg("image"));

    m.def("forward",
          [](const Model& model, const Dataset& data) {
              const Tensor probs = forward(model, to_batch(data).inputs);
              py::array_t<float> out({static_cast<py::ssize_t>(probs.shape[0]),
                                      static_cast<py::ssize_t>(probs.shape[1])});
              std::copy(probs.values.begin(), probs.values.end(),
                        static_cast<float*>(out.request().ptr));
              return out;
          },
          py::arg("model"), py::arg("data"));

    m.def("extract_features",
          [](const Model& model, const py::array_t<float, py::array::c_style |
                                                               py::array::forcecast>& image) {
              return extract_features(model, to_tensor(array_to_image(image)));
          },
          py::arg("model"), py::arg("image"));

    m.def("accuracy",
          [](const Model& model, const Dataset& data) { return accuracy(model, to_batch(data)); },
          py::arg("model"), py::arg("data"));

    m.def("gradient_check",
          [](const Model& model, const py::array_t<float, py::array::c_style |
                                                               py::array::forcecast>& image,
             int label) { return gradient_check(model, to_tensor(array_to_image(image)), label); },
          py::arg("model"), py::arg("image"), py::arg("label"));

    // ---- triggers and watermarking ----

    py::class_<TriggerSet>(m, "TriggerSet")
        .def_readwrite("owner_id", &TriggerSet::owner_id)
        .def_readonly("labels", &TriggerSet::labels)
        .def_property_readonly("size", &TriggerSet::size)
        .def("image", [](const TriggerSet& t, size_t i) { return image_to_array(t.images.at(i)); });

    m.def("generate_trigger_images",
          [](size_t count, uint64_t seed, double delta, const std::string& family,
             const py::list& bases) {
              const auto images = generate_trigger_images(count, seed, delta,
                                                          trigger_family_from_string(family),
                                                          arrays_to_images(bases));
              py::list out;
              for (const Image& img : images) out.append(image_to_array(img));
              return out;
          },
          py::arg("count"), py::arg("seed"), py::arg("delta") = 0.0,
          py::arg("family") = "abstract", py::arg("bases") = py::list());

    m.def("assign_random_labels",
          [](const py::list& images, size_t classes, uint64_t seed) {
              return assign_random_labels(arrays_to_images(images), classes, seed);
          },
          py::arg("images"), py::arg("classes"), py::arg("seed"));

    m.def("save_trigger_manifest", &save_trigger_manifest, py::arg("triggers"), py::arg("path"),
          py::arg("with_pgm") = true);
    m.def("load_trigger_manifest",
          [](const std::string& path, const py::list& bases) {
              return load_trigger_manifest(path, arrays_to_images(bases));
          },
          py::arg("path"), py::arg("bases") = py::list());

    py::class_<VerificationReport>(m, "VerificationReport")
        .def_readonly("queried", &VerificationReport::queried)
        .def_readonly("correct", &VerificationReport::correct)
        .def_readonly("epsilon", &VerificationReport::epsilon)
        .def_readonly("threshold", &VerificationReport::threshold)
        .def_readonly("claim", &VerificationReport::claim)
        .def("to_json", &VerificationReport::to_json);

    m.def("claim_threshold", &claim_threshold, py::arg("epsilon"), py::arg("queried"));

    m.def("embed_from_scratch",
          [](const Dataset& clean, const TriggerSet& triggers, const ArchitectureDescriptor& arch,
             size_t epochs, size_t batch_size, float learning_rate, uint64_t seed,
             size_t replication) {
              return embed_from_scratch(clean, triggers, arch,
                                        make_cfg(epochs, batch_size, learning_rate, seed, true),
                                        replication);
          },
          py::arg("clean"), py::arg("triggers"), py::arg("arch"), py::arg("epochs") = 10,
          py::arg("batch_size") = 64, py::arg("learning_rate") = 0.05f, py::arg("seed") = 0,
          py::arg("replication") = 100);

    m.def("verify",
          [](const py::function& oracle, const TriggerSet& triggers, double epsilon) {
              return verify(wrap_oracle(oracle), triggers, epsilon);
          },
          py::arg("oracle"), py::arg("triggers"), py::arg("epsilon"),
          "Black-box verification against any python callable image -> label.");

    m.def("verify_model",
          [](const Model& model, const TriggerSet& triggers, double epsilon) {
              return verify(model_oracle(model), triggers, epsilon);
          },
          py::arg("model"), py::arg("triggers"), py::arg("epsilon"));

    m.def("trigger_accuracy", &trigger_accuracy, py::arg("model"), py::arg("triggers"));

    m.def("fine_tune",
          [](const Model& model, const Dataset& clean, size_t epochs, float lr, size_t batch_size,
             uint64_t seed) { return fine_tune(model, clean, epochs, lr, batch_size, seed); },
          py::arg("model"), py::arg("clean"), py::arg("epochs"), py::arg("learning_rate"),
          py::arg("batch_size") = 64, py::arg("seed") = 0);

    // ---- gateways ----

    py::class_<PyEnsembleGateway>(m, "EnsembleGateway")
        .def(py::init<const std::vector<Model>&, uint64_t>(), py::arg("models"),
             py::arg("tie_break_seed"))
        .def("predict",
             [](PyEnsembleGateway& g, const py::array_t<float, py::array::c_style |
                                                                   py::array::forcecast>& image) {
                 return g.gw->predict(array_to_image(image));
             })
        .def_property_readonly("query_count",
                               [](const PyEnsembleGateway& g) { return g.gw->query_count(); })
        .def("verify",
             [](PyEnsembleGateway& g, const TriggerSet& triggers, double epsilon) {
                 return verify(g.gw->oracle(), triggers, epsilon);
             },
             py::arg("triggers"), py::arg("epsilon"));

    py::class_<Detector>(m, "Detector")
        .def_readwrite("tau", &Detector::tau)
        .def_readonly("mean_pixel", &Detector::mean_pixel);

    py::class_<DetectorDataset>(m, "DetectorDataset")
        .def_property_readonly("size", &DetectorDataset::size)
        .def_property_readonly("feature_width", &DetectorDataset::feature_width)
        .def_readonly("mean_pixel", &DetectorDataset::mean_pixel);

    m.def("build_detector_dataset",
          [](const Model& stolen, const py::list& clean, const py::list& triggers, uint64_t seed) {
              return build_detector_dataset(stolen, arrays_to_images(clean),
                                            arrays_to_images(triggers), seed);
          },
          py::arg("stolen"), py::arg("clean"), py::arg("triggers"), py::arg("seed"));

    m.def("train_detector",
          [](const Model& stolen, const DetectorDataset& dd, size_t epochs, size_t batch_size,
             float learning_rate, uint64_t seed, double tau) {
              return train_detector(stolen, dd,
                                    make_cfg(epochs, batch_size, learning_rate, seed, true), tau);
          },
          py::arg("stolen"), py::arg("dataset"), py::arg("epochs") = 50,
          py::arg("batch_size") = 64, py::arg("learning_rate") = 0.01f, py::arg("seed") = 0,
          py::arg("tau") = 0.5);

    m.def("detector_classify",
          [](const Detector& det, const Model& stolen,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& image) {
              const DetectorDecision d = detector_classify(det, stolen, array_to_image(image));
              return py::make_tuple(d.trigger, d.trigger_probability);
          },
          py::arg("detector"), py::arg("stolen"), py::arg("image"));

    py::class_<DetectorEvaluation>(m, "DetectorEvaluation")
        .def_readonly("accuracy", &DetectorEvaluation::accuracy)
        .def_readonly("tpr", &DetectorEvaluation::tpr)
        .def_readonly("fpr", &DetectorEvaluation::fpr)
        .def_readonly("true_positives", &DetectorEvaluation::true_positives)
        .def_readonly("false_positives", &DetectorEvaluation::false_positives)
        .def_readonly("true_negatives", &DetectorEvaluation::true_negatives)
        .def_readonly("false_negatives", &DetectorEvaluation::false_negatives);

    m.def("evaluate_detector",
          [](const Detector& det, const Model& stolen, const py::list& clean,
             const py::list& triggers) {
              return evaluate_detector(det, stolen, arrays_to_images(clean),
                                       arrays_to_images(triggers));
          },
          py::arg("detector"), py::arg("stolen"), py::arg("clean_test"), py::arg("trigger_test"));

    py::class_<PyDetectorGateway>(m, "DetectorGateway")
        .def(py::init<const Model&, const Detector&, uint64_t>(), py::arg("stolen"),
             py::arg("detector"), py::arg("answer_seed"))
        .def("predict",
             [](PyDetectorGateway& g, const py::array_t<float, py::array::c_style |
                                                                    py::array::forcecast>& image) {
                 return g.gw->predict(array_to_image(image));
             })
        .def("verify",
             [](PyDetectorGateway& g, const TriggerSet& triggers, double epsilon) {
                 return verify(g.gw->oracle(), triggers, epsilon);
             },
             py::arg("triggers"), py::arg("epsilon"));

    // ---- analytics ----

    m.def("exact_ensemble_verification", &exact_ensemble_verification, py::arg("ensemble_size"),
          py::arg("class_count"));
    m.def("simulate_ensemble_verification",
          [](size_t n, size_t l, uint64_t trials, uint64_t seed, double own_accuracy) {
              DieModelConfig cfg{n, l, trials, seed, own_accuracy};
              const SimulationResult r = simulate_ensemble_verification(cfg);
              py::dict out;
              out["estimate"] = r.estimate;
              out["standard_error"] = r.standard_error;
              out["trials"] = r.trials;
              out["method"] = r.method;
              return out;
          },
          py::arg("ensemble_size"), py::arg("class_count"), py::arg("trials"), py::arg("seed"),
          py::arg("own_accuracy") = 1.0);
    m.def("detector_verified_fraction", &detector_verified_fraction, py::arg("tpr"),
          py::arg("trigger_accuracy"), py::arg("class_count"));
    m.def("predict_claim_probability", &predict_claim_probability, py::arg("ensemble_size"),
          py::arg("class_count"), py::arg("trigger_count"), py::arg("epsilon"));
    m.def("binomial_tail", &binomial_tail, py::arg("m"), py::arg("p"), py::arg("threshold"));
}
