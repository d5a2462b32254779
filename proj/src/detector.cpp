#include "wmevade/detector.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "wmevade/model_io.hpp"

namespace wmevade {

Detector train_detector(const Model& stolen, const DetectorDataset& dd, const TrainConfig& cfg,
                        double tau) {
    if (dd.size() == 0) throw ArgumentError("detector dataset is empty");
    if (dd.clean_count != dd.trigger_count)
        throw ArgumentError("detector dataset must be class balanced");
    if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must be in (0,1)");
    const size_t width = dd.feature_width();
    const std::vector<float> probe = extract_features(stolen, Tensor({
        stolen.arch.input().h, stolen.arch.input().w, stolen.arch.input().c}));
    if (probe.size() != width)
        throw ShapeError("feature width does not match the stolen model's penultimate layer");

    SampleBatch batch;
    batch.inputs = Tensor({dd.size(), width});
    for (size_t i = 0; i < dd.size(); ++i)
        std::copy(dd.features[i].begin(), dd.features[i].end(),
                  batch.inputs.data() + i * width);
    batch.labels = dd.labels;

    Model head = init_model(detector_arch(width), cfg.seed);
    TrainResult result = train(head, batch, cfg);

    Detector det;
    det.classifier = std::move(result.model);
    det.mean_pixel = dd.mean_pixel;
    det.tau = tau;
    return det;
}

DetectorDecision detector_classify(const Detector& det, const Model& stolen, const Image& image) {
    const std::vector<float> feats =
        extract_features(stolen, to_tensor(image, det.mean_pixel));
    Tensor in({1, feats.size()}, std::vector<float>(feats.begin(), feats.end()));
    const Tensor probs = forward(det.classifier, in);
    DetectorDecision d;
    d.trigger_probability = static_cast<double>(probs.values[1]);
    d.trigger = d.trigger_probability >= det.tau;
    return d;
}

DetectorGateway::DetectorGateway(const Model& stolen, Detector detector, uint64_t answer_seed)
    : stolen_(&stolen), detector_(std::move(detector)), answer_rng_(answer_seed) {
    if (stolen.class_count() < 2) throw ArgumentError("stolen model needs at least 2 classes");
}

int DetectorGateway::predict(const Image& image) {
    const DetectorDecision d = detector_classify(detector_, *stolen_, image);
    if (d.trigger) return static_cast<int>(answer_rng_.below(stolen_->class_count()));
    return wmevade::predict(*stolen_, to_tensor(image));
}

QueryOracle DetectorGateway::oracle() {
    return [this](const Image& image) { return predict(image); };
}

DetectorEvaluation evaluate_detector(const Detector& det, const Model& stolen,
                                     const std::vector<Image>& clean_test,
                                     const std::vector<Image>& trigger_test) {
    if (clean_test.empty() || trigger_test.empty())
        throw ArgumentError("evaluation needs both clean and trigger samples");
    DetectorEvaluation ev;
    for (const Image& img : trigger_test) {
        if (detector_classify(det, stolen, img).trigger)
            ++ev.true_positives;
        else
            ++ev.false_negatives;
    }
    for (const Image& img : clean_test) {
        if (detector_classify(det, stolen, img).trigger)
            ++ev.false_positives;
        else
            ++ev.true_negatives;
    }
    const double p = static_cast<double>(trigger_test.size());
    const double n = static_cast<double>(clean_test.size());
    ev.tpr = static_cast<double>(ev.true_positives) / p;
    ev.fpr = static_cast<double>(ev.false_positives) / n;
    ev.accuracy = (static_cast<double>(ev.true_positives) + ev.true_negatives) / (p + n);
    return ev;
}

uint64_t model_weight_hash(const Model& model) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const Tensor& w : model.weights) mix(w.values.data(), w.values.size() * sizeof(float));
    return h;
}

void save_detector(const Detector& det, const Model& stolen, const std::string& model_path,
                   const std::string& sidecar_path) {
    save_model(det.classifier, model_path);
    nlohmann::json j;
    j["mean_pixel"] = det.mean_pixel;
    j["tau"] = det.tau;
    char hex[19];
    std::snprintf(hex, sizeof hex, "0x%016llx",
                  static_cast<unsigned long long>(model_weight_hash(stolen)));
    j["feature_source_hash"] = hex;
    std::ofstream f(sidecar_path, std::ios::trunc);
    if (!f) throw IoError("cannot write detector sidecar: " + sidecar_path);
    f << j.dump(2) << "\n";
}

Detector load_detector(const Model& stolen, const std::string& model_path,
                       const std::string& sidecar_path) {
    std::ifstream f(sidecar_path);
    if (!f) throw IoError("cannot open detector sidecar: " + sidecar_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad detector sidecar JSON: ") + e.what());
    }
    Detector det;
    det.classifier = load_model(model_path);
    det.mean_pixel = j.at("mean_pixel").get<double>();
    det.tau = j.at("tau").get<double>();
    char hex[19];
    std::snprintf(hex, sizeof hex, "0x%016llx",
                  static_cast<unsigned long long>(model_weight_hash(stolen)));
    if (j.at("feature_source_hash").get<std::string>() != hex)
        throw ConsistencyError("detector was trained against a different stolen model");
    return det;
}

}  // namespace wmevade
