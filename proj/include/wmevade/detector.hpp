#pragma once

#include <cstdint>
#include <string>

#include "wmevade/watermark.hpp"
#include "wmevade/rng.hpp"

namespace wmevade {

// Binary classifier over stolen-model features that flags probable
// watermark triggers.
struct Detector {
    Model classifier;        // dense 512 relu, dense 256 relu, softmax(2)
    double mean_pixel = 0.0;
    double tau = 0.5;        // decision threshold on p(trigger)
};

struct DetectorDecision {
    bool trigger = false;
    double trigger_probability = 0.0;
};

struct DetectorEvaluation {
    size_t true_positives = 0;   // triggers flagged
    size_t false_negatives = 0;
    size_t true_negatives = 0;   // clean passed
    size_t false_positives = 0;
    double accuracy = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

// Train the detector head on the feature dataset. Defaults per the detector
// build recipe: 50 epochs, batch 64.
Detector train_detector(const Model& stolen, const DetectorDataset& dd, const TrainConfig& cfg,
                        double tau = 0.5);

// Preprocess, extract features via the stolen model, classify.
DetectorDecision detector_classify(const Detector& det, const Model& stolen, const Image& image);

// The adversary's guarded service: flagged queries get a uniformly random
// label from the seeded answer stream, everything else gets the stolen
// model's prediction.
class DetectorGateway {
  public:
    DetectorGateway(const Model& stolen, Detector detector, uint64_t answer_seed);

    int predict(const Image& image);
    QueryOracle oracle();

    size_t class_count() const { return stolen_->class_count(); }
    const Detector& detector() const { return detector_; }
    Detector& detector() { return detector_; }

  private:
    const Model* stolen_;
    Detector detector_;
    Rng answer_rng_;
};

DetectorEvaluation evaluate_detector(const Detector& det, const Model& stolen,
                                     const std::vector<Image>& clean_test,
                                     const std::vector<Image>& trigger_test);

// WMNN classifier file plus a JSON sidecar {mean-pixel, tau,
// feature-source-hash}. The hash fingerprints the stolen model's weights so
// a detector is never silently paired with a different feature source.
void save_detector(const Detector& det, const Model& stolen, const std::string& model_path,
                   const std::string& sidecar_path);
Detector load_detector(const Model& stolen, const std::string& model_path,
                       const std::string& sidecar_path);

uint64_t model_weight_hash(const Model& model);

}  // namespace wmevade
