#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmevade/analytics.hpp"
#include "wmevade/detector.hpp"
#include "wmevade/ensemble.hpp"

namespace wmevade {

struct DataPaths {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

struct DetectorExperimentConfig {
    size_t epochs = 50;
    size_t batch_size = 64;
    float learning_rate = 0.01f;
    double tau = 0.5;
    size_t corpus_per_class = 800;   // clean/trigger images for the detector
    double holdout_fraction = 0.2;   // held out for evaluation
};

struct ExperimentConfig {
    DataPaths data;
    size_t owner_count = 7;
    size_t triggers_per_owner = 10;
    std::string delta_policy = "half-mean";  // or "fixed"
    double delta_value = 0.0;                // used when policy is "fixed"
    std::string arch = "conv";               // or "dense"
    size_t epochs = 10;
    size_t batch_size = 64;
    float learning_rate = 0.05f;
    size_t trigger_replication = 100;
    std::vector<double> epsilons{0.3, 0.5, 0.8};
    std::vector<size_t> ensemble_sizes{7, 6, 5, 4, 3, 1};
    DetectorExperimentConfig detector;
    uint64_t master_seed = 1;
    double accuracy_floor = 0.0;  // 0 = derived from arch (conv .985 / dense .97)

    double effective_accuracy_floor() const;
    ArchitectureDescriptor classifier_arch() const;
    uint64_t component_seed(const std::string& component) const;
};

ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);
// FNV-1a fingerprint of the canonical JSON dump; goes into report headers.
uint64_t config_hash(const ExperimentConfig& cfg);

// Thread cap: WMEVADE_THREADS when set, else hardware concurrency.
size_t thread_cap();

// The delta actually used for trigger generation under the config policy:
// "half-mean" measures the mean pairwise distance of 100 unconstrained
// abstract samples and halves it.
double resolve_delta(const ExperimentConfig& cfg);

struct OwnerArtifacts {
    Model model;
    TriggerSet triggers;
    double test_accuracy = 0.0;
    double trigger_acc = 0.0;
};

// Train `owner_count` watermarked models (parallel across owners, each
// deterministic in its derived seed) plus their trigger sets.
std::vector<OwnerArtifacts> train_owners(const ExperimentConfig& cfg, const Dataset& train,
                                         const Dataset& test);

// Owner 0's unwatermarked twin: same arch, same derived seed, no triggers.
Model train_unwatermarked_twin(const ExperimentConfig& cfg, const Dataset& train,
                               size_t owner_index = 0);

void save_owner_artifacts(const std::vector<OwnerArtifacts>& owners, const std::string& out_dir);
std::vector<OwnerArtifacts> load_owner_artifacts(const ExperimentConfig& cfg,
                                                 const std::string& out_dir,
                                                 const Dataset& test);

// ---- reports (deterministic CSV; header carries config hash and seed) ----

std::string ensemble_report_csv(const ExperimentConfig& cfg,
                                const std::vector<EnsembleExperimentResult>& results);

struct DetectorExperimentResult {
    DetectorEvaluation eval;
    double stolen_clean_accuracy = 0.0;
    double gateway_clean_accuracy = 0.0;
    double stolen_trigger_accuracy = 0.0;   // on the owner's trigger set
    double owner_verified_fraction = 0.0;   // 10-trigger verification pass
    std::vector<bool> claims;               // one per epsilon
    double simulated_fraction = 0.0;        // 10^4 cycled trigger queries
    size_t simulated_queries = 0;
    double formula_prediction = 0.0;        // (1-tpr)*a + tpr/l
    double generalization_tpr = 0.0;        // unseen patch-tweaked family
    double seconds_per_epoch = 0.0;
};

// Full detector-attack pipeline against owners[stolen_index]'s model.
DetectorExperimentResult run_detector_experiment(const ExperimentConfig& cfg,
                                                 const std::vector<OwnerArtifacts>& owners,
                                                 const Dataset& test, size_t stolen_index,
                                                 Detector* out_detector = nullptr);

std::string detector_report_csv(const ExperimentConfig& cfg,
                                const DetectorExperimentResult& r);

// Verified fraction over `queries` gateway answers, cycling the trigger set.
double gateway_trigger_fraction(DetectorGateway& gw, const TriggerSet& triggers, size_t queries);

struct FineTuneProbe {
    double trigger_acc_before = 0.0;
    double trigger_acc_after = 0.0;
    double test_acc_before = 0.0;
    double test_acc_after = 0.0;
};

FineTuneProbe fine_tune_probe(const ExperimentConfig& cfg, const OwnerArtifacts& owner,
                              const Dataset& train, const Dataset& test, size_t epochs = 2,
                              float lr = 0.005f);

std::string summary_report_csv(const ExperimentConfig& cfg,
                               const std::vector<OwnerArtifacts>& owners,
                               const FineTuneProbe* probe);

}  // namespace wmevade
