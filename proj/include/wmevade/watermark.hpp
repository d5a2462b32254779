#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wmevade/nn.hpp"
#include "wmevade/triggers.hpp"

namespace wmevade {

// Black-box query interface: one label per image, nothing else observable.
using QueryOracle = std::function<int(const Image&)>;

// Wrap a model as an oracle.
QueryOracle model_oracle(const Model& model);

struct TriggerOutcome {
    size_t trigger_index = 0;
    int expected_label = 0;
    int returned_label = 0;
};

struct VerificationReport {
    size_t queried = 0;
    size_t correct = 0;
    double epsilon = 0.0;
    size_t threshold = 0;  // ceil(epsilon * queried), exact rational comparison
    bool claim = false;
    std::vector<TriggerOutcome> outcomes;

    std::string to_json() const;
};

// Smallest integer k with k >= epsilon * m, evaluated exactly on the binary
// value of epsilon (no float-boundary ambiguity).
size_t claim_threshold(double epsilon, size_t queried);

// Train on clean data poisoned with the trigger set; triggers are replicated
// `replication` times per epoch so ten of them amid thousands of clean
// samples are actually learned. Empty trigger set degenerates to plain
// training, bit for bit.
Model embed_from_scratch(const Dataset& clean, const TriggerSet& triggers,
                         const ArchitectureDescriptor& arch, const TrainConfig& cfg,
                         size_t replication = 100);

// Query each trigger once, in order, and apply the epsilon-threshold rule.
VerificationReport verify(const QueryOracle& oracle, const TriggerSet& triggers, double epsilon);

// Re-apply the threshold rule for a different epsilon on an existing
// report's outcomes; no new queries are made.
VerificationReport reevaluate(const VerificationReport& report, double epsilon);

// Continue SGD on clean data only. lr may be 0 (model returned unchanged).
Model fine_tune(const Model& model, const Dataset& clean, size_t epochs, float lr,
                size_t batch_size = 64, uint64_t seed = 0);

// Fraction of triggers the model maps to their assigned labels.
double trigger_accuracy(const Model& model, const TriggerSet& triggers);

}  // namespace wmevade
