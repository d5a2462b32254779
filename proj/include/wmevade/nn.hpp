#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmevade/arch.hpp"
#include "wmevade/tensor.hpp"

namespace wmevade {

struct ModelMetadata {
    std::string owner_id;
    bool watermarked = false;
    uint64_t training_seed = 0;
    size_t class_count = 0;
};

// A layered network: architecture plus one weight-tensor pair (kernel/bias)
// per parameterised layer, in declaration order.
struct Model {
    ArchitectureDescriptor arch;
    std::vector<Tensor> weights;
    ModelMetadata metadata;

    size_t class_count() const { return metadata.class_count; }
};

struct TrainConfig {
    size_t epochs = 10;
    size_t batch_size = 64;
    float learning_rate = 0.05f;
    uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct TrainResult {
    Model model;
    std::vector<double> loss_history;  // per-epoch mean cross-entropy
};

// Labelled sample batch as the engine consumes it: row-major images in
// `inputs` (batch dim first), one integer label per row.
struct SampleBatch {
    Tensor inputs;              // shape (N, h, w, c) or (N, d)
    std::vector<int> labels;    // size N, each in [0, class_count)

    size_t count() const { return labels.size(); }
};

// Seeded He-style fan-in uniform initialisation.
Model init_model(const ArchitectureDescriptor& arch, uint64_t seed, ModelMetadata metadata = {});

// Batched inference. Input shape (N, ...) matching arch input; returns
// probabilities of shape (N, classes), each row summing to 1.
Tensor forward(const Model& model, const Tensor& batch);

// Argmax label for a single image tensor (shape = arch input, or (1, ...)).
// Ties break toward the lowest class index.
int predict(const Model& model, const Tensor& image);

// Activations feeding the softmax output layer.
std::vector<float> extract_features(const Model& model, const Tensor& image);

// Minibatch SGD with softmax cross-entropy. Pure in (model, data, cfg):
// identical seeds give bit-identical weights and loss histories.
TrainResult train(const Model& model, const SampleBatch& data, const TrainConfig& cfg);

// Continue SGD from current weights; lr may be 0 (model returned unchanged).
Model continue_training(const Model& model, const SampleBatch& data, size_t epochs, float lr,
                        size_t batch_size, uint64_t seed, bool shuffle = true);

// Max over parameters of |analytic - central difference| / max(|analytic|,
// |fd|, 1e-8), step 1e-3, both sides evaluated in double precision. Only for
// models below 10^4 parameters.
double gradient_check(const Model& model, const Tensor& image, int label);

// Mean cross-entropy of the model on a batch (double accumulation).
double mean_loss(const Model& model, const SampleBatch& data);

// Fraction of samples predicted with their labels.
double accuracy(const Model& model, const SampleBatch& data);

}  // namespace wmevade
