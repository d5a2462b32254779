#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "wmevade/model_io.hpp"
#include "wmevade/nn.hpp"
#include "wmevade/rng.hpp"

using namespace wmevade;

namespace {

Model small_dense_net(uint64_t seed, size_t in = 12, size_t hidden = 9, size_t classes = 4) {
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, in});
    arch.dense(hidden, Activation::Relu).softmax_output(classes);
    return init_model(arch, seed);
}

Tensor random_input(const Model& m, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    const DataShape& in = m.arch.input();
    Tensor t(in.h == 1 && in.w == 1 ? std::vector<size_t>{in.c}
                                    : std::vector<size_t>{in.h, in.w, in.c});
    for (float& v : t.values) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("softmax of all-zero weights is uniform") {
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 6});
    arch.dense(8, Activation::Relu).softmax_output(10);
    Model m = init_model(arch, 7);
    for (Tensor& w : m.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);

    Tensor batch({3, 6});
    Rng rng(1);
    for (float& v : batch.values) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    const Tensor probs = forward(m, batch);
    REQUIRE(probs.shape == std::vector<size_t>{3, 10});
    for (float p : probs.values) CHECK(p == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("identity logits give the closed-form softmax") {
    // single softmax-output layer with identity weights: probabilities are
    // softmax of the input itself
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 10});
    arch.softmax_output(10);
    Model m = init_model(arch, 3);
    std::fill(m.weights[0].values.begin(), m.weights[0].values.end(), 0.0f);
    for (size_t i = 0; i < 10; ++i) m.weights[0].values[i * 10 + i] = 1.0f;
    std::fill(m.weights[1].values.begin(), m.weights[1].values.end(), 0.0f);

    Tensor input({1, 10});
    input.values[0] = 10.0f;
    const Tensor probs = forward(m, input);
    const double expected = std::exp(10.0) / (std::exp(10.0) + 9.0);
    CHECK(probs.values[0] == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("probability rows sum to one") {
    Model m = small_dense_net(11, 20, 16, 10);
    Tensor batch({8, 20});
    Rng rng(5);
    for (float& v : batch.values) v = static_cast<float>(rng.uniform(-3.0, 3.0));
    const Tensor probs = forward(m, batch);
    for (size_t row = 0; row < 8; ++row) {
        double sum = 0.0;
        for (size_t k = 0; k < 10; ++k) sum += probs.values[row * 10 + k];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("forward rejects shape mismatches and empty batches") {
    Model m = small_dense_net(2);
    CHECK_THROWS_AS(forward(m, Tensor({2, 5})), ShapeError);
    CHECK_THROWS_AS(forward(m, Tensor({0, 12})), ShapeError);
}

TEST_CASE("predict breaks argmax ties toward the lowest class") {
    Model m = small_dense_net(3, 6, 5, 10);
    for (Tensor& w : m.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);
    Tensor img({6});
    CHECK(predict(m, img) == 0);
}

TEST_CASE("predict returns the argmax class and stays in range") {
    Model m = small_dense_net(17, 10, 8, 10);
    for (uint64_t s = 0; s < 25; ++s) {
        const int label = predict(m, random_input(m, 100 + s));
        CHECK(label >= 0);
        CHECK(label < 10);
    }
}

TEST_CASE("predict is permutation-covariant in the output classes") {
    Model m = small_dense_net(23, 10, 8, 5);
    // permute the softmax layer's rows (weights and bias entries)
    const std::vector<size_t> perm{3, 0, 4, 1, 2};
    Model permuted = m;
    Tensor& w = permuted.weights[2];
    Tensor& b = permuted.weights[3];
    const Tensor w_old = m.weights[2];
    const Tensor b_old = m.weights[3];
    const size_t in = 8;
    for (size_t o = 0; o < 5; ++o) {
        for (size_t i = 0; i < in; ++i) w.values[perm[o] * in + i] = w_old.values[o * in + i];
        b.values[perm[o]] = b_old.values[o];
    }
    for (uint64_t s = 0; s < 20; ++s) {
        const Tensor x = random_input(m, 500 + s);
        CHECK(predict(permuted, x) == static_cast<int>(perm[static_cast<size_t>(predict(m, x))]));
    }
}

TEST_CASE("extract_features returns the penultimate activation") {
    Model m = small_dense_net(29, 12, 9, 4);
    const Tensor x = random_input(m, 4);
    const std::vector<float> f1 = extract_features(m, x);
    CHECK(f1.size() == 9);
    const std::vector<float> f2 = extract_features(m, x);
    CHECK(f1 == f2);

    for (Tensor& w : m.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);
    for (float v : extract_features(m, x)) CHECK(v == 0.0f);

    auto shallow = ArchitectureDescriptor::start(DataShape{1, 1, 4});
    shallow.softmax_output(3);
    CHECK_THROWS_AS(extract_features(init_model(shallow, 1), Tensor({4})), ArgumentError);
}

// ---- gradient checks: finite differences are the definition ----

TEST_CASE("gradient check passes on 20 seeded dense nets") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        Model m = small_dense_net(seed);
        const Tensor x = random_input(m, seed * 31 + 1);
        const int label = static_cast<int>(seed % 4);
        CHECK(gradient_check(m, x, label) < 1e-4);
    }
}

TEST_CASE("gradient check passes on a conv+pool toy net") {
    auto arch = ArchitectureDescriptor::start(DataShape{8, 8, 1});
    arch.conv(1).maxpool().flatten().softmax_output(3);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        Model m = init_model(arch, seed);
        Tensor x({8, 8, 1});
        Rng rng(seed + 77);
        for (float& v : x.values) v = static_cast<float>(rng.uniform(0.05, 1.0));
        CHECK(gradient_check(m, x, static_cast<int>(seed % 3)) < 1e-4);
    }
}

TEST_CASE("gradient check with zero weights, inputs off the relu kink") {
    Model m = small_dense_net(0);
    for (Tensor& w : m.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);
    const Tensor x = random_input(m, 9, 0.5, 1.5);  // strictly positive inputs
    CHECK(gradient_check(m, x, 1) < 1e-4);
}

TEST_CASE("gradient check refuses large models") {
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 200});
    arch.dense(100, Activation::Relu).softmax_output(10);
    Model m = init_model(arch, 1);
    CHECK_THROWS_AS(gradient_check(m, Tensor({200}), 0), ArgumentError);
}

// ---- training ----

namespace {

// Linearly separable 2-class set; the perceptron oracle below proves the
// margin exists independently of the engine under test.
SampleBatch separable_toy_set(size_t count, uint64_t seed) {
    Rng rng(seed);
    SampleBatch batch;
    batch.inputs = Tensor({count, 4});
    for (size_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % 2);
        // class 0 concentrates at w.x < -0.5, class 1 at w.x > 0.5 for
        // w = (1, -1, 0.5, 0)
        float x[4];
        do {
            for (float& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        } while (std::abs(x[0] - x[1] + 0.5f * x[2]) < 0.5f ||
                 ((x[0] - x[1] + 0.5f * x[2] > 0) != (label == 1)));
        std::copy(x, x + 4, batch.inputs.data() + i * 4);
        batch.labels.push_back(label);
    }
    return batch;
}

bool perceptron_separates(const SampleBatch& batch) {
    double w[5] = {0, 0, 0, 0, 0};  // last is bias
    for (int epoch = 0; epoch < 200; ++epoch) {
        size_t mistakes = 0;
        for (size_t i = 0; i < batch.count(); ++i) {
            const float* x = batch.inputs.data() + i * 4;
            double score = w[4];
            for (int k = 0; k < 4; ++k) score += w[k] * x[k];
            const int y = batch.labels[i] == 1 ? 1 : -1;
            if (y * score <= 0) {
                for (int k = 0; k < 4; ++k) w[k] += y * x[k];
                w[4] += y;
                ++mistakes;
            }
        }
        if (mistakes == 0) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("training reaches 100% on a provably separable toy set") {
    const SampleBatch batch = separable_toy_set(200, 42);
    REQUIRE(perceptron_separates(batch));  // oracle: the set really is separable

    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 4});
    arch.dense(16, Activation::Relu).softmax_output(2);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.2f;
    cfg.seed = 7;
    const TrainResult result = train(init_model(arch, 7), batch, cfg);
    CHECK(accuracy(result.model, batch) == doctest::Approx(1.0));
    CHECK(result.loss_history.size() == 20);
    CHECK(result.loss_history.back() < result.loss_history.front());
}

TEST_CASE("train validates its config and labels") {
    const SampleBatch batch = separable_toy_set(10, 1);
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 4});
    arch.dense(4, Activation::Relu).softmax_output(2);
    const Model m = init_model(arch, 1);

    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(m, batch, cfg), ConfigError);
    cfg.epochs = 1;
    cfg.learning_rate = 0.0f;
    CHECK_THROWS_AS(train(m, batch, cfg), ConfigError);

    SampleBatch bad = batch;
    bad.labels[3] = 2;
    TrainConfig ok;
    ok.epochs = 1;
    CHECK_THROWS_AS(train(m, bad, ok), LabelError);
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
    const SampleBatch batch = separable_toy_set(64, 3);
    auto arch = ArchitectureDescriptor::start(DataShape{1, 1, 4});
    arch.dense(8, Activation::Relu).softmax_output(2);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.1f;
    cfg.seed = 99;
    const Model m0 = init_model(arch, 99);
    const TrainResult a = train(m0, batch, cfg);
    const TrainResult b = train(m0, batch, cfg);
    CHECK(a.loss_history == b.loss_history);
    for (size_t t = 0; t < a.model.weights.size(); ++t)
        CHECK(a.model.weights[t].values == b.model.weights[t].values);
}

TEST_CASE("continue_training with lr=0 returns the model bitwise unchanged") {
    const SampleBatch batch = separable_toy_set(16, 5);
    Model m = small_dense_net(21, 4, 6, 2);
    const Model tuned = continue_training(m, batch, 3, 0.0f, 8, 1);
    for (size_t t = 0; t < m.weights.size(); ++t)
        CHECK(tuned.weights[t].values == m.weights[t].values);
}

// ---- WMNN serialization ----

TEST_CASE("model files round-trip bit exactly") {
    auto arch = ArchitectureDescriptor::start(DataShape{10, 10, 1});
    arch.conv(3).maxpool().flatten().dense(12, Activation::Relu).softmax_output(4);
    Model m = init_model(arch, 123);
    m.metadata.owner_id = "owner-7";
    m.metadata.watermarked = true;

    const std::string path = "test_roundtrip.wmnn";
    save_model(m, path);
    const Model loaded = load_model(path);
    CHECK(loaded.arch.to_text() == m.arch.to_text());
    CHECK(loaded.metadata.owner_id == "owner-7");
    CHECK(loaded.metadata.watermarked);
    CHECK(loaded.metadata.training_seed == m.metadata.training_seed);
    REQUIRE(loaded.weights.size() == m.weights.size());
    for (size_t t = 0; t < m.weights.size(); ++t) {
        CHECK(loaded.weights[t].shape == m.weights[t].shape);
        CHECK(loaded.weights[t].values == m.weights[t].values);
    }

    // a second save of the loaded model is byte-identical
    const std::string path2 = "test_roundtrip2.wmnn";
    save_model(loaded, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("model loader rejects junk") {
    const std::string path = "test_junk.wmnn";
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE nothing";
    }
    CHECK_THROWS_AS(load_model(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("architecture text parses back to the same stack") {
    const ArchitectureDescriptor a = conv_classifier_arch(10);
    const ArchitectureDescriptor b = ArchitectureDescriptor::parse(a.to_text());
    CHECK(a.to_text() == b.to_text());
    CHECK(b.class_count() == 10);
    CHECK(b.parameter_count() == a.parameter_count());
    CHECK_THROWS_AS(ArchitectureDescriptor::parse("input 4\ndense 3 relu\n"), ShapeError);
    CHECK_THROWS_AS(ArchitectureDescriptor::parse("dense 3 relu\n"), FormatError);
}
