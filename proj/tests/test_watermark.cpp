#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <memory>

#include "wmevade/rng.hpp"
#include "wmevade/synth.hpp"
#include "wmevade/watermark.hpp"

using namespace wmevade;

namespace {

TriggerSet scripted_triggers(size_t count, size_t classes, uint64_t seed) {
    auto images = generate_trigger_images(count, seed, 0.0, TriggerFamily::Abstract);
    TriggerSet ts = assign_random_labels(std::move(images), classes, seed + 1);
    ts.owner_id = "owner-test";
    ts.generation_seed = seed;
    return ts;
}

// Oracle scripted to answer correctly on exactly the given trigger indices.
QueryOracle scripted_oracle(const TriggerSet& ts, const std::vector<size_t>& correct_at,
                            size_t* calls = nullptr) {
    auto counter = std::make_shared<size_t>(0);
    return [&ts, correct_at, counter, calls](const Image&) {
        const size_t i = (*counter)++;
        if (calls) *calls = *counter;
        const bool hit = std::find(correct_at.begin(), correct_at.end(), i) != correct_at.end();
        if (hit) return ts.labels[i];
        return (ts.labels[i] + 1) % 10;
    };
}

ArchitectureDescriptor tiny_arch() {
    auto arch = ArchitectureDescriptor::start(DataShape{28, 28, 1});
    arch.flatten().dense(32, Activation::Relu).softmax_output(10);
    return arch;
}

}  // namespace

TEST_CASE("verify applies the threshold rule") {
    const TriggerSet ts = scripted_triggers(10, 10, 1);

    VerificationReport r = verify(scripted_oracle(ts, {0, 1, 2, 3, 4, 5}), ts, 0.5);
    CHECK(r.queried == 10);
    CHECK(r.correct == 6);
    CHECK(r.threshold == 5);
    CHECK(r.claim);

    r = verify(scripted_oracle(ts, {0, 1, 2, 3}), ts, 0.5);
    CHECK(r.correct == 4);
    CHECK_FALSE(r.claim);

    CHECK_THROWS_AS(verify(scripted_oracle(ts, {}), ts, 0.0), ArgumentError);
    CHECK_THROWS_AS(verify(scripted_oracle(ts, {}), TriggerSet{}, 0.5), ArgumentError);
}

TEST_CASE("verify consults the oracle exactly once per trigger, in order") {
    const TriggerSet ts = scripted_triggers(7, 10, 2);
    size_t calls = 0;
    std::vector<const Image*> seen;
    const QueryOracle oracle = [&](const Image& img) {
        ++calls;
        seen.push_back(&img);
        return 0;
    };
    const VerificationReport r = verify(oracle, ts, 0.5);
    CHECK(calls == 7);
    REQUIRE(seen.size() == 7);
    for (size_t i = 0; i < 7; ++i) CHECK(seen[i] == &ts.images[i]);
    CHECK(r.outcomes.size() == 7);
    for (size_t i = 0; i < 7; ++i) {
        CHECK(r.outcomes[i].trigger_index == i);
        CHECK(r.outcomes[i].expected_label == ts.labels[i]);
        CHECK(r.outcomes[i].returned_label == 0);
    }
}

TEST_CASE("oracle failures abort verification") {
    const TriggerSet ts = scripted_triggers(4, 10, 3);
    const QueryOracle broken = [](const Image&) -> int { throw std::runtime_error("gone"); };
    CHECK_THROWS_AS(verify(broken, ts, 0.5), VerificationAborted);
}

TEST_CASE("claim flips monotonically: fixing a wrong answer never hurts") {
    Rng rng(404);
    const TriggerSet ts = scripted_triggers(10, 10, 4);
    for (int round = 0; round < 200; ++round) {
        std::vector<size_t> correct;
        for (size_t i = 0; i < 10; ++i)
            if (rng.below(2)) correct.push_back(i);
        const double eps = rng.uniform(0.05, 1.0);
        const bool before = verify(scripted_oracle(ts, correct), ts, eps).claim;

        std::vector<size_t> wrong;
        for (size_t i = 0; i < 10; ++i)
            if (std::find(correct.begin(), correct.end(), i) == correct.end()) wrong.push_back(i);
        if (wrong.empty()) continue;
        correct.push_back(wrong[rng.below(wrong.size())]);
        const bool after = verify(scripted_oracle(ts, correct), ts, eps).claim;
        if (before) CHECK(after);
    }
}

TEST_CASE("claim equals the exact threshold predicate on fuzzed counts") {
    Rng rng(606);
    for (int round = 0; round < 400; ++round) {
        const size_t m = 1 + rng.below(24);
        const TriggerSet ts = scripted_triggers(m, 10, 700 + round);
        const size_t k = rng.below(m + 1);
        std::vector<size_t> correct(k);
        for (size_t i = 0; i < k; ++i) correct[i] = i;
        const double eps = rng.uniform(1e-6, 1.0);
        const VerificationReport r = verify(scripted_oracle(ts, correct), ts, eps);
        CHECK(r.correct == k);
        CHECK(r.claim == (k >= claim_threshold(eps, m)));
    }
}

TEST_CASE("reevaluate changes the epsilon view without new queries") {
    const TriggerSet ts = scripted_triggers(10, 10, 5);
    const VerificationReport base = verify(scripted_oracle(ts, {0, 1, 2, 3, 4, 5}), ts, 0.5);
    const VerificationReport strict = reevaluate(base, 0.8);
    CHECK(strict.threshold == 8);
    CHECK_FALSE(strict.claim);
    CHECK(strict.correct == base.correct);
    CHECK(reevaluate(base, 0.3).claim);
}

TEST_CASE("report serialises to JSON with per-trigger outcomes") {
    const TriggerSet ts = scripted_triggers(3, 10, 6);
    const VerificationReport r = verify(scripted_oracle(ts, {1}), ts, 0.5);
    const std::string j = r.to_json();
    CHECK(j.find("\"queried\": 3") != std::string::npos);
    CHECK(j.find("\"outcomes\"") != std::string::npos);
    CHECK(j.find("\"trigger_index\"") != std::string::npos);
}

TEST_CASE("embedding an empty trigger set is plain training, bit for bit") {
    Dataset clean = make_synth_digits(120, 8, Split::Train);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.1f;
    cfg.seed = 12;

    TriggerSet empty;
    const Model embedded = embed_from_scratch(clean, empty, tiny_arch(), cfg);
    const Model plain = train(init_model(tiny_arch(), cfg.seed), to_batch(clean), cfg).model;
    REQUIRE(embedded.weights.size() == plain.weights.size());
    for (size_t t = 0; t < plain.weights.size(); ++t)
        CHECK(embedded.weights[t].values == plain.weights[t].values);
    CHECK_FALSE(embedded.metadata.watermarked);
}

TEST_CASE("embedding learns every trigger at desk scale") {
    Dataset clean = make_synth_digits(600, 9, Split::Train);
    TriggerSet ts = scripted_triggers(10, 10, 77);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.1f;
    cfg.seed = 13;
    const Model m = embed_from_scratch(clean, ts, tiny_arch(), cfg, 40);
    CHECK(m.metadata.watermarked);
    CHECK(trigger_accuracy(m, ts) == doctest::Approx(1.0));

    // owner self-verification at a harsh epsilon
    const VerificationReport r = verify(model_oracle(m), ts, 0.9);
    CHECK(r.claim);
    CHECK(r.correct == 10);
}

TEST_CASE("embedding rejects mismatched trigger labels and shapes") {
    Dataset clean = make_synth_digits(50, 10, Split::Train);
    TriggerSet bad = scripted_triggers(3, 10, 5);
    bad.labels[1] = 99;
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_AS(embed_from_scratch(clean, bad, tiny_arch(), cfg), LabelError);

    TriggerSet odd = scripted_triggers(2, 10, 6);
    odd.images[0] = Image(14, 14, 1);
    CHECK_THROWS_AS(embed_from_scratch(clean, odd, tiny_arch(), cfg), ShapeError);
}

TEST_CASE("unwatermarked models answer random trigger labels at chance") {
    // 100 seeded random-weight models, fresh labels each: matches ~ 1/l
    double total = 0.0;
    for (uint64_t s = 0; s < 100; ++s) {
        const Model m = init_model(tiny_arch(), 9000 + s);
        TriggerSet ts = scripted_triggers(10, 10, 500 + s);
        total += trigger_accuracy(m, ts);
    }
    const double mean = total / 100.0;
    CHECK(mean > 0.06);
    CHECK(mean < 0.14);
}

TEST_CASE("constant-output model scores perfectly on its favourite label") {
    Model m = init_model(tiny_arch(), 3);
    for (Tensor& w : m.weights) std::fill(w.values.begin(), w.values.end(), 0.0f);
    m.weights.back().values[4] = 25.0f;  // softmax bias: always answer 4
    TriggerSet ts = scripted_triggers(6, 10, 11);
    std::fill(ts.labels.begin(), ts.labels.end(), 4);
    CHECK(trigger_accuracy(m, ts) == doctest::Approx(1.0));
}

TEST_CASE("fine_tune with zero learning rate is an exact no-op") {
    Dataset clean = make_synth_digits(80, 14, Split::Train);
    const Model m = init_model(tiny_arch(), 21);
    const Model tuned = fine_tune(m, clean, 2, 0.0f, 16, 5);
    for (size_t t = 0; t < m.weights.size(); ++t)
        CHECK(tuned.weights[t].values == m.weights[t].values);
    CHECK_THROWS_AS(fine_tune(m, clean, 0, 0.1f), ConfigError);
}

TEST_CASE("black-box discipline: verify works against a pure function") {
    // no Model anywhere in sight; the oracle is a closed-over lookup table
    const TriggerSet ts = scripted_triggers(5, 10, 15);
    std::vector<int> answers = {ts.labels[0], ts.labels[1], ts.labels[2], 0, 0};
    size_t cursor = 0;
    const VerificationReport r =
        verify([&](const Image&) { return answers[cursor++]; }, ts, 0.5);
    CHECK(r.correct >= 3);
}
