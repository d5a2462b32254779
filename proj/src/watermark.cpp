#include "wmevade/watermark.hpp"

#include <cmath>

#include <json.hpp>

namespace wmevade {

QueryOracle model_oracle(const Model& model) {
    return [&model](const Image& image) { return predict(model, to_tensor(image)); };
}

size_t claim_threshold(double epsilon, size_t queried) {
    if (!(epsilon > 0.0) || epsilon > 1.0) throw ArgumentError("epsilon must be in (0, 1]");
    if (queried == 0) throw ArgumentError("threshold needs at least one query");
    if (queried > (1ull << 40)) throw ArgumentError("query count too large for exact threshold");

    // epsilon = mant * 2^exp exactly (mant a 53-bit integer), so the product
    // epsilon*m is exact in 128-bit integer arithmetic. A product within
    // m*2^-48 of an integer is treated as that integer: the caller's epsilon
    // is the nearest double to an intended rational (0.8, 1/3, ...), and the
    // representation error must not move the threshold across a boundary.
    int exp = 0;
    const double mant_d = std::frexp(epsilon, &exp);  // in [0.5, 1)
    const auto mant = static_cast<unsigned __int128>(std::ldexp(mant_d, 53));
    exp -= 53;
    const unsigned __int128 prod = mant * static_cast<unsigned __int128>(queried);
    if (exp >= 0) return static_cast<size_t>(prod << exp);  // epsilon = 1

    const int shift = -exp;
    if (shift >= 127) return 1;  // epsilon*m is far below 1 but positive
    const unsigned __int128 one = 1;
    const unsigned __int128 whole = prod >> shift;
    const unsigned __int128 rem = prod & ((one << shift) - 1);  // frac = rem * 2^-shift
    if (rem == 0) return static_cast<size_t>(whole);

    // snap down when frac <= m * 2^-48, i.e. rem * 2^48 <= m * 2^shift
    bool snap;
    if (shift >= 48)
        snap = rem <= (static_cast<unsigned __int128>(queried) << (shift - 48));
    else
        snap = (rem << (48 - shift)) <= static_cast<unsigned __int128>(queried);
    const auto result = static_cast<size_t>(whole + (snap ? 0 : 1));
    return result == 0 ? 1 : result;  // epsilon > 0 always demands at least one hit
}

Model embed_from_scratch(const Dataset& clean, const TriggerSet& triggers,
                         const ArchitectureDescriptor& arch, const TrainConfig& cfg,
                         size_t replication) {
    clean.validate();
    for (int label : triggers.labels)
        if (label < 0 || static_cast<size_t>(label) >= clean.class_count)
            throw LabelError("trigger label out of class range");
    for (const Image& img : triggers.images)
        if (img.numel() != clean.images[0].numel() || img.height != clean.images[0].height)
            throw ShapeError("trigger image shape does not match clean data");

    std::vector<Image> images = clean.images;
    std::vector<int> labels = clean.labels;
    for (size_t rep = 0; rep < replication; ++rep) {
        for (size_t i = 0; i < triggers.size(); ++i) {
            images.push_back(triggers.images[i]);
            labels.push_back(triggers.labels[i]);
        }
    }

    Model fresh = init_model(arch, cfg.seed);
    fresh.metadata.owner_id = triggers.owner_id;
    fresh.metadata.watermarked = !triggers.images.empty();
    TrainResult result = train(fresh, to_batch(images, labels), cfg);
    return std::move(result.model);
}

VerificationReport verify(const QueryOracle& oracle, const TriggerSet& triggers, double epsilon) {
    if (triggers.size() == 0) throw ArgumentError("verification needs a nonempty trigger set");
    if (!(epsilon > 0.0) || epsilon > 1.0) throw ArgumentError("epsilon must be in (0, 1]");

    VerificationReport report;
    report.queried = triggers.size();
    report.epsilon = epsilon;
    report.threshold = claim_threshold(epsilon, report.queried);
    for (size_t i = 0; i < triggers.size(); ++i) {
        int answer;
        try {
            answer = oracle(triggers.images[i]);
        } catch (const std::exception& e) {
            throw VerificationAborted(std::string("oracle failed at trigger ") +
                                      std::to_string(i) + ": " + e.what());
        }
        report.outcomes.push_back({i, triggers.labels[i], answer});
        if (answer == triggers.labels[i]) ++report.correct;
    }
    report.claim = report.correct >= report.threshold;
    return report;
}

VerificationReport reevaluate(const VerificationReport& report, double epsilon) {
    VerificationReport out = report;
    out.epsilon = epsilon;
    out.threshold = claim_threshold(epsilon, out.queried);
    out.claim = out.correct >= out.threshold;
    return out;
}

Model fine_tune(const Model& model, const Dataset& clean, size_t epochs, float lr,
                size_t batch_size, uint64_t seed) {
    clean.validate();
    return continue_training(model, to_batch(clean), epochs, lr, batch_size, seed);
}

double trigger_accuracy(const Model& model, const TriggerSet& triggers) {
    if (triggers.size() == 0) throw ArgumentError("empty trigger set");
    size_t hits = 0;
    for (size_t i = 0; i < triggers.size(); ++i)
        if (predict(model, to_tensor(triggers.images[i])) == triggers.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(triggers.size());
}

std::string VerificationReport::to_json() const {
    nlohmann::json j;
    j["queried"] = queried;
    j["correct"] = correct;
    j["epsilon"] = epsilon;
    j["threshold"] = threshold;
    j["claim"] = claim;
    auto& arr = j["outcomes"] = nlohmann::json::array();
    for (const TriggerOutcome& o : outcomes)
        arr.push_back({{"trigger_index", o.trigger_index},
                       {"expected_label", o.expected_label},
                       {"returned_label", o.returned_label}});
    return j.dump(2);
}

}  // namespace wmevade
