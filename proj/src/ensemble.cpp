#include "wmevade/ensemble.hpp"

#include <algorithm>

namespace wmevade {

int vote_winner(const std::vector<int>& votes, size_t class_count, Rng& tie_rng) {
    std::vector<int> counts(class_count, 0);
    for (int v : votes) {
        if (v < 0 || static_cast<size_t>(v) >= class_count)
            throw LabelError("vote outside class range");
        ++counts[static_cast<size_t>(v)];
    }
    int best_count = 0;
    for (int c : counts) best_count = std::max(best_count, c);
    std::vector<int> tied;
    for (size_t k = 0; k < class_count; ++k)
        if (counts[k] == best_count) tied.push_back(static_cast<int>(k));
    if (tied.size() == 1) return tied[0];
    return tied[tie_rng.below(tied.size())];  // one stream advance per tie event
}

EnsembleGateway::EnsembleGateway(std::vector<const Model*> models, uint64_t tie_break_seed)
    : models_(std::move(models)), tie_rng_(tie_break_seed) {
    if (models_.size() < 2) throw ArgumentError("ensemble needs at least 2 models");
    class_count_ = models_[0]->class_count();
    const auto& input = models_[0]->arch.input();
    for (const Model* m : models_) {
        if (m->class_count() != class_count_)
            throw ConsistencyError("ensemble members disagree on class count");
        if (!(m->arch.input() == input))
            throw ConsistencyError("ensemble members disagree on input shape");
    }
}

int EnsembleGateway::predict(const Tensor& image) {
    std::vector<int> votes;
    votes.reserve(models_.size());
    for (const Model* m : models_) votes.push_back(wmevade::predict(*m, image));
    ++queries_;
    return vote_winner(votes, class_count_, tie_rng_);
}

int EnsembleGateway::predict(const Image& image) { return predict(to_tensor(image)); }

QueryOracle EnsembleGateway::oracle() {
    return [this](const Image& image) { return predict(image); };
}

std::vector<EnsembleExperimentResult> run_ensemble_experiment(
    const std::vector<std::pair<const Model*, const TriggerSet*>>& owners,
    const std::vector<size_t>& sizes, const std::vector<double>& epsilons, uint64_t seed) {
    std::vector<EnsembleExperimentResult> results;
    for (size_t n : sizes) {
        if (n < 1 || n > owners.size()) throw ArgumentError("ensemble size out of range");
        EnsembleExperimentResult res;
        res.ensemble_size = n;
        res.epsilons = epsilons;
        double fraction_sum = 0.0;
        for (size_t owner = 0; owner < n; ++owner) {
            OwnerResult or_;
            or_.owner_id = owners[owner].second->owner_id;
            const TriggerSet& triggers = *owners[owner].second;

            // n = 1 is the calibration degenerate: the gateway is the owner's
            // own model (the gateway type itself requires n >= 2).
            QueryOracle oracle;
            std::unique_ptr<EnsembleGateway> gw;
            if (n == 1) {
                oracle = model_oracle(*owners[0].first);
            } else {
                std::vector<const Model*> members;
                for (size_t i = 0; i < n; ++i) members.push_back(owners[i].first);
                const uint64_t tie_seed = derive_seed(
                    seed, "ensemble/tiebreak/n=" + std::to_string(n) + "/owner=" +
                              std::to_string(owner));
                gw = std::make_unique<EnsembleGateway>(std::move(members), tie_seed);
                oracle = gw->oracle();
            }

            // One query pass per owner; every epsilon view is arithmetic on
            // the same outcomes.
            const VerificationReport base = verify(oracle, triggers, 1.0);
            if (epsilons.empty())
                or_.reports.push_back(base);
            else
                for (double eps : epsilons) or_.reports.push_back(reevaluate(base, eps));
            or_.verified_fraction =
                static_cast<double>(base.correct) / static_cast<double>(triggers.size());
            fraction_sum += or_.verified_fraction;
            res.owners.push_back(std::move(or_));
        }
        res.mean_fraction = fraction_sum / static_cast<double>(res.owners.size());
        results.push_back(std::move(res));
    }
    return results;
}

}  // namespace wmevade
