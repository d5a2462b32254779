#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "wmevade/watermark.hpp"
#include "wmevade/rng.hpp"

namespace wmevade {

// The adversary's voting gateway: answers with the mode of the member
// models' predictions; ties among the maximal-count labels are broken
// uniformly at random from the seeded stream (advanced once per tie event).
class EnsembleGateway {
  public:
    EnsembleGateway(std::vector<const Model*> models, uint64_t tie_break_seed);

    int predict(const Image& image);
    int predict(const Tensor& image);

    QueryOracle oracle();  // holds a reference to this gateway

    size_t member_count() const { return models_.size(); }
    size_t class_count() const { return class_count_; }
    uint64_t query_count() const { return queries_; }

  private:
    std::vector<const Model*> models_;
    size_t class_count_ = 0;
    Rng tie_rng_;
    uint64_t queries_ = 0;
};

// Pick the winner from a vote multiset: the unique most frequent label, or a
// uniform draw among all labels tied for the maximal count. Exposed for the
// exhaustive small-case property tests.
int vote_winner(const std::vector<int>& votes, size_t class_count, Rng& tie_rng);

struct OwnerResult {
    std::string owner_id;
    double verified_fraction = 0.0;
    std::vector<VerificationReport> reports;  // one per epsilon in the grid
};

struct EnsembleExperimentResult {
    size_t ensemble_size = 0;
    std::vector<OwnerResult> owners;
    double mean_fraction = 0.0;
    std::vector<double> epsilons;
};

// Fig.-2 style experiment: for each requested size n, gateway over the first
// n owners' models, then each of those owners runs verification against it
// (fresh tie-break stream per owner).
std::vector<EnsembleExperimentResult> run_ensemble_experiment(
    const std::vector<std::pair<const Model*, const TriggerSet*>>& owners,
    const std::vector<size_t>& sizes, const std::vector<double>& epsilons, uint64_t seed);

}  // namespace wmevade
