#include "wmevade/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "wmevade/error.hpp"
#include "wmevade/rng.hpp"
#include "wmevade/watermark.hpp"

namespace wmevade {

namespace {

void check_die_args(size_t n, size_t l) {
    if (n < 2) throw ArgumentError("ensemble size must be >= 2");
    if (l < 2) throw ArgumentError("class count must be >= 2");
}

bool within_enumeration_bound(size_t n, size_t l) {
    double cost = 1.0;
    for (size_t i = 1; i < n; ++i) {
        cost *= static_cast<double>(l);
        if (cost > 1e8) return false;
    }
    return true;
}

// Sum over partitions of the non-owner vote mass. For each count c0 the
// owner's label receives from the other m = n-1 members, enumerate the
// partitions of m - c0 across the remaining l-1 interchangeable labels:
// weight = m!/(c0! prod(part_i!))            (vote orderings)
//        * (l-1)(l-2)...(l-k) / prod(mult_j!) (label assignments)
//        * (1/l)^m                            (uniform votes)
// and the owner wins outright when c0+1 exceeds the largest part, or with
// probability 1/(ties) when it equals it.
class PartitionSum {
  public:
    PartitionSum(size_t m, size_t l) : m_(m), l_(l) {
        fact_.resize(m + 2, 1.0);
        for (size_t i = 1; i < fact_.size(); ++i)
            fact_[i] = fact_[i - 1] * static_cast<double>(i);
    }

    double run() {
        const double vote_prob = std::pow(static_cast<double>(l_), -static_cast<double>(m_));
        double total = 0.0;
        for (size_t c0 = 0; c0 <= m_; ++c0) {
            parts_.clear();
            total += recurse(m_ - c0, m_, c0) * (fact_[m_] / fact_[c0]) * vote_prob;
        }
        return total;
    }

  private:
    // Enumerate partitions of `remaining` with parts <= `max_part`, largest
    // part first; returns the accumulated weighted win probability.
    double recurse(size_t remaining, size_t max_part, size_t c0) {
        if (remaining == 0) return close_partition(c0);
        if (parts_.size() == l_ - 1) return 0.0;  // no labels left to assign
        double acc = 0.0;
        for (size_t part = std::min(remaining, max_part); part >= 1; --part) {
            parts_.push_back(part);
            acc += recurse(remaining - part, part, c0);
            parts_.pop_back();
        }
        return acc;
    }

    double close_partition(size_t c0) {
        // label assignment count: falling factorial over distinct labels,
        // divided by multiplicities of repeated part sizes
        double assignments = 1.0;
        for (size_t t = 0; t < parts_.size(); ++t)
            assignments *= static_cast<double>(l_ - 1 - t);
        double orderings = 1.0;
        size_t run = 1;
        for (size_t i = 0; i < parts_.size(); ++i) {
            orderings /= fact_[parts_[i]];
            if (i + 1 < parts_.size() && parts_[i + 1] == parts_[i]) {
                ++run;
            } else {
                assignments /= fact_[run];
                run = 1;
            }
        }

        const size_t own = c0 + 1;
        const size_t top = parts_.empty() ? 0 : parts_[0];
        double win;
        if (own > top) {
            win = 1.0;
        } else if (own == top) {
            const size_t ties =
                1 + static_cast<size_t>(std::count(parts_.begin(), parts_.end(), top));
            win = 1.0 / static_cast<double>(ties);
        } else {
            win = 0.0;
        }
        return win * assignments * orderings;
    }

    size_t m_;
    size_t l_;
    std::vector<double> fact_;
    std::vector<size_t> parts_;
};

}  // namespace

double exact_ensemble_verification(size_t ensemble_size, size_t class_count) {
    check_die_args(ensemble_size, class_count);
    if (!within_enumeration_bound(ensemble_size, class_count))
        throw ArgumentError(
            "enumeration bound l^(n-1) <= 10^8 exceeded; use simulate_ensemble_verification");
    return PartitionSum(ensemble_size - 1, class_count).run();
}

SimulationResult exact_ensemble_result(size_t ensemble_size, size_t class_count) {
    SimulationResult r;
    r.estimate = exact_ensemble_verification(ensemble_size, class_count);
    r.standard_error = 0.0;
    r.trials = 0;
    r.method = "exact";
    return r;
}

SimulationResult simulate_ensemble_verification(const DieModelConfig& cfg) {
    check_die_args(cfg.ensemble_size, cfg.class_count);
    if (cfg.trials < 1) throw ArgumentError("trials must be >= 1");
    if (cfg.own_accuracy < 0.0 || cfg.own_accuracy > 1.0)
        throw ArgumentError("own_accuracy must be in [0,1]");

    Rng rng(cfg.seed);
    const size_t m = cfg.ensemble_size - 1;
    const size_t l = cfg.class_count;
    std::vector<int> votes(m);
    uint64_t wins = 0;
    for (uint64_t t = 0; t < cfg.trials; ++t) {
        // relabel so the owner's assigned trigger label is 0
        int own_vote = 0;
        if (cfg.own_accuracy < 1.0 && rng.uniform() >= cfg.own_accuracy)
            own_vote = 1 + static_cast<int>(rng.below(l - 1));
        for (size_t i = 0; i < m; ++i) votes[i] = static_cast<int>(rng.below(l));
        votes.push_back(own_vote);
        std::sort(votes.begin(), votes.end());

        // run-length pass: max count, tie set size, count of label 0
        size_t best = 0, ties = 0;
        bool zero_at_best = false;
        for (size_t i = 0; i < votes.size();) {
            size_t j = i;
            while (j < votes.size() && votes[j] == votes[i]) ++j;
            const size_t count = j - i;
            if (count > best) {
                best = count;
                ties = 1;
                zero_at_best = votes[i] == 0;
            } else if (count == best) {
                ++ties;
                if (votes[i] == 0) zero_at_best = true;
            }
            i = j;
        }
        votes.pop_back();

        if (zero_at_best && (ties == 1 || rng.below(ties) == 0)) ++wins;
    }

    SimulationResult r;
    r.trials = cfg.trials;
    r.method = "monte-carlo";
    r.estimate = static_cast<double>(wins) / static_cast<double>(cfg.trials);
    r.standard_error = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(cfg.trials));
    return r;
}

double detector_verified_fraction(double tpr, double trigger_accuracy, size_t class_count) {
    if (tpr < 0.0 || tpr > 1.0) throw ArgumentError("tpr must be in [0,1]");
    if (trigger_accuracy < 0.0 || trigger_accuracy > 1.0)
        throw ArgumentError("trigger accuracy must be in [0,1]");
    if (class_count < 2) throw ArgumentError("class count must be >= 2");
    return (1.0 - tpr) * trigger_accuracy + tpr / static_cast<double>(class_count);
}

double binomial_tail(size_t m, double p, size_t threshold) {
    if (p < 0.0 || p > 1.0) throw ArgumentError("probability must be in [0,1]");
    if (threshold > m) return 0.0;
    if (threshold == 0) return 1.0;
    if (p == 1.0) return 1.0;
    if (p == 0.0) return 0.0;
    // term_k = C(m,k) p^k (1-p)^(m-k)
    double tail = 0.0;
    double log_term = static_cast<double>(m) * std::log1p(-p);  // k = 0
    // walk k upward keeping a log-space term so deep tails do not underflow
    for (size_t k = 0; k <= m; ++k) {
        if (k >= threshold) tail += std::exp(log_term);
        if (k < m)
            log_term += std::log(static_cast<double>(m - k)) -
                        std::log(static_cast<double>(k + 1)) + std::log(p) - std::log1p(-p);
    }
    return std::min(tail, 1.0);
}

double predict_claim_probability(size_t ensemble_size, size_t class_count, size_t trigger_count,
                                 double epsilon) {
    if (trigger_count < 1) throw ArgumentError("trigger count must be >= 1");
    const double p = exact_ensemble_verification(ensemble_size, class_count);
    const size_t threshold = claim_threshold(epsilon, trigger_count);
    return binomial_tail(trigger_count, p, threshold);
}

}  // namespace wmevade
