#pragma once

#include <cstdint>
#include <string>

namespace wmevade {

// Uniform-prediction ("die") model of watermark verification against an
// ensemble gateway: the owner's model answers its trigger correctly, every
// other member rolls a fair l-sided die, the gateway takes the mode with
// uniform tie-breaking among the maximal-count labels.

struct DieModelConfig {
    size_t ensemble_size = 2;   // n >= 2
    size_t class_count = 2;     // l >= 2
    uint64_t trials = 1;
    uint64_t seed = 0;
    double own_accuracy = 1.0;  // owner's trigger accuracy; 1 per the model
};

struct SimulationResult {
    double estimate = 0.0;
    double standard_error = 0.0;
    uint64_t trials = 0;
    std::string method;  // "exact" or "monte-carlo"
};

// Exact probability that the owner's trigger label wins, by multinomial sum
// over the other n-1 members' vote profiles. Refuses (n,l) outside the
// documented enumeration bound l^(n-1) <= 10^8; use Monte Carlo there.
double exact_ensemble_verification(size_t ensemble_size, size_t class_count);

SimulationResult exact_ensemble_result(size_t ensemble_size, size_t class_count);

// Seeded Monte Carlo estimate of the same probability; standard error is
// sqrt(p(1-p)/trials).
SimulationResult simulate_ensemble_verification(const DieModelConfig& cfg);

// Expected verified fraction through a detector gateway with the given
// true-positive rate and stolen-model trigger accuracy: (1-tpr)*a + tpr/l.
double detector_verified_fraction(double tpr, double trigger_accuracy, size_t class_count);

// P[Binomial(m, p) >= ceil(epsilon*m)] with p = exact_ensemble_verification;
// the owner's trigger outcomes are independent under the model.
double predict_claim_probability(size_t ensemble_size, size_t class_count, size_t trigger_count,
                                 double epsilon);

// Binomial upper tail P[X >= threshold], X ~ Binomial(m, p).
double binomial_tail(size_t m, double p, size_t threshold);

}  // namespace wmevade
