#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace wmevade {

// splitmix64, used to expand seeds into xoshiro state.
constexpr uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256** by Blackman & Vigna. Fixed generator for the whole project:
// every statistical assertion in the tests depends on it staying put.
class Rng {
  public:
    using result_type = uint64_t;

    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    static constexpr uint64_t min() { return 0; }
    static constexpr uint64_t max() { return ~0ULL; }

    uint64_t operator()() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased uniform integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        const uint64_t limit = max() - max() % n;
        uint64_t x;
        do {
            x = (*this)();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller (one value per call, no cache, so the
    // stream position is a pure function of the call count).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // The canonical xoshiro256** jump: advances 2^128 steps. Independent
    // parallel streams are derived by jumping `stream` times.
    void jump() {
        static constexpr std::array<uint64_t, 4> kJump = {
            0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
        std::array<uint64_t, 4> s{0, 0, 0, 0};
        for (uint64_t word : kJump) {
            for (int b = 0; b < 64; ++b) {
                if (word & (1ULL << b)) {
                    for (int i = 0; i < 4; ++i) s[i] ^= state_[i];
                }
                (*this)();
            }
        }
        state_ = s;
    }

    // Stream `index` of the generator seeded with `seed`.
    static Rng stream(uint64_t seed, uint64_t index) {
        Rng r(seed);
        for (uint64_t i = 0; i < index; ++i) r.jump();
        return r;
    }

  private:
    static constexpr uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> state_{};
};

// FNV-1a, used to hash component names for seed derivation and to fingerprint
// configs in report headers.
constexpr uint64_t fnv1a64(std::string_view text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic split of a master seed into per-component seeds:
// seed_for(name) = splitmix64(master XOR fnv1a64(name)).
inline uint64_t derive_seed(uint64_t master, std::string_view component) {
    uint64_t s = master ^ fnv1a64(component);
    return splitmix64(s);
}

}  // namespace wmevade
