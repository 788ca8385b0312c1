#pragma once

// Deterministic RNG used everywhere randomness is needed.
// xoshiro256** seeded via splitmix64: integer state machine only, so streams
// are bit-identical across platforms and runs for the same 64-bit seed.

#include <cstdint>
#include <cstddef>
#include <cmath>
#include <string_view>
#include <vector>

namespace exbehrt {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stable 64-bit hash of a byte string mixed with a seed (FNV-1a + splitmix
// finalizer). Used for split assignment, which must be a pure function of
// (patient_id, seed).
inline uint64_t hash64(std::string_view bytes, uint64_t seed) {
    uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    uint64_t s = h;
    return splitmix64(s);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t s = seed;
        for (auto& word : state_) word = splitmix64(s);
        gauss_cached_ = false;
    }

    // Derive an independent substream, e.g. one per patient.
    Rng fork(uint64_t stream) const {
        return Rng(mix64(state_[0] ^ state_[3], stream));
    }

    uint64_t next_u64() {
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

    // Uniform in [0,1), 53-bit mantissa construction.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0,n), unbiased via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Inclusive integer range.
    int range(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double gauss(double mu, double sigma) {
        if (gauss_cached_) {
            gauss_cached_ = false;
            return mu + gauss_spare_ * sigma;
        }
        // Box-Muller; u clamped away from 0 so log stays finite.
        double u = uniform();
        if (u <= 0.0) u = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u));
        const double theta = 6.283185307179586476925286766559 * uniform();
        gauss_spare_ = r * std::sin(theta);
        gauss_cached_ = true;
        return mu + r * std::cos(theta) * sigma;
    }

    // Index into a discrete distribution given non-negative weights.
    size_t pick(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        double r = uniform() * total;
        for (size_t i = 0; i + 1 < weights.size(); ++i) {
            r -= weights[i];
            if (r < 0.0) return i;
        }
        return weights.empty() ? 0 : weights.size() - 1;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double gauss_spare_ = 0.0;
    bool gauss_cached_ = false;
};

} // namespace exbehrt
