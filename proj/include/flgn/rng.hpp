#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace flgn {

// splitmix64 step: advances the state and returns the next 64-bit value.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d9575f72e9cc54ULL ^ 0x2545f4914f6cdd1dULL;
    return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// FNV-1a over a string, used to derive named seed streams.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-style deterministic generator. All randomness in the project
// flows through explicitly seeded streams of this type; a stream is fully
// determined by (seed, name) and every draw is reproducible bit-for-bit.
class RngStream {
public:
    RngStream() : state_(0) {}
    explicit RngStream(uint64_t seed) : state_(splitmix64(seed)) {}
    RngStream(uint64_t seed, std::string_view name) : state_(mix64(seed, fnv1a64(name))) {}

    // Derive an independent child stream, e.g. one per sample index.
    RngStream fork(uint64_t idx) const {
        RngStream s;
        s.state_ = mix64(state_, idx * 0x9e3779b97f4a7c15ULL + 0x1d8e4e27c47d124fULL);
        return s;
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    // Uniform integer in [0, n). n must be > 0; modulo bias is negligible
    // for the desk-scale ranges used here (n << 2^64).
    uint64_t next_below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per
    // call so replay never depends on hidden cache state.
    double normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

}  // namespace flgn
