#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace rsfm {

/// splitmix64 finalizer; used to combine seeds so that derived streams
/// (per frame pair, per restart, per generator purpose) are decorrelated
/// and independent of evaluation order.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix_seed(mix_seed(a, b), c);
}

/// Deterministic RNG. The engine (mt19937_64) is fully specified by the
/// standard and the distributions below are hand-rolled, so identical seeds
/// give bit-identical streams on every platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Modulo bias is negligible for the n used here.
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller (deterministic, no cached state).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// k distinct indices from [0, n) into out[0..k); draw order, not sorted.
    void sample_distinct(int n, int k, int* out) {
        int filled = 0;
        while (filled < k) {
            const int candidate = uniform_int(n);
            bool seen = false;
            for (int i = 0; i < filled; ++i) {
                if (out[i] == candidate) {
                    seen = true;
                    break;
                }
            }
            if (!seen) out[filled++] = candidate;
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rsfm
