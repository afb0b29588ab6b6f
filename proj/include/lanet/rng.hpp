#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lanet {

/// mt19937_64 with hand-rolled draw helpers. std::uniform_* distributions are
/// implementation-defined, which would break bitwise reproducibility of
/// checkpoints and datasets across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return std::ldexp(static_cast<double>(eng_() >> 11), -53); }

    /// Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0,n).
    std::uint64_t below(std::uint64_t n) {
        // modulo bias is negligible for n << 2^64 and irrelevant here
        return n ? eng_() % n : 0;
    }

    int range(int lo, int hi) {  // inclusive ends
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool coin() { return (eng_() & 1u) != 0; }

    /// Standard normal via Box-Muller.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Derive an independent stream, e.g. per sample id.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        // splitmix64 of the pair
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace lanet
