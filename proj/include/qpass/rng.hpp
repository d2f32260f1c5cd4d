#pragma once

#include <cmath>
#include <cstdint>

namespace qpass {

// Counter-based generator: every draw is a hash of (key, counter), so streams
// keyed by (seed, sample, channel, ...) are independent and reproducible no
// matter in which order the simulation visits them.
class CounterRng {
public:
    CounterRng() = default;
    explicit CounterRng(uint64_t key) : key_(key) {}

    static uint64_t mix(uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t combine(uint64_t a, uint64_t b) { return mix(a ^ mix(b)); }

    /// Derive a stream key from a seed and up to four stream coordinates.
    static CounterRng stream(uint64_t seed, uint64_t s0, uint64_t s1 = 0, uint64_t s2 = 0,
                             uint64_t s3 = 0) {
        uint64_t k = mix(seed);
        k = combine(k, s0);
        k = combine(k, s1);
        k = combine(k, s2);
        k = combine(k, s3);
        return CounterRng(k);
    }

    uint64_t next_u64() { return combine(key_, counter_++); }

    /// Uniform double in [0, 1).
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1); safe as a log argument.
    double u01_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t mask = ~uint64_t{0} >> __builtin_clzll(n | 1);
        for (;;) {
            uint64_t v = next_u64() & mask;
            if (v < n) return v;
        }
    }

    double normal() {
        double u1 = u01_open();
        double u2 = u01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    /// Exact Poisson sampling; sequential inversion for small means, the PTRS
    /// transformed-rejection method for large ones.
    uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 10.0) {
            double limit = std::exp(-lambda);
            uint64_t k = 0;
            double p = u01_open();
            while (p > limit) {
                ++k;
                p *= u01_open();
            }
            return k;
        }
        const double slam = std::sqrt(lambda);
        const double loglam = std::log(lambda);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double u = u01() - 0.5;
            double v = u01_open();
            double us = 0.5 - std::fabs(u);
            double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<uint64_t>(kf);
            if (kf < 0.0 || (us < 0.013 && v > us)) continue;
            double k = kf;
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
                -lambda + k * loglam - std::lgamma(k + 1.0)) {
                return static_cast<uint64_t>(kf);
            }
        }
    }

    /// Exact binomial sampling via geometric waiting times, O(n*p) expected.
    uint64_t binomial(uint64_t n, double p) {
        if (n == 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        if (p > 0.5) return n - binomial(n, 1.0 - p);
        const double log1mp = std::log1p(-p);
        uint64_t count = 0;
        double trials = 0.0;
        for (;;) {
            double gap = std::floor(std::log(u01_open()) / log1mp) + 1.0;
            trials += gap;
            if (trials > static_cast<double>(n)) break;
            ++count;
        }
        return count;
    }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace qpass
