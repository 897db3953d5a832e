#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sanet {

// Counter-based generator built on the splitmix64 finalizer. Substreams are
// derived by hashing ids into the seed, so a stream for (run, agent, iteration)
// is reachable in O(1) without sharing state between parallel consumers.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Fold an id into a seed; chain calls to key a stream by several ids.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t id) {
        return mix(seed ^ (id * 0xD1B54A32D192ED03ull + 0x8BB84B93962EACC9ull));
    }

    CounterRng at(std::uint64_t a) const { return CounterRng(derive(state_, a)); }
    CounterRng at(std::uint64_t a, std::uint64_t b) const {
        return CounterRng(derive(derive(state_, a), b));
    }
    CounterRng at(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        return CounterRng(derive(derive(derive(state_, a), b), c));
    }

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller, cosine branch only: exactly two raw draws per variate, so the
    // draw count per (agent, iteration) stream is fixed and reproducible.
    double gaussian() {
        double u1;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

} // namespace sanet
