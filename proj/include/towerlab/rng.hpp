#pragma once

#include <cstdint>

namespace towerlab {

// Counter-based generator: value(i) = splitmix64 finalizer applied to
// seed + i * golden. Stateless given (seed, counter), so parallel streams
// and bit-identical reruns come for free. Referred to as
// "splitmix64-counter" in output metadata.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : base_(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1))) {}

    static const char* name() { return "splitmix64-counter"; }

    std::uint64_t word(std::uint64_t counter) const {
        std::uint64_t z = base_ + counter * 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1), 53-bit resolution
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(word(counter) >> 11) * 0x1.0p-53;
    }

    std::uint64_t next() { return word(counter_++); }
    double next_uniform() { return uniform(counter_++); }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

} // namespace towerlab
