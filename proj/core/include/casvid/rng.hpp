#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace casvid {

// Deterministic RNG. Gaussian draws use a hand-rolled Box-Muller so the
// byte stream does not depend on the standard library's distribution
// internals; seeded streams are derived with splitmix64 so independent
// consumers (init, batching, noise) never share state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Inclusive range [lo, hi].
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    double normal();

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);
    static std::uint64_t derive(std::uint64_t seed, std::string_view label);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace casvid
