#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace teachirl {

/**
Seedable 64-bit random source shared by every stochastic operation.

The engine is MT19937-64 (std::mt19937_64, whose output sequence is fixed by
the C++ standard). Derived quantities are computed here rather than through
the <random> distributions, which are implementation defined:

  - uniform():      (u64 >> 11) * 2^-53, a double in [0, 1)
  - categorical():  inverse-CDF scan over the weights with one uniform draw
  - normal():       Box-Muller using two uniform draws
  - fork():         child seeded with splitmix64(next_u64())

so a given seed replays the same stream on any conforming toolchain.
*/
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Integer in [0, n).
    std::size_t below(std::size_t n);

    /// Index drawn proportionally to non-negative weights (need not be normalized).
    std::size_t categorical(std::span<const double> weights);

    double normal();

    /// Independent child stream; advances this generator by one draw.
    Rng fork();

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace teachirl
