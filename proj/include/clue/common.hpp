#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace clue {

// Domain error: bad input data, violated invariant, unreadable file.
// The CLI maps these to exit code 1.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class FormatError : public Error {
  public:
    using Error::Error;
};

class DimensionError : public Error {
  public:
    using Error::Error;
};

// Seeded generator with platform-independent real draws.
// std::uniform_real_distribution is implementation-defined, so reproducible
// artifacts draw through these helpers only.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

  private:
    std::mt19937_64 engine_;
};

// Stream-independent child seed, used where work is split by index.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace clue
