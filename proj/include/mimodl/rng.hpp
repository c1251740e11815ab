// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace mimodl {

/// Identifies one independent, reproducible random stream. The same
/// (seed, stream) pair always yields the same draw sequence, so Monte-Carlo
/// trials can run in parallel in any order.
struct RngStream {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    RngStream substream(std::uint64_t purpose) const {
        // purpose tags live in the high bits; trial indices in the low bits
        return RngStream{seed, (purpose << 48) ^ stream};
    }
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic generator bound to one RngStream. Normal variates use an
/// explicit Box-Muller transform so the sequence does not depend on the
/// standard library's unspecified std::normal_distribution algorithm.
class StreamRng {
  public:
    explicit StreamRng(RngStream id) {
        std::uint64_t s = id.seed;
        std::uint64_t a = detail::splitmix64(s);
        s ^= id.stream * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL;
        std::uint64_t b = detail::splitmix64(s);
        engine_.seed(a ^ (b << 1));
    }
    StreamRng(std::uint64_t seed, std::uint64_t stream)
        : StreamRng(RngStream{seed, stream}) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// One pair of independent standard normals (Box-Muller).
    std::pair<double, double> normal_pair() {
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double t = 2.0 * M_PI * uniform();
        return {r * std::cos(t), r * std::sin(t)};
    }

    double normal() { return normal_pair().first; }

    /// CN(0,1): (a + ib)/sqrt(2) with a, b standard normal.
    std::complex<double> complex_normal() {
        auto [a, b] = normal_pair();
        return {a * M_SQRT1_2, b * M_SQRT1_2};
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace mimodl
