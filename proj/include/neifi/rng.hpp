#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace neifi {

/// Deterministic random source. Wraps std::mt19937_64 (whose output stream is
/// pinned by the standard) but does all value mapping itself, because the
/// std:: distributions are implementation-defined and would break bitwise
/// reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Unbiased uniform index in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n) {
        const std::uint64_t nn = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = (UINT64_MAX / nn) * nn; // rejection bound
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return static_cast<std::size_t>(r % nn);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Fisher-Yates shuffle driven by uniform_index, so the permutation
    /// depends only on the engine stream.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
} // namespace detail

/// Per-episode seed derived from a master seed and an episode index. Adding
/// episodes to a batch never perturbs the seeds of earlier ones.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return detail::splitmix64(detail::splitmix64(master) ^ detail::splitmix64(index + 1));
}

} // namespace neifi
