#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace srcnet {

// splitmix64 step, used to derive independent stream seeds from a master
// seed. mt19937_64 output is fully specified by the standard; the
// distribution transforms below are our own so that results are identical
// across standard library implementations.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ splitmix64(tag)) + index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; the sine partner is discarded so draw granularity stays
    // one-call-one-value.
    double normal(double mean, double stddev) {
        constexpr double two_pi = 6.28318530717958647692;
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
        return mean + stddev * z;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // unbiased-enough index draw for shuffles; determinism matters here,
    // not statistical perfection
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

private:
    std::mt19937_64 eng_;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace srcnet
