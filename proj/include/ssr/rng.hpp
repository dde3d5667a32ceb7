#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace ssr {

// Single root seed for a pipeline run. Every stream of randomness anywhere in
// the library is derived from one of these through `derive`, never from global
// state, so a run is reproducible bit for bit at any worker count.
struct RngSeed {
    std::uint64_t value = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline RngSeed derive(RngSeed base, std::uint64_t tag) {
    return {detail::splitmix64(detail::splitmix64(base.value) ^ tag)};
}

inline RngSeed derive(RngSeed base, std::string_view tag) {
    return derive(base, detail::fnv1a(tag));
}

template <typename Tag, typename... Rest>
    requires(sizeof...(Rest) >= 1)
RngSeed derive(RngSeed base, Tag tag, Rest... rest) {
    return derive(derive(base, tag), rest...);
}

// xoshiro256** seeded via splitmix64 expansion. Self-contained so that streams
// are identical across compilers and standard libraries.
class Rng {
public:
    explicit Rng(RngSeed seed) {
        std::uint64_t x = seed.value;
        for (auto& word : state_) {
            x = detail::splitmix64(x);
            word = x;
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform on {0, ..., n-1} by masked rejection (exactly unbiased).
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
        if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            const std::uint64_t v = next_u64() & mask;
            if (v < n) return v;
        }
    }

    // Box-Muller with two fresh uniforms per call; no cached half, so the draw
    // sequence does not depend on call history.
    double normal(double mean, double stddev) {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

    // Draw an index from a normalized probability vector.
    int categorical(const std::vector<double>& probs) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        // Guard against accumulated rounding: return the last positive entry.
        for (std::size_t i = probs.size(); i-- > 0;) {
            if (probs[i] > 0.0) return static_cast<int>(i);
        }
        throw std::invalid_argument("categorical: probability vector has no mass");
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace ssr
