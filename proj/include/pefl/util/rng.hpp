#pragma once

// Deterministic randomness. The engine (mt19937_64) and every transform in
// this file are pinned: std::* distributions are not portable across
// standard libraries, so all sampling goes through the hand-written
// transforms below. Changing any of them invalidates recorded runs.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace pefl::rng {

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Substream derivation: fold tags into the seed one at a time. Used to give
// every (party, round, purpose, ...) context its own independent stream.
inline uint64_t derive(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = seed;
    for (uint64_t t : tags) {
        s ^= t + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        uint64_t st = s;
        s = splitmix64(st);
    }
    return s;
}

class Stream {
public:
    explicit Stream(uint64_t seed) : eng_(seed) {}
    Stream(uint64_t seed, std::initializer_list<uint64_t> tags)
        : eng_(derive(seed, tags)) {}

    uint64_t u64() { return eng_(); }

    // [0,1) with 53 random bits.
    double unit() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    // (0,1) strictly; safe under log().
    double unit_open() {
        return (static_cast<double>(u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * unit(); }

    // Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = u64(); } while (x >= lim);
        return x % n;
    }

    int64_t ternary() { return static_cast<int64_t>(below(3)) - 1; }

    // Box-Muller with cached spare.
    double normal(double mu = 0.0, double sigma = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = unit_open();
        double u2 = unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return mu + sigma * r * std::cos(a);
    }

    // Inverse-CDF Laplace.
    double laplace(double mu, double b) {
        double u = unit_open();
        if (u < 0.5) return mu + b * std::log(2.0 * u);
        return mu - b * std::log(2.0 * (1.0 - u));
    }

    // Uniform signed integer in [-2^bits, 2^bits] (flooding noise shape).
    int64_t signed_uniform_pow2(int bits) {
        uint64_t span = (uint64_t(1) << (bits + 1)) + 1;
        return static_cast<int64_t>(below(span)) - (int64_t(1) << bits);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pefl::rng
