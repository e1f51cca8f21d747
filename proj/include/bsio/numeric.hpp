#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace bsio {

// Pairwise (cascade) summation over a contiguous buffer.  Every reduction in
// the library funnels through this one routine so that sums are deterministic
// and identities that hold summand-by-summand also hold for the computed
// values, independent of how callers batched the terms.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(std::span<const double>(v));
}

// Accumulates terms in order and reduces pairwise.  Useful when the term
// count is known only loosely in advance.
class SumBuffer {
public:
    void reserve(std::size_t n) { terms_.reserve(n); }
    void add(double x) { terms_.push_back(x); }
    double total() const { return pairwise_sum(terms_); }
    std::size_t size() const { return terms_.size(); }
    void clear() { terms_.clear(); }

private:
    std::vector<double> terms_;
};

// splitmix64: seed expander used to derive independent streams from one seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Small deterministic generator (xoshiro256**).  We avoid std::uniform_*
// distributions because their exact output is not pinned by the standard;
// reports promise byte-identical reruns for a fixed config and seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // +1 or -1.
    double sign() { return (next_u64() & 1) ? 1.0 : -1.0; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

} // namespace bsio
