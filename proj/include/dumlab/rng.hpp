#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dumlab {

// Deterministic RNG. Uniform doubles are drawn from raw mt19937_64 output
// instead of std::uniform_real_distribution so that streams are identical
// across standard library implementations.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, standard normal
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // in [0, n)
    uint64_t integer(uint64_t n) {
        // rejection sampling to avoid modulo bias
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[integer(i)]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    // Independent child stream, e.g. one per seed or per component.
    Rng fork(uint64_t stream) {
        return Rng(gen_() ^ (stream * 0x9e3779b97f4a7c15ULL + 0xbf58476d1ce4e5b9ULL));
    }

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dumlab
