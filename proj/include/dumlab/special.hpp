#pragma once

#include <cmath>

namespace dumlab {

// Digamma via recurrence into the asymptotic regime. Accurate to ~1e-12
// for x >= 1e-3.
inline double digamma(double x) {
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // ln x - 1/(2x) - sum B_2n / (2n x^{2n})
    double series = std::log(x) - 0.5 * inv;
    series -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    return acc + series;
}

// Trigamma, same scheme.
inline double trigamma(double x) {
    double acc = 0.0;
    while (x < 6.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv * (1.0 + 0.5 * inv);
    series += inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)));
    return acc + series;
}

inline double log_gamma(double x) { return std::lgamma(x); }

}  // namespace dumlab
