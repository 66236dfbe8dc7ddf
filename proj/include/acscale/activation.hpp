#pragma once

#include <array>
#include <cmath>
#include <span>

namespace acscale {

/// Logistic sigmoid. Every derivative is a polynomial in s = sigma(x):
/// sigma^(k+1) = d/ds[sigma^(k)] * s (1 - s).
struct Sigmoid {
    static constexpr int kMaxDerivative = 7;

    static double value(double x) { return 1.0 / (1.0 + std::exp(-x)); }
    static double d1(double x) {
        const double s = value(x);
        return s * (1.0 - s);
    }
    static double d2(double x) {
        const double s = value(x);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
    }
    static double d3(double x) {
        const double s = value(x);
        return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s);
    }

    /// out[k] = sigma^(k)(x) for k = 0 .. out.size() - 1 (at most kMaxDerivative + 1 entries).
    static void derivatives(double x, std::span<double> out);
};

} // namespace acscale
