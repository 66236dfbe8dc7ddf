#pragma once

#include <cstddef>
#include <span>

namespace acscale::jet {

/// Truncated power series: out[k] = sum_{i+j=k} a[i] b[j] for k < out.size().
/// `out` must not alias the inputs.
inline void multiply(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    for (std::size_t k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i <= k && i < a.size(); ++i)
            if (k - i < b.size()) acc += a[i] * b[k - i];
        out[k] = acc;
    }
}

/// Taylor coefficients of phi(s[0] + s[1] e + s[2] e^2 + ...) up to order out.size() - 1,
/// given derivs[j] = phi^(j)(s[0]) for j = 0 .. out.size() - 1.
/// Uses up to 8 coefficients of scratch on the stack.
inline void compose(std::span<const double> derivs, std::span<const double> s, std::span<double> out) {
    constexpr std::size_t kMax = 8;
    const std::size_t n = out.size();
    double delta[kMax] = {};
    double power[kMax] = {};
    double next[kMax] = {};
    for (std::size_t k = 1; k < n && k < s.size(); ++k) delta[k] = s[k];
    for (std::size_t k = 0; k < n; ++k) out[k] = 0.0;
    out[0] = derivs[0];
    power[0] = 1.0;
    double factorial = 1.0;
    for (std::size_t j = 1; j < n; ++j) {
        multiply({power, n}, {delta, n}, {next, n});
        for (std::size_t k = 0; k < n; ++k) power[k] = next[k];
        factorial *= static_cast<double>(j);
        const double coef = derivs[j] / factorial;
        for (std::size_t k = j; k < n; ++k) out[k] += coef * power[k];
    }
}

} // namespace acscale::jet
