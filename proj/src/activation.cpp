#include "acscale/activation.hpp"

#include <stdexcept>
#include <vector>

namespace acscale {

namespace {

using Poly = std::vector<double>; // coefficients in s, lowest degree first

Poly next_derivative(const Poly& p) {
    // d/dx p(s) = p'(s) * (s - s^2)
    Poly out(p.size() + 1, 0.0);
    for (std::size_t k = 1; k < p.size(); ++k) {
        const double dk = static_cast<double>(k) * p[k];
        out[k] += dk;
        out[k + 1] -= dk;
    }
    return out;
}

const std::array<Poly, Sigmoid::kMaxDerivative + 1>& polynomials() {
    static const auto table = [] {
        std::array<Poly, Sigmoid::kMaxDerivative + 1> t;
        t[0] = {0.0, 1.0};
        for (int k = 1; k <= Sigmoid::kMaxDerivative; ++k) t[k] = next_derivative(t[k - 1]);
        return t;
    }();
    return table;
}

} // namespace

void Sigmoid::derivatives(double x, std::span<double> out) {
    if (out.size() > static_cast<std::size_t>(kMaxDerivative + 1))
        throw std::out_of_range("sigmoid derivatives above order 7 are not tabulated");
    const double s = value(x);
    const auto& polys = polynomials();
    for (std::size_t k = 0; k < out.size(); ++k) {
        double acc = 0.0;
        const Poly& p = polys[k];
        for (std::size_t j = p.size(); j-- > 0;) acc = acc * s + p[j];
        out[k] = acc;
    }
}

} // namespace acscale
