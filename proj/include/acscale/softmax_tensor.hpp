#pragma once

#include <span>
#include <vector>

#include "acscale/common.hpp"

namespace acscale {

inline constexpr int kMaxSoftmaxOrder = 4;

/// Dense tensor over action indices, rank `rank`, row-major with the output index first.
struct ActionTensor {
    int n_actions = 0;
    int rank = 0;
    std::vector<double> data;

    double operator()(std::span<const int> index) const;
};

/// m-th derivative of softmax at the point whose softmax value is f0:
/// T[a][b1..bm] = d^m f_a / dP_b1 ... dP_bm. Entries are joint cumulants of the
/// action indicators under f0 (derivatives of log-sum-exp). Throws std::domain_error
/// for m outside 1..kMaxSoftmaxOrder.
ActionTensor softmax_derivative_tensor(const Vector& f0, int m);

/// T : [v1 x ... x vm], contracting every input index; result indexed by the output action.
Vector contract(const ActionTensor& tensor, std::span<const Vector> directions);

/// T : [v]^{(x) m}.
Vector contract_power(const ActionTensor& tensor, const Vector& direction);

/// Taylor coefficients of softmax(P_0 + e P_1 + e^2 P_2 + ...) up to `max_order`,
/// assembled from the derivative tensors (Faa di Bruno over ordered compositions).
std::vector<Vector> softmax_series(std::span<const Vector> logit_series, int max_order);

} // namespace acscale
