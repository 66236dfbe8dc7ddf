#include "acscale/softmax_tensor.hpp"

#include <functional>
#include <stdexcept>

#include "acscale/network.hpp"

namespace acscale {

namespace {

using Partition = std::vector<std::vector<int>>;

// All set partitions of {0, ..., n-1}.
std::vector<Partition> set_partitions(int n) {
    std::vector<Partition> out;
    Partition current;
    std::function<void(int)> place = [&](int element) {
        if (element == n) {
            out.push_back(current);
            return;
        }
        // Index access: the recursion grows `current`, which would invalidate iterators.
        for (std::size_t b = 0; b < current.size(); ++b) {
            current[b].push_back(element);
            place(element + 1);
            current[b].pop_back();
        }
        current.push_back({element});
        place(element + 1);
        current.pop_back();
    };
    place(0);
    return out;
}

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

std::size_t power(int base, int exp) {
    std::size_t out = 1;
    for (int i = 0; i < exp; ++i) out *= static_cast<std::size_t>(base);
    return out;
}

// Ordered compositions of `total` into `parts` positive integers.
void compositions(int total, int parts, std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
    if (parts == 0) {
        if (total == 0) out.push_back(prefix);
        return;
    }
    for (int first = 1; first <= total - (parts - 1); ++first) {
        prefix.push_back(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop_back();
    }
}

} // namespace

double ActionTensor::operator()(std::span<const int> index) const {
    std::size_t flat = 0;
    for (int i : index) flat = flat * static_cast<std::size_t>(n_actions) + static_cast<std::size_t>(i);
    return data[flat];
}

ActionTensor softmax_derivative_tensor(const Vector& f0, int m) {
    if (m < 1 || m > kMaxSoftmaxOrder)
        throw std::domain_error("softmax derivative tensor of order " + std::to_string(m) +
                                " is not implemented (supported: 1.." + std::to_string(kMaxSoftmaxOrder) + ")");
    const int n_actions = static_cast<int>(f0.size());
    const int rank = m + 1;
    const auto partitions = set_partitions(rank);

    ActionTensor out{n_actions, rank, std::vector<double>(power(n_actions, rank), 0.0)};
    std::vector<int> index(static_cast<std::size_t>(rank), 0);
    for (std::size_t flat = 0; flat < out.data.size(); ++flat) {
        std::size_t rest = flat;
        for (int r = rank - 1; r >= 0; --r) {
            index[r] = static_cast<int>(rest % static_cast<std::size_t>(n_actions));
            rest /= static_cast<std::size_t>(n_actions);
        }
        // Joint cumulant from moments: E[prod over a block] is f_c when every index
        // in the block equals c, zero otherwise.
        double cumulant = 0.0;
        for (const auto& partition : partitions) {
            double term = 1.0;
            for (const auto& block : partition) {
                const int c = index[block.front()];
                for (int e : block)
                    if (index[e] != c) {
                        term = 0.0;
                        break;
                    }
                if (term == 0.0) break;
                term *= f0(c);
            }
            if (term == 0.0) continue;
            const int blocks = static_cast<int>(partition.size());
            const double sign = (blocks % 2 == 1) ? 1.0 : -1.0;
            cumulant += sign * factorial(blocks - 1) * term;
        }
        out.data[flat] = cumulant;
    }
    return out;
}

Vector contract(const ActionTensor& tensor, std::span<const Vector> directions) {
    const int n = tensor.n_actions;
    const int m = tensor.rank - 1;
    if (static_cast<int>(directions.size()) != m) throw std::invalid_argument("contract: wrong number of directions");
    Vector out = Vector::Zero(n);
    const std::size_t inner = power(n, m);
    for (int a = 0; a < n; ++a) {
        double acc = 0.0;
        for (std::size_t flat = 0; flat < inner; ++flat) {
            std::size_t rest = flat;
            double w = 1.0;
            for (int r = m - 1; r >= 0; --r) {
                w *= directions[r](static_cast<Eigen::Index>(rest % static_cast<std::size_t>(n)));
                rest /= static_cast<std::size_t>(n);
            }
            acc += tensor.data[static_cast<std::size_t>(a) * inner + flat] * w;
        }
        out(a) = acc;
    }
    return out;
}

Vector contract_power(const ActionTensor& tensor, const Vector& direction) {
    const std::vector<Vector> dirs(static_cast<std::size_t>(tensor.rank - 1), direction);
    return contract(tensor, dirs);
}

std::vector<Vector> softmax_series(std::span<const Vector> logit_series, int max_order) {
    if (logit_series.empty()) throw std::invalid_argument("softmax_series: empty logit series");
    const Vector f0 = softmax(logit_series[0]);
    std::vector<Vector> out(static_cast<std::size_t>(max_order) + 1, Vector::Zero(f0.size()));
    out[0] = f0;
    auto coefficient = [&](int j) -> Vector {
        if (j < static_cast<int>(logit_series.size())) return logit_series[j];
        return Vector::Zero(f0.size());
    };
    for (int k = 1; k <= max_order; ++k) {
        const ActionTensor tensor = softmax_derivative_tensor(f0, k);
        std::vector<std::vector<int>> comps;
        for (int m = k; m <= max_order; ++m) {
            comps.clear();
            std::vector<int> prefix;
            compositions(m, k, prefix, comps);
            for (const auto& comp : comps) {
                std::vector<Vector> dirs;
                dirs.reserve(comp.size());
                bool zero = false;
                for (int j : comp) {
                    dirs.push_back(coefficient(j));
                    if (dirs.back().isZero(0.0)) zero = true;
                }
                if (zero) continue;
                out[m] += contract(tensor, dirs) / factorial(k);
            }
        }
    }
    return out;
}

} // namespace acscale
