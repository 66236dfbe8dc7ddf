#pragma once

#include <functional>
#include <span>
#include <vector>

#include "json.hpp"

#include "acscale/common.hpp"
#include "acscale/mdp.hpp"

namespace acscale {

/// Symmetric truncated normal: std * Z with Z ~ N(0, 1) conditioned on |Z| <= trunc_bound.
struct InitLaw {
    double std = 1.0;
    double trunc_bound = 3.0;

    void validate() const;
    double sample(Rng& rng) const;
};

/// One-hidden-layer network N^-beta * sum_i outer_i * sigma(inner_i . xi).
/// Serves as the critic (C, W) and the actor (B, U).
struct ScaledNetwork {
    int width_n = 0;
    double beta = 1.0;
    int input_dim = 0;
    std::vector<double> outer;  // width_n
    std::vector<double> inner;  // width_n x input_dim, row-major

    double scale() const;  // N^-beta
    std::span<const double> inner_row(int i) const {
        return {inner.data() + static_cast<std::size_t>(i) * input_dim, static_cast<std::size_t>(input_dim)};
    }
};

/// i.i.d. draws of every coordinate from `law`; outer weights first, then the inner rows.
ScaledNetwork init_network(int width_n, double beta, int input_dim, const InitLaw& law, Rng& rng);

double forward(const ScaledNetwork& net, std::span<const double> xi);

/// Network output for every row of `inputs`.
Vector forward_table(const ScaledNetwork& net, const Matrix& inputs);

/// Max-shifted softmax.
Vector softmax(const Eigen::Ref<const Vector>& logits);

/// Softmax over the a-slice of the actor network at state x.
Vector actor_model(const ScaledNetwork& actor, const FiniteMdp& mdp, int x);
/// Softmax of a table of actor outputs (vector over pairs), one row per state.
Policy actor_policy(const Vector& actor_outputs, int n_states, int n_actions);
Policy actor_policy(const ScaledNetwork& actor, const FiniteMdp& mdp);

using TestFunction = std::function<double(double outer, std::span<const double> inner)>;

/// <h, v^N> = (1/N) sum_i h(outer_i, inner_i).
double empirical_functional(const ScaledNetwork& net, const TestFunction& h);

nlohmann::json to_json(const ScaledNetwork& net);
ScaledNetwork network_from_json(const nlohmann::json& doc);

} // namespace acscale
