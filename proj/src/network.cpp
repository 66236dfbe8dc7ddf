#include "acscale/network.hpp"

#include <cmath>

#include "acscale/activation.hpp"

namespace acscale {

void InitLaw::validate() const {
    if (!(std >= 0.0) || !std::isfinite(std)) throw ConfigError("init_std", "must be finite and nonnegative");
    if (!(trunc_bound > 0.0) || !std::isfinite(trunc_bound))
        throw ConfigError("init_trunc", "must be finite and positive");
}

double InitLaw::sample(Rng& rng) const {
    double z = standard_normal(rng);
    while (std::abs(z) > trunc_bound) z = standard_normal(rng);
    return std * z;
}

double ScaledNetwork::scale() const {
    return std::pow(static_cast<double>(width_n), -beta);
}

ScaledNetwork init_network(int width_n, double beta, int input_dim, const InitLaw& law, Rng& rng) {
    if (width_n < 1) throw ConfigError("width_n", "must be at least 1");
    if (input_dim < 1) throw ConfigError("input_dim", "must be at least 1");
    law.validate();
    ScaledNetwork net;
    net.width_n = width_n;
    net.beta = beta;
    net.input_dim = input_dim;
    net.outer.resize(static_cast<std::size_t>(width_n));
    net.inner.resize(static_cast<std::size_t>(width_n) * input_dim);
    for (auto& c : net.outer) c = law.sample(rng);
    for (auto& w : net.inner) w = law.sample(rng);
    return net;
}

double forward(const ScaledNetwork& net, std::span<const double> xi) {
    double acc = 0.0;
    const int d = net.input_dim;
    for (int i = 0; i < net.width_n; ++i) {
        const double* w = net.inner.data() + static_cast<std::size_t>(i) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += w[j] * xi[j];
        acc += net.outer[i] * Sigmoid::value(s);
    }
    return acc * net.scale();
}

Vector forward_table(const ScaledNetwork& net, const Matrix& inputs) {
    Vector out(inputs.rows());
    for (Eigen::Index p = 0; p < inputs.rows(); ++p) {
        const Vector xi = inputs.row(p).transpose();
        out(p) = forward(net, {xi.data(), static_cast<std::size_t>(xi.size())});
    }
    return out;
}

Vector softmax(const Eigen::Ref<const Vector>& logits) {
    const double shift = logits.maxCoeff();
    Vector e = (logits.array() - shift).exp().matrix();
    return e / e.sum();
}

Policy actor_policy(const Vector& actor_outputs, int n_states, int n_actions) {
    Policy out{Matrix(n_states, n_actions)};
    for (int x = 0; x < n_states; ++x)
        out.probs.row(x) = softmax(actor_outputs.segment(x * n_actions, n_actions)).transpose();
    return out;
}

Vector actor_model(const ScaledNetwork& actor, const FiniteMdp& mdp, int x) {
    const Matrix inputs = mdp.inputs();
    Vector logits(mdp.n_actions);
    for (int a = 0; a < mdp.n_actions; ++a) {
        const Vector xi = inputs.row(mdp.pair(x, a)).transpose();
        logits(a) = forward(actor, {xi.data(), static_cast<std::size_t>(xi.size())});
    }
    return softmax(logits);
}

Policy actor_policy(const ScaledNetwork& actor, const FiniteMdp& mdp) {
    return actor_policy(forward_table(actor, mdp.inputs()), mdp.n_states, mdp.n_actions);
}

double empirical_functional(const ScaledNetwork& net, const TestFunction& h) {
    double acc = 0.0;
    for (int i = 0; i < net.width_n; ++i) acc += h(net.outer[i], net.inner_row(i));
    return acc / net.width_n;
}

nlohmann::json to_json(const ScaledNetwork& net) {
    return nlohmann::json{{"width_n", net.width_n},
                          {"beta", net.beta},
                          {"input_dim", net.input_dim},
                          {"outer", net.outer},
                          {"inner", net.inner}};
}

ScaledNetwork network_from_json(const nlohmann::json& doc) {
    for (const char* key : {"width_n", "beta", "outer", "inner"})
        if (!doc.contains(key)) throw ConfigError(key, "missing");
    ScaledNetwork net;
    net.width_n = doc.at("width_n").get<int>();
    net.beta = doc.at("beta").get<double>();
    net.outer = doc.at("outer").get<std::vector<double>>();
    net.inner = doc.at("inner").get<std::vector<double>>();
    if (net.width_n < 1 || net.outer.size() != static_cast<std::size_t>(net.width_n))
        throw ConfigError("outer", "length must equal width_n");
    net.input_dim = doc.contains("input_dim") ? doc.at("input_dim").get<int>()
                                              : static_cast<int>(net.inner.size()) / net.width_n;
    if (net.input_dim < 1 || net.inner.size() != static_cast<std::size_t>(net.width_n) * net.input_dim)
        throw ConfigError("inner", "length must equal width_n * input_dim");
    return net;
}

} // namespace acscale
