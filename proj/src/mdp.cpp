#include "acscale/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace acscale {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_distribution(const std::string& field, const Eigen::Ref<const Vector>& row) {
    if ((row.array() < 0.0).any() || !row.allFinite())
        throw ConfigError(field, "entries must be finite and nonnegative");
    if (std::abs(row.sum() - 1.0) > kSumTolerance)
        throw ConfigError(field, "must sum to 1");
}

std::vector<double> flatten(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

Matrix unflatten(const std::string& field, const std::vector<double>& values, Eigen::Index rows) {
    if (rows <= 0 || values.empty() || values.size() % static_cast<std::size_t>(rows) != 0)
        throw ConfigError(field, "length is not a multiple of the row count");
    const auto cols = static_cast<Eigen::Index>(values.size()) / rows;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    return m;
}

} // namespace

Matrix FiniteMdp::inputs() const {
    Matrix out(n_pairs(), input_dim());
    for (int x = 0; x < n_states; ++x)
        for (int a = 0; a < n_actions; ++a) {
            out.row(pair(x, a)) << state_embed.row(x), action_embed.row(a);
        }
    return out;
}

Vector FiniteMdp::reward_vector() const {
    Vector r(n_pairs());
    for (int x = 0; x < n_states; ++x)
        for (int a = 0; a < n_actions; ++a) r(pair(x, a)) = reward(x, a);
    return r;
}

Vector FiniteMdp::state_marginal() const {
    Vector m = Vector::Zero(n_states);
    for (int p = 0; p < n_pairs(); ++p) m(state_of(p)) += rho0(p);
    return m;
}

void FiniteMdp::validate() const {
    if (n_states < 1) throw ConfigError("n_states", "must be positive");
    if (n_actions < 1) throw ConfigError("n_actions", "must be positive");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma", "must lie in (0, 1)");
    if (reward.rows() != n_states || reward.cols() != n_actions)
        throw ConfigError("reward", "shape must be n_states x n_actions");
    if (!reward.allFinite() || reward.cwiseAbs().maxCoeff() > 1.0)
        throw ConfigError("reward", "entries must lie in [-1, 1]");
    if (transition.rows() != n_pairs() || transition.cols() != n_states)
        throw ConfigError("transition", "shape must be n_pairs x n_states");
    for (int p = 0; p < n_pairs(); ++p) check_distribution("transition", transition.row(p).transpose());
    if (rho0.size() != n_pairs()) throw ConfigError("rho0", "length must be n_pairs");
    check_distribution("rho0", rho0);
    if (state_embed.rows() != n_states || state_embed.cols() < 1 || !state_embed.allFinite())
        throw ConfigError("state_embed", "shape must be n_states x d_x with finite entries");
    if (action_embed.rows() != n_actions || action_embed.cols() < 1 || !action_embed.allFinite())
        throw ConfigError("action_embed", "shape must be n_actions x d_a with finite entries");
}

Policy Policy::uniform(int n_states, int n_actions) {
    return Policy{Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

void Policy::validate(int n_states, int n_actions) const {
    if (probs.rows() != n_states || probs.cols() != n_actions)
        throw ConfigError("policy", "shape must be n_states x n_actions");
    for (int x = 0; x < n_states; ++x) check_distribution("policy", probs.row(x).transpose());
}

Vector Policy::flat() const {
    Vector out(probs.size());
    for (Eigen::Index x = 0; x < probs.rows(); ++x)
        for (Eigen::Index a = 0; a < probs.cols(); ++a) out(x * probs.cols() + a) = probs(x, a);
    return out;
}

void set_default_embedding(FiniteMdp& mdp) {
    mdp.state_embed.resize(mdp.n_states, 1);
    mdp.action_embed.resize(mdp.n_actions, 1);
    for (int i = 0; i < mdp.n_states; ++i) mdp.state_embed(i, 0) = static_cast<double>(i) / mdp.n_states;
    for (int j = 0; j < mdp.n_actions; ++j) mdp.action_embed(j, 0) = static_cast<double>(j) / mdp.n_actions;
}

FiniteMdp build_forest(int n_states, double r_wait_top, double r_cut_top, double p_fire, double gamma) {
    if (n_states < 2) throw ConfigError("n_states", "forest needs at least 2 states");
    if (!(p_fire > 0.0 && p_fire < 1.0)) throw ConfigError("p_fire", "must lie in (0, 1)");
    if (!std::isfinite(r_wait_top)) throw ConfigError("r_wait_top", "must be finite");
    if (!std::isfinite(r_cut_top)) throw ConfigError("r_cut_top", "must be finite");

    constexpr int wait = 0;
    constexpr int cut = 1;
    FiniteMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = 2;
    mdp.gamma = gamma;
    const int top = n_states - 1;

    mdp.transition = Matrix::Zero(mdp.n_pairs(), n_states);
    for (int s = 0; s < n_states; ++s) {
        mdp.transition(mdp.pair(s, wait), 0) += p_fire;
        mdp.transition(mdp.pair(s, wait), std::min(s + 1, top)) += 1.0 - p_fire;
        mdp.transition(mdp.pair(s, cut), 0) = 1.0;
    }

    mdp.reward = Matrix::Zero(n_states, 2);
    mdp.reward(top, wait) = r_wait_top;
    for (int s = 1; s < top; ++s) mdp.reward(s, cut) = 1.0;
    mdp.reward(top, cut) = r_cut_top;
    const double scale = mdp.reward.cwiseAbs().maxCoeff();
    if (scale > 0.0) mdp.reward /= scale;

    mdp.rho0 = Vector::Constant(mdp.n_pairs(), 1.0 / mdp.n_pairs());
    set_default_embedding(mdp);
    mdp.validate();
    return mdp;
}

Matrix kernel(const FiniteMdp& mdp, ChainKind kind) {
    if (kind == ChainKind::Standard) return mdp.transition;
    const Vector marginal = mdp.state_marginal();
    Matrix out = mdp.gamma * mdp.transition;
    out.rowwise() += (1.0 - mdp.gamma) * marginal.transpose();
    return out;
}

Matrix pair_chain(const Matrix& state_kernel, const Vector& pair_weights, int n_actions) {
    const auto n_pairs = state_kernel.rows();
    Matrix m(n_pairs, n_pairs);
    for (Eigen::Index from = 0; from < n_pairs; ++from)
        for (Eigen::Index to = 0; to < n_pairs; ++to)
            m(from, to) = pair_weights(to) * state_kernel(from, to / n_actions);
    return m;
}

Matrix pair_chain(const FiniteMdp& mdp, ChainKind kind, const Policy& policy) {
    return pair_chain(kernel(mdp, kind), policy.flat(), mdp.n_actions);
}

int step(const FiniteMdp& mdp, const Matrix& state_kernel, const Policy& policy, int current_pair,
         Rng& rng) {
    const Vector row = state_kernel.row(current_pair).transpose();
    const int next_state = sample_index({row.data(), static_cast<std::size_t>(row.size())}, uniform01(rng));
    const Vector actions = policy.probs.row(next_state).transpose();
    const int next_action =
        sample_index({actions.data(), static_cast<std::size_t>(actions.size())}, uniform01(rng));
    return mdp.pair(next_state, next_action);
}

int step(const FiniteMdp& mdp, ChainKind kind, const Policy& policy, int current_pair, Rng& rng) {
    return step(mdp, kernel(mdp, kind), policy, current_pair, rng);
}

Vector stationary_distribution(const Matrix& chain) {
    const auto n = chain.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    Matrix system = Matrix::Identity(n, n) - chain.transpose();
    system.array() += inv_n;
    Eigen::FullPivLU<Matrix> lu(system);
    // Rank deficiency means the stationary law is not unique.
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) throw NotErgodicError();
    Vector y = lu.solve(Vector::Constant(n, inv_n));
    const double total = y.sum();
    if (!std::isfinite(total) || std::abs(total) < 1e-300) throw NotErgodicError();
    y /= total;
    return y;
}

Vector stationary_distribution(const FiniteMdp& mdp, ChainKind kind, const Policy& policy) {
    return stationary_distribution(pair_chain(mdp, kind, policy));
}

Vector value_function(const FiniteMdp& mdp, const Policy& policy) {
    const Matrix chain = pair_chain(mdp, ChainKind::Standard, policy);
    const auto n = chain.rows();
    const Matrix system = Matrix::Identity(n, n) - mdp.gamma * chain;
    return system.partialPivLu().solve(mdp.reward_vector());
}

Policy optimal_policy(const FiniteMdp& mdp) {
    const Vector r = mdp.reward_vector();
    Vector q = Vector::Zero(mdp.n_pairs());
    Vector best(mdp.n_states);
    for (int sweep = 0; sweep < 100000; ++sweep) {
        for (int x = 0; x < mdp.n_states; ++x)
            best(x) = q.segment(x * mdp.n_actions, mdp.n_actions).maxCoeff();
        const Vector next = r + mdp.gamma * mdp.transition * best;
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = next;
        if (change <= 1e-12) break;
    }
    Policy out{Matrix::Zero(mdp.n_states, mdp.n_actions)};
    for (int x = 0; x < mdp.n_states; ++x) {
        int arg = 0;
        for (int a = 1; a < mdp.n_actions; ++a) {
            const double lead = q(mdp.pair(x, arg));
            if (q(mdp.pair(x, a)) > lead + 1e-10 * (1.0 + std::abs(lead))) arg = a;
        }
        out.probs(x, arg) = 1.0;
    }
    return out;
}

double expected_reward(const FiniteMdp& mdp, const Policy& policy) {
    return mdp.rho0.dot(value_function(mdp, policy));
}

nlohmann::json to_json(const FiniteMdp& mdp) {
    return nlohmann::json{{"n_states", mdp.n_states},
                          {"n_actions", mdp.n_actions},
                          {"gamma", mdp.gamma},
                          {"reward", flatten(mdp.reward)},
                          {"transition", flatten(mdp.transition)},
                          {"rho0", std::vector<double>(mdp.rho0.data(), mdp.rho0.data() + mdp.rho0.size())},
                          {"state_embed", flatten(mdp.state_embed)},
                          {"action_embed", flatten(mdp.action_embed)}};
}

FiniteMdp mdp_from_json(const nlohmann::json& doc) {
    auto field = [&](const char* key) -> const nlohmann::json& {
        if (!doc.contains(key)) throw ConfigError(key, "missing");
        return doc.at(key);
    };
    FiniteMdp mdp;
    mdp.n_states = field("n_states").get<int>();
    mdp.n_actions = field("n_actions").get<int>();
    if (mdp.n_states < 1) throw ConfigError("n_states", "must be positive");
    if (mdp.n_actions < 1) throw ConfigError("n_actions", "must be positive");
    mdp.gamma = field("gamma").get<double>();
    mdp.reward = unflatten("reward", field("reward").get<std::vector<double>>(), mdp.n_states);
    mdp.transition = unflatten("transition", field("transition").get<std::vector<double>>(), mdp.n_pairs());
    const auto rho = field("rho0").get<std::vector<double>>();
    mdp.rho0 = Eigen::Map<const Vector>(rho.data(), static_cast<Eigen::Index>(rho.size()));
    if (doc.contains("state_embed") && doc.contains("action_embed")) {
        mdp.state_embed = unflatten("state_embed", doc.at("state_embed").get<std::vector<double>>(), mdp.n_states);
        mdp.action_embed =
            unflatten("action_embed", doc.at("action_embed").get<std::vector<double>>(), mdp.n_actions);
    } else {
        set_default_embedding(mdp);
    }
    mdp.validate();
    return mdp;
}

} // namespace acscale
