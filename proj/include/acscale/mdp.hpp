#pragma once

#include "json.hpp"

#include "acscale/common.hpp"

namespace acscale {

/// Finite discounted MDP over pairs (x, a). Pairs are flattened as x * n_actions + a
/// everywhere in the library.
struct FiniteMdp {
    int n_states = 0;
    int n_actions = 0;
    Matrix reward;        // n_states x n_actions, entries in [-1, 1]
    Matrix transition;    // n_pairs x n_states, row (x, a) is p(. | x, a)
    Vector rho0;          // over pairs
    double gamma = 0.7;
    Matrix state_embed;   // n_states x d_x
    Matrix action_embed;  // n_actions x d_a

    int n_pairs() const { return n_states * n_actions; }
    int pair(int x, int a) const { return x * n_actions + a; }
    int state_of(int pair) const { return pair / n_actions; }
    int action_of(int pair) const { return pair % n_actions; }
    int input_dim() const {
        return static_cast<int>(state_embed.cols() + action_embed.cols());
    }

    /// Network inputs, one row (x, a) -> (state_embed(x), action_embed(a)) per pair.
    Matrix inputs() const;
    /// Reward as a vector over pairs.
    Vector reward_vector() const;
    /// Marginal of rho0 over states.
    Vector state_marginal() const;

    /// Throws ConfigError naming the first field that breaks an invariant.
    void validate() const;
};

/// Conditional action distributions, n_states x n_actions.
struct Policy {
    Matrix probs;

    static Policy uniform(int n_states, int n_actions);
    void validate(int n_states, int n_actions) const;
    /// Probabilities flattened over pairs.
    Vector flat() const;
};

enum class ChainKind { Standard, Auxiliary };

/// Raised when the pair chain under a policy has no unique stationary law.
class NotErgodicError : public std::runtime_error {
public:
    NotErgodicError() : std::runtime_error("chain not ergodic under policy") {}
};

/// Default embedding: state i -> i / n_states, action j -> j / n_actions.
void set_default_embedding(FiniteMdp& mdp);

/// Forest-management MDP (action 0 = wait, action 1 = cut), rewards divided by
/// their maximum absolute value, uniform rho0 and default embedding.
FiniteMdp build_forest(int n_states = 3, double r_wait_top = 4.0, double r_cut_top = 2.0,
                       double p_fire = 0.1, double gamma = 0.7);

/// p for Standard; gamma * p + (1 - gamma) * rho0(x') for Auxiliary.
Matrix kernel(const FiniteMdp& mdp, ChainKind kind);

/// Pair transition matrix M[(x,a), (x',a')] = weights(x',a') * K(x'|x,a). With a
/// policy as weights this is the chain on pairs; with a signed correction it is the
/// corresponding perturbation of that chain.
Matrix pair_chain(const Matrix& state_kernel, const Vector& pair_weights, int n_actions);
Matrix pair_chain(const FiniteMdp& mdp, ChainKind kind, const Policy& policy);

/// One transition of the sampling chain: x' ~ K(.|x,a), then a' ~ policy(x', .).
int step(const FiniteMdp& mdp, const Matrix& state_kernel, const Policy& policy, int current_pair,
         Rng& rng);
int step(const FiniteMdp& mdp, ChainKind kind, const Policy& policy, int current_pair, Rng& rng);

/// Unique pi with pi = pi M and sum(pi) = 1, solved as
/// (I - M^T + 1 1^T / n) y = 1 / n followed by normalization.
Vector stationary_distribution(const Matrix& chain);
Vector stationary_distribution(const FiniteMdp& mdp, ChainKind kind, const Policy& policy);

/// State-action value V^f as a vector over pairs (exact dense solve).
Vector value_function(const FiniteMdp& mdp, const Policy& policy);

/// Deterministic greedy policy from state-action value iteration, ties to the lowest action.
Policy optimal_policy(const FiniteMdp& mdp);

/// J(f) = sum rho0(x,a) V^f(x,a).
double expected_reward(const FiniteMdp& mdp, const Policy& policy);

nlohmann::json to_json(const FiniteMdp& mdp);
FiniteMdp mdp_from_json(const nlohmann::json& doc);

} // namespace acscale
