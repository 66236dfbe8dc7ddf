#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acscale/common.hpp"
#include "acscale/mdp.hpp"
#include "acscale/network.hpp"

namespace acscale {

/// Learning and exploration rates for width N and scaling beta:
///   alpha_k = alpha N^(2 beta - 2),  zeta_k = N^(2 beta - 2) / (1 + k/N),
///   eta_k = 1 / (1 + log^2(1 + k/N)).
struct Schedule {
    double alpha_const = 1.0;
    int width_n = 1;
    double beta = 1.0;

    double alpha(std::int64_t k) const;
    double zeta(std::int64_t k) const;
    double eta(std::int64_t k) const;

    /// Rescaled-time limits zeta_t = 1/(1+t) and eta_t = 1/(1+log^2(1+t)).
    static double zeta_limit(double t);
    static double eta_limit(double t);
};

/// eta/|A| + (1 - eta) f, entrywise.
Policy exploration_policy(const Policy& actor_model_output, double eta);

struct TrainerConfig {
    int width_n = 100;
    double beta = 0.75;
    double T = 1.0;
    std::uint64_t seed = 0;
    std::int64_t snapshot_stride = 0;  // 0 selects max(1, N / 10)
    double alpha = 1.0;
    InitLaw law{};

    void validate() const;
    std::int64_t total_steps() const;    // floor(N T)
    std::int64_t stride() const;
};

struct TrainerState {
    ScaledNetwork critic;
    ScaledNetwork actor;
    std::int64_t step_k = 0;
    int critic_pair = 0;
    int actor_pair = 0;
    Rng critic_rng;
    Rng actor_rng;
    // Largest |outer_{k+1} - outer_k| seen so far, per network.
    double max_critic_outer_step = 0.0;
    double max_actor_outer_step = 0.0;
};

/// Fresh networks and chain positions: critic then actor weights from one init stream,
/// each chain started from its own draw of rho0 on its own stream.
TrainerState make_initial_state(const FiniteMdp& mdp, const TrainerConfig& config);

/// Per-MDP data reused by every step plus scratch buffers.
class StepContext {
public:
    explicit StepContext(const FiniteMdp& mdp);

    const FiniteMdp& mdp() const { return *mdp_; }
    const double* input(int pair) const { return inputs_.data() + static_cast<std::size_t>(pair) * dim_; }
    const Matrix& input_matrix() const { return input_matrix_; }
    const Matrix& standard_kernel() const { return standard_; }
    const Matrix& auxiliary_kernel() const { return auxiliary_; }
    int dim() const { return dim_; }

private:
    friend void sgd_step(TrainerState&, StepContext&, const Schedule&);
    const FiniteMdp* mdp_;
    int dim_;
    std::vector<double> inputs_;
    Matrix input_matrix_;
    Matrix standard_;
    Matrix auxiliary_;
    Vector reward_;
    std::vector<double> critic_sigma_;
    std::vector<double> actor_sigma_;  // n_actions x width_n
};

/// One actor-critic update. Advances both chains under g_k, then applies the TD update
/// to (C, W) and the policy-gradient update to (B, U). All four blocks read the
/// pre-update parameters.
void sgd_step(TrainerState& state, StepContext& ctx, const Schedule& schedule);

struct Snapshot {
    double t = 0.0;
    std::int64_t k = 0;
    Vector q;  // critic output over pairs
    Vector p;  // actor output over pairs
    Vector f;  // actor model, flat over pairs
    Vector g;  // exploration policy, flat over pairs
    double critic_outer_max = 0.0;  // max_i |C^i|
    double actor_outer_max = 0.0;
};

struct SnapshotSeries {
    double beta = 0.0;
    int width_n = 0;
    std::uint64_t seed = 0;
    int n_states = 0;
    int n_actions = 0;
    std::vector<Snapshot> records;
    double max_critic_outer_step = 0.0;
    double max_actor_outer_step = 0.0;

    std::vector<double> times() const;
};

Snapshot take_snapshot(const TrainerState& state, const StepContext& ctx, const Schedule& schedule);

/// floor(N T) SGD steps; snapshots at k = 0, every stride steps, and the final step.
SnapshotSeries train(const FiniteMdp& mdp, const TrainerConfig& config);

/// Long-format CSV {t,kind,x,a,value} with kinds Q, P, f, g.
void write_snapshot_csv(const SnapshotSeries& series, const std::string& path);
SnapshotSeries read_snapshot_csv(const std::string& path, int n_states, int n_actions);

} // namespace acscale
