#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "acscale/limit.hpp"
#include "acscale/mdp.hpp"
#include "acscale/trainer.hpp"

namespace acscale {

/// (1 / |X||A|) sum (f - pistar)^2.
double actor_mse(const Policy& f, const Policy& pistar);
/// rho0-averaged value of f; same as expected_reward.
double policy_reward(const FiniteMdp& mdp, const Policy& f);

/// OLS of log(error) on log(width).
struct RateFit {
    std::vector<double> widths, errors, log_widths, log_errors;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
};
RateFit ols_fit(std::span<const double> widths, std::span<const double> errors);
nlohmann::json to_json(const RateFit& fit);

/// One-sided paired t-test of H1: mean(a - b) < 0.
struct PairedTTest {
    int n = 0;
    double mean_diff = 0.0;
    double std_diff = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
};
PairedTTest paired_t_test_less(std::span<const double> a, std::span<const double> b);

/// `trials` runs of `base`, trial i seeded with derive_seed(seed, i). Parallel over trials.
std::vector<SnapshotSeries> run_trials(const FiniteMdp& mdp, const TrainerConfig& base, int trials,
                                       std::uint64_t seed);

/// Per-snapshot max over pairs of |network - reference|.
struct ErrorCurve {
    std::vector<double> t, q, p;
};
/// Reference = sum_{m <= order} N^(phi_m) X^(m)_t from `solution` (order 0 gives the plain limit).
ErrorCurve residual_curve(const SnapshotSeries& series, const LimitSolution& solution, int order);

/// Pointwise mean over trials; all curves must share the snapshot grid.
ErrorCurve mean_curve(std::span<const ErrorCurve> curves);

struct RateSweepConfig {
    double beta = 0.75;
    std::vector<int> widths{100, 400, 1600};
    int trials = 30;
    double T = 5.0;
    std::uint64_t seed = 0;
    double alpha = 1.0;
    InitLaw law{};

    void validate() const;
};

struct RateSweepResult {
    RateFit q_fit, p_fit;
    std::vector<ErrorCurve> mean_curves;  // per width
};

/// error(N) = sup_t of the trial mean of max-abs error against the order-0 limit.
RateSweepResult rate_fit_from_series(const std::vector<std::vector<SnapshotSeries>>& by_width,
                                     const LimitSolution& order0);
RateSweepResult rate_sweep(const FiniteMdp& mdp, const LimitSolution& order0, const RateSweepConfig& config);

/// Across-trial sample standard deviations per snapshot time.
struct VarianceCurve {
    double beta = 0.0;
    int width_n = 0;
    int trials = 0;
    std::vector<double> t;
    std::vector<double> actor_std;   // max over pairs of std f_t(x, a)
    std::vector<double> critic_std;  // max over pairs of std Q_t(x, a)
    std::vector<double> reward_std;  // std of the reward of f_t
};
VarianceCurve variance_curve(const FiniteMdp& mdp, std::span<const SnapshotSeries> trials);

struct VarianceSweepConfig {
    std::vector<double> betas{0.55, 0.75, 0.95};
    std::vector<int> widths{2000};
    int trials = 50;
    double T = 20.0;
    std::uint64_t seed = 0;
    double alpha = 1.0;
    InitLaw law{};

    void validate() const;
};

/// One curve per (beta, width), betas outermost.
std::vector<VarianceCurve> variance_sweep(const FiniteMdp& mdp, const VarianceSweepConfig& config);
/// OLS of log terminal actor std on log width over the curves of one beta.
RateFit variance_width_fit(std::span<const VarianceCurve> curves);

struct ResidualConfig {
    double beta = 0.8;
    int width_n = 2000;
    int trials = 40;
    double T = 10.0;
    std::uint64_t seed = 0;
    int order = 1;
    double alpha = 1.0;
    double h_ode = 0.01;
    InitLaw law{};

    void validate() const;
};

struct ResidualResult {
    int order = 0;
    ErrorCurve mean;                       // trial mean of the per-time residual
    double sup_q = 0.0;                    // sup over t of mean.q
    std::vector<double> trial_time_avg_q;  // per trial: time average of max-abs Q residual
    std::vector<double> trial_sup_q;       // per trial: sup over t
};

/// Residual of the order-`order` expansion on trained trials. Below the terminal order the
/// reference is deterministic and `lower` (integrated to at least `order`) is reused. At the
/// terminal order each trial integrates its own solution with coupled initial conditions
/// Q^(n)_0 = N^(beta - 1/2) Q^N_0 and P^(n)_0 = N^(beta - 1/2) P^N_0.
ResidualResult expansion_residual(const FiniteMdp& mdp, const KernelTables& kernels, const ResidualConfig& config,
                                  std::span<const SnapshotSeries> trials, const LimitSolution* lower = nullptr);

/// Order-0 large-time diagnostics along the stored grid.
struct LargeTimeCurve {
    std::vector<double> t;
    std::vector<double> bellman_gap;  // max |Q^(0)_t - V^{f_t}|
    std::vector<double> gap_over_eta; // bellman_gap / eta_t
    std::vector<double> grad_norm;    // Euclidean norm of sigma^{f_t}(x,a) (V^{f_t}(x,a) - V^{f_t}(x))
};
LargeTimeCurve large_time_curve(const FiniteMdp& mdp, const LimitSolution& order0);

/// Long-format report rows {experiment, beta, width_n, trial, t, metric, value}; trial -1
/// marks an aggregate over trials.
class ReportTable {
public:
    void add(const std::string& experiment, double beta, int width_n, int trial, double t, const std::string& metric,
             double value);
    void add_training_metrics(const std::string& experiment, const FiniteMdp& mdp, const SnapshotSeries& series,
                              const Policy& pistar, int trial);
    void add_curve(const std::string& experiment, double beta, int width_n, const ErrorCurve& curve,
                   const std::string& prefix);
    void add_variance(const std::string& experiment, const VarianceCurve& curve);
    std::size_t size() const { return rows_.size(); }
    void write_csv(const std::string& path) const;

private:
    struct Row {
        std::string experiment;
        double beta;
        int width_n;
        int trial;
        double t;
        std::string metric;
        double value;
    };
    std::vector<Row> rows_;
};

} // namespace acscale
