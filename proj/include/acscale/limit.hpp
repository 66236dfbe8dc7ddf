#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "acscale/common.hpp"
#include "acscale/mdp.hpp"
#include "acscale/network.hpp"

namespace acscale {

/// Expectations over the initialization law that drive the limit equations.
/// Actor and critic share one law, so a single set of tables serves both networks.
struct KernelTables {
    int n_pairs = 0;
    InitLaw law{};
    std::int64_t mc_samples = 0;
    std::uint64_t mc_seed = 0;
    Matrix a;                    // <B_{xi,xi'}, v0>
    Matrix a_stderr;             // Monte Carlo standard error of each entry of `a`
    std::vector<double> c_table; // [(xi * n + xi2) * n + xi1] = <C_{xi1} B_{xi,xi2}, v0>
    Matrix init_cov;             // <c^2 sigma(w.xi) sigma(w.xi'), v0>, covariance of the Gaussian ICs
    Matrix particles;            // rows (c, w): the first samples of the same stream

    double c(int xi, int xi2, int xi1) const {
        return c_table[(static_cast<std::size_t>(xi) * n_pairs + xi2) * n_pairs + xi1];
    }
    /// sum_xi1 kappa(xi1) <C_{xi1} B_{.,.}, v0>.
    Matrix contract_c(const Vector& kappa) const;
};

KernelTables build_kernels(const FiniteMdp& mdp, const InitLaw& law, std::int64_t mc_samples = 200000,
                           std::uint64_t mc_seed = 0, std::int64_t particle_count = 4096);

/// Binary cache keyed by (mdp hash, law, mc_samples, mc_seed). load returns nullopt on a
/// missing file or a key mismatch.
void save_kernels(const KernelTables& tables, const FiniteMdp& mdp, const std::string& path);
std::optional<KernelTables> load_kernels(const FiniteMdp& mdp, const InitLaw& law, std::int64_t mc_samples,
                                         std::uint64_t mc_seed, const std::string& path);

/// n with beta in ((2n-1)/2n, (2n+1)/(2n+2)]. Throws ConfigError for beta outside (1/2, 1).
int expansion_order(double beta);
/// beta == (2n+1)/(2n+2) for its own n.
bool at_bracket_end(double beta);

struct LimitConfig {
    double T = 1.0;
    double h_ode = 0.01;
    double beta = 0.75;
    double alpha = 1.0;
    int order = 0;                               // highest order integrated
    std::optional<std::uint64_t> random_ic_seed; // draws the terminal-order Gaussian ICs
    std::optional<Vector> q_ic, p_ic;            // explicit terminal-order ICs; override sampling
    int record_stride = 1;                       // keep every k-th grid point (the last is always kept)
    bool force_particles = false;                // particle jets even for the first-order measure term

    void validate() const;
};

struct LimitPoint {
    double t = 0.0;
    std::vector<Vector> q, p, f, g, pi, sigma;  // index = order
    std::vector<Matrix> v_kernel, mu_kernel;    // <B, v^(m)>, <B, mu^(m)>; index 0 is the init table
};

struct LimitSolution {
    double beta = 0.75;
    double alpha = 1.0;
    double T = 0.0;
    double h_ode = 0.01;
    int order_n = 1;    // expansion order for beta
    int order = 0;      // highest order integrated
    bool terminal_linearized = false;
    std::optional<std::uint64_t> random_ic_seed;
    Vector q_ic, p_ic;  // ICs of order `order` (zero unless it is the terminal order)
    std::vector<LimitPoint> points;

    std::vector<double> times() const;
    /// Linear interpolation between stored points; t clamped to [0, T].
    Vector q(int m, double t) const;
    Vector p(int m, double t) const;
    /// Exact scale N^(m(beta-1)) below the expansion order, N^(1/2-beta) at it.
    double order_scale(int m, int width_n) const;
};

/// Joint integration of orders 0..config.order by classical RK4 on a uniform grid.
/// Throws std::domain_error("order exceeds expansion bracket") when order > n(beta).
LimitSolution integrate_limit(const FiniteMdp& mdp, const KernelTables& kernels, const LimitConfig& config);

LimitSolution integrate_order0(const FiniteMdp& mdp, const KernelTables& kernels, double T, double h_ode = 0.01,
                               double alpha = 1.0);

/// Extends `lower` (orders 0..m-1) to order m. Lower orders are recomputed by the same
/// code path and come out bitwise identical.
LimitSolution integrate_correction(int m, const LimitSolution& lower, const FiniteMdp& mdp,
                                   const KernelTables& kernels, const LimitConfig& base);

/// One joint draw of the terminal-order ICs (G for the critic, H for the actor), each
/// N(0, init_cov), from Rng(derive_seed(seed, 0)).
std::pair<Vector, Vector> sample_terminal_ics(const KernelTables& kernels, std::uint64_t seed);

struct NetworkPrediction {
    Vector q, p;          // sum_m order_scale(m) * X^(m)_t
    Vector q_std, p_std;  // N^(1/2-beta) * sample std of the terminal term over resamples
};

NetworkPrediction predict_network(const LimitSolution& solution, int width_n, double t,
                                  std::span<const LimitSolution> resamples = {});

/// `count` re-integrations with random_ic_seed = derive_seed(seed, i).
std::vector<LimitSolution> resample_terminal(const FiniteMdp& mdp, const KernelTables& kernels,
                                             const LimitConfig& config, int count, std::uint64_t seed);

/// Long CSV {t,order,kind,x,a,value} with kinds Q, P, f, g, pi, sigma.
void write_limit_csv(const LimitSolution& solution, const FiniteMdp& mdp, const std::string& path);
/// Reads the per-pair tables back; kernel functionals are not persisted. `meta` carries
/// beta, alpha, T, h_ode, order, order_n (the manifest's "solution" block).
LimitSolution read_limit_csv(const std::string& path, const nlohmann::json& meta, int n_actions);
nlohmann::json solution_meta(const LimitSolution& solution);

} // namespace acscale
