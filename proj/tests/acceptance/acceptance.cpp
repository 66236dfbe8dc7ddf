// Acceptance run: one PASS/FAIL line per criterion, followed by indented diagnostics.
// Usage: acceptance [criterion ...]   (default: 1..8)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acscale/experiments.hpp"
#include "acscale/kernels.hpp"
#include "acscale/limit.hpp"
#include "acscale/mdp.hpp"
#include "acscale/softmax_tensor.hpp"
#include "acscale/trainer.hpp"

#include "../support/oracles.hpp"

namespace fs = std::filesystem;
using namespace acscale;

namespace {

struct Outcome {
    bool pass = false;
    std::vector<std::string> notes;
};

template <typename... Args>
std::string fmt(const char* format, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

const FiniteMdp& forest() {
    static const FiniteMdp mdp = build_forest();
    return mdp;
}

const KernelTables& tables() {
    static const KernelTables k = build_kernels(forest(), InitLaw{}, 200000, 0, 4096);
    return k;
}

Outcome exact_solvers() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(20240601);
    double worst_fixed = 0.0, worst_oracle = 0.0, worst_bellman = 0.0, worst_vi = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 11;
        const Matrix chain = oracle::random_chain(n, rng);
        const Vector pi = stationary_distribution(chain);
        worst_fixed = std::max(worst_fixed, (chain.transpose() * pi - pi).cwiseAbs().maxCoeff());
        worst_oracle = std::max(worst_oracle, (pi - oracle::power_iteration(chain)).cwiseAbs().maxCoeff());
    }
    for (int trial = 0; trial < 50; ++trial) {
        const int ns = 2 + trial % 5, na = 2 + trial % 2;
        const FiniteMdp mdp = oracle::random_mdp(ns, na, rng);
        const Policy f = oracle::random_policy(ns, na, rng);
        const Vector q = value_function(mdp, f);
        // Bellman residual of the library's solve, plus agreement with value iteration.
        Vector bellman(q.size());
        for (int p = 0; p < mdp.n_pairs(); ++p) {
            double ev = 0.0;
            for (int y = 0; y < ns; ++y)
                for (int b = 0; b < na; ++b) ev += mdp.transition(p, y) * f.probs(y, b) * q(y * na + b);
            bellman(p) = q(p) - mdp.reward(p / na, p % na) - mdp.gamma * ev;
        }
        worst_bellman = std::max(worst_bellman, bellman.cwiseAbs().maxCoeff());
        worst_vi = std::max(worst_vi, (q - oracle::value_iteration(mdp, f)).cwiseAbs().maxCoeff());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.pass = worst_fixed <= 1e-10 && worst_oracle <= 1e-8 && worst_bellman <= 1e-10 && worst_vi <= 1e-8 && secs < 5.0;
    out.notes.push_back(fmt("max |pi M - pi| = %.3e (<= 1e-10), max |pi - power iteration| = %.3e (<= 1e-8)",
                            worst_fixed, worst_oracle));
    out.notes.push_back(fmt("max Bellman residual = %.3e (<= 1e-10), max |V - value iteration| = %.3e",
                            worst_bellman, worst_vi));
    out.notes.push_back(fmt("runtime %.2f s (< 5 s)", secs));
    return out;
}

Outcome initialization_clt() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    const Matrix inputs = forest().inputs();
    const Matrix samples = kernels::clt_outputs(inputs, 4096, 0.75, InitLaw{}, 10000, 11);
    const Vector reference = oracle::clt_variance_mc(inputs, 1.0, 3.0, 1000000, 99);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
        const Vector col = samples.col(j);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / static_cast<double>(col.size() - 1);
        const double rel = std::abs(var - reference(j)) / reference(j);
        worst = std::max(worst, rel);
        out.notes.push_back(fmt("pair %d: sample var %.5f, MC <(c sigma)^2> %.5f, rel err %.4f", static_cast<int>(j),
                                var, reference(j), rel));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.pass = worst <= 0.10 && secs < 120.0;
    out.notes.push_back(fmt("worst relative error %.4f (<= 0.10), runtime %.1f s (< 120 s)", worst, secs));
    return out;
}

Outcome rate_exponent() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    RateSweepConfig cfg;  // beta 0.75, widths {100, 400, 1600}, 30 trials, T = 5
    const LimitSolution order0 = integrate_order0(forest(), tables(), cfg.T);
    const RateSweepResult r = rate_sweep(forest(), order0, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto ok = [](const RateFit& f) { return std::abs(f.slope + 0.25) <= 0.15 && f.r_squared >= 0.8; };
    out.pass = ok(r.q_fit) && ok(r.p_fit);
    for (const auto* fit : {&r.q_fit, &r.p_fit}) {
        std::ostringstream errs;
        for (double e : fit->errors) errs << ' ' << e;
        out.notes.push_back(fmt("%s: slope %.4f +- %.4f (target -0.25 +- 0.15), r2 %.4f (>= 0.8), errors:%s",
                                fit == &r.q_fit ? "Q" : "P", fit->slope, fit->slope_stderr, fit->r_squared,
                                errs.str().c_str()));
    }
    out.notes.push_back(fmt("runtime %.1f s (budget 20 min on 8 cores)", secs));
    return out;
}

Outcome variance_scaling() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    VarianceSweepConfig by_beta;
    by_beta.betas = {0.55, 0.75, 0.95};
    by_beta.widths = {2000};
    by_beta.trials = 50;
    by_beta.T = 20.0;
    const auto curves = variance_sweep(forest(), by_beta);
    bool decreasing = true;
    for (std::size_t i = 0; i < curves.size(); ++i) {
        out.notes.push_back(fmt("beta %.2f N 2000: terminal actor std %.5f, critic std %.5f", curves[i].beta,
                                curves[i].actor_std.back(), curves[i].critic_std.back()));
        if (i > 0) decreasing = decreasing && curves[i].actor_std.back() < curves[i - 1].actor_std.back();
    }

    VarianceSweepConfig by_width;
    by_width.betas = {0.75};
    by_width.widths = {256, 1024, 4096};
    by_width.trials = 50;
    by_width.T = 20.0;
    by_width.seed = 1;
    const auto wcurves = variance_sweep(forest(), by_width);
    const RateFit fit = variance_width_fit(wcurves);
    for (const auto& c : wcurves)
        out.notes.push_back(fmt("beta 0.75 N %d: terminal actor std %.5f", c.width_n, c.actor_std.back()));
    const bool slope_ok = std::abs(fit.slope + 0.25) <= 0.2;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.pass = decreasing && slope_ok;
    out.notes.push_back(fmt("ordering strictly decreasing in beta: %s", decreasing ? "yes" : "no"));
    out.notes.push_back(fmt("log std vs log N slope %.4f +- %.4f (target -0.25 +- 0.2), r2 %.3f", fit.slope,
                            fit.slope_stderr, fit.r_squared));
    out.notes.push_back(fmt("runtime %.1f s (budget 40 min on 8 cores)", secs));
    return out;
}

Outcome large_time() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    const LimitSolution sol = integrate_order0(forest(), tables(), 200.0);
    const LargeTimeCurve c = large_time_curve(forest(), sol);
    const auto at = [&](double t) {
        std::size_t best = 0;
        for (std::size_t i = 0; i < c.t.size(); ++i)
            if (std::abs(c.t[i] - t) < std::abs(c.t[best] - t)) best = i;
        return best;
    };
    const std::size_t i100 = at(100.0), i20 = at(20.0), i200 = c.t.size() - 1;
    double peak = 0.0;
    for (std::size_t i = i100; i <= i200; ++i) peak = std::max(peak, c.gap_over_eta[i]);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool bounded = peak <= 1.1 * c.gap_over_eta[i100];
    const bool decays = c.grad_norm[i200] <= 0.5 * c.grad_norm[i20];
    out.pass = bounded && decays && secs < 120.0;
    out.notes.push_back(fmt("gap/eta at t=100: %.5f, max over [100, 200]: %.5f (<= 1.1x), at t=200: %.5f",
                            c.gap_over_eta[i100], peak, c.gap_over_eta[i200]));
    out.notes.push_back(fmt("policy-gradient norm t=20: %.4e, t=200: %.4e (ratio %.3f <= 0.5)", c.grad_norm[i20],
                            c.grad_norm[i200], c.grad_norm[i200] / c.grad_norm[i20]));
    out.notes.push_back(fmt("runtime %.1f s (< 120 s)", secs));

    // Diagnostic only: one-hot inputs give a better-conditioned kernel table.
    FiniteMdp onehot = forest();
    onehot.state_embed = Matrix::Identity(onehot.n_states, onehot.n_states);
    onehot.action_embed = Matrix::Identity(onehot.n_actions, onehot.n_actions);
    const KernelTables k1 = build_kernels(onehot, InitLaw{}, 200000, 0, 0);
    const LargeTimeCurve d = large_time_curve(onehot, integrate_order0(onehot, k1, 200.0));
    double peak1 = 0.0;
    for (std::size_t i = i100; i <= i200; ++i) peak1 = std::max(peak1, d.gap_over_eta[i]);
    Eigen::SelfAdjointEigenSolver<Matrix> eig_default(tables().a), eig_onehot(k1.a);
    out.notes.push_back(fmt("kernel table eigenvalues min/max: scalar embedding %.2e/%.2e, one-hot %.2e/%.2e",
                            eig_default.eigenvalues().minCoeff(), eig_default.eigenvalues().maxCoeff(),
                            eig_onehot.eigenvalues().minCoeff(), eig_onehot.eigenvalues().maxCoeff()));
    out.notes.push_back(fmt("diagnostic one-hot: gap/eta t=100 %.4f, max [100,200] %.4f; grad ratio t=200/t=20 %.3f",
                            d.gap_over_eta[i100], peak1, d.grad_norm[i200] / d.grad_norm[i20]));
    return out;
}

Outcome expansion_improvement() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    ResidualConfig cfg;  // beta 0.8, N 2000, 40 trials, T 10
    TrainerConfig tc;
    tc.width_n = cfg.width_n;
    tc.beta = cfg.beta;
    tc.T = cfg.T;
    const auto trials = run_trials(forest(), tc, cfg.trials, cfg.seed);
    LimitConfig lc;
    lc.T = cfg.T;
    lc.beta = cfg.beta;
    lc.order = 1;
    const LimitSolution lower = integrate_limit(forest(), tables(), lc);
    cfg.order = 0;
    const ResidualResult r0 = expansion_residual(forest(), tables(), cfg, trials, &lower);
    cfg.order = 1;
    const ResidualResult r1 = expansion_residual(forest(), tables(), cfg, trials, &lower);
    const PairedTTest t = paired_t_test_less(r1.trial_time_avg_q, r0.trial_time_avg_q);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    double m0 = 0, m1 = 0;
    for (std::size_t i = 0; i < r0.trial_time_avg_q.size(); ++i) {
        m0 += r0.trial_time_avg_q[i] / r0.trial_time_avg_q.size();
        m1 += r1.trial_time_avg_q[i] / r1.trial_time_avg_q.size();
    }
    out.pass = m1 <= m0 && t.p_value < 0.05;
    out.notes.push_back(fmt("expansion order n(0.8) = %d; order-1 term is deterministic with zero IC",
                            expansion_order(cfg.beta)));
    out.notes.push_back(fmt("time-averaged max-abs Q residual: order 0 %.6f, order 1 %.6f", m0, m1));
    out.notes.push_back(fmt("sup_t mean residual: order 0 %.6f, order 1 %.6f", r0.sup_q, r1.sup_q));
    out.notes.push_back(fmt("paired one-sided t: diff %.3e, t %.3f, p %.3e (< 0.05)", t.mean_diff, t.t_stat,
                            t.p_value));
    out.notes.push_back(fmt("runtime %.1f s (budget 30 min)", secs));

    // Diagnostics: size of the first-order drivers, and the terminal (fluctuation) order.
    double c_max = 0.0, q1_max = 0.0;
    for (double v : tables().c_table) c_max = std::max(c_max, std::abs(v));
    for (const auto& pt : lower.points) q1_max = std::max(q1_max, pt.q[1].cwiseAbs().maxCoeff());
    out.notes.push_back(fmt("max |<C B, v0>| = %.2e vs max |<B, v0>| = %.2e; sup |Q^(1)| = %.2e", c_max,
                            tables().a.cwiseAbs().maxCoeff(), q1_max));
    out.notes.push_back("analysis: <C B, v0> is an odd moment in c under the symmetric init law, so the "
                        "first-order measure terms vanish and Q^(1) = P^(1) = 0 up to Monte Carlo noise");
    cfg.order = 2;
    const ResidualResult r2 = expansion_residual(forest(), tables(), cfg, trials, &lower);
    double m2 = 0.0;
    for (double v : r2.trial_time_avg_q) m2 += v / r2.trial_time_avg_q.size();
    const PairedTTest t2 = paired_t_test_less(r2.trial_time_avg_q, r0.trial_time_avg_q);
    out.notes.push_back(fmt("diagnostic order 2 (terminal, coupled ICs): residual %.6f, paired p %.3e", m2,
                            t2.p_value));
    return out;
}

Outcome perturbation_algebra() {
    Outcome out;
    const FiniteMdp& mdp = forest();
    const Matrix K = kernel(mdp, ChainKind::Standard);
    // beta 0.8: order 1 below the expansion order (zero IC). beta 0.75: order 1 is the
    // terminal order at the bracket end, with Gaussian ICs, so g1 is O(1) from t = 0.
    struct Case {
        const char* label;
        double beta;
        std::optional<std::uint64_t> ic_seed;
    };
    const Case cases[] = {{"beta 0.80, zero IC", 0.8, std::nullopt}, {"beta 0.75, Gaussian IC", 0.75, 7}};
    double stated = 0.0, mass = 0.0;
    for (const auto& c : cases) {
        LimitConfig lc;
        lc.T = 5.0;
        lc.beta = c.beta;
        lc.order = 1;
        lc.random_ic_seed = c.ic_seed;
        const LimitSolution sol = integrate_limit(mdp, tables(), lc);
        double s_case = 0.0, d_case = 0.0, m_case = 0.0, forcing = 0.0;
        for (const auto& pt : sol.points) {
            const Matrix P0 = pair_chain(K, pt.g[0], mdp.n_actions);
            const Matrix P1 = pair_chain(K, pt.g[1], mdp.n_actions);
            const Eigen::RowVectorXd pi0 = pt.pi[0].transpose(), pi1 = pt.pi[1].transpose();
            Matrix W(P0.rows(), P0.cols());
            for (Eigen::Index r = 0; r < W.rows(); ++r) W.row(r) = pi0;
            const Matrix I = Matrix::Identity(P0.rows(), P0.cols());
            s_case = std::max(s_case, (pi1 * (I - P0 + W) + pi0 * P1).cwiseAbs().maxCoeff());
            d_case = std::max(d_case, (pi1 * (I - P0 + W) - pi0 * P1).cwiseAbs().maxCoeff());
            forcing = std::max(forcing, (pi0 * P1).cwiseAbs().maxCoeff());
            m_case = std::max(m_case, std::abs(pt.pi[1].sum()));
        }
        // Finite-difference oracle at the final point: d/de of the stationary law of P0 + e P1.
        const auto& pt = sol.points.back();
        const Matrix P0 = pair_chain(K, pt.g[0], mdp.n_actions);
        const Matrix P1 = pair_chain(K, pt.g[1], mdp.n_actions);
        const double e = 1e-6;
        const Vector fd = (oracle::power_iteration(P0 + e * P1) - oracle::power_iteration(P0 - e * P1)) / (2 * e);
        out.notes.push_back(fmt("%s: max |pi0 P1| %.3e; stated residual %.3e; sum pi1 %.3e", c.label, forcing,
                                s_case, m_case));
        out.notes.push_back(fmt("%s: diagnostic pi1 (I - P0 + W) - pi0 P1 residual %.3e; |pi1 - finite diff| %.3e",
                                c.label, d_case, (fd - pt.pi[1]).cwiseAbs().maxCoeff()));
        stated = std::max(stated, s_case);
        mass = std::max(mass, m_case);
    }
    out.pass = stated <= 1e-9 && mass <= 1e-9;
    out.notes.push_back(fmt("identity as stated, pi1 (I - P0 + W) + pi0 P1 = 0: max residual %.3e (<= 1e-9)",
                            stated));
    out.notes.push_back(fmt("sum of pi1: max |.| %.3e (<= 1e-9)", mass));
    out.notes.push_back("analysis: differentiating pi = pi P gives pi1 (I - P0 + W) = +pi0 P1, which the solver "
                        "satisfies and the finite-difference oracle confirms; the stated sign only holds when "
                        "pi0 P1 vanishes (see the decisions ledger)");
    return out;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

Outcome determinism_and_integrator() {
    Outcome out;
    const fs::path dir = fs::temp_directory_path() / "acscale_acceptance";
    fs::create_directories(dir);
    TrainerConfig tc;
    tc.width_n = 200;
    tc.beta = 0.75;
    tc.T = 2.0;
    tc.seed = 42;
    write_snapshot_csv(train(forest(), tc), (dir / "a.csv").string());
    write_snapshot_csv(train(forest(), tc), (dir / "b.csv").string());
    const bool train_same = read_bytes(dir / "a.csv") == read_bytes(dir / "b.csv");

    LimitConfig lc;
    lc.T = 2.0;
    lc.beta = 0.75;
    lc.order = 1;
    lc.random_ic_seed = 5;
    write_limit_csv(integrate_limit(forest(), tables(), lc), forest(), (dir / "la.csv").string());
    write_limit_csv(integrate_limit(forest(), tables(), lc), forest(), (dir / "lb.csv").string());
    const bool limit_same = read_bytes(dir / "la.csv") == read_bytes(dir / "lb.csv");

    const LimitSolution coarse = integrate_order0(forest(), tables(), 20.0, 0.01);
    const LimitSolution fine = integrate_order0(forest(), tables(), 20.0, 0.005);
    double halving = 0.0;
    for (const auto& pt : coarse.points) {
        halving = std::max(halving, (pt.q[0] - fine.q(0, pt.t)).cwiseAbs().maxCoeff());
        halving = std::max(halving, (pt.p[0] - fine.p(0, pt.t)).cwiseAbs().maxCoeff());
    }

    double tensor_err = 0.0;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 5; ++rep) {
        const int na = 2 + rep % 3;
        Vector z(na);
        for (auto& v : z) v = nd(rng);
        const Vector f0 = oracle::softmax(z);
        for (int m = 1; m <= 3; ++m) {
            const ActionTensor T = softmax_derivative_tensor(f0, m);
            const double h = m == 1 ? 1e-5 : (m == 2 ? 1e-4 : 2e-3);
            std::vector<int> idx(m + 1, 0);
            for (std::size_t flat = 0; flat < T.data.size(); ++flat) {
                std::size_t rest = flat;
                for (int k = m; k >= 0; --k) {
                    idx[k] = static_cast<int>(rest % na);
                    rest /= na;
                }
                const std::vector<int> dirs(idx.begin() + 1, idx.end());
                tensor_err = std::max(tensor_err, std::abs(T(idx) - oracle::softmax_fd(z, idx[0], dirs, h)));
            }
        }
    }
    fs::remove_all(dir);
    out.pass = train_same && limit_same && halving < 1e-6 && tensor_err <= 1e-6;
    out.notes.push_back(fmt("byte-identical reruns: SnapshotSeries %s, LimitSolution %s", train_same ? "yes" : "no",
                            limit_same ? "yes" : "no"));
    out.notes.push_back(fmt("RK4 step halving (h 0.01 vs 0.005, T 20): sup diff %.3e (< 1e-6)", halving));
    out.notes.push_back(fmt("softmax tensors order 1..3 vs finite differences: max err %.3e (<= 1e-6)", tensor_err));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"exact solvers", exact_solvers},
        {"initialization CLT", initialization_clt},
        {"rate exponent", rate_exponent},
        {"variance scaling", variance_scaling},
        {"large-time limit", large_time},
        {"expansion improvement", expansion_improvement},
        {"perturbation algebra", perturbation_algebra},
        {"determinism and integrator", determinism_and_integrator}};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.notes.push_back(std::string("exception: ") + e.what());
        }
        std::cout << "CRITERION " << id << " (" << criteria[k].first << "): " << (o.pass ? "PASS" : "FAIL") << '\n';
        for (const auto& n : o.notes) std::cout << "    " << n << '\n';
        std::cout.flush();
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
