#include "acscale/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

namespace acscale {

double actor_mse(const Policy& f, const Policy& pistar) {
    if (f.probs.rows() != pistar.probs.rows() || f.probs.cols() != pistar.probs.cols())
        throw std::invalid_argument("actor_mse: policy shapes differ");
    return (f.probs - pistar.probs).array().square().mean();
}

double policy_reward(const FiniteMdp& mdp, const Policy& f) {
    return expected_reward(mdp, f);
}

RateFit ols_fit(std::span<const double> widths, std::span<const double> errors) {
    if (widths.size() != errors.size() || widths.size() < 2)
        throw std::invalid_argument("ols_fit: need at least two (width, error) points");
    RateFit fit;
    fit.widths.assign(widths.begin(), widths.end());
    fit.errors.assign(errors.begin(), errors.end());
    const auto n = static_cast<double>(widths.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (!(widths[i] > 0.0) || !(errors[i] > 0.0)) throw std::invalid_argument("ols_fit: widths and errors must be positive");
        fit.log_widths.push_back(std::log(widths[i]));
        fit.log_errors.push_back(std::log(errors[i]));
        mx += fit.log_widths.back();
        my += fit.log_errors.back();
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const double dx = fit.log_widths[i] - mx;
        const double dy = fit.log_errors[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw std::invalid_argument("ols_fit: widths must not all be equal");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double ss_res = std::max(0.0, syy - fit.slope * sxy);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    fit.slope_stderr = widths.size() > 2 ? std::sqrt(ss_res / (n - 2.0) / sxx) : 0.0;
    return fit;
}

nlohmann::json to_json(const RateFit& fit) {
    return nlohmann::json{{"widths", fit.widths},       {"errors", fit.errors},
                          {"slope", fit.slope},         {"intercept", fit.intercept},
                          {"r_squared", fit.r_squared}, {"slope_stderr", fit.slope_stderr}};
}

PairedTTest paired_t_test_less(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired t-test: need two equal samples of size >= 2");
    PairedTTest out;
    out.n = static_cast<int>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= out.n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    out.mean_diff = mean;
    out.std_diff = std::sqrt(ss / (out.n - 1));
    if (out.std_diff == 0.0) {
        out.t_stat = mean < 0.0 ? -std::numeric_limits<double>::infinity()
                                : (mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        out.p_value = mean < 0.0 ? 0.0 : 1.0;
        return out;
    }
    out.t_stat = mean / (out.std_diff / std::sqrt(static_cast<double>(out.n)));
    const boost::math::students_t dist(out.n - 1);
    out.p_value = boost::math::cdf(dist, out.t_stat);
    return out;
}

std::vector<SnapshotSeries> run_trials(const FiniteMdp& mdp, const TrainerConfig& base, int trials,
                                       std::uint64_t seed) {
    if (trials < 1) throw ConfigError("trials", "must be positive");
    base.validate();
    mdp.validate();
    std::vector<SnapshotSeries> out(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < trials; ++i) {
        TrainerConfig cfg = base;
        cfg.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = train(mdp, cfg);
    }
    return out;
}

ErrorCurve residual_curve(const SnapshotSeries& series, const LimitSolution& solution, int order) {
    if (order < 0 || order > solution.order) throw std::out_of_range("residual order not integrated");
    ErrorCurve out;
    for (const auto& rec : series.records) {
        Vector q = rec.q;
        Vector p = rec.p;
        for (int m = 0; m <= order; ++m) {
            const double s = m == 0 ? 1.0 : solution.order_scale(m, series.width_n);
            q -= s * solution.q(m, rec.t);
            p -= s * solution.p(m, rec.t);
        }
        out.t.push_back(rec.t);
        out.q.push_back(q.cwiseAbs().maxCoeff());
        out.p.push_back(p.cwiseAbs().maxCoeff());
    }
    return out;
}

ErrorCurve mean_curve(std::span<const ErrorCurve> curves) {
    if (curves.empty()) throw std::invalid_argument("mean_curve: no curves");
    ErrorCurve out;
    out.t = curves.front().t;
    out.q.assign(out.t.size(), 0.0);
    out.p.assign(out.t.size(), 0.0);
    for (const auto& c : curves) {
        if (c.t.size() != out.t.size()) throw std::invalid_argument("mean_curve: snapshot grids differ");
        for (std::size_t i = 0; i < out.t.size(); ++i) {
            out.q[i] += c.q[i];
            out.p[i] += c.p[i];
        }
    }
    for (std::size_t i = 0; i < out.t.size(); ++i) {
        out.q[i] /= static_cast<double>(curves.size());
        out.p[i] /= static_cast<double>(curves.size());
    }
    return out;
}

void RateSweepConfig::validate() const {
    if (!(beta > 0.5) || !(beta <= 1.0)) throw ConfigError("beta", "must lie in (1/2, 1]");
    if (widths.size() < 3) throw ConfigError("widths", "need at least three widths");
    for (int w : widths)
        if (w < 1) throw ConfigError("widths", "must be positive");
    const auto [lo, hi] = std::minmax_element(widths.begin(), widths.end());
    if (*hi < 10 * *lo) throw ConfigError("widths", "must span at least one decade");
    if (trials < 1) throw ConfigError("trials", "must be positive");
    if (!(T > 0.0)) throw ConfigError("T", "must be positive");
}

RateSweepResult rate_fit_from_series(const std::vector<std::vector<SnapshotSeries>>& by_width,
                                     const LimitSolution& order0) {
    RateSweepResult out;
    std::vector<double> widths, q_err, p_err;
    for (const auto& trials : by_width) {
        if (trials.empty()) throw std::invalid_argument("rate fit: width without trials");
        std::vector<ErrorCurve> curves;
        curves.reserve(trials.size());
        for (const auto& s : trials) curves.push_back(residual_curve(s, order0, 0));
        ErrorCurve mean = mean_curve(curves);
        widths.push_back(trials.front().width_n);
        q_err.push_back(*std::max_element(mean.q.begin(), mean.q.end()));
        p_err.push_back(*std::max_element(mean.p.begin(), mean.p.end()));
        out.mean_curves.push_back(std::move(mean));
    }
    out.q_fit = ols_fit(widths, q_err);
    out.p_fit = ols_fit(widths, p_err);
    return out;
}

RateSweepResult rate_sweep(const FiniteMdp& mdp, const LimitSolution& order0, const RateSweepConfig& config) {
    config.validate();
    if (order0.T + 1e-12 < config.T) throw ConfigError("T", "limit solution does not cover the training horizon");
    std::vector<std::vector<SnapshotSeries>> by_width;
    for (int w : config.widths) {
        TrainerConfig tc;
        tc.width_n = w;
        tc.beta = config.beta;
        tc.T = config.T;
        tc.alpha = config.alpha;
        tc.law = config.law;
        by_width.push_back(run_trials(mdp, tc, config.trials, config.seed));
    }
    return rate_fit_from_series(by_width, order0);
}

namespace {

Policy policy_from_flat(const Vector& flat, int n_states, int n_actions) {
    Policy out{Matrix(n_states, n_actions)};
    for (int x = 0; x < n_states; ++x)
        for (int a = 0; a < n_actions; ++a) out.probs(x, a) = flat(x * n_actions + a);
    return out;
}

// Shifted by the first sample, so an ensemble of equal values gives exactly 0.
double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double shift = v.front();
    double mean = 0.0;
    for (double x : v) mean += x - shift;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - shift - mean) * (x - shift - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

VarianceCurve variance_curve(const FiniteMdp& mdp, std::span<const SnapshotSeries> trials) {
    if (trials.empty()) throw std::invalid_argument("variance_curve: no trials");
    VarianceCurve out;
    out.beta = trials.front().beta;
    out.width_n = trials.front().width_n;
    out.trials = static_cast<int>(trials.size());
    const std::size_t n_times = trials.front().records.size();
    for (const auto& s : trials)
        if (s.records.size() != n_times) throw std::invalid_argument("variance_curve: snapshot grids differ");
    const int P = mdp.n_pairs();
    std::vector<double> column(trials.size());
    for (std::size_t k = 0; k < n_times; ++k) {
        out.t.push_back(trials.front().records[k].t);
        double f_max = 0.0, q_max = 0.0;
        for (int i = 0; i < P; ++i) {
            for (std::size_t r = 0; r < trials.size(); ++r) column[r] = trials[r].records[k].f(i);
            f_max = std::max(f_max, sample_std(column));
            for (std::size_t r = 0; r < trials.size(); ++r) column[r] = trials[r].records[k].q(i);
            q_max = std::max(q_max, sample_std(column));
        }
        for (std::size_t r = 0; r < trials.size(); ++r)
            column[r] = policy_reward(mdp, policy_from_flat(trials[r].records[k].f, mdp.n_states, mdp.n_actions));
        out.actor_std.push_back(f_max);
        out.critic_std.push_back(q_max);
        out.reward_std.push_back(sample_std(column));
    }
    return out;
}

LargeTimeCurve large_time_curve(const FiniteMdp& mdp, const LimitSolution& order0) {
    LargeTimeCurve out;
    for (const auto& pt : order0.points) {
        const Policy f = policy_from_flat(pt.f[0], mdp.n_states, mdp.n_actions);
        const Vector v = value_function(mdp, f);
        const Vector sigma = stationary_distribution(mdp, ChainKind::Auxiliary, f);
        double grad = 0.0;
        for (int x = 0; x < mdp.n_states; ++x) {
            double vx = 0.0;
            for (int a = 0; a < mdp.n_actions; ++a) vx += f.probs(x, a) * v(mdp.pair(x, a));
            for (int a = 0; a < mdp.n_actions; ++a) {
                const double g = sigma(mdp.pair(x, a)) * (v(mdp.pair(x, a)) - vx);
                grad += g * g;
            }
        }
        const double gap = (pt.q[0] - v).cwiseAbs().maxCoeff();
        out.t.push_back(pt.t);
        out.bellman_gap.push_back(gap);
        out.gap_over_eta.push_back(gap / Schedule::eta_limit(pt.t));
        out.grad_norm.push_back(std::sqrt(grad));
    }
    return out;
}

void VarianceSweepConfig::validate() const {
    if (betas.empty()) throw ConfigError("betas", "need at least one beta");
    for (double b : betas)
        if (!(b > 0.5) || !(b <= 1.0)) throw ConfigError("betas", "each beta must lie in (1/2, 1]");
    if (widths.empty()) throw ConfigError("widths", "need at least one width");
    for (int w : widths)
        if (w < 1) throw ConfigError("widths", "must be positive");
    if (trials < 20) throw ConfigError("trials", "need at least 20 trials");
    if (!(T > 0.0)) throw ConfigError("T", "must be positive");
}

std::vector<VarianceCurve> variance_sweep(const FiniteMdp& mdp, const VarianceSweepConfig& config) {
    config.validate();
    std::vector<VarianceCurve> out;
    for (double beta : config.betas)
        for (int w : config.widths) {
            TrainerConfig tc;
            tc.width_n = w;
            tc.beta = beta;
            tc.T = config.T;
            tc.alpha = config.alpha;
            tc.law = config.law;
            const auto trials = run_trials(mdp, tc, config.trials, config.seed);
            out.push_back(variance_curve(mdp, trials));
        }
    return out;
}

RateFit variance_width_fit(std::span<const VarianceCurve> curves) {
    std::vector<double> widths, stds;
    for (const auto& c : curves) {
        if (c.actor_std.empty()) throw std::invalid_argument("variance_width_fit: empty curve");
        widths.push_back(c.width_n);
        stds.push_back(c.actor_std.back());
    }
    return ols_fit(widths, stds);
}

void ResidualConfig::validate() const {
    if (!(beta > 0.5) || !(beta < 1.0)) throw ConfigError("beta", "the expansion needs beta in (1/2, 1)");
    if (width_n < 1) throw ConfigError("width_n", "must be positive");
    if (trials < 2) throw ConfigError("trials", "need at least two trials");
    if (!(T > 0.0)) throw ConfigError("T", "must be positive");
    if (order < 0) throw ConfigError("order", "must be nonnegative");
    if (order > expansion_order(beta)) throw std::domain_error("order exceeds expansion bracket");
}

ResidualResult expansion_residual(const FiniteMdp& mdp, const KernelTables& kernels, const ResidualConfig& config,
                                  std::span<const SnapshotSeries> trials, const LimitSolution* lower) {
    config.validate();
    std::vector<SnapshotSeries> owned;
    if (trials.empty()) {
        TrainerConfig tc;
        tc.width_n = config.width_n;
        tc.beta = config.beta;
        tc.T = config.T;
        tc.alpha = config.alpha;
        tc.law = config.law;
        owned = run_trials(mdp, tc, config.trials, config.seed);
        trials = owned;
    }
    for (const auto& s : trials)
        if (s.width_n != config.width_n || std::abs(s.beta - config.beta) > 1e-15)
            throw ConfigError("trials", "series width or beta does not match the residual config");

    LimitConfig lc;
    lc.T = config.T;
    lc.h_ode = config.h_ode;
    lc.beta = config.beta;
    lc.alpha = config.alpha;
    lc.order = config.order;
    const int n = expansion_order(config.beta);

    std::vector<ErrorCurve> curves(trials.size());
    if (config.order < n) {
        LimitSolution own;
        if (lower == nullptr || lower->order < config.order || lower->T + 1e-12 < config.T) {
            own = integrate_limit(mdp, kernels, lc);
            lower = &own;
        }
        for (std::size_t i = 0; i < trials.size(); ++i) curves[i] = residual_curve(trials[i], *lower, config.order);
    } else {
        const double lift = std::pow(static_cast<double>(config.width_n), config.beta - 0.5);
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < trials.size(); ++i) {
            LimitConfig own = lc;
            own.q_ic = Vector(lift * trials[i].records.front().q);
            own.p_ic = Vector(lift * trials[i].records.front().p);
            const LimitSolution sol = integrate_limit(mdp, kernels, own);
            curves[i] = residual_curve(trials[i], sol, config.order);
        }
    }

    ResidualResult out;
    out.order = config.order;
    out.mean = mean_curve(curves);
    out.sup_q = *std::max_element(out.mean.q.begin(), out.mean.q.end());
    for (const auto& c : curves) {
        double acc = 0.0;
        for (double v : c.q) acc += v;
        out.trial_time_avg_q.push_back(acc / static_cast<double>(c.q.size()));
        out.trial_sup_q.push_back(*std::max_element(c.q.begin(), c.q.end()));
    }
    return out;
}

void ReportTable::add(const std::string& experiment, double beta, int width_n, int trial, double t,
                      const std::string& metric, double value) {
    rows_.push_back(Row{experiment, beta, width_n, trial, t, metric, value});
}

void ReportTable::add_training_metrics(const std::string& experiment, const FiniteMdp& mdp,
                                       const SnapshotSeries& series, const Policy& pistar, int trial) {
    for (const auto& rec : series.records) {
        const Policy f = policy_from_flat(rec.f, mdp.n_states, mdp.n_actions);
        add(experiment, series.beta, series.width_n, trial, rec.t, "ActorMSE", actor_mse(f, pistar));
        add(experiment, series.beta, series.width_n, trial, rec.t, "Reward", policy_reward(mdp, f));
    }
}

void ReportTable::add_curve(const std::string& experiment, double beta, int width_n, const ErrorCurve& curve,
                            const std::string& prefix) {
    for (std::size_t i = 0; i < curve.t.size(); ++i) {
        add(experiment, beta, width_n, -1, curve.t[i], prefix + "Q", curve.q[i]);
        add(experiment, beta, width_n, -1, curve.t[i], prefix + "P", curve.p[i]);
    }
}

void ReportTable::add_variance(const std::string& experiment, const VarianceCurve& curve) {
    for (std::size_t i = 0; i < curve.t.size(); ++i) {
        add(experiment, curve.beta, curve.width_n, -1, curve.t[i], "ActorStd", curve.actor_std[i]);
        add(experiment, curve.beta, curve.width_n, -1, curve.t[i], "CriticStd", curve.critic_std[i]);
        add(experiment, curve.beta, curve.width_n, -1, curve.t[i], "RewardStd", curve.reward_std[i]);
    }
}

void ReportTable::write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "experiment,beta,width_n,trial,t,metric,value\n" << std::setprecision(17);
    for (const auto& r : rows_)
        os << r.experiment << ',' << r.beta << ',' << r.width_n << ',' << r.trial << ',' << r.t << ',' << r.metric
           << ',' << r.value << '\n';
}

} // namespace acscale
