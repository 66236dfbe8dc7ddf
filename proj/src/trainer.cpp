#include "acscale/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "acscale/activation.hpp"

namespace acscale {

namespace {

// N^-beta * sum_i outer_i sigma(inner_i . xi); stores sigma(inner_i . xi) when asked.
double evaluate(const ScaledNetwork& net, const double* xi, double* sigma_out) {
    const int d = net.input_dim;
    const double* w = net.inner.data();
    double acc = 0.0;
    for (int i = 0; i < net.width_n; ++i, w += d) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += w[j] * xi[j];
        const double sig = 1.0 / (1.0 + std::exp(-s));
        if (sigma_out != nullptr) sigma_out[i] = sig;
        acc += net.outer[i] * sig;
    }
    return acc * net.scale();
}

int sample_row(const Matrix& kernel, int row, Rng& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int last = 0;
    for (Eigen::Index j = 0; j < kernel.cols(); ++j) {
        const double p = kernel(row, j);
        if (p <= 0.0) continue;
        acc += p;
        last = static_cast<int>(j);
        if (u < acc) return last;
    }
    return last;
}

// Samples a' ~ g(x', .) where g mixes softmax(logits) with the uniform law.
int sample_action(const std::vector<double>& logits, double eta, Rng& rng) {
    const auto n = static_cast<int>(logits.size());
    double shift = logits[0];
    for (double l : logits) shift = std::max(shift, l);
    std::vector<double> probs(logits.size());
    double total = 0.0;
    for (int a = 0; a < n; ++a) total += probs[a] = std::exp(logits[a] - shift);
    for (int a = 0; a < n; ++a) probs[a] = eta / n + (1.0 - eta) * probs[a] / total;
    return sample_index(probs, uniform01(rng));
}

} // namespace

double Schedule::alpha(std::int64_t) const {
    return alpha_const * std::pow(static_cast<double>(width_n), 2.0 * beta - 2.0);
}

double Schedule::zeta(std::int64_t k) const {
    const double n = static_cast<double>(width_n);
    return std::pow(n, 2.0 * beta - 2.0) / (1.0 + static_cast<double>(k) / n);
}

double Schedule::eta(std::int64_t k) const {
    return eta_limit(static_cast<double>(k) / static_cast<double>(width_n));
}

double Schedule::zeta_limit(double t) { return 1.0 / (1.0 + t); }

double Schedule::eta_limit(double t) {
    const double l = std::log1p(t);
    return 1.0 / (1.0 + l * l);
}

Policy exploration_policy(const Policy& actor_model_output, double eta) {
    const auto n_actions = static_cast<double>(actor_model_output.probs.cols());
    Policy g{actor_model_output.probs * (1.0 - eta)};
    g.probs.array() += eta / n_actions;
    return g;
}

void TrainerConfig::validate() const {
    if (width_n < 1) throw ConfigError("width_n", "must be at least 1");
    if (!(beta > 0.5 && beta <= 1.0)) throw ConfigError("beta", "must lie in (1/2, 1]");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T", "must be positive");
    if (snapshot_stride < 0) throw ConfigError("snapshot_stride", "must be nonnegative");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be positive");
    law.validate();
}

std::int64_t TrainerConfig::total_steps() const {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(width_n) * T + 1e-9));
}

std::int64_t TrainerConfig::stride() const {
    if (snapshot_stride > 0) return snapshot_stride;
    return std::max<std::int64_t>(1, width_n / 10);
}

TrainerState make_initial_state(const FiniteMdp& mdp, const TrainerConfig& config) {
    config.validate();
    Rng init_rng(derive_seed(config.seed, 0));
    TrainerState state;
    state.critic = init_network(config.width_n, config.beta, mdp.input_dim(), config.law, init_rng);
    state.actor = init_network(config.width_n, config.beta, mdp.input_dim(), config.law, init_rng);
    state.critic_rng.seed(derive_seed(config.seed, 1));
    state.actor_rng.seed(derive_seed(config.seed, 2));
    const std::span<const double> rho{mdp.rho0.data(), static_cast<std::size_t>(mdp.rho0.size())};
    state.critic_pair = sample_index(rho, uniform01(state.critic_rng));
    state.actor_pair = sample_index(rho, uniform01(state.actor_rng));
    return state;
}

StepContext::StepContext(const FiniteMdp& mdp)
    : mdp_(&mdp),
      dim_(mdp.input_dim()),
      input_matrix_(mdp.inputs()),
      standard_(kernel(mdp, ChainKind::Standard)),
      auxiliary_(kernel(mdp, ChainKind::Auxiliary)),
      reward_(mdp.reward_vector()) {
    inputs_.resize(static_cast<std::size_t>(input_matrix_.size()));
    for (Eigen::Index p = 0; p < input_matrix_.rows(); ++p)
        for (int j = 0; j < dim_; ++j) inputs_[static_cast<std::size_t>(p * dim_ + j)] = input_matrix_(p, j);
}

void sgd_step(TrainerState& state, StepContext& ctx, const Schedule& schedule) {
    const FiniteMdp& mdp = *ctx.mdp_;
    const int n = state.critic.width_n;
    const int d = ctx.dim_;
    const int n_actions = mdp.n_actions;
    const std::int64_t k = state.step_k;
    const double eta = schedule.eta(k);
    const double critic_rate = schedule.alpha(k) * state.critic.scale();
    const double actor_rate = schedule.zeta(k) * state.actor.scale();

    ctx.critic_sigma_.resize(static_cast<std::size_t>(n));
    ctx.actor_sigma_.resize(static_cast<std::size_t>(n) * n_actions);
    std::vector<double> logits(static_cast<std::size_t>(n_actions));
    auto actor_logits = [&](int x, double* sigma_rows) {
        for (int a = 0; a < n_actions; ++a)
            logits[a] = evaluate(state.actor, ctx.input(mdp.pair(x, a)),
                                 sigma_rows == nullptr ? nullptr : sigma_rows + static_cast<std::size_t>(a) * n);
    };

    // Critic chain: (x_k, a_k) -> x_{k+1} ~ p, a_{k+1} ~ g_k.
    const int xi_k = state.critic_pair;
    const double q_now = evaluate(state.critic, ctx.input(xi_k), ctx.critic_sigma_.data());
    const int x_next = sample_row(ctx.standard_, xi_k, state.critic_rng);
    actor_logits(x_next, nullptr);
    const int xi_next = mdp.pair(x_next, sample_action(logits, eta, state.critic_rng));
    const double q_next = evaluate(state.critic, ctx.input(xi_next), nullptr);
    const double td = ctx.reward_(xi_k) + mdp.gamma * q_next - q_now;

    // Actor chain: Q_k and f_k at (x~_k, .), then advance under p~ and g_k.
    const int xi_actor = state.actor_pair;
    const int x_actor = mdp.state_of(xi_actor);
    const int a_actor = mdp.action_of(xi_actor);
    const double q_actor = evaluate(state.critic, ctx.input(xi_actor), nullptr);
    actor_logits(x_actor, ctx.actor_sigma_.data());
    std::vector<double> f(logits);
    {
        double shift = f[0];
        for (double v : f) shift = std::max(shift, v);
        double total = 0.0;
        for (auto& v : f) total += v = std::exp(v - shift);
        for (auto& v : f) v /= total;
    }
    const int x_actor_next = sample_row(ctx.auxiliary_, xi_actor, state.actor_rng);
    actor_logits(x_actor_next, nullptr);
    const int xi_actor_next = mdp.pair(x_actor_next, sample_action(logits, eta, state.actor_rng));

    // Critic update.
    const double critic_coef = critic_rate * td;
    const double* xi = ctx.input(xi_k);
    double critic_step = 0.0;
    for (int i = 0; i < n; ++i) {
        const double sig = ctx.critic_sigma_[i];
        const double c_old = state.critic.outer[i];
        const double dc = critic_coef * sig;
        state.critic.outer[i] = c_old + dc;
        critic_step = std::max(critic_step, std::abs(dc));
        const double w_coef = critic_coef * c_old * sig * (1.0 - sig);
        double* w = state.critic.inner.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) w[j] += w_coef * xi[j];
    }

    // Actor update.
    const double actor_coef = actor_rate * q_actor;
    double actor_step = 0.0;
    std::vector<double> grad_u(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        double mean_sigma = 0.0;
        for (int a = 0; a < n_actions; ++a) mean_sigma += f[a] * ctx.actor_sigma_[static_cast<std::size_t>(a) * n + i];
        const double b_old = state.actor.outer[i];
        const double sig_taken = ctx.actor_sigma_[static_cast<std::size_t>(a_actor) * n + i];
        const double db = actor_coef * (sig_taken - mean_sigma);
        state.actor.outer[i] = b_old + db;
        actor_step = std::max(actor_step, std::abs(db));

        std::fill(grad_u.begin(), grad_u.end(), 0.0);
        for (int a = 0; a < n_actions; ++a) {
            const double sig = ctx.actor_sigma_[static_cast<std::size_t>(a) * n + i];
            const double weight = (a == a_actor ? 1.0 : 0.0) - f[a];
            const double coef = weight * sig * (1.0 - sig);
            const double* in = ctx.input(mdp.pair(x_actor, a));
            for (int j = 0; j < d; ++j) grad_u[j] += coef * in[j];
        }
        double* u = state.actor.inner.data() + static_cast<std::size_t>(i) * d;
        const double u_coef = actor_coef * b_old;
        for (int j = 0; j < d; ++j) u[j] += u_coef * grad_u[j];
    }

    state.max_critic_outer_step = std::max(state.max_critic_outer_step, critic_step);
    state.max_actor_outer_step = std::max(state.max_actor_outer_step, actor_step);
    state.critic_pair = xi_next;
    state.actor_pair = xi_actor_next;
    state.step_k = k + 1;
}

Snapshot take_snapshot(const TrainerState& state, const StepContext& ctx, const Schedule& schedule) {
    const FiniteMdp& mdp = ctx.mdp();
    Snapshot snap;
    snap.k = state.step_k;
    snap.t = static_cast<double>(state.step_k) / static_cast<double>(state.critic.width_n);
    snap.q = forward_table(state.critic, ctx.input_matrix());
    snap.p = forward_table(state.actor, ctx.input_matrix());
    const Policy f = actor_policy(snap.p, mdp.n_states, mdp.n_actions);
    snap.f = f.flat();
    snap.g = exploration_policy(f, schedule.eta(state.step_k)).flat();
    for (double c : state.critic.outer) snap.critic_outer_max = std::max(snap.critic_outer_max, std::abs(c));
    for (double b : state.actor.outer) snap.actor_outer_max = std::max(snap.actor_outer_max, std::abs(b));
    return snap;
}

std::vector<double> SnapshotSeries::times() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.t);
    return out;
}

SnapshotSeries train(const FiniteMdp& mdp, const TrainerConfig& config) {
    config.validate();
    mdp.validate();
    TrainerState state = make_initial_state(mdp, config);
    StepContext ctx(mdp);
    const Schedule schedule{config.alpha, config.width_n, config.beta};
    const std::int64_t total = config.total_steps();
    const std::int64_t stride = config.stride();

    SnapshotSeries series;
    series.beta = config.beta;
    series.width_n = config.width_n;
    series.seed = config.seed;
    series.n_states = mdp.n_states;
    series.n_actions = mdp.n_actions;
    series.records.push_back(take_snapshot(state, ctx, schedule));
    while (state.step_k < total) {
        sgd_step(state, ctx, schedule);
        if (state.step_k % stride == 0 || state.step_k == total)
            series.records.push_back(take_snapshot(state, ctx, schedule));
    }
    series.max_critic_outer_step = state.max_critic_outer_step;
    series.max_actor_outer_step = state.max_actor_outer_step;
    return series;
}

void write_snapshot_csv(const SnapshotSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "t,kind,x,a,value\n";
    out << std::setprecision(17);
    const int n_actions = series.n_actions;
    for (const auto& r : series.records) {
        const std::pair<const char*, const Vector*> kinds[] = {{"Q", &r.q}, {"P", &r.p}, {"f", &r.f}, {"g", &r.g}};
        for (const auto& [name, values] : kinds)
            for (Eigen::Index p = 0; p < values->size(); ++p)
                out << r.t << ',' << name << ',' << p / n_actions << ',' << p % n_actions << ',' << (*values)(p)
                    << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

SnapshotSeries read_snapshot_csv(const std::string& path, int n_states, int n_actions) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing SnapshotSeries file " + path);
    std::string line;
    std::getline(in, line);
    if (line != "t,kind,x,a,value") throw std::runtime_error("bad SnapshotSeries header in " + path);
    const int n_pairs = n_states * n_actions;
    std::map<double, Snapshot> by_time;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string t_s, kind, x_s, a_s, v_s;
        std::getline(row, t_s, ',');
        std::getline(row, kind, ',');
        std::getline(row, x_s, ',');
        std::getline(row, a_s, ',');
        std::getline(row, v_s, ',');
        const double t = std::stod(t_s);
        auto [it, inserted] = by_time.try_emplace(t);
        Snapshot& snap = it->second;
        if (inserted) {
            snap.t = t;
            snap.q = snap.p = snap.f = snap.g = Vector::Zero(n_pairs);
        }
        const int p = std::stoi(x_s) * n_actions + std::stoi(a_s);
        if (p < 0 || p >= n_pairs) throw std::runtime_error("pair index out of range in " + path);
        const double v = std::stod(v_s);
        if (kind == "Q") snap.q(p) = v;
        else if (kind == "P") snap.p(p) = v;
        else if (kind == "f") snap.f(p) = v;
        else if (kind == "g") snap.g(p) = v;
        else throw std::runtime_error("unknown kind '" + kind + "' in " + path);
    }
    SnapshotSeries series;
    series.n_states = n_states;
    series.n_actions = n_actions;
    for (auto& [t, snap] : by_time) series.records.push_back(std::move(snap));
    return series;
}

} // namespace acscale
