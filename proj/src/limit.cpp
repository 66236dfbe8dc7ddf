#include "acscale/limit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "acscale/kernels.hpp"
#include "acscale/softmax_tensor.hpp"
#include "acscale/trainer.hpp"

namespace acscale {

Matrix KernelTables::contract_c(const Vector& kappa) const {
    Matrix out = Matrix::Zero(n_pairs, n_pairs);
    for (int i = 0; i < n_pairs; ++i)
        for (int j = 0; j < n_pairs; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n_pairs; ++k) acc += kappa(k) * c(i, j, k);
            out(i, j) = acc;
        }
    return out;
}

KernelTables build_kernels(const FiniteMdp& mdp, const InitLaw& law, std::int64_t mc_samples, std::uint64_t mc_seed,
                           std::int64_t particle_count) {
    if (mc_samples < 10000) throw ConfigError("mc_samples", "must be at least 10000");
    if (particle_count < 0) throw ConfigError("particle_count", "must be nonnegative");
    law.validate();
    const Matrix inputs = mdp.inputs();
    const auto sums = kernels::accumulate_tables(inputs, law, mc_samples, mc_seed);
    const int n = mdp.n_pairs();
    const double count = static_cast<double>(mc_samples);

    KernelTables out;
    out.n_pairs = n;
    out.law = law;
    out.mc_samples = mc_samples;
    out.mc_seed = mc_seed;
    out.a.resize(n, n);
    out.a_stderr.resize(n, n);
    out.init_cov.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::size_t ij = static_cast<std::size_t>(i) * n + j;
            const double mean = sums.a_sum[ij] / count;
            const double var = std::max(0.0, (sums.a_sumsq[ij] - count * mean * mean) / (count - 1.0));
            out.a(i, j) = mean;
            out.a_stderr(i, j) = std::sqrt(var / count);
            out.init_cov(i, j) = sums.g_sum[ij] / count;
        }
    out.a = 0.5 * (out.a + out.a.transpose()).eval();
    out.init_cov = 0.5 * (out.init_cov + out.init_cov.transpose()).eval();
    out.c_table.resize(sums.c_sum.size());
    for (std::size_t i = 0; i < sums.c_sum.size(); ++i) out.c_table[i] = sums.c_sum[i] / count;
    out.particles = kernels::draw_particles(mdp.input_dim(), law, particle_count, mc_seed);
    return out;
}

namespace {

constexpr char kCacheMagic[8] = {'A', 'C', 'S', 'K', 'T', 'B', 'L', '1'};

std::uint64_t mdp_hash(const FiniteMdp& mdp) {
    return fnv1a(to_json(mdp).dump());
}

void write_matrix(std::ofstream& os, const Matrix& m) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    os.write(reinterpret_cast<const char*>(dims), sizeof dims);
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

bool read_matrix(std::ifstream& is, Matrix& m) {
    std::int64_t dims[2] = {0, 0};
    if (!is.read(reinterpret_cast<char*>(dims), sizeof dims)) return false;
    if (dims[0] < 0 || dims[1] < 0) return false;
    m.resize(dims[0], dims[1]);
    return static_cast<bool>(
        is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size())));
}

} // namespace

void save_kernels(const KernelTables& tables, const FiniteMdp& mdp, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write kernel cache " + path);
    os.write(kCacheMagic, sizeof kCacheMagic);
    const std::uint64_t key[3] = {mdp_hash(mdp), static_cast<std::uint64_t>(tables.mc_samples), tables.mc_seed};
    os.write(reinterpret_cast<const char*>(key), sizeof key);
    const double law[2] = {tables.law.std, tables.law.trunc_bound};
    os.write(reinterpret_cast<const char*>(law), sizeof law);
    write_matrix(os, tables.a);
    write_matrix(os, tables.a_stderr);
    write_matrix(os, tables.init_cov);
    write_matrix(os, tables.particles);
    const std::int64_t nc = static_cast<std::int64_t>(tables.c_table.size());
    os.write(reinterpret_cast<const char*>(&nc), sizeof nc);
    os.write(reinterpret_cast<const char*>(tables.c_table.data()), static_cast<std::streamsize>(sizeof(double) * nc));
}

std::optional<KernelTables> load_kernels(const FiniteMdp& mdp, const InitLaw& law, std::int64_t mc_samples,
                                         std::uint64_t mc_seed, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    char magic[8] = {};
    std::uint64_t key[3] = {};
    double stored_law[2] = {};
    if (!is.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kCacheMagic)) return std::nullopt;
    if (!is.read(reinterpret_cast<char*>(key), sizeof key)) return std::nullopt;
    if (!is.read(reinterpret_cast<char*>(stored_law), sizeof stored_law)) return std::nullopt;
    if (key[0] != mdp_hash(mdp) || key[1] != static_cast<std::uint64_t>(mc_samples) || key[2] != mc_seed ||
        stored_law[0] != law.std || stored_law[1] != law.trunc_bound)
        return std::nullopt;
    KernelTables out;
    out.n_pairs = mdp.n_pairs();
    out.law = law;
    out.mc_samples = mc_samples;
    out.mc_seed = mc_seed;
    if (!read_matrix(is, out.a) || !read_matrix(is, out.a_stderr) || !read_matrix(is, out.init_cov) ||
        !read_matrix(is, out.particles))
        return std::nullopt;
    std::int64_t nc = 0;
    if (!is.read(reinterpret_cast<char*>(&nc), sizeof nc) || nc < 0) return std::nullopt;
    out.c_table.resize(static_cast<std::size_t>(nc));
    if (!is.read(reinterpret_cast<char*>(out.c_table.data()), static_cast<std::streamsize>(sizeof(double) * nc)))
        return std::nullopt;
    const auto n = static_cast<std::size_t>(out.n_pairs);
    if (out.a.rows() != out.n_pairs || out.c_table.size() != n * n * n) return std::nullopt;
    return out;
}

int expansion_order(double beta) {
    if (!(beta > 0.5) || !(beta < 1.0)) throw ConfigError("beta", "the expansion needs beta in (1/2, 1)");
    // Smallest n with beta <= (2n+1)/(2n+2), i.e. n >= (2 beta - 1) / (2 - 2 beta).
    const double bound = (2.0 * beta - 1.0) / (2.0 - 2.0 * beta);
    int n = std::max(1, static_cast<int>(std::ceil(bound - 1e-12)));
    while (beta > (2.0 * n + 1.0) / (2.0 * n + 2.0) + 1e-12) ++n;
    while (n > 1 && beta <= (2.0 * n - 1.0) / (2.0 * n) + 1e-12) --n;
    return n;
}

bool at_bracket_end(double beta) {
    const int n = expansion_order(beta);
    return std::abs(beta - (2.0 * n + 1.0) / (2.0 * n + 2.0)) <= 1e-12;
}

void LimitConfig::validate() const {
    if (!(T >= 0.0) || !std::isfinite(T)) throw ConfigError("T", "must be finite and nonnegative");
    if (!(h_ode > 0.0) || !std::isfinite(h_ode)) throw ConfigError("h_ode", "must be positive");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha", "must be positive");
    if (order < 0) throw ConfigError("order", "must be nonnegative");
    if (record_stride < 1) throw ConfigError("record_stride", "must be at least 1");
    if (order > 0) {
        const int n = expansion_order(beta);
        if (order > n) throw std::domain_error("order exceeds expansion bracket");
    } else if (!(beta > 0.5) || !(beta <= 1.0)) {
        throw ConfigError("beta", "must lie in (1/2, 1]");
    }
}

std::vector<double> LimitSolution::times() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& pt : points) out.push_back(pt.t);
    return out;
}

namespace {

template <typename Getter>
Vector interpolate(const LimitSolution& sol, double t, Getter get) {
    if (sol.points.empty()) throw std::logic_error("empty LimitSolution");
    if (sol.points.size() == 1 || t <= sol.points.front().t) return get(sol.points.front());
    if (t >= sol.points.back().t) return get(sol.points.back());
    auto it = std::upper_bound(sol.points.begin(), sol.points.end(), t,
                               [](double v, const LimitPoint& pt) { return v < pt.t; });
    const LimitPoint& hi = *it;
    const LimitPoint& lo = *(it - 1);
    const double span = hi.t - lo.t;
    const double w = span > 0.0 ? (t - lo.t) / span : 0.0;
    if (w < 1e-9) return get(lo);
    if (w > 1.0 - 1e-9) return get(hi);
    return (1.0 - w) * get(lo) + w * get(hi);
}

void check_order(const LimitSolution& sol, int m) {
    if (m < 0 || m > sol.order) throw std::out_of_range("order " + std::to_string(m) + " not integrated");
}

} // namespace

Vector LimitSolution::q(int m, double t) const {
    check_order(*this, m);
    return interpolate(*this, t, [m](const LimitPoint& pt) { return pt.q[m]; });
}

Vector LimitSolution::p(int m, double t) const {
    check_order(*this, m);
    return interpolate(*this, t, [m](const LimitPoint& pt) { return pt.p[m]; });
}

double LimitSolution::order_scale(int m, int width_n) const {
    const double n = static_cast<double>(width_n);
    if (m < order_n) return std::pow(n, m * (beta - 1.0));
    return std::pow(n, 0.5 - beta);
}

namespace {

// Series quantities derived from Q and P coefficients at one time.
struct Derived {
    std::vector<Vector> f, g, pi, sigma, wv, wa;
};

class System {
public:
    System(const FiniteMdp& mdp, const KernelTables& kernels, const LimitConfig& config)
        : mdp_(mdp), kernels_(kernels), cfg_(config), inputs_(mdp.inputs()) {
        cfg_.validate();
        if (kernels.n_pairs != mdp.n_pairs()) throw ConfigError("kernels", "table size does not match the MDP");
        P_ = mdp.n_pairs();
        M_ = cfg_.order;
        n_ = M_ > 0 ? expansion_order(cfg_.beta) : (cfg_.beta < 1.0 ? expansion_order(cfg_.beta) : 1);
        terminal_ = M_ > 0 && M_ == n_;
        linear_terminal_ = terminal_ && !at_bracket_end(cfg_.beta);
        full_order_ = linear_terminal_ ? M_ - 1 : M_;
        measure_order_ = full_order_;
        particles_ = measure_order_ >= 2 || (measure_order_ >= 1 && cfg_.force_particles);
        tables_measure_ = measure_order_ >= 1 && !particles_;
        if (particles_ && kernels.particles.rows() == 0)
            throw ConfigError("particle_count", "order >= 2 measure terms need particles in the kernel tables");
        np_ = particles_ ? kernels.particles.rows() : 0;
        row_ = 1 + mdp.input_dim();
        std_kernel_ = kernel(mdp, ChainKind::Standard);
        aux_kernel_ = kernel(mdp, ChainKind::Auxiliary);
        reward_ = mdp.reward_vector();
        if (!terminal_ && (cfg_.q_ic || cfg_.p_ic))
            throw ConfigError("q_ic", "only the terminal expansion order takes initial conditions");
    }

    int n() const { return n_; }
    bool linear_terminal() const { return linear_terminal_; }

    Eigen::Index size() const { return particles_offset(true) + jet_size(); }

    Vector initial_state(Vector& q_ic, Vector& p_ic) const {
        Vector y = Vector::Zero(size());
        q_ic = Vector::Zero(P_);
        p_ic = Vector::Zero(P_);
        if (terminal_) {
            if (cfg_.random_ic_seed) std::tie(q_ic, p_ic) = sample_terminal_ics(kernels_, *cfg_.random_ic_seed);
            if (cfg_.q_ic) q_ic = *cfg_.q_ic;
            if (cfg_.p_ic) p_ic = *cfg_.p_ic;
            if (q_ic.size() != P_) throw ConfigError("q_ic", "length must equal the number of pairs");
            if (p_ic.size() != P_) throw ConfigError("p_ic", "length must equal the number of pairs");
            y.segment(q_off(M_), P_) = q_ic;
            y.segment(p_off(M_), P_) = p_ic;
        }
        return y;
    }

    void rhs(double t, const Vector& y, Vector& dy) const {
        dy.setZero(y.size());
        std::vector<Vector> q, p;
        unpack(y, q, p);
        const Derived full = derive(t, q, p, full_order_);
        std::vector<Matrix> av, aa;
        measure_kernels(y, full, av, aa, &dy);
        for (int m = 0; m <= full_order_; ++m) {
            Vector dq = Vector::Zero(P_), dp = Vector::Zero(P_);
            for (int j = 0; j <= std::min(m, measure_order_); ++j) {
                dq.noalias() += av[j] * full.wv[m - j];
                dp.noalias() += aa[j] * full.wa[m - j];
            }
            dy.segment(q_off(m), P_) = dq;
            dy.segment(p_off(m), P_) = dp;
        }
        if (linear_terminal_) {
            const Derived lin = derive_masked(t, q, p);
            dy.segment(q_off(M_), P_).noalias() = kernels_.a * lin.wv[M_];
            dy.segment(p_off(M_), P_).noalias() = kernels_.a * lin.wa[M_];
        }
    }

    LimitPoint record(double t, const Vector& y) const {
        std::vector<Vector> q, p;
        unpack(y, q, p);
        Derived full = derive(t, q, p, full_order_);
        std::vector<Matrix> av, aa;
        measure_kernels(y, full, av, aa, nullptr);
        LimitPoint pt;
        pt.t = t;
        pt.q = q;
        pt.p = p;
        pt.f = full.f;
        pt.g = full.g;
        pt.pi = full.pi;
        pt.sigma = full.sigma;
        if (linear_terminal_) {
            const Derived lin = derive_masked(t, q, p);
            pt.f.push_back(lin.f[M_]);
            pt.g.push_back(lin.g[M_]);
            pt.pi.push_back(lin.pi[M_]);
            pt.sigma.push_back(lin.sigma[M_]);
            av.push_back(Matrix::Zero(P_, P_));
            aa.push_back(Matrix::Zero(P_, P_));
        }
        pt.v_kernel = std::move(av);
        pt.mu_kernel = std::move(aa);
        return pt;
    }

private:
    Eigen::Index q_off(int m) const { return static_cast<Eigen::Index>(m) * P_; }
    Eigen::Index p_off(int m) const { return static_cast<Eigen::Index>(M_ + 1 + m) * P_; }
    Eigen::Index kappa_off(bool critic) const { return 2 * static_cast<Eigen::Index>(M_ + 1) * P_ + (critic ? 0 : P_); }
    Eigen::Index jet_size() const { return particles_ ? static_cast<Eigen::Index>(measure_order_) * np_ * row_ : 0; }
    Eigen::Index particles_offset(bool critic) const {
        const Eigen::Index base = 2 * static_cast<Eigen::Index>(M_ + 1) * P_ + (tables_measure_ ? 2 * P_ : 0);
        return critic ? base : base + jet_size();
    }

    void unpack(const Vector& y, std::vector<Vector>& q, std::vector<Vector>& p) const {
        q.resize(static_cast<std::size_t>(M_) + 1);
        p.resize(static_cast<std::size_t>(M_) + 1);
        for (int m = 0; m <= M_; ++m) {
            q[m] = y.segment(q_off(m), P_);
            p[m] = y.segment(p_off(m), P_);
        }
    }

    // Orders 0 and M_ kept, intermediate coefficients zeroed: the linearized terminal order.
    Derived derive_masked(double t, const std::vector<Vector>& q, const std::vector<Vector>& p) const {
        std::vector<Vector> qm(q.size(), Vector::Zero(P_)), pm(p.size(), Vector::Zero(P_));
        qm[0] = q[0];
        pm[0] = p[0];
        qm[M_] = q[M_];
        pm[M_] = p[M_];
        return derive(t, qm, pm, M_);
    }

    Derived derive(double t, const std::vector<Vector>& q, const std::vector<Vector>& p, int K) const {
        const int S = mdp_.n_states;
        const int A = mdp_.n_actions;
        const auto Ks = static_cast<std::size_t>(K) + 1;
        const double eta = Schedule::eta_limit(t);
        const double zeta = Schedule::zeta_limit(t);
        Derived d;
        d.f.assign(Ks, Vector::Zero(P_));
        std::vector<Vector> logits(Ks, Vector::Zero(A));
        for (int x = 0; x < S; ++x) {
            for (std::size_t m = 0; m < Ks; ++m) logits[m] = p[m].segment(x * A, A);
            const auto fs = softmax_series(logits, K);
            for (std::size_t m = 0; m < Ks; ++m) d.f[m].segment(x * A, A) = fs[m];
        }
        d.g.resize(Ks);
        d.g[0] = (eta / A + (1.0 - eta) * d.f[0].array()).matrix();
        for (std::size_t m = 1; m < Ks; ++m) d.g[m] = (1.0 - eta) * d.f[m];

        const auto chain_series = [&](const Matrix& state_kernel) {
            std::vector<Matrix> out(Ks);
            for (std::size_t m = 0; m < Ks; ++m) out[m] = pair_chain(state_kernel, d.g[m], A);
            return out;
        };
        const std::vector<Matrix> ms = chain_series(std_kernel_);
        const std::vector<Matrix> ps = chain_series(aux_kernel_);
        d.pi = stationary_series(ms);
        d.sigma = stationary_series(ps);

        // Critic weights alpha * pi (.) TD with TD = r + gamma M Q - Q, all as series.
        const double gamma = mdp_.gamma;
        std::vector<Vector> td(Ks);
        for (std::size_t m = 0; m < Ks; ++m) {
            td[m] = -q[m];
            if (m == 0) td[m] += reward_;
            for (std::size_t j = 0; j <= m; ++j) td[m].noalias() += gamma * (ms[j] * q[m - j]);
        }
        d.wv.assign(Ks, Vector::Zero(P_));
        d.wa.assign(Ks, Vector::Zero(P_));
        for (std::size_t m = 0; m < Ks; ++m)
            for (std::size_t j = 0; j <= m; ++j) {
                d.wv[m].array() += cfg_.alpha * d.pi[j].array() * td[m - j].array();
                d.wa[m].array() += d.sigma[j].array() * q[m - j].array();
            }
        // Actor weights zeta * (sigma Q - f * S) with S(x) = sum_a (sigma Q)(x, a).
        std::vector<Vector> state_sums(Ks, Vector::Zero(S));
        for (std::size_t m = 0; m < Ks; ++m)
            for (int x = 0; x < S; ++x) state_sums[m](x) = d.wa[m].segment(x * A, A).sum();
        for (std::size_t m = 0; m < Ks; ++m) {
            Vector w = d.wa[m];
            for (std::size_t j = 0; j <= m; ++j)
                for (int x = 0; x < S; ++x) w.segment(x * A, A) -= d.f[j].segment(x * A, A) * state_sums[m - j](x);
            d.wa[m] = zeta * w;
        }
        return d;
    }

    // pi_0 solves pi = pi M_0; pi_m (I - M_0 + W_{pi_0}) = sum_{j<m} pi_j M_{m-j}.
    std::vector<Vector> stationary_series(const std::vector<Matrix>& ms) const {
        std::vector<Vector> out(ms.size());
        out[0] = stationary_distribution(ms[0]);
        if (ms.size() == 1) return out;
        Matrix system = Matrix::Identity(P_, P_) - ms[0].transpose();
        system += out[0] * Vector::Ones(P_).transpose();
        const Eigen::PartialPivLU<Matrix> lu(system);
        for (std::size_t m = 1; m < ms.size(); ++m) {
            Vector rhs = Vector::Zero(P_);
            for (std::size_t j = 0; j < m; ++j) rhs.noalias() += ms[m - j].transpose() * out[j];
            out[m] = lu.solve(rhs);
        }
        return out;
    }

    void measure_kernels(const Vector& y, const Derived& d, std::vector<Matrix>& av, std::vector<Matrix>& aa,
                         Vector* dy) const {
        av.assign(1, kernels_.a);
        aa.assign(1, kernels_.a);
        if (measure_order_ == 0) return;
        if (tables_measure_) {
            av.push_back(kernels_.contract_c(y.segment(kappa_off(true), P_)));
            aa.push_back(kernels_.contract_c(y.segment(kappa_off(false), P_)));
            if (dy != nullptr) {
                dy->segment(kappa_off(true), P_) = d.wv[0];
                dy->segment(kappa_off(false), P_) = d.wa[0];
            }
            return;
        }
        const auto run = [&](bool critic, std::vector<Matrix>& out, const std::vector<Vector>& weights) {
            const Eigen::Index off = particles_offset(critic);
            kernels::ParticleJets jets{&kernels_.particles,
                                       {y.data() + off, static_cast<std::size_t>(jet_size())}, measure_order_};
            auto drift = kernels::particle_drift(inputs_, jets, {weights.data(), static_cast<std::size_t>(measure_order_)});
            for (auto& k : drift.kernel) out.push_back(std::move(k));
            if (dy != nullptr)
                std::copy(drift.velocity.begin(), drift.velocity.end(), dy->data() + off);
        };
        run(true, av, d.wv);
        run(false, aa, d.wa);
    }

    const FiniteMdp& mdp_;
    const KernelTables& kernels_;
    LimitConfig cfg_;
    Matrix inputs_;
    int P_ = 0, M_ = 0, n_ = 1;
    bool terminal_ = false, linear_terminal_ = false;
    int full_order_ = 0, measure_order_ = 0;
    bool particles_ = false, tables_measure_ = false;
    Eigen::Index np_ = 0, row_ = 0;
    Matrix std_kernel_, aux_kernel_;
    Vector reward_;
};

} // namespace

LimitSolution integrate_limit(const FiniteMdp& mdp, const KernelTables& kernels, const LimitConfig& config) {
    const System sys(mdp, kernels, config);
    LimitSolution sol;
    sol.beta = config.beta;
    sol.alpha = config.alpha;
    sol.T = config.T;
    sol.h_ode = config.h_ode;
    sol.order = config.order;
    sol.order_n = sys.n();
    sol.terminal_linearized = sys.linear_terminal();
    sol.random_ic_seed = config.random_ic_seed;

    Vector y = sys.initial_state(sol.q_ic, sol.p_ic);
    const auto steps = static_cast<std::int64_t>(std::ceil(config.T / config.h_ode - 1e-9));
    const double h = steps > 0 ? config.T / static_cast<double>(steps) : 0.0;
    sol.points.push_back(sys.record(0.0, y));
    Vector k1, k2, k3, k4, tmp;
    for (std::int64_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        sys.rhs(t, y, k1);
        tmp = y + 0.5 * h * k1;
        sys.rhs(t + 0.5 * h, tmp, k2);
        tmp = y + 0.5 * h * k2;
        sys.rhs(t + 0.5 * h, tmp, k3);
        tmp = y + h * k3;
        sys.rhs(t + h, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const std::int64_t done = k + 1;
        if (done % config.record_stride == 0 || done == steps)
            sol.points.push_back(sys.record(done == steps ? config.T : static_cast<double>(done) * h, y));
    }
    return sol;
}

LimitSolution integrate_order0(const FiniteMdp& mdp, const KernelTables& kernels, double T, double h_ode,
                               double alpha) {
    LimitConfig cfg;
    cfg.T = T;
    cfg.h_ode = h_ode;
    cfg.alpha = alpha;
    cfg.order = 0;
    cfg.beta = 0.75;
    return integrate_limit(mdp, kernels, cfg);
}

LimitSolution integrate_correction(int m, const LimitSolution& lower, const FiniteMdp& mdp,
                                   const KernelTables& kernels, const LimitConfig& base) {
    if (m < 1) throw ConfigError("order", "corrections start at order 1");
    if (lower.order != m - 1) throw ConfigError("order", "lower solution must hold orders 0..m-1");
    if (m > expansion_order(base.beta)) throw std::domain_error("order exceeds expansion bracket");
    LimitConfig cfg = base;
    cfg.order = m;
    cfg.T = lower.T;
    cfg.h_ode = lower.h_ode;
    cfg.alpha = lower.alpha;
    return integrate_limit(mdp, kernels, cfg);
}

std::pair<Vector, Vector> sample_terminal_ics(const KernelTables& kernels, std::uint64_t seed) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(kernels.init_cov);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix factor = eig.eigenvectors() * root.asDiagonal();
    Rng rng(derive_seed(seed, 0));
    const auto draw = [&] {
        Vector z(kernels.n_pairs);
        for (int i = 0; i < kernels.n_pairs; ++i) z(i) = standard_normal(rng);
        return Vector(factor * z);
    };
    Vector q = draw();
    Vector p = draw();
    return {q, p};
}

NetworkPrediction predict_network(const LimitSolution& solution, int width_n, double t,
                                  std::span<const LimitSolution> resamples) {
    if (width_n < 1) throw ConfigError("width_n", "must be at least 1");
    NetworkPrediction out;
    out.q = Vector::Zero(solution.q(0, t).size());
    out.p = out.q;
    for (int m = 0; m <= solution.order; ++m) {
        const double s = solution.order_scale(m, width_n);
        out.q += s * solution.q(m, t);
        out.p += s * solution.p(m, t);
    }
    out.q_std = Vector::Zero(out.q.size());
    out.p_std = Vector::Zero(out.p.size());
    const int n = solution.order_n;
    if (resamples.size() >= 2 && solution.order == n) {
        const double s = solution.order_scale(n, width_n);
        const auto sample_std = [&](bool critic) {
            Vector mean = Vector::Zero(out.q.size());
            Vector sq = Vector::Zero(out.q.size());
            for (const auto& r : resamples) {
                const Vector v = critic ? r.q(n, t) : r.p(n, t);
                mean += v;
                sq += v.cwiseProduct(v);
            }
            const double k = static_cast<double>(resamples.size());
            mean /= k;
            const Vector var = ((sq - k * mean.cwiseProduct(mean)) / (k - 1.0)).cwiseMax(0.0);
            return Vector(s * var.cwiseSqrt());
        };
        out.q_std = sample_std(true);
        out.p_std = sample_std(false);
    }
    return out;
}

std::vector<LimitSolution> resample_terminal(const FiniteMdp& mdp, const KernelTables& kernels,
                                             const LimitConfig& config, int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("resamples", "must be positive");
    std::vector<LimitSolution> out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
        LimitConfig cfg = config;
        cfg.q_ic.reset();
        cfg.p_ic.reset();
        cfg.random_ic_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        out[static_cast<std::size_t>(i)] = integrate_limit(mdp, kernels, cfg);
    }
    return out;
}

void write_limit_csv(const LimitSolution& solution, const FiniteMdp& mdp, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "t,order,kind,x,a,value\n" << std::setprecision(17);
    const int A = mdp.n_actions;
    for (const auto& pt : solution.points) {
        const std::pair<const char*, const std::vector<Vector>*> kinds[] = {
            {"Q", &pt.q}, {"P", &pt.p}, {"f", &pt.f}, {"g", &pt.g}, {"pi", &pt.pi}, {"sigma", &pt.sigma}};
        for (int m = 0; m <= solution.order; ++m)
            for (const auto& [name, series] : kinds) {
                const Vector& v = (*series)[m];
                for (Eigen::Index i = 0; i < v.size(); ++i)
                    os << pt.t << ',' << m << ',' << name << ',' << i / A << ',' << i % A << ',' << v(i) << '\n';
            }
    }
}

nlohmann::json solution_meta(const LimitSolution& solution) {
    nlohmann::json meta{{"beta", solution.beta},       {"alpha", solution.alpha}, {"T", solution.T},
                        {"h_ode", solution.h_ode},     {"order", solution.order}, {"order_n", solution.order_n},
                        {"terminal_linearized", solution.terminal_linearized}};
    meta["random_ic_seed"] = solution.random_ic_seed ? nlohmann::json(*solution.random_ic_seed) : nlohmann::json();
    return meta;
}

LimitSolution read_limit_csv(const std::string& path, const nlohmann::json& meta, int n_actions) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing LimitSolution file " + path);
    LimitSolution sol;
    sol.beta = meta.at("beta").get<double>();
    sol.alpha = meta.value("alpha", 1.0);
    sol.T = meta.at("T").get<double>();
    sol.h_ode = meta.value("h_ode", 0.01);
    sol.order = meta.at("order").get<int>();
    sol.order_n = meta.value("order_n", 1);
    sol.terminal_linearized = meta.value("terminal_linearized", false);
    if (meta.contains("random_ic_seed") && !meta["random_ic_seed"].is_null())
        sol.random_ic_seed = meta["random_ic_seed"].get<std::uint64_t>();

    std::string line;
    std::getline(is, line);
    if (line != "t,order,kind,x,a,value") throw std::runtime_error("unexpected header in " + path);
    // Rows arrive grouped by t; collect (kind, order) -> entries per time.
    std::map<std::string, int> kind_index{{"Q", 0}, {"P", 1}, {"f", 2}, {"g", 3}, {"pi", 4}, {"sigma", 5}};
    std::vector<std::vector<std::vector<std::pair<int, double>>>> current;
    double current_t = std::numeric_limits<double>::quiet_NaN();
    int max_pair = -1;
    const auto flush = [&] {
        if (current.empty()) return;
        LimitPoint pt;
        pt.t = current_t;
        std::vector<Vector>* dest[] = {&pt.q, &pt.p, &pt.f, &pt.g, &pt.pi, &pt.sigma};
        for (int k = 0; k < 6; ++k) {
            dest[k]->assign(static_cast<std::size_t>(sol.order) + 1, Vector::Zero(max_pair + 1));
            for (int m = 0; m <= sol.order; ++m)
                for (const auto& [i, v] : current[k][m]) (*dest[k])[m](i) = v;
        }
        sol.points.push_back(std::move(pt));
        current.clear();
    };
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field[6];
        for (auto& f : field) std::getline(ss, f, ',');
        const double t = std::stod(field[0]);
        if (!(t == current_t)) {
            flush();
            current_t = t;
            current.assign(6, std::vector<std::vector<std::pair<int, double>>>(static_cast<std::size_t>(sol.order) + 1));
        }
        const int m = std::stoi(field[1]);
        const auto kind = kind_index.find(field[2]);
        if (kind == kind_index.end() || m < 0 || m > sol.order) throw std::runtime_error("bad row in " + path);
        const int pair = std::stoi(field[3]) * n_actions + std::stoi(field[4]);
        max_pair = std::max(max_pair, pair);
        current[kind->second][m].emplace_back(pair, std::stod(field[5]));
    }
    flush();
    return sol;
}

} // namespace acscale
