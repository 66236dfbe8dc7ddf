#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "acscale/limit.hpp"
#include "acscale/mdp.hpp"

#include "../support/oracles.hpp"

using namespace acscale;

namespace {

const FiniteMdp& forest() {
    static const FiniteMdp mdp = build_forest();
    return mdp;
}

const KernelTables& tables() {
    static const KernelTables k = build_kernels(forest(), InitLaw{}, 50000, 0, 256);
    return k;
}

FiniteMdp one_action() {
    FiniteMdp mdp;
    mdp.n_states = 2;
    mdp.n_actions = 1;
    mdp.reward = Matrix(2, 1);
    mdp.reward << 0.5, -0.2;
    mdp.transition = Matrix(2, 2);
    mdp.transition << 0.3, 0.7, 0.6, 0.4;
    mdp.rho0 = Vector::Constant(2, 0.5);
    set_default_embedding(mdp);
    return mdp;
}

} // namespace

TEST_CASE("expansion order brackets") {
    CHECK(expansion_order(0.6) == 1);
    CHECK(expansion_order(0.75) == 1);
    CHECK(expansion_order(0.76) == 2);
    CHECK(expansion_order(0.8) == 2);
    CHECK(expansion_order(5.0 / 6.0) == 2);
    CHECK(expansion_order(0.85) == 3);
    CHECK(at_bracket_end(0.75));
    CHECK_FALSE(at_bracket_end(0.8));
    CHECK_THROWS_AS(expansion_order(0.5), ConfigError);
    CHECK_THROWS_AS(expansion_order(1.0), ConfigError);

    LimitConfig cfg;
    cfg.beta = 0.75;
    cfg.order = 2;
    CHECK_THROWS_WITH_AS(integrate_limit(forest(), tables(), cfg), "order exceeds expansion bracket",
                         std::domain_error);
}

TEST_CASE("initial point and degenerate dynamics") {
    SUBCASE("T = 0") {
        const LimitSolution s = integrate_order0(forest(), tables(), 0.0);
        REQUIRE(s.points.size() == 1);
        CHECK(s.points[0].q[0].cwiseAbs().maxCoeff() == 0.0);
        CHECK((s.points[0].f[0].array() - 0.5).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("zero reward keeps everything at rest") {
        FiniteMdp mdp = build_forest();
        mdp.reward.setZero();
        const LimitSolution s = integrate_order0(mdp, tables(), 2.0);
        for (const auto& pt : s.points) {
            CHECK(pt.q[0].cwiseAbs().maxCoeff() == 0.0);
            CHECK(pt.p[0].cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SUBCASE("single action: the policy cannot move") {
        const FiniteMdp mdp = one_action();
        const KernelTables k = build_kernels(mdp, InitLaw{}, 20000, 0, 0);
        LimitConfig cfg;
        cfg.T = 2.0;
        cfg.beta = 0.8;
        cfg.order = 1;
        const LimitSolution s = integrate_limit(mdp, k, cfg);
        for (const auto& pt : s.points) {
            CHECK((pt.f[0].array() - 1.0).abs().maxCoeff() < 1e-15);
            CHECK(pt.f[1].cwiseAbs().maxCoeff() < 1e-15);
        }
    }
}

TEST_CASE("order-0 critic tracks the value of the current policy") {
    // Q^(0) relaxes towards V^{f_t}: the gap shrinks over time.
    const LimitSolution s = integrate_order0(forest(), tables(), 20.0);
    auto gap = [&](const LimitPoint& pt) {
        Policy f{Matrix(3, 2)};
        for (int x = 0; x < 3; ++x)
            for (int a = 0; a < 2; ++a) f.probs(x, a) = pt.f[0](x * 2 + a);
        return (pt.q[0] - value_function(forest(), f)).cwiseAbs().maxCoeff();
    };
    CHECK(gap(s.points.back()) < gap(s.points.front()));
}

TEST_CASE("RK4 step halving") {
    LimitConfig cfg;
    cfg.T = 2.0;
    cfg.beta = 0.75;
    cfg.order = 1;
    cfg.random_ic_seed = 5;
    cfg.h_ode = 0.02;
    const LimitSolution coarse = integrate_limit(forest(), tables(), cfg);
    cfg.h_ode = 0.01;
    const LimitSolution fine = integrate_limit(forest(), tables(), cfg);
    for (int m = 0; m <= 1; ++m) {
        CHECK((coarse.q(m, 2.0) - fine.q(m, 2.0)).cwiseAbs().maxCoeff() < 1e-7);
        CHECK((coarse.p(m, 2.0) - fine.p(m, 2.0)).cwiseAbs().maxCoeff() < 1e-7);
    }
    const LimitSolution again = integrate_limit(forest(), tables(), cfg);
    CHECK(again.points.back().q[1] == fine.points.back().q[1]);
}

TEST_CASE("first-order stationary law against finite differences") {
    LimitConfig cfg;
    cfg.T = 1.0;
    cfg.beta = 0.75;
    cfg.order = 1;
    cfg.random_ic_seed = 3;
    const LimitSolution s = integrate_limit(forest(), tables(), cfg);
    const Matrix K = kernel(forest(), ChainKind::Standard);
    for (std::size_t i = 0; i < s.points.size(); i += 25) {
        const auto& pt = s.points[i];
        const Matrix P0 = pair_chain(K, pt.g[0], 2), P1 = pair_chain(K, pt.g[1], 2);
        const double e = 1e-6;
        const Vector fd = (oracle::power_iteration(P0 + e * P1) - oracle::power_iteration(P0 - e * P1)) / (2 * e);
        CHECK((fd - pt.pi[1]).cwiseAbs().maxCoeff() < 1e-6);
        CHECK(std::abs(pt.pi[1].sum()) < 1e-12);
    }
}

TEST_CASE("terminal-order initial conditions") {
    LimitConfig cfg;
    cfg.T = 0.5;
    cfg.beta = 0.8;
    cfg.order = 1;  // below n(0.8) = 2: deterministic, zero IC
    const LimitSolution s = integrate_limit(forest(), tables(), cfg);
    CHECK_FALSE(s.terminal_linearized);
    CHECK(s.points[0].q[1].cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.points[0].p[1].cwiseAbs().maxCoeff() == 0.0);

    const auto [g, h] = sample_terminal_ics(tables(), 9);
    const auto [g2, h2] = sample_terminal_ics(tables(), 9);
    CHECK(g == g2);
    CHECK(h == h2);
    CHECK((g - h).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("order scales and network prediction") {
    LimitConfig cfg;
    cfg.T = 1.0;
    cfg.beta = 0.75;
    cfg.order = 1;
    cfg.random_ic_seed = 1;
    const LimitSolution s = integrate_limit(forest(), tables(), cfg);
    CHECK(s.order_scale(0, 10000) == 1.0);
    CHECK(s.order_scale(1, 10000) == doctest::Approx(0.1).epsilon(1e-12));
    const NetworkPrediction pred = predict_network(s, 10000, 1.0);
    CHECK((pred.q - (s.q(0, 1.0) + 0.1 * s.q(1, 1.0))).cwiseAbs().maxCoeff() < 1e-12);

    LimitConfig c8 = cfg;
    c8.beta = 0.8;
    c8.random_ic_seed.reset();
    const LimitSolution s8 = integrate_limit(forest(), tables(), c8);
    CHECK(s8.order_scale(1, 10000) == doctest::Approx(std::pow(10000.0, -0.2)).epsilon(1e-12));

    // A point-mass law has no fluctuation: every resample coincides.
    const KernelTables flat = build_kernels(forest(), InitLaw{0.0, 3.0}, 10000, 0, 0);
    const LimitSolution base = integrate_limit(forest(), flat, cfg);
    const auto rs = resample_terminal(forest(), flat, cfg, 3, 4);
    const NetworkPrediction p = predict_network(base, 1000, 1.0, rs);
    CHECK(p.q_std.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.p_std.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("limit CSV round trip") {
    LimitConfig cfg;
    cfg.T = 1.0;
    cfg.beta = 0.75;
    cfg.order = 1;
    cfg.random_ic_seed = 2;
    cfg.record_stride = 10;
    const LimitSolution s = integrate_limit(forest(), tables(), cfg);
    CHECK(s.points.back().t == doctest::Approx(1.0));
    const auto path = (std::filesystem::temp_directory_path() / "acscale_unit_limit.csv").string();
    write_limit_csv(s, forest(), path);
    const LimitSolution back = read_limit_csv(path, solution_meta(s), 2);
    REQUIRE(back.points.size() == s.points.size());
    CHECK(back.order == s.order);
    CHECK(back.beta == s.beta);
    for (std::size_t i = 0; i < s.points.size(); ++i)
        for (int m = 0; m <= 1; ++m) {
            CHECK((back.points[i].q[m] - s.points[i].q[m]).cwiseAbs().maxCoeff() < 1e-14);
            CHECK((back.points[i].p[m] - s.points[i].p[m]).cwiseAbs().maxCoeff() < 1e-14);
        }
    std::filesystem::remove(path);
}
