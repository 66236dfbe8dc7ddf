#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <random>

#include "acscale/kernels.hpp"
#include "acscale/limit.hpp"
#include "acscale/mdp.hpp"

#include "../support/oracles.hpp"

using namespace acscale;

namespace {

const FiniteMdp& forest() {
    static const FiniteMdp mdp = build_forest();
    return mdp;
}

bool same(const std::vector<double>& a, const std::vector<double>& b) { return a == b; }

} // namespace

TEST_CASE("parallel kernels are bitwise equal to the serial reference") {
    const Matrix X = forest().inputs();
    const InitLaw law{};
    const auto par = kernels::accumulate_tables(X, law, 3 * kernels::kMcChunk + 17, 5);
    const auto ser = kernels::serial::accumulate_tables(X, law, 3 * kernels::kMcChunk + 17, 5);
    CHECK(same(par.a_sum, ser.a_sum));
    CHECK(same(par.a_sumsq, ser.a_sumsq));
    CHECK(same(par.c_sum, ser.c_sum));
    CHECK(same(par.g_sum, ser.g_sum));

    const Matrix base = kernels::draw_particles(forest().input_dim(), law, 1000, 2);
    std::vector<double> jets(static_cast<std::size_t>(2 * base.size()));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 0.1);
    for (auto& v : jets) v = nd(rng);
    const kernels::ParticleJets pj{&base, jets, 2};
    const std::vector<Vector> weights{Vector::LinSpaced(6, -0.3, 0.4), Vector::LinSpaced(6, 0.2, -0.1)};
    const auto dp = kernels::particle_drift(X, pj, weights);
    const auto ds = kernels::serial::particle_drift(X, pj, weights);
    CHECK(dp.velocity == ds.velocity);
    for (std::size_t m = 0; m < dp.kernel.size(); ++m) CHECK(dp.kernel[m] == ds.kernel[m]);

    CHECK(kernels::clt_outputs(X, 64, 0.75, law, 50, 3) == kernels::serial::clt_outputs(X, 64, 0.75, law, 50, 3));
}

TEST_CASE("kernel table against an independent Monte Carlo") {
    const KernelTables k = build_kernels(forest(), InitLaw{}, 200000, 0, 0);
    const Matrix X = forest().inputs();
    CHECK((k.a - k.a.transpose()).cwiseAbs().maxCoeff() == 0.0);
    // Oracle: B = s_i s_j + c^2 s'_i s'_j (xi_i . xi_j) with its own sampler.
    std::mt19937_64 rng(2024);
    const int samples = 200000;
    Matrix acc = Matrix::Zero(6, 6);
    for (int s = 0; s < samples; ++s) {
        const double c = oracle::truncated_normal(rng, 1.0, 3.0);
        Vector w(X.cols());
        for (auto& v : w) v = oracle::truncated_normal(rng, 1.0, 3.0);
        Vector sg(6), dsg(6);
        for (int i = 0; i < 6; ++i) {
            sg(i) = 1.0 / (1.0 + std::exp(-X.row(i).dot(w)));
            dsg(i) = sg(i) * (1 - sg(i));
        }
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) acc(i, j) += sg(i) * sg(j) + c * c * dsg(i) * dsg(j) * X.row(i).dot(X.row(j));
    }
    acc /= samples;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) CHECK(std::abs(acc(i, j) - k.a(i, j)) < 6.0 * std::sqrt(2.0) * k.a_stderr(i, j) + 1e-12);

    const KernelTables more = build_kernels(forest(), InitLaw{}, 2000000, 1, 0);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) CHECK(std::abs(more.a(i, j) - k.a(i, j)) < 4.0 * k.a_stderr(i, j) + 1e-12);
}

TEST_CASE("degenerate law") {
    const KernelTables k = build_kernels(forest(), InitLaw{0.0, 3.0}, 10000, 0, 0);
    CHECK((k.a.array() - 0.25).abs().maxCoeff() < 1e-15);
    CHECK(k.init_cov.cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(build_kernels(forest(), InitLaw{}, 100, 0, 0), ConfigError);
}

TEST_CASE("particle route reproduces the tables route at first order") {
    // With the particle set equal to the Monte Carlo sample, moving each particle by
    // sum_k kappa(k) V_k(z0) and differentiating B must give contract_c(kappa).
    const int count = 20000;
    const KernelTables k = build_kernels(forest(), InitLaw{}, count, 9, count);
    const Matrix X = forest().inputs();
    const Vector kappa = Vector::LinSpaced(6, -1.0, 2.0);
    std::vector<double> zero(static_cast<std::size_t>(k.particles.size()), 0.0);
    const std::vector<Vector> w{kappa};
    const auto first = kernels::particle_drift(X, {&k.particles, zero, 1}, w);
    const auto second = kernels::particle_drift(X, {&k.particles, first.velocity, 1}, w);
    const Matrix tables = k.contract_c(kappa);
    CHECK((second.kernel[0] - tables).cwiseAbs().maxCoeff() < 1e-12);
    // The symmetric law makes both vanish up to sampling noise.
    CHECK(tables.cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("kernel cache round trip") {
    const KernelTables k = build_kernels(forest(), InitLaw{}, 10000, 4, 64);
    const auto path = (std::filesystem::temp_directory_path() / "acscale_unit_kernels.bin").string();
    save_kernels(k, forest(), path);
    const auto back = load_kernels(forest(), InitLaw{}, 10000, 4, path);
    REQUIRE(back.has_value());
    CHECK(back->a == k.a);
    CHECK(back->c_table == k.c_table);
    CHECK(back->particles == k.particles);
    CHECK_FALSE(load_kernels(forest(), InitLaw{}, 10000, 5, path).has_value());
    std::filesystem::remove(path);
}
