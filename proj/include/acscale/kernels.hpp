#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "acscale/common.hpp"
#include "acscale/network.hpp"

// Data-parallel kernels. Each has an OpenMP version in acscale::kernels and a serial
// reference with the same signature in acscale::kernels::serial. Work is split into
// fixed chunks whose partial sums are reduced in chunk order, so both versions return
// bitwise-identical results for any thread count.
namespace acscale::kernels {

inline constexpr std::int64_t kMcChunk = 4096;
inline constexpr int kParticleBlock = 256;

/// Monte Carlo sums over (c, w) ~ law for the kernel tables, with n = n_pairs:
///   a_sum[i*n+j]       sum of B_{i,j}
///   a_sumsq[i*n+j]     sum of B_{i,j}^2
///   c_sum[(i*n+j)*n+k] sum of C_k B_{i,j}   (C_k h = sigma_k d_c h + c sigma'_k d_w h . xi_k)
///   g_sum[i*n+j]       sum of c^2 sigma_i sigma_j
struct TableSums {
    int n_pairs = 0;
    std::int64_t count = 0;
    std::vector<double> a_sum, a_sumsq, c_sum, g_sum;
};

/// Chunk c draws its samples from Rng(derive_seed(seed, c)), c first then w.
TableSums accumulate_tables(const Matrix& inputs, const InitLaw& law, std::int64_t samples, std::uint64_t seed);

/// The first `count` (c, w) samples of the same stream, one per row.
Matrix draw_particles(int input_dim, const InitLaw& law, std::int64_t count, std::uint64_t seed);

/// Particles carrying power-series jets z = z0 + e z1 + e^2 z2 + ... in (c, w).
struct ParticleJets {
    const Matrix* base = nullptr;        // n x (1 + d), z0
    std::span<const double> jets;        // order blocks of n x (1 + d), row-major, z1..z_order
    int order = 0;
};

struct ParticleDrift {
    std::vector<Matrix> kernel;   // kernel[m-1] = mean over particles of [e^m] B(z), m = 1..order
    std::vector<double> velocity; // order blocks: [e^(m-1)] sum_xi weight(xi; e) V_xi(z)
};

/// One pass over the particles. `weights[j]` is the order-j coefficient of the
/// per-pair drift weights (j = 0 .. order-1); V_xi(c, w) = (sigma(w.xi), c sigma'(w.xi) xi).
ParticleDrift particle_drift(const Matrix& inputs, const ParticleJets& particles, std::span<const Vector> weights);

/// Rows: N^(beta - 1/2) Q_0^N over pairs for `inits` fresh critic initializations at width N;
/// init i uses Rng(derive_seed(seed, i)).
Matrix clt_outputs(const Matrix& inputs, int width_n, double beta, const InitLaw& law, int inits,
                   std::uint64_t seed);

namespace serial {
TableSums accumulate_tables(const Matrix& inputs, const InitLaw& law, std::int64_t samples, std::uint64_t seed);
ParticleDrift particle_drift(const Matrix& inputs, const ParticleJets& particles, std::span<const Vector> weights);
Matrix clt_outputs(const Matrix& inputs, int width_n, double beta, const InitLaw& law, int inits,
                   std::uint64_t seed);
} // namespace serial

} // namespace acscale::kernels
