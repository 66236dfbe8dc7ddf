#include "acscale/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "acscale/activation.hpp"
#include "acscale/jet.hpp"

namespace acscale::kernels {

namespace {

constexpr int kMaxJet = 8;

void check_inputs(const Matrix& inputs, const InitLaw& law, std::int64_t samples) {
    if (inputs.rows() < 1 || inputs.cols() < 1) throw ConfigError("inputs", "need at least one pair and one column");
    if (samples < 1) throw ConfigError("mc_samples", "must be positive");
    law.validate();
}

Matrix gram_of(const Matrix& inputs) {
    return inputs * inputs.transpose();
}

std::int64_t chunk_count(std::int64_t samples) {
    return (samples + kMcChunk - 1) / kMcChunk;
}

struct ChunkSums {
    std::vector<double> a, a2, c, g;
};

void draw_sample(Rng& rng, const InitLaw& law, int d, double& c, double* w) {
    c = law.sample(rng);
    for (int j = 0; j < d; ++j) w[j] = law.sample(rng);
}

void table_chunk(const Matrix& inputs, const Matrix& gram, const InitLaw& law, std::int64_t begin,
                 std::int64_t end, std::uint64_t seed, std::int64_t chunk, ChunkSums& out) {
    const int n = static_cast<int>(inputs.rows());
    const int d = static_cast<int>(inputs.cols());
    const auto nn = static_cast<std::size_t>(n) * n;
    out.a.assign(nn, 0.0);
    out.a2.assign(nn, 0.0);
    out.g.assign(nn, 0.0);
    out.c.assign(nn * n, 0.0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(chunk)));
    std::vector<double> w(static_cast<std::size_t>(d));
    std::vector<double> s0(n), s1(n), s2(n);
    std::array<double, 3> der{};
    for (std::int64_t sample = begin; sample < end; ++sample) {
        double c = 0.0;
        draw_sample(rng, law, d, c, w.data());
        for (int i = 0; i < n; ++i) {
            double z = 0.0;
            for (int j = 0; j < d; ++j) z += w[j] * inputs(i, j);
            Sigmoid::derivatives(z, der);
            s0[i] = der[0];
            s1[i] = der[1];
            s2[i] = der[2];
        }
        const double cc = c * c;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double gij = gram(i, j);
                const double b = s0[i] * s0[j] + cc * s1[i] * s1[j] * gij;
                const std::size_t ij = static_cast<std::size_t>(i) * n + j;
                out.a[ij] += b;
                out.a2[ij] += b * b;
                out.g[ij] += cc * s0[i] * s0[j];
                const double dc_b = 2.0 * c * s1[i] * s1[j] * gij;
                for (int k = 0; k < n; ++k) {
                    const double gik = gram(i, k);
                    const double gjk = gram(j, k);
                    const double dw_b = s1[i] * s0[j] * gik + s0[i] * s1[j] * gjk +
                                        cc * gij * (s2[i] * s1[j] * gik + s1[i] * s2[j] * gjk);
                    out.c[ij * n + k] += s0[k] * dc_b + c * s1[k] * dw_b;
                }
            }
        }
    }
}

TableSums reduce_tables(int n, std::int64_t samples, const std::vector<ChunkSums>& chunks) {
    TableSums out;
    out.n_pairs = n;
    out.count = samples;
    const auto nn = static_cast<std::size_t>(n) * n;
    out.a_sum.assign(nn, 0.0);
    out.a_sumsq.assign(nn, 0.0);
    out.g_sum.assign(nn, 0.0);
    out.c_sum.assign(nn * n, 0.0);
    for (const auto& ch : chunks) {
        for (std::size_t i = 0; i < nn; ++i) {
            out.a_sum[i] += ch.a[i];
            out.a_sumsq[i] += ch.a2[i];
            out.g_sum[i] += ch.g[i];
        }
        for (std::size_t i = 0; i < nn * n; ++i) out.c_sum[i] += ch.c[i];
    }
    return out;
}

template <bool Parallel>
TableSums tables_impl(const Matrix& inputs, const InitLaw& law, std::int64_t samples, std::uint64_t seed) {
    check_inputs(inputs, law, samples);
    const Matrix gram = gram_of(inputs);
    const std::int64_t chunks = chunk_count(samples);
    std::vector<ChunkSums> partial(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic) if (Parallel)
    for (std::int64_t ch = 0; ch < chunks; ++ch) {
        const std::int64_t begin = ch * kMcChunk;
        const std::int64_t end = std::min(samples, begin + kMcChunk);
        table_chunk(inputs, gram, law, begin, end, seed, ch, partial[static_cast<std::size_t>(ch)]);
    }
    return reduce_tables(static_cast<int>(inputs.rows()), samples, partial);
}

// Per-particle jet evaluation. Writes velocity blocks for particle `p` and adds the
// kernel jets into `kernel_acc` (order x n x n, upper triangle mirrored at the end).
void particle_one(const Matrix& inputs, const Matrix& gram, const ParticleJets& parts, std::span<const Vector> weights,
                  Eigen::Index p, std::vector<double>& kernel_acc, std::span<double> velocity) {
    const int n = static_cast<int>(inputs.rows());
    const int d = static_cast<int>(inputs.cols());
    const int K = parts.order;
    const int L = K + 1;
    const Eigen::Index n_particles = parts.base->rows();
    const std::size_t row = static_cast<std::size_t>(1 + d);
    const std::size_t block = static_cast<std::size_t>(n_particles) * row;

    auto coord = [&](int k, int j) -> double {
        if (k == 0) return (*parts.base)(p, j);
        return parts.jets[static_cast<std::size_t>(k - 1) * block + static_cast<std::size_t>(p) * row + j];
    };

    std::array<double, kMaxJet> c{}, cc{}, s{}, der{}, dd{}, ss{}, ccdd{};
    for (int k = 0; k < L; ++k) c[k] = coord(k, 0);
    jet::multiply({c.data(), static_cast<std::size_t>(L)}, {c.data(), static_cast<std::size_t>(L)},
                  {cc.data(), static_cast<std::size_t>(L)});

    std::vector<std::array<double, kMaxJet>> sig(n), dsig(n), cdsig(n);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < L; ++k) {
            double z = 0.0;
            for (int j = 0; j < d; ++j) z += coord(k, 1 + j) * inputs(i, j);
            s[k] = z;
        }
        Sigmoid::derivatives(s[0], {der.data(), static_cast<std::size_t>(L + 1)});
        jet::compose({der.data(), static_cast<std::size_t>(L)}, {s.data(), static_cast<std::size_t>(L)},
                     {sig[i].data(), static_cast<std::size_t>(L)});
        jet::compose({der.data() + 1, static_cast<std::size_t>(L)}, {s.data(), static_cast<std::size_t>(L)},
                     {dsig[i].data(), static_cast<std::size_t>(L)});
        jet::multiply({c.data(), static_cast<std::size_t>(L)}, {dsig[i].data(), static_cast<std::size_t>(L)},
                      {cdsig[i].data(), static_cast<std::size_t>(L)});
    }

    const std::size_t nn = static_cast<std::size_t>(n) * n;
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            jet::multiply({sig[i].data(), static_cast<std::size_t>(L)}, {sig[j].data(), static_cast<std::size_t>(L)},
                          {ss.data(), static_cast<std::size_t>(L)});
            jet::multiply({dsig[i].data(), static_cast<std::size_t>(L)}, {dsig[j].data(), static_cast<std::size_t>(L)},
                          {dd.data(), static_cast<std::size_t>(L)});
            jet::multiply({cc.data(), static_cast<std::size_t>(L)}, {dd.data(), static_cast<std::size_t>(L)},
                          {ccdd.data(), static_cast<std::size_t>(L)});
            for (int m = 1; m <= K; ++m)
                kernel_acc[static_cast<std::size_t>(m - 1) * nn + static_cast<std::size_t>(i) * n + j] +=
                    ss[m] + gram(i, j) * ccdd[m];
        }
    }

    for (int m = 1; m <= K; ++m) {
        double* out = velocity.data() + static_cast<std::size_t>(m - 1) * block + static_cast<std::size_t>(p) * row;
        std::fill(out, out + row, 0.0);
        for (int jo = 0; jo < m; ++jo) {
            const Vector& wt = weights[jo];
            const int k = m - 1 - jo;
            for (int i = 0; i < n; ++i) {
                const double wi = wt(i);
                if (wi == 0.0) continue;
                out[0] += wi * sig[i][k];
                const double f = wi * cdsig[i][k];
                for (int j = 0; j < d; ++j) out[1 + j] += f * inputs(i, j);
            }
        }
    }
}

template <bool Parallel>
ParticleDrift particle_impl(const Matrix& inputs, const ParticleJets& parts, std::span<const Vector> weights) {
    if (parts.base == nullptr) throw std::invalid_argument("particle_drift: missing particles");
    const int n = static_cast<int>(inputs.rows());
    const int d = static_cast<int>(inputs.cols());
    const int K = parts.order;
    if (K < 1 || K + 2 > kMaxJet) throw std::domain_error("particle_drift: jet order out of range");
    if (parts.base->cols() != 1 + d) throw std::invalid_argument("particle_drift: particle width mismatch");
    if (static_cast<int>(weights.size()) < K) throw std::invalid_argument("particle_drift: too few weight orders");
    const Eigen::Index n_particles = parts.base->rows();
    const std::size_t block = static_cast<std::size_t>(n_particles) * (1 + d);
    if (parts.jets.size() != static_cast<std::size_t>(K) * block)
        throw std::invalid_argument("particle_drift: jet storage size mismatch");

    const Matrix gram = gram_of(inputs);
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    ParticleDrift out;
    out.velocity.assign(static_cast<std::size_t>(K) * block, 0.0);

    const Eigen::Index blocks = (n_particles + kParticleBlock - 1) / kParticleBlock;
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(blocks));
#pragma omp parallel for schedule(dynamic) if (Parallel)
    for (Eigen::Index b = 0; b < blocks; ++b) {
        auto& acc = partial[static_cast<std::size_t>(b)];
        acc.assign(static_cast<std::size_t>(K) * nn, 0.0);
        const Eigen::Index end = std::min<Eigen::Index>(n_particles, (b + 1) * kParticleBlock);
        for (Eigen::Index p = b * kParticleBlock; p < end; ++p)
            particle_one(inputs, gram, parts, weights, p, acc, out.velocity);
    }

    out.kernel.assign(static_cast<std::size_t>(K), Matrix::Zero(n, n));
    for (const auto& acc : partial)
        for (int m = 0; m < K; ++m)
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j)
                    out.kernel[m](i, j) += acc[static_cast<std::size_t>(m) * nn + static_cast<std::size_t>(i) * n + j];
    for (auto& k : out.kernel) {
        k /= static_cast<double>(n_particles);
        k.triangularView<Eigen::StrictlyLower>() = k.transpose().triangularView<Eigen::StrictlyLower>();
    }
    return out;
}

template <bool Parallel>
Matrix clt_impl(const Matrix& inputs, int width_n, double beta, const InitLaw& law, int inits, std::uint64_t seed) {
    if (inits < 1) throw ConfigError("inits", "must be positive");
    law.validate();
    const int d = static_cast<int>(inputs.cols());
    const double rescale = std::pow(static_cast<double>(width_n), beta - 0.5);
    Matrix out(inits, inputs.rows());
#pragma omp parallel for schedule(dynamic) if (Parallel)
    for (int i = 0; i < inits; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        const ScaledNetwork net = init_network(width_n, beta, d, law, rng);
        out.row(i) = (forward_table(net, inputs) * rescale).transpose();
    }
    return out;
}

} // namespace

TableSums accumulate_tables(const Matrix& inputs, const InitLaw& law, std::int64_t samples, std::uint64_t seed) {
    return tables_impl<true>(inputs, law, samples, seed);
}

Matrix draw_particles(int input_dim, const InitLaw& law, std::int64_t count, std::uint64_t seed) {
    law.validate();
    Matrix out(count, 1 + input_dim);
    std::vector<double> w(static_cast<std::size_t>(input_dim));
    for (std::int64_t ch = 0; ch * kMcChunk < count; ++ch) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(ch)));
        const std::int64_t end = std::min(count, (ch + 1) * kMcChunk);
        for (std::int64_t i = ch * kMcChunk; i < end; ++i) {
            double c = 0.0;
            draw_sample(rng, law, input_dim, c, w.data());
            out(i, 0) = c;
            for (int j = 0; j < input_dim; ++j) out(i, 1 + j) = w[j];
        }
    }
    return out;
}

ParticleDrift particle_drift(const Matrix& inputs, const ParticleJets& particles, std::span<const Vector> weights) {
    return particle_impl<true>(inputs, particles, weights);
}

Matrix clt_outputs(const Matrix& inputs, int width_n, double beta, const InitLaw& law, int inits, std::uint64_t seed) {
    return clt_impl<true>(inputs, width_n, beta, law, inits, seed);
}

namespace serial {

TableSums accumulate_tables(const Matrix& inputs, const InitLaw& law, std::int64_t samples, std::uint64_t seed) {
    return tables_impl<false>(inputs, law, samples, seed);
}

ParticleDrift particle_drift(const Matrix& inputs, const ParticleJets& particles, std::span<const Vector> weights) {
    return particle_impl<false>(inputs, particles, weights);
}

Matrix clt_outputs(const Matrix& inputs, int width_n, double beta, const InitLaw& law, int inits, std::uint64_t seed) {
    return clt_impl<false>(inputs, width_n, beta, law, inits, seed);
}

} // namespace serial

} // namespace acscale::kernels
