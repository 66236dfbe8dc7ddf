#include <benchmark/benchmark.h>

#include <vector>

#include "acscale/kernels.hpp"
#include "acscale/mdp.hpp"

namespace {

using namespace acscale;

const FiniteMdp& forest() {
    static const FiniteMdp mdp = build_forest();
    return mdp;
}

template <bool Parallel>
void BM_Tables(benchmark::State& state) {
    const Matrix inputs = forest().inputs();
    const InitLaw law{};
    for (auto _ : state) {
        auto sums = Parallel ? kernels::accumulate_tables(inputs, law, state.range(0), 7)
                             : kernels::serial::accumulate_tables(inputs, law, state.range(0), 7);
        benchmark::DoNotOptimize(sums.a_sum.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ParticleDrift(benchmark::State& state) {
    const FiniteMdp& mdp = forest();
    const Matrix inputs = mdp.inputs();
    const int order = 2;
    const Matrix base = kernels::draw_particles(mdp.input_dim(), InitLaw{}, state.range(0), 3);
    std::vector<double> jets(static_cast<std::size_t>(order * base.size()), 0.01);
    const kernels::ParticleJets particles{&base, jets, order};
    std::vector<Vector> weights(order, Vector::Constant(mdp.n_pairs(), 0.1));
    for (auto _ : state) {
        auto drift = Parallel ? kernels::particle_drift(inputs, particles, weights)
                              : kernels::serial::particle_drift(inputs, particles, weights);
        benchmark::DoNotOptimize(drift.velocity.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_CltOutputs(benchmark::State& state) {
    const Matrix inputs = forest().inputs();
    for (auto _ : state) {
        Matrix out = Parallel ? kernels::clt_outputs(inputs, 1024, 0.75, InitLaw{}, static_cast<int>(state.range(0)), 5)
                              : kernels::serial::clt_outputs(inputs, 1024, 0.75, InitLaw{},
                                                             static_cast<int>(state.range(0)), 5);
        benchmark::DoNotOptimize(out.data());
    }
}

} // namespace

BENCHMARK(BM_Tables<false>)->Name("tables/serial")->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tables<true>)->Name("tables/openmp")->Arg(1 << 16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ParticleDrift<false>)->Name("particle_drift/serial")->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ParticleDrift<true>)->Name("particle_drift/openmp")->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CltOutputs<false>)->Name("clt_outputs/serial")->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CltOutputs<true>)->Name("clt_outputs/openmp")->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
