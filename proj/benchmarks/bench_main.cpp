#include <benchmark/benchmark.h>

#include "dpreach/finite_mdp.hpp"
#include "dpreach/irreducibility.hpp"
#include "dpreach/policy_net.hpp"
#include "dpreach/savings.hpp"
#include "dpreach/stopping.hpp"

using namespace dpreach;

static void BM_SolveOpiRandom(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const FiniteMDP mdp = random_mdp(n, 5, 1);
    for (auto _ : state) benchmark::DoNotOptimize(solve_opi(mdp, 20, 1e-10));
}
BENCHMARK(BM_SolveOpiRandom)->Arg(20)->Arg(100)->Arg(400);

static void BM_SavingsOpi(benchmark::State& state) {
    const SavingsModel m = SavingsModel::irreducible();
    SavingsSolverConfig cfg;
    cfg.n_grid = static_cast<std::size_t>(state.range(0));
    cfg.n_consumption = cfg.n_grid;
    for (auto _ : state) benchmark::DoNotOptimize(solve_savings_opi(m, cfg));
}
BENCHMARK(BM_SavingsOpi)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

static void BM_SccVerdict(benchmark::State& state) {
    const FiniteMDP mdp = random_mdp(static_cast<std::size_t>(state.range(0)), 1, 2);
    const FiniteKernel k = FiniteKernel::from_policy(mdp, FinitePolicy{std::vector<std::size_t>(mdp.n_states(), 0)});
    for (auto _ : state) benchmark::DoNotOptimize(is_discretely_irreducible(k));
}
BENCHMARK(BM_SccVerdict)->Arg(6)->Arg(200);

static void BM_RolloutLossAndGrad(benchmark::State& state) {
    const SavingsModel m = SavingsModel::irreducible();
    const PolicyParams p = init_network(Architecture{}, 0);
    const ShockArrays s = sample_shocks(m, static_cast<std::size_t>(state.range(0)), 120, 1);
    for (auto _ : state) benchmark::DoNotOptimize(rollout_loss_and_grad(m, p, 1.0, s, m.beta));
}
BENCHMARK(BM_RolloutLossAndGrad)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_MonteCarloGridValue(benchmark::State& state) {
    const SavingsModel m = SavingsModel::irreducible();
    const BatchPolicy policy = as_batch_policy(init_network(Architecture{}, 0));
    const std::vector<double> grid{0.5, 5.0, 50.0};
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_policy_on_grid(m, policy, grid, 1000, 200, 3));
}
BENCHMARK(BM_MonteCarloGridValue)->Unit(benchmark::kMillisecond);

static void BM_StoppingVfi(benchmark::State& state) {
    StoppingSpec spec;
    spec.cost = 0.01;
    const StoppingModel m = build_stopping_model(spec);
    for (auto _ : state) benchmark::DoNotOptimize(solve_stopping_vfi(m, 1e-10));
}
BENCHMARK(BM_StoppingVfi)->Unit(benchmark::kMillisecond);

static void BM_ThresholdEnumeration(benchmark::State& state) {
    const StoppingModel m = build_stopping_model(StoppingSpec{});
    for (auto _ : state) benchmark::DoNotOptimize(best_threshold_policy(m));
}
BENCHMARK(BM_ThresholdEnumeration)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
