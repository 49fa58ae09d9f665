#include "mgsim/analysis.hpp"
#include "mgsim/numerics.hpp"
#include "mgsim/scenarios.hpp"
#include "mgsim/simulation.hpp"

#include <benchmark/benchmark.h>

#include <numbers>
#include <vector>

using namespace mgsim;

namespace {

constexpr double pi = std::numbers::pi;

void BM_Rk4StepOscillator(benchmark::State& state) {
    const numerics::OdeSystem osc{2, [](double, std::span<const double> x, std::span<double> dx) {
                                      dx[0] = x[1];
                                      dx[1] = -x[0];
                                  }};
    numerics::Rk4Workspace ws(2);
    std::vector<double> x{1.0, 0.0};
    double t = 0.0;
    for (auto _ : state) {
        numerics::rk4_step(osc, t, x, 1e-3, ws);
        t += 1e-3;
        benchmark::DoNotOptimize(x.data());
    }
}
BENCHMARK(BM_Rk4StepOscillator);

// one full plant + controller step of the islanded microgrid
void BM_MicrogridStep(benchmark::State& state) {
    const auto sc = scenarios::builtin("load_step");
    const sim::Simulator s(sc.simulation);
    const numerics::OdeSystem sys{s.dimension(), [&](double t, std::span<const double> x, std::span<double> dx) {
                                      s.derivative(t, x, dx);
                                  }};
    numerics::Rk4Workspace ws(s.dimension());
    auto x = s.initial_state();
    double t = 0.0;
    for (auto _ : state) {
        numerics::rk4_step(sys, t, x, sc.simulation.dt, ws);
        t += sc.simulation.dt;
        benchmark::DoNotOptimize(x.data());
    }
}
BENCHMARK(BM_MicrogridStep);

void BM_SolveLyapunov(benchmark::State& state) {
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    const auto a = analysis::state_matrix(plant::PlantParams{}, cfg, 100.0).A;
    for (auto _ : state) benchmark::DoNotOptimize(numerics::solve_lyapunov(a));
}
BENCHMARK(BM_SolveLyapunov);

void BM_PolyRoots(benchmark::State& state) {
    const auto c = analysis::char_poly_active(plant::PlantParams{}, control::ProposedConfig::default_gains(20 * pi), 50.0);
    for (auto _ : state) benchmark::DoNotOptimize(numerics::poly_roots(c));
}
BENCHMARK(BM_PolyRoots);

void BM_TransitionCertificate(benchmark::State& state) {
    const auto cfg = control::ProposedConfig::default_gains(20 * pi);
    const control::TransitionSchedule s;
    analysis::CertificateOptions opt;
    opt.grid_points = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(analysis::transition_certificate(plant::PlantParams{}, cfg, s, opt));
}
BENCHMARK(BM_TransitionCertificate)->Arg(11)->Arg(41)->Arg(161);

void BM_LoadStepScenario(benchmark::State& state) {
    const auto sc = scenarios::builtin("load_step", {"scenario.duration=1.2", "scenario.warmup=0.2"});
    for (auto _ : state) benchmark::DoNotOptimize(scenarios::run(sc));
}
BENCHMARK(BM_LoadStepScenario)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
