#include "borderlab/did.hpp"
#include "borderlab/dgp.hpp"
#include "borderlab/numerics.hpp"
#include "borderlab/panel.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace borderlab;

namespace {

dgp::DgpConfig sized(std::int64_t treated) {
  dgp::DgpConfig cfg;
  cfg.n_workers_treated = static_cast<int>(treated);
  cfg.n_workers_control = static_cast<int>(3 * treated);
  return cfg;
}

void BM_Generate(benchmark::State& state) {
  const auto cfg = sized(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(dgp::generate(cfg));
  state.SetItemsProcessed(state.iterations() * 4 * state.range(0) * 11);
}
BENCHMARK(BM_Generate)->Arg(250)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_Demean(benchmark::State& state) {
  const auto sim = dgp::generate(sized(state.range(0)));
  const auto design = panel::build_design(sim.panel, EstimationSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(panel::two_way_demean(design));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(design.rows.size()));
}
BENCHMARK(BM_Demean)->Arg(250)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_Twfe(benchmark::State& state) {
  const auto sim = dgp::generate(sized(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(did::twfe_did(sim.panel, EstimationSpec{}));
}
BENCHMARK(BM_Twfe)->Arg(250)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_DoublyRobust(benchmark::State& state) {
  const auto sim = dgp::generate(sized(state.range(0)));
  EstimationSpec spec;
  spec.family = Family::DoublyRobust;
  for (auto _ : state) benchmark::DoNotOptimize(did::doubly_robust_did(sim.panel, spec));
}
BENCHMARK(BM_DoublyRobust)->Arg(250)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_Logit(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd X(n, 8);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    double eta = 0.0;
    for (Eigen::Index j = 1; j < 8; ++j) {
      X(i, j) = nd(rng);
      eta += 0.2 * X(i, j);
    }
    z(i) = nd(rng) < eta ? 1.0 : 0.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(numerics::logit_fit(X, z));
}
BENCHMARK(BM_Logit)->Arg(1000)->Arg(20000)->Unit(benchmark::kMicrosecond);

void BM_SimplexQp(benchmark::State& state) {
  const auto donors = state.range(0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  numerics::SimplexQpProblem p;
  p.donors = Eigen::MatrixXd::NullaryExpr(6, donors, [&] { return nd(rng); });
  p.target = Eigen::VectorXd::NullaryExpr(6, [&] { return nd(rng); });
  for (auto _ : state) benchmark::DoNotOptimize(numerics::simplex_qp_solve(p));
}
BENCHMARK(BM_SimplexQp)->Arg(3)->Arg(26)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
