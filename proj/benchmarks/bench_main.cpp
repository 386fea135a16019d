#include <benchmark/benchmark.h>

#include "tpcalib/estimators.hpp"
#include "tpcalib/logit.hpp"
#include "tpcalib/mcstudy.hpp"
#include "tpcalib/rng.hpp"
#include "tpcalib/simulate.hpp"
#include "tpcalib/stats.hpp"

using namespace tpcalib;

namespace {

const ModelSpec kModel{{"x1_1", "x1_2", "x2"}, {{"x2", "x1_2"}}};

FpConfig bench_fp_config() {
  FpConfig cfg;
  cfg.n = 200000;
  cfg.stage1_clusters = 500;
  cfg.stage2_per_stage1 = 10;
  cfg.units_per_stage2 = 40;
  cfg.seed = 1;
  return cfg;
}

const FinitePopulation& bench_fp() {
  static const FinitePopulation fp = generate_fp(bench_fp_config());
  return fp;
}

TwoPhaseDataset bench_sample(std::uint64_t seed) {
  Type1SampleConfig sc;
  sc.n1 = 2000;
  sc.f2 = 1.0 / 3.0;
  return sample_type1(bench_fp(), sc, seed);
}

void BM_WeightedLogitFit(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Rng rng(7);
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rng.normal();
    x(i, 2) = rng.bernoulli(0.4);
    y[i] = rng.bernoulli(expit(-1.0 + 0.8 * x(i, 1) + 0.5 * x(i, 2))) ? 1.0 : 0.0;
    w[i] = 0.5 + rng.u01();
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_wlogit(x, y, w, w.sum()));
  }
}
BENCHMARK(BM_WeightedLogitFit)->Arg(500)->Arg(2000);

void BM_ChiSquareCalibration(benchmark::State& state) {
  const auto ds = bench_sample(5);
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  const auto prediction = predict_x2(ds, pred);
  const auto all = all_row_indices(ds);
  const auto x_star = build_design(ds, kModel, X2FromValues{prediction.values}, all);
  const auto y = outcome_vector(ds, all);
  const auto w1 = w1_vector(ds, all);
  const auto fit = fit_wlogit(x_star, y, w1, ds.n_scale());
  CalibrationProblem p;
  p.v_s1.resize(x_star.rows(), x_star.cols());
  for (Eigen::Index i = 0; i < x_star.rows(); ++i)
    p.v_s1.row(i) = (y[i] - fit.fitted_p[i]) * x_star.row(i);
  for (std::size_t i : ds.s2_indices()) p.s2_rows.push_back(static_cast<int>(i));
  p.w1 = w1;
  p.w = combined_weight_vector(ds, ds.s2_indices());
  p.n_scale = ds.n_scale();
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_chisq(p));
  }
}
BENCHMARK(BM_ChiSquareCalibration);

void BM_SampleType1(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bench_sample(++seed));
  }
}
BENCHMARK(BM_SampleType1);

void BM_CalibInfluenceReplicate(benchmark::State& state) {
  std::uint64_t seed = 0;
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  for (auto _ : state) {
    const auto ds = bench_sample(++seed);
    benchmark::DoNotOptimize(estimate_calib_influence(ds, kModel, pred));
  }
}
BENCHMARK(BM_CalibInfluenceReplicate);

}  // namespace

BENCHMARK_MAIN();
