#include <doctest.h>

#include <cmath>

#include "support/corpus.hpp"
#include "support/oracles.hpp"
#include "tpcalib/errors.hpp"
#include "tpcalib/estimators.hpp"
#include "tpcalib/simulate.hpp"
#include "tpcalib/stats.hpp"

using namespace tpcalib;

namespace {

FpConfig small_fp_config() {
  FpConfig cfg;
  cfg.n = 20000;
  cfg.stage1_clusters = 100;
  cfg.stage2_per_stage1 = 10;
  cfg.units_per_stage2 = 20;
  cfg.seed = 91;
  return cfg;
}

TwoPhaseDataset small_sample() {
  const FinitePopulation fp = generate_fp(small_fp_config());
  Type1SampleConfig sc;
  sc.n1 = 500;
  sc.f2 = 0.5;
  sc.stage1_draws = 25;
  return sample_type1(fp, sc, 7);
}

const ModelSpec kStudyModel{{"x1_1", "x1_2", "x2"}, {{"x2", "x1_2"}}};

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("direct_s2 equals a plain weighted fit on the s2 extraction") {
  const auto ds = small_sample();
  const auto est = estimate_direct_s2(ds, kStudyModel);

  const auto s2 = ds.s2_indices();
  const auto x = build_design(ds, kStudyModel, X2Observed{}, s2);
  const auto y = outcome_vector(ds, s2);
  const auto w = combined_weight_vector(ds, s2);
  const auto fit = fit_wlogit(x, y, w, ds.n_scale());
  CHECK((est.beta - fit.beta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perfect prediction collapses the calibration fit onto the s1 fit") {
  const auto ds = small_sample();
  const PredictorSpec oracle{PredictorSpec::Mode::Passthrough, {"x2_oracle"}};
  const auto calib = estimate_calib_influence(ds, kStudyModel, oracle);
  const auto s1 = estimate_direct_s1(ds, kStudyModel);
  CHECK((calib.beta - s1.beta).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("calibrated s2 proxy score reproduces the s1 proxy score") {
  const auto ds = small_sample();
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  const auto detail = estimate_calib_influence_detail(ds, kStudyModel, pred);
  CHECK(detail.output.diagnostics.score_constraint_residual <= 1e-8);
  CHECK(detail.output.diagnostics.calibration_residual <= 1e-8);

  // Recompute both sides from scratch.
  const auto s2 = ds.s2_indices();
  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(detail.proxy_score.cols());
  for (std::size_t i = 0; i < s2.size(); ++i)
    lhs += detail.calibration.calibrated_weights[static_cast<Eigen::Index>(i)] *
           detail.proxy_score.row(static_cast<Eigen::Index>(s2[i])).transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(detail.proxy_score.cols());
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    rhs += ds.rows[i].w1 * detail.proxy_score.row(static_cast<Eigen::Index>(i)).transpose();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() / ds.n_scale() <= 1e-8);
}

TEST_CASE("influence-vector auxiliaries give the same calibration") {
  const auto ds = small_sample();
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  CalibOptions h_opts, delta_opts;
  delta_opts.use_influence_auxiliaries = true;
  const auto via_h = estimate_calib_influence_detail(ds, kStudyModel, pred, h_opts);
  const auto via_delta = estimate_calib_influence_detail(ds, kStudyModel, pred, delta_opts);
  CHECK((via_h.calibration.factors - via_delta.calibration.factors).cwiseAbs().maxCoeff() <=
        1e-9);
  CHECK((via_h.output.beta - via_delta.output.beta).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("imputation with the oracle column equals the s1 oracle fit") {
  const auto ds = small_sample();
  const PredictorSpec oracle{PredictorSpec::Mode::Passthrough, {"x2_oracle"}};
  const auto imp = estimate_imputation(ds, kStudyModel, oracle);
  const auto s1 = estimate_direct_s1(ds, kStudyModel);
  CHECK((imp.beta - s1.beta).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((imp.covariance - s1.covariance).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("direct_s1 demands the oracle column") {
  auto ds = small_sample();
  for (Row& r : ds.rows) r.x2_oracle.reset();
  CHECK_THROWS_WITH_AS(estimate_direct_s1(ds, kStudyModel),
                       doctest::Contains("oracle unavailable"), DataError);
}

TEST_CASE("calibration to known population totals with only the constant column") {
  const auto ds = small_sample();
  FpTotals totals;
  totals.population_size = *ds.fp_size;
  const auto est = estimate_calib_fp(ds, kStudyModel, totals);
  // A single constant auxiliary rescales every weight by N / sum(w), which
  // cannot move the score root: the fit equals direct_s2.
  const auto direct = estimate_direct_s2(ds, kStudyModel);
  CHECK((est.beta - direct.beta).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(est.diagnostics.calibration_residual <= 1e-8);

  // And the factor itself is the ratio estimator.
  CalibrationProblem p;
  p.v_s1 = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(ds.rows.size()), 1);
  for (std::size_t i : ds.s2_indices()) p.s2_rows.push_back(static_cast<int>(i));
  p.w1 = w1_vector(ds, all_row_indices(ds));
  p.w = combined_weight_vector(ds, ds.s2_indices());
  p.n_scale = ds.n_scale();
  p.explicit_target = Eigen::VectorXd::Constant(1, totals.population_size);
  const auto ratio = solve_chisq(p);
  CHECK(ratio.factors[0] == doctest::Approx(totals.population_size / p.w.sum()));
}

TEST_CASE("calibration to population totals keeps the auxiliary totals") {
  const auto ds = small_sample();
  const FinitePopulation fp = generate_fp(small_fp_config());
  const FpTotals totals = fp.totals({"x1_1", "x1_2", "z_1", "z_2"});
  const auto est = estimate_calib_fp(ds, kStudyModel, totals);
  CHECK(est.diagnostics.calibration_residual <= 1e-8);
}

TEST_CASE("linear prediction on s2 recovers the generating coefficients") {
  const auto ds = small_sample();
  const PredictorSpec spec{PredictorSpec::Mode::LinearInS2, {"z_1", "z_2"}};
  const auto pred = predict_x2(ds, spec);
  CHECK(pred.r2_s2 > 0.8);

  // The prediction is exactly linear in (1, z_1, z_2), so least squares over
  // all rows recovers the fitted coefficients.
  const auto n1 = static_cast<Eigen::Index>(ds.rows.size());
  Eigen::MatrixXd probe(n1, 3);
  for (Eigen::Index i = 0; i < n1; ++i) {
    probe(i, 0) = 1.0;
    probe(i, 1) = ds.rows[static_cast<std::size_t>(i)].z[0];
    probe(i, 2) = ds.rows[static_cast<std::size_t>(i)].z[1];
  }
  const Eigen::VectorXd gamma = probe.colPivHouseholderQr().solve(pred.values);
  CHECK(gamma[0] == doctest::Approx(1.0).epsilon(0.25));
  CHECK(gamma[1] == doctest::Approx(0.5).epsilon(0.25));
  CHECK(gamma[2] == doctest::Approx(1.5).epsilon(0.25));
}

TEST_CASE("constant x2 breaks the prediction regression loudly") {
  auto ds = small_sample();
  for (Row& r : ds.rows)
    if (r.in_s2) r.x2 = 2.5;
  const PredictorSpec spec{PredictorSpec::Mode::LinearInS2, {"z_1", "z_2"}};
  CHECK_THROWS_AS(predict_x2(ds, spec), DataError);
}

TEST_CASE("with s2 = s1 and unit w2 the stacked variance reduces to the direct one") {
  auto ds = small_sample();
  for (Row& r : ds.rows) {
    r.in_s2 = true;
    r.w2 = 1.0;
    r.x2 = r.x2_oracle;
  }
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_1"}};
  const auto detail = estimate_calib_influence_detail(ds, kStudyModel, pred);

  // The calibration is vacuous: every factor is 1 and eta is 0.
  CHECK((detail.calibration.factors.array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(detail.eta_h.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(detail.output.diagnostics.negative_weight_count == 0);

  // Same root as the plain s1 fit (up to the solver tolerance ball).
  const auto direct = estimate_direct_s1(ds, kStudyModel);
  CHECK((detail.output.beta - direct.beta).cwiseAbs().maxCoeff() <= 1e-8);

  // At the same fit, the stacked sandwich collapses onto the plain one.
  const auto rows = all_row_indices(ds);
  const auto x = build_design(ds, kStudyModel, X2Observed{}, rows);
  const auto y = outcome_vector(ds, rows);
  const auto w1 = w1_vector(ds, rows);
  const double n = ds.n_scale();
  Eigen::MatrixXd contrib(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    contrib.row(i) = (w1[i] * (y[i] - detail.final_fit.fitted_p[i]) / n) * x.row(i);
  const auto plain = variance_sandwich(ds, design_frame(ds), rows, contrib,
                                       -detail.final_fit.score_jacobian);
  const double scale = plain.covariance.cwiseAbs().maxCoeff();
  CHECK((detail.output.covariance - plain.covariance).cwiseAbs().maxCoeff() / scale <= 1e-9);
}

TEST_CASE("stacked Jacobian matches finite differences of the stacked totals") {
  const auto ds = small_sample();
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  const auto detail = estimate_calib_influence_detail(ds, kStudyModel, pred);

  const auto all_rows = all_row_indices(ds);
  const auto s2 = ds.s2_indices();
  const auto x_star = build_design(ds, kStudyModel, X2FromValues{detail.prediction.values},
                                   all_rows);
  const auto x_obs = build_design(ds, kStudyModel, X2Observed{}, s2);
  const auto y1 = outcome_vector(ds, all_rows);
  const auto w1 = w1_vector(ds, all_rows);
  const auto w = combined_weight_vector(ds, s2);
  const double n = ds.n_scale();
  const Eigen::Index d = x_star.cols();

  // Independent evaluation of the stacked totals G(theta).
  const auto stacked_totals = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd beta = theta.head(d);
    const Eigen::VectorXd eta = theta.segment(d, d);
    const Eigen::VectorXd beta_star = theta.tail(d);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * d);
    for (std::size_t k = 0; k < s2.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const auto row = static_cast<Eigen::Index>(s2[k]);
      const Eigen::VectorXd h =
          (y1[row] - expit(x_star.row(row).dot(beta_star))) * x_star.row(row).transpose();
      const double factor = h.dot(eta) + 1.0;
      const Eigen::VectorXd s =
          (y1[row] - expit(x_obs.row(kk).dot(beta))) * x_obs.row(kk).transpose();
      g.head(d) += factor * w[kk] * s;
      g.segment(d, d) += factor * w[kk] * h;
    }
    for (Eigen::Index i = 0; i < x_star.rows(); ++i) {
      const Eigen::VectorXd h =
          (y1[i] - expit(x_star.row(i).dot(beta_star))) * x_star.row(i).transpose();
      g.segment(d, d) -= w1[i] * h;
      g.tail(d) += w1[i] * h;
    }
    return Eigen::VectorXd(g / n);
  };

  Eigen::VectorXd theta(3 * d);
  theta << detail.final_fit.beta, detail.eta_h, detail.proxy_fit.beta;

  // The solution zeroes all three blocks.
  CHECK(stacked_totals(theta).cwiseAbs().maxCoeff() <= 1e-8);

  const Eigen::MatrixXd fd = oracles::fd_jacobian(stacked_totals, theta, 1e-5);
  const double scale = detail.system.jacobian.cwiseAbs().maxCoeff();
  CHECK((fd - detail.system.jacobian).cwiseAbs().maxCoeff() / scale <= 1e-5);
}

TEST_CASE("plug-in variance variant is available and comparable") {
  const auto ds = small_sample();
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  CalibOptions plugin;
  plugin.plugin_variance = true;
  const auto full = estimate_calib_influence(ds, kStudyModel, pred);
  const auto plug = estimate_calib_influence(ds, kStudyModel, pred, plugin);
  CHECK((full.beta - plug.beta).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index j = 0; j < full.beta.size(); ++j) {
    CHECK(plug.covariance(j, j) > 0.0);
    const double ratio = plug.covariance(j, j) / full.covariance(j, j);
    CHECK(ratio > 0.2);
    CHECK(ratio < 5.0);
  }
}

TEST_CASE("empty second phase fails every phase-2 estimator") {
  auto ds = small_sample();
  for (Row& r : ds.rows) {
    r.in_s2 = false;
    r.w2.reset();
    r.x2.reset();
  }
  CHECK_THROWS_AS(estimate_direct_s2(ds, kStudyModel), DataError);
  const PredictorSpec pred{PredictorSpec::Mode::Passthrough, {"z_3"}};
  CHECK_THROWS_AS(estimate_calib_influence(ds, kStudyModel, pred), DataError);
  CHECK_THROWS_AS(estimate_imputation(ds, kStudyModel, pred), DataError);
}

}  // TEST_SUITE
