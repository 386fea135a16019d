#include "tpcalib/estimators.hpp"

#include <cmath>
#include <limits>

#include "tpcalib/errors.hpp"
#include "tpcalib/stats.hpp"

namespace tpcalib {

std::string method_name(Method m) {
  switch (m) {
    case Method::DirectS2: return "direct_s2";
    case Method::CalibFP: return "calib_fp";
    case Method::CalibInfluence: return "calib_influence";
    case Method::DirectS1Oracle: return "direct_s1";
    case Method::Imputation: return "imputation";
  }
  return "?";
}

namespace {

Eigen::VectorXd column_over_rows(const TwoPhaseDataset& ds, const std::string& name) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(ds.rows.size()));
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = column_value(ds, ds.rows[i], i, name, X2Observed{});
  return v;
}

// Per-row scaled score contributions w_i (y_i - p_i) X_i / N.
Eigen::MatrixXd score_contributions(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& p, const Eigen::VectorXd& w,
                                    double n_scale) {
  Eigen::MatrixXd c(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    c.row(i) = (w[i] * (y[i] - p[i]) / n_scale) * x.row(i);
  return c;
}

EstimatorOutput make_output(Method method, const ModelSpec& model, const LogisticFit& fit,
                            const VarianceEstimate& var) {
  EstimatorOutput out;
  out.method = method;
  out.label = method_name(method);
  out.coefficient_names = model.coefficient_names();
  out.beta = fit.beta;
  out.covariance = var.covariance;
  out.df = var.df;
  return out;
}

}  // namespace

PredictionResult predict_x2(const TwoPhaseDataset& ds, const PredictorSpec& spec) {
  const auto s2 = ds.s2_indices();
  PredictionResult result;

  if (spec.mode == PredictorSpec::Mode::Passthrough) {
    if (spec.columns.size() != 1)
      throw DataError("passthrough predictor needs exactly one column");
    result.values = column_over_rows(ds, spec.columns.front());
    if (!s2.empty()) {
      Eigen::VectorXd x2(static_cast<Eigen::Index>(s2.size()));
      Eigen::VectorXd pred(static_cast<Eigen::Index>(s2.size()));
      Eigen::VectorXd w(static_cast<Eigen::Index>(s2.size()));
      for (std::size_t i = 0; i < s2.size(); ++i) {
        const Row& r = ds.rows[s2[i]];
        if (!r.x2) throw DataError("predict_x2: second-phase row without x2");
        x2[static_cast<Eigen::Index>(i)] = *r.x2;
        pred[static_cast<Eigen::Index>(i)] = result.values[static_cast<Eigen::Index>(s2[i])];
        w[static_cast<Eigen::Index>(i)] = r.weight();
      }
      const double rho = weighted_correlation(x2, pred, w);
      result.r2_s2 = rho * rho;
    }
    return result;
  }

  // LinearInS2: weighted least squares of x2 on (1, regressors) within s2.
  if (spec.columns.empty()) throw DataError("linear predictor needs regressor columns");
  if (s2.size() <= spec.columns.size() + 1)
    throw DataError("predict_x2: too few second-phase units for the regression");
  const Eigen::Index k = static_cast<Eigen::Index>(spec.columns.size()) + 1;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(s2.size()), k);
  Eigen::VectorXd x2(static_cast<Eigen::Index>(s2.size()));
  Eigen::VectorXd w(static_cast<Eigen::Index>(s2.size()));
  for (std::size_t i = 0; i < s2.size(); ++i) {
    const Row& r = ds.rows[s2[i]];
    const auto ri = static_cast<Eigen::Index>(i);
    design(ri, 0) = 1.0;
    for (std::size_t j = 0; j < spec.columns.size(); ++j)
      design(ri, static_cast<Eigen::Index>(j) + 1) =
          column_value(ds, r, s2[i], spec.columns[j], X2Observed{});
    if (!r.x2) throw DataError("predict_x2: second-phase row without x2");
    x2[ri] = *r.x2;
    w[ri] = r.weight();
  }
  if ((x2.array() - x2[0]).abs().maxCoeff() == 0.0)
    throw DataError("predict_x2: x2 is constant on s2");
  Eigen::MatrixXd gram = design.transpose() * w.asDiagonal() * design;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    throw DataError("predict_x2: rank-deficient prediction regression");
  const Eigen::VectorXd gamma = es.eigenvectors() *
                                es.eigenvalues().cwiseInverse().asDiagonal() *
                                es.eigenvectors().transpose() *
                                (design.transpose() * w.cwiseProduct(x2));

  const Eigen::VectorXd fitted = design * gamma;
  const double mean_x2 = weighted_mean(x2, w);
  double ss_res = 0.0, ss_tot = 0.0;
  for (Eigen::Index i = 0; i < x2.size(); ++i) {
    ss_res += w[i] * (x2[i] - fitted[i]) * (x2[i] - fitted[i]);
    ss_tot += w[i] * (x2[i] - mean_x2) * (x2[i] - mean_x2);
  }
  result.r2_s2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;

  result.values.resize(static_cast<Eigen::Index>(ds.rows.size()));
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    double v = gamma[0];
    for (std::size_t j = 0; j < spec.columns.size(); ++j)
      v += gamma[static_cast<Eigen::Index>(j) + 1] *
           column_value(ds, ds.rows[i], i, spec.columns[j], X2Observed{});
    result.values[static_cast<Eigen::Index>(i)] = v;
  }
  return result;
}

EstimatorOutput estimate_direct_s2(const TwoPhaseDataset& ds, const ModelSpec& model) {
  const auto rows = ds.s2_indices();
  if (rows.empty()) throw DataError("direct_s2: empty second phase");
  const double n_scale = ds.n_scale();
  const Eigen::MatrixXd x = build_design(ds, model, X2Observed{}, rows);
  const Eigen::VectorXd y = outcome_vector(ds, rows);
  const Eigen::VectorXd w = combined_weight_vector(ds, rows);
  const LogisticFit fit = fit_wlogit(x, y, w, n_scale);
  const DesignFrame frame = phase2_frame(ds);
  const VarianceEstimate var = variance_sandwich(
      ds, frame, rows, score_contributions(x, y, fit.fitted_p, w, n_scale),
      -fit.score_jacobian);
  return make_output(Method::DirectS2, model, fit, var);
}

EstimatorOutput estimate_direct_s1(const TwoPhaseDataset& ds, const ModelSpec& model) {
  const auto rows = all_row_indices(ds);
  if (rows.empty()) throw DataError("direct_s1: empty dataset");
  Eigen::VectorXd oracle(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = ds.rows[i];
    if (r.x2)
      oracle[static_cast<Eigen::Index>(i)] = *r.x2;
    else if (r.x2_oracle)
      oracle[static_cast<Eigen::Index>(i)] = *r.x2_oracle;
    else
      throw DataError("direct_s1: oracle unavailable (x2 missing on row " +
                      std::to_string(i) + " with no x2_oracle)");
  }
  const double n_scale = ds.n_scale();
  const Eigen::MatrixXd x = build_design(ds, model, X2FromValues{oracle}, rows);
  const Eigen::VectorXd y = outcome_vector(ds, rows);
  const Eigen::VectorXd w = w1_vector(ds, rows);
  const LogisticFit fit = fit_wlogit(x, y, w, n_scale);
  const DesignFrame frame = design_frame(ds);
  const VarianceEstimate var = variance_sandwich(
      ds, frame, rows, score_contributions(x, y, fit.fitted_p, w, n_scale),
      -fit.score_jacobian);
  return make_output(Method::DirectS1Oracle, model, fit, var);
}

EstimatorOutput estimate_imputation(const TwoPhaseDataset& ds, const ModelSpec& model,
                                    const PredictorSpec& predictor) {
  const auto rows = all_row_indices(ds);
  bool any_observed = false;
  for (const Row& r : ds.rows) any_observed = any_observed || (r.in_s2 && r.x2.has_value());
  if (!any_observed) throw DataError("imputation: no observed x2");

  const PredictionResult pred = predict_x2(ds, predictor);
  Eigen::VectorXd imputed = pred.values;
  for (std::size_t i = 0; i < ds.rows.size(); ++i)
    if (ds.rows[i].in_s2 && ds.rows[i].x2)
      imputed[static_cast<Eigen::Index>(i)] = *ds.rows[i].x2;

  const double n_scale = ds.n_scale();
  const Eigen::MatrixXd x = build_design(ds, model, X2FromValues{imputed}, rows);
  const Eigen::VectorXd y = outcome_vector(ds, rows);
  const Eigen::VectorXd w = w1_vector(ds, rows);
  const LogisticFit fit = fit_wlogit(x, y, w, n_scale);
  const DesignFrame frame = design_frame(ds);
  const VarianceEstimate var = variance_sandwich(
      ds, frame, rows, score_contributions(x, y, fit.fitted_p, w, n_scale),
      -fit.score_jacobian);
  EstimatorOutput out = make_output(Method::Imputation, model, fit, var);
  out.diagnostics.prediction_r2 = pred.r2_s2;
  return out;
}

EstimatorOutput estimate_calib_fp(const TwoPhaseDataset& ds, const ModelSpec& model,
                                  const FpTotals& totals) {
  const auto s2 = ds.s2_indices();
  if (s2.empty()) throw DataError("calib_fp: empty second phase");
  if (totals.totals.size() != static_cast<Eigen::Index>(totals.columns.size()))
    throw DataError("calib_fp: totals/columns length mismatch");
  if (!(totals.population_size > 0.0))
    throw DataError("calib_fp: population size must be positive");
  const double n_scale = ds.n_scale();

  // Auxiliaries (1, named columns) over s1; target = (N, population totals).
  const Eigen::Index k = 1 + static_cast<Eigen::Index>(totals.columns.size());
  Eigen::MatrixXd v(static_cast<Eigen::Index>(ds.rows.size()), k);
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    v(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < totals.columns.size(); ++j)
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j) + 1) =
          column_value(ds, ds.rows[i], i, totals.columns[j], X2Observed{});
  }
  Eigen::VectorXd target(k);
  target[0] = totals.population_size;
  target.tail(k - 1) = totals.totals;

  CalibrationProblem problem;
  problem.v_s1 = v;
  problem.s2_rows.reserve(s2.size());
  for (std::size_t i : s2) problem.s2_rows.push_back(static_cast<int>(i));
  problem.w1 = w1_vector(ds, all_row_indices(ds));
  problem.w = combined_weight_vector(ds, s2);
  problem.distance = CalibDistance::ChiSquare;
  problem.n_scale = n_scale;
  problem.explicit_target = target;
  const CalibrationResult calib = solve_chisq(problem);

  const Eigen::MatrixXd x = build_design(ds, model, X2Observed{}, s2);
  const Eigen::VectorXd y = outcome_vector(ds, s2);
  const Eigen::VectorXd fw = calib.calibrated_weights;
  const LogisticFit fit = fit_wlogit(x, y, fw, n_scale);

  // Two-block stack (beta, eta); the population totals are constants.
  const Eigen::Index d = x.cols();
  const Eigen::Index n2 = x.rows();
  Eigen::MatrixXd psi(n2, d + k);
  Eigen::MatrixXd v2(n2, k);
  for (Eigen::Index i = 0; i < n2; ++i) v2.row(i) = v.row(problem.s2_rows[static_cast<std::size_t>(i)]);
  Eigen::MatrixXd a11 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a12 = Eigen::MatrixXd::Zero(d, k);
  Eigen::MatrixXd a22 = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n2; ++i) {
    const double p = fit.fitted_p[i];
    const double resid = y[i] - p;
    const double w_i = problem.w[i];
    const Eigen::VectorXd s_i = resid * x.row(i).transpose();
    psi.row(i).head(d) = (fw[i] / n_scale) * s_i.transpose();
    psi.row(i).tail(k) = (fw[i] / n_scale) * v2.row(i);
    a11.noalias() -= (fw[i] * p * (1.0 - p) / n_scale) * x.row(i).transpose() * x.row(i);
    a12.noalias() += (w_i / n_scale) * s_i * v2.row(i);
    a22.noalias() += (w_i / n_scale) * v2.row(i).transpose() * v2.row(i);
  }
  StackedSystem system;
  system.psi = psi;
  system.jacobian = Eigen::MatrixXd::Zero(d + k, d + k);
  system.jacobian.topLeftCorner(d, d) = a11;
  system.jacobian.topRightCorner(d, k) = a12;
  system.jacobian.bottomRightCorner(k, k) = a22;
  system.beta_dim = d;

  const DesignFrame frame = phase2_frame(ds);
  const VarianceEstimate var = stacked_sandwich(system, ds, frame, s2);
  EstimatorOutput out = make_output(Method::CalibFP, model, fit, var);
  out.diagnostics.calibration_residual = calib.constraint_residual;
  out.diagnostics.negative_weight_count = calib.negative_weight_count;
  return out;
}

CalibInfluenceDetail estimate_calib_influence_detail(const TwoPhaseDataset& ds,
                                                     const ModelSpec& model,
                                                     const PredictorSpec& predictor,
                                                     const CalibOptions& options) {
  const auto all_rows = all_row_indices(ds);
  const auto s2 = ds.s2_indices();
  if (s2.empty()) throw DataError("calib_influence: empty second phase");
  if (options.distance != CalibDistance::ChiSquare)
    throw CalibError(
        "calib_influence: only the chi-square distance is supported here "
        "(no variance estimator exists for other distances; use the calibrate "
        "module directly for exponential factors)");
  const double n_scale = ds.n_scale();
  const Eigen::Index n1 = static_cast<Eigen::Index>(all_rows.size());
  const Eigen::Index n2 = static_cast<Eigen::Index>(s2.size());

  CalibInfluenceDetail detail;

  // Step 1: prediction over the whole first-phase sample.
  detail.prediction = predict_x2(ds, predictor);

  // Step 2: proxy fit on s1 with x2 replaced by the prediction.
  const Eigen::MatrixXd x_star =
      build_design(ds, model, X2FromValues{detail.prediction.values}, all_rows);
  const Eigen::VectorXd y1 = outcome_vector(ds, all_rows);
  const Eigen::VectorXd w1 = w1_vector(ds, all_rows);
  detail.proxy_fit = fit_wlogit(x_star, y1, w1, n_scale);
  const Eigen::Index d = x_star.cols();

  detail.proxy_score.resize(n1, d);
  for (Eigen::Index i = 0; i < n1; ++i)
    detail.proxy_score.row(i) = (y1[i] - detail.proxy_fit.fitted_p[i]) * x_star.row(i);

  // Step 3: calibrate the combined s2 weights to the weighted s1 on the
  // proxy score (or, behind the flag, on the influence vectors; the factors
  // agree by chi-square linear-map invariance).
  CalibrationProblem problem;
  problem.v_s1 = options.use_influence_auxiliaries
                     ? Eigen::MatrixXd(influence_vectors(detail.proxy_fit, x_star, y1, n_scale))
                     : detail.proxy_score;
  problem.s2_rows.reserve(s2.size());
  for (std::size_t i : s2) problem.s2_rows.push_back(static_cast<int>(i));
  problem.w1 = w1;
  problem.w = combined_weight_vector(ds, s2);
  problem.distance = CalibDistance::ChiSquare;
  problem.n_scale = n_scale;
  problem.factor_floor = options.factor_floor;
  detail.calibration = solve_chisq(problem);

  if (options.use_influence_auxiliaries) {
    // The variance stack is parameterized in proxy-score units; the factors
    // (and hence all downstream estimates) are identical either way.
    CalibrationProblem h_problem = problem;
    h_problem.v_s1 = detail.proxy_score;
    detail.eta_h = solve_chisq(h_problem).eta;
  } else {
    detail.eta_h = detail.calibration.eta;
  }

  // Final fit: the outcome model on s2 with factor-adjusted combined weights.
  const Eigen::MatrixXd x2d = build_design(ds, model, X2Observed{}, s2);
  const Eigen::VectorXd y2 = outcome_vector(ds, s2);
  const Eigen::VectorXd fw = detail.calibration.calibrated_weights;
  FitOptions final_options;
  final_options.start = detail.proxy_fit.beta;
  detail.final_fit = fit_wlogit(x2d, y2, fw, n_scale, final_options);

  // Score-constraint identity: the calibrated s2 proxy score reproduces the
  // s1 proxy score total.
  Eigen::VectorXd lhs = Eigen::VectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n2; ++i)
    lhs += fw[i] * detail.proxy_score.row(problem.s2_rows[static_cast<std::size_t>(i)]).transpose();
  const Eigen::VectorXd rhs = detail.proxy_score.transpose() * w1;
  const double score_residual = (lhs - rhs).cwiseAbs().maxCoeff() / n_scale;

  // Stacked system over all s1 rows; parameter order (beta, eta, beta*).
  const bool plugin = options.plugin_variance;
  const Eigen::Index dim = plugin ? 2 * d : 3 * d;
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n1, dim);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::VectorXd& eta = detail.eta_h;

  Eigen::MatrixXd a11 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a12 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a13 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a22 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a23 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd a33 = Eigen::MatrixXd::Zero(d, d);

  // s2-side pieces, indexed by position within s2.
  for (Eigen::Index i = 0; i < n2; ++i) {
    const std::size_t row = static_cast<std::size_t>(problem.s2_rows[static_cast<std::size_t>(i)]);
    const auto ri = static_cast<Eigen::Index>(row);
    const double w_i = problem.w[i];
    const double f_i = detail.calibration.factors[i];
    const double p = detail.final_fit.fitted_p[i];
    const Eigen::VectorXd s_i = (y2[i] - p) * x2d.row(i).transpose();
    const Eigen::VectorXd h_i = detail.proxy_score.row(ri).transpose();
    const double pstar = detail.proxy_fit.fitted_p[ri];
    const double qstar = pstar * (1.0 - pstar);
    const Eigen::VectorXd astar = x_star.row(ri).transpose();

    psi.row(ri).head(d) = (f_i * w_i / n_scale) * s_i.transpose();
    psi.row(ri).segment(d, d) += (f_i * w_i / n_scale) * h_i.transpose();

    a11.noalias() -= (f_i * w_i * p * (1.0 - p) / n_scale) * x2d.row(i).transpose() * x2d.row(i);
    a12.noalias() += (w_i / n_scale) * s_i * h_i.transpose();
    if (!plugin) {
      const double eta_astar = eta.dot(astar);
      // d(v_i^T eta)/d beta* = -q* (eta^T a*) a*^T
      a13.noalias() -= (w_i * qstar * eta_astar / n_scale) * s_i * astar.transpose();
      a23.noalias() -= (w_i * qstar / n_scale) * h_i * (eta_astar * astar).transpose();
      a23.noalias() -= (f_i * w_i * qstar / n_scale) * astar * astar.transpose();
    }
    a22.noalias() += (w_i / n_scale) * h_i * h_i.transpose();
  }
  // s1-side pieces.
  for (Eigen::Index i = 0; i < n1; ++i) {
    const Eigen::VectorXd h_i = detail.proxy_score.row(i).transpose();
    psi.row(i).segment(d, d) -= (w1[i] / n_scale) * h_i.transpose();
    if (!plugin) {
      const double pstar = detail.proxy_fit.fitted_p[i];
      const double qstar = pstar * (1.0 - pstar);
      const Eigen::VectorXd astar = x_star.row(i).transpose();
      psi.row(i).tail(d) = (w1[i] / n_scale) * h_i.transpose();
      a23.noalias() += (w1[i] * qstar / n_scale) * astar * astar.transpose();
      a33.noalias() -= (w1[i] * qstar / n_scale) * astar * astar.transpose();
    }
  }

  a.topLeftCorner(d, d) = a11;
  a.block(0, d, d, d) = a12;
  a.block(d, d, d, d) = a22;
  if (!plugin) {
    a.block(0, 2 * d, d, d) = a13;
    a.block(d, 2 * d, d, d) = a23;
    a.block(2 * d, 2 * d, d, d) = a33;
  }

  detail.system.psi = std::move(psi);
  detail.system.jacobian = std::move(a);
  detail.system.beta_dim = d;

  const DesignFrame frame = design_frame(ds);
  const VarianceEstimate var = stacked_sandwich(detail.system, ds, frame, all_rows);

  detail.output = make_output(Method::CalibInfluence, model, detail.final_fit, var);
  detail.output.diagnostics.calibration_residual = detail.calibration.constraint_residual;
  detail.output.diagnostics.negative_weight_count = detail.calibration.negative_weight_count;
  detail.output.diagnostics.prediction_r2 = detail.prediction.r2_s2;
  detail.output.diagnostics.score_constraint_residual = score_residual;
  return detail;
}

EstimatorOutput estimate_calib_influence(const TwoPhaseDataset& ds, const ModelSpec& model,
                                         const PredictorSpec& predictor,
                                         const CalibOptions& options) {
  return estimate_calib_influence_detail(ds, model, predictor, options).output;
}

}  // namespace tpcalib
