#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "tpcalib/calibrate.hpp"
#include "tpcalib/data.hpp"
#include "tpcalib/logit.hpp"
#include "tpcalib/model.hpp"
#include "tpcalib/variance.hpp"

namespace tpcalib {

enum class Method { DirectS2, CalibFP, CalibInfluence, DirectS1Oracle, Imputation };

std::string method_name(Method m);

/// How the phase-2 covariate is predicted over the whole first-phase sample.
/// Passthrough reads a named column verbatim; LinearInS2 fits a weighted
/// least-squares regression of x2 on the named regressors within s2 (combined
/// weights) and predicts everywhere.
struct PredictorSpec {
  enum class Mode { Passthrough, LinearInS2 };
  Mode mode = Mode::Passthrough;
  std::vector<std::string> columns;
};

struct PredictionResult {
  Eigen::VectorXd values;  // one per dataset row
  double r2_s2 = 0.0;      // weighted R^2 (or squared correlation) on s2
};

PredictionResult predict_x2(const TwoPhaseDataset& ds, const PredictorSpec& spec);

struct EstimatorDiagnostics {
  double calibration_residual = std::numeric_limits<double>::quiet_NaN();
  int negative_weight_count = 0;
  double prediction_r2 = std::numeric_limits<double>::quiet_NaN();
  // Residual of the score-constraint identity: after calibration the
  // factor-weighted s2 proxy score equals the s1 proxy score exactly.
  double score_constraint_residual = std::numeric_limits<double>::quiet_NaN();
};

struct EstimatorOutput {
  Method method = Method::DirectS2;
  std::string label;
  std::vector<std::string> coefficient_names;
  Eigen::VectorXd beta;
  Eigen::MatrixXd covariance;
  int df = 0;
  EstimatorDiagnostics diagnostics;
};

struct CalibOptions {
  CalibDistance distance = CalibDistance::ChiSquare;
  /// Calibrate on the influence vectors instead of the proxy score. The
  /// factors are identical by chi-square linear-map invariance; this exists
  /// for cross-checking.
  bool use_influence_auxiliaries = false;
  /// Ignore the proxy-fit variability in the variance stack (sensitivity
  /// variant; the default stacks beta, eta and the proxy coefficients).
  bool plugin_variance = false;
  /// Optional lower bound on the calibration factors (restricted
  /// calibration); negative factors are legal but can destabilize small
  /// second phases. With a floor in effect the proxy-score and
  /// influence-vector parameterizations are no longer exactly equivalent.
  std::optional<double> factor_floor;
};

/// Known population totals for calibration to the population: a constant-1
/// auxiliary (total = population_size) is always prepended.
struct FpTotals {
  std::vector<std::string> columns;
  Eigen::VectorXd totals;
  double population_size = 0.0;
};

EstimatorOutput estimate_direct_s2(const TwoPhaseDataset& ds, const ModelSpec& model);

/// Simulation oracle: fits on all of s1 using the true x2 (observed x2 where
/// present, the x2_oracle sidecar elsewhere). Errors when the oracle value is
/// missing anywhere.
EstimatorOutput estimate_direct_s1(const TwoPhaseDataset& ds, const ModelSpec& model);

EstimatorOutput estimate_imputation(const TwoPhaseDataset& ds, const ModelSpec& model,
                                    const PredictorSpec& predictor);

EstimatorOutput estimate_calib_fp(const TwoPhaseDataset& ds, const ModelSpec& model,
                                  const FpTotals& totals);

EstimatorOutput estimate_calib_influence(const TwoPhaseDataset& ds, const ModelSpec& model,
                                         const PredictorSpec& predictor,
                                         const CalibOptions& options = {});

/// Full intermediate state of a calibration-on-influence run; used by the
/// variance machinery and by tests that probe the stacked system directly.
struct CalibInfluenceDetail {
  PredictionResult prediction;
  LogisticFit proxy_fit;
  Eigen::MatrixXd proxy_score;     // h_i rows over s1
  CalibrationResult calibration;   // in the auxiliary units actually used
  Eigen::VectorXd eta_h;           // eta in proxy-score units (variance path)
  LogisticFit final_fit;
  StackedSystem system;            // as consumed by stacked_sandwich
  EstimatorOutput output;
};

CalibInfluenceDetail estimate_calib_influence_detail(const TwoPhaseDataset& ds,
                                                     const ModelSpec& model,
                                                     const PredictorSpec& predictor,
                                                     const CalibOptions& options = {});

}  // namespace tpcalib
