#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpcalib/data.hpp"
#include "tpcalib/estimators.hpp"
#include "tpcalib/model.hpp"
#include "tpcalib/simulate.hpp"

namespace tpcalib {

/// One estimator in a study. Tokens: "direct_s2", "direct_s1", "calib_fp",
/// "calib:<column>" (calibration on influence functions with the named
/// passthrough prediction column), "imp:<column>" (plug-in imputation with
/// the named column).
struct McMethodSpec {
  Method kind = Method::DirectS2;
  std::string predictor_column;  // for calib:<col> / imp:<col>
  std::string token;
};

McMethodSpec parse_method_token(const std::string& token);

struct StudyConfig {
  FpConfig fp;
  DesignType design = DesignType::TypeI;
  Type1SampleConfig type1;
  Type2SampleConfig type2;
  int replicates = 500;
  std::vector<McMethodSpec> methods;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
  bool regenerate_fp = false;
  /// Factor floor applied to the calibration-on-influence methods (restricted
  /// calibration); unset reproduces the plain linear factors.
  std::optional<double> calibration_floor;
  ModelSpec model{{"x1_1", "x1_2", "x2"}, {{"x2", "x1_2"}}};

  double f2() const;
};

struct McCell {
  std::string method;
  std::string coefficient;
  double beta_true = 0.0;
  double mean_estimate = 0.0;
  double relative_bias_pct = 0.0;  // absolute bias when beta_true == 0
  bool bias_is_absolute = false;
  double empirical_variance = 0.0;
  double mean_analytic_variance = 0.0;
  double variance_ratio = 0.0;
  double mse = 0.0;
};

struct McSummary {
  int replicates = 0;
  std::vector<std::string> coefficient_names;
  std::vector<McCell> cells;  // method-major, coefficient-minor order
  std::map<std::string, int> failure_counts;

  const McCell& cell(const std::string& method, const std::string& coefficient) const;
};

/// Per-replicate estimates of one method (only successful replicates).
struct ReplicateDraws {
  std::string method;
  std::vector<Eigen::VectorXd> estimates;
  std::vector<Eigen::VectorXd> analytic_variances;  // covariance diagonals
  int failures = 0;
};

/// Table summaries from raw replicate draws; empirical variance uses the
/// R-1 divisor and mse = empirical_variance + (mean - truth)^2 exactly.
McSummary summarize(const std::vector<ReplicateDraws>& draws,
                    const Eigen::VectorXd& beta_true,
                    const std::vector<std::string>& coefficient_names, int replicates);

/// Fixed population, R independent two-phase samples, every method on each.
/// Failed replicates are excluded per method with a count; more than 5%
/// failures for any method aborts with StudyAbort. Deterministic given the
/// config (replicate r uses derive_stream_seed(seed, r)).
McSummary run_study(const StudyConfig& config);

struct SweepConfig {
  StudyConfig base;
  std::string parameter;  // "f2" or "rho_x11_z2"
  std::vector<double> values;
  std::vector<DesignType> designs;
};

struct SweepRow {
  std::string design;
  std::string parameter;
  double value = 0.0;
  std::string method;
  std::string coefficient;
  double efficiency_gain = 0.0;  // empvar(direct_s2) / empvar(method)
  double empvar_direct = 0.0;
  double empvar_method = 0.0;
};

/// Efficiency gains relative to direct_s2 over a parameter grid. "f2" maps to
/// the phase-2 rate under TypeI and to (C = round(1/f2), B = 1) under TypeII
/// with n_per_cycle = n1/C; "rho_x11_z2" regenerates the population per point.
std::vector<SweepRow> efficiency_sweep(const SweepConfig& config);

/// Serialization. Header comment lines ("# key: value") go on CSV outputs;
/// JSON outputs embed the same pairs as a "metadata" object.
using MetadataPairs = std::vector<std::pair<std::string, std::string>>;
std::string summary_to_csv(const McSummary& summary, const MetadataPairs& metadata);
std::string summary_to_json(const McSummary& summary, const MetadataPairs& metadata);
std::string sweep_to_csv(const std::vector<SweepRow>& rows, const MetadataPairs& metadata);

}  // namespace tpcalib
