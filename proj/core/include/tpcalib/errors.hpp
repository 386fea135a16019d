#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace tpcalib {

/// Malformed input data (CSV schema, dataset construction).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Config-file / model-spec parsing problems.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Weighted-logit solver failure. Carries the last iterate so callers can
/// inspect how far the solve got.
struct FitError : std::runtime_error {
  enum class Kind { NonConvergence, RankDeficient, Separation, BadInput };

  FitError(Kind k, const std::string& what, Eigen::VectorXd last = {},
           double score = 0.0, int iters = 0)
      : std::runtime_error(what), kind(k), last_beta(std::move(last)),
        max_score(score), iterations(iters) {}

  Kind kind;
  Eigen::VectorXd last_beta;
  double max_score;
  int iterations;
};

/// Calibration solver failure (singular Gram, non-convergence, infeasible).
struct CalibError : std::runtime_error {
  explicit CalibError(const std::string& what) : std::runtime_error(what) {}
};

/// Variance estimation failure (single-PSU stratum, singular Jacobian, ...).
struct VarianceError : std::runtime_error {
  explicit VarianceError(const std::string& what) : std::runtime_error(what) {}
};

/// Monte Carlo study aborted (too many replicate failures).
struct StudyAbort : std::runtime_error {
  explicit StudyAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tpcalib
