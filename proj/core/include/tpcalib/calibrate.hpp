#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace tpcalib {

enum class CalibDistance { ChiSquare, Exponential };

/// Calibrate second-phase weights w so that the weighted s2 totals of the
/// auxiliary vectors match the weighted s1 totals (or an explicit target,
/// e.g. known population totals). v_s1 has one row per s1 unit; s2_rows
/// index the second-phase subset.
struct CalibrationProblem {
  Eigen::MatrixXd v_s1;              // n1 x k
  std::vector<int> s2_rows;          // indices into v_s1
  Eigen::VectorXd w1;                // n1 first-phase weights
  Eigen::VectorXd w;                 // n2 combined weights, aligned with s2_rows
  CalibDistance distance = CalibDistance::ChiSquare;
  double n_scale = 0.0;
  std::optional<Eigen::VectorXd> explicit_target;  // replaces sum_s1 w1 v
  std::optional<double> factor_floor;              // clamp factors from below

  Eigen::MatrixXd v_s2() const;
  Eigen::VectorXd target_totals() const;
};

struct CalibrationResult {
  Eigen::VectorXd eta;
  Eigen::VectorXd factors;             // F_i per s2 unit
  Eigen::VectorXd calibrated_weights;  // F_i * w_i
  double constraint_residual = 0.0;    // max-abs of (sum_s2 F w v - target)/n_scale
  int negative_weight_count = 0;
  int solver_iterations = 0;
};

/// Closed-form chi-square calibration: eta solves
///   (sum_s2 w v v^T) eta = target - sum_s2 w v,  F_i = v_i^T eta + 1.
/// Throws CalibError for singular/ill-conditioned Gram matrices or k > n2.
CalibrationResult solve_chisq(const CalibrationProblem& problem);

/// Newton iteration on the calibration equation for a general factor
/// function (chi-square: F(u) = u + 1; exponential: F(u) = exp(u)).
CalibrationResult solve_newton(const CalibrationProblem& problem);

/// True iff chi-square factors computed from auxiliaries M v_i match the
/// factors from v_i within tol. Invertible linear maps of the auxiliaries
/// leave chi-square calibration factors unchanged, which is what licenses
/// calibrating on the proxy score instead of the influence vectors.
bool linear_map_factor_invariance_check(const CalibrationProblem& problem,
                                        const Eigen::MatrixXd& m, double tol = 1e-9);

}  // namespace tpcalib
