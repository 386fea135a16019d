#pragma once

#include <Eigen/Dense>
#include <optional>

namespace tpcalib {

/// Converged weighted-logit fit. The design matrix rows are (1, x_i^T); beta
/// holds the intercept first. score_jacobian is dU/dbeta at beta (symmetric
/// negative definite); influence row i is the per-unit weight derivative
/// d beta_hat / d w_i, so sum_i w_i * influence_i = 0 at the fit.
struct LogisticFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd score_jacobian;
  Eigen::VectorXd fitted_p;
  Eigen::MatrixXd influence;  // n x d
  bool converged = false;
  int iterations = 0;
  double max_score = 0.0;
};

struct FitOptions {
  double tol = 1e-10;          // on max |score component|, scale-adjusted
  int max_iterations = 50;
  double beta_bound = 30.0;    // |beta|_inf beyond this flags separation
  double condition_limit = 1e12;
  std::optional<Eigen::VectorXd> start;
  bool compute_influence = true;
};

/// Design-weighted score U(beta) = n_scale^-1 * sum_i w_i (y_i - p_i) X_i.
Eigen::VectorXd score_at(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         double n_scale);

/// Solves U(beta) = 0 by Newton-Raphson with step-halving. X must carry the
/// intercept column. Throws FitError on rank deficiency, separation or
/// non-convergence. Negative weights are accepted (calibrated weights can be
/// negative); the step-halving merit switches from deviance to the score norm
/// in that case.
LogisticFit fit_wlogit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double n_scale,
                       const FitOptions& options = {});

/// Per-unit influence vectors for an existing fit (rows of the returned
/// matrix). Equals n_scale^-1 * (-score_jacobian)^-1 (y_i - p_i) X_i, the
/// plug-in derivative of beta_hat with respect to w_i.
Eigen::MatrixXd influence_vectors(const LogisticFit& fit, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, double n_scale);

/// Weighted deviance -2 sum_i w_i [y_i log p_i + (1-y_i) log(1-p_i)].
double weighted_deviance(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w);

}  // namespace tpcalib
