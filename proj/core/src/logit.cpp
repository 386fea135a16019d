#include "tpcalib/logit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tpcalib/errors.hpp"
#include "tpcalib/stats.hpp"

namespace tpcalib {

Eigen::VectorXd score_at(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                         double n_scale) {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double p = expit(X.row(i).dot(beta));
    u.noalias() += w[i] * (y[i] - p) * X.row(i).transpose();
  }
  return u / n_scale;
}

double weighted_deviance(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double t = X.row(i).dot(beta);
    // -[y log p + (1-y) log(1-p)] = log(1+e^t) - y t
    dev += w[i] * (log1pexp(t) - y[i] * t);
  }
  return 2.0 * dev;
}

namespace {

// Negated score Jacobian (the information matrix / n_scale); positive definite
// for full-rank designs.
Eigen::MatrixXd information(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& w, double n_scale) {
  const Eigen::Index d = X.cols();
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double p = expit(X.row(i).dot(beta));
    info.selfadjointView<Eigen::Lower>().rankUpdate(X.row(i).transpose(),
                                                    w[i] * p * (1.0 - p));
  }
  info = info.selfadjointView<Eigen::Lower>();
  return info / n_scale;
}

std::string collinear_column_list(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
  // Columns with the largest loading on the null-most eigenvector.
  const Eigen::VectorXd v = es.eigenvectors().col(0).cwiseAbs();
  std::string cols;
  const double cutoff = 0.5 * v.maxCoeff();
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v[j] >= cutoff) cols += (cols.empty() ? "" : ", ") + std::to_string(j);
  return cols;
}

}  // namespace

LogisticFit fit_wlogit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double n_scale,
                       const FitOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < d)
    throw FitError(FitError::Kind::BadInput,
                   "fit_wlogit: fewer units (" + std::to_string(n) + ") than parameters (" +
                       std::to_string(d) + ")");
  if (y.size() != n || w.size() != n)
    throw FitError(FitError::Kind::BadInput, "fit_wlogit: length mismatch");
  if (!(n_scale > 0.0))
    throw FitError(FitError::Kind::BadInput, "fit_wlogit: n_scale must be positive");
  const double sum_w = w.sum();
  if (!(sum_w > 0.0))
    throw FitError(FitError::Kind::BadInput, "fit_wlogit: total weight must be positive");
  if (y.minCoeff() == y.maxCoeff())
    throw FitError(FitError::Kind::BadInput, "fit_wlogit: both outcome classes required");

  const bool any_negative_w = w.minCoeff() < 0.0;
  // Score components are averages on the n_scale scale; keep the tolerance
  // meaningful when n_scale differs from sum(w).
  const double tol = options.tol * std::max(1.0, sum_w / n_scale);

  Eigen::VectorXd beta;
  if (options.start) {
    beta = *options.start;
    if (beta.size() != d)
      throw FitError(FitError::Kind::BadInput, "fit_wlogit: start vector length mismatch");
  } else {
    beta = Eigen::VectorXd::Zero(d);
    const double ybar = std::clamp(y.dot(w) / sum_w, 1e-12, 1.0 - 1e-12);
    beta[0] = std::clamp(logit(ybar), -5.0, 5.0);
  }

  Eigen::VectorXd score = score_at(beta, X, y, w, n_scale);
  double merit = any_negative_w ? score.norm() : weighted_deviance(beta, X, y, w);

  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (score.cwiseAbs().maxCoeff() <= tol) break;

    const Eigen::MatrixXd info = information(beta, X, w, n_scale);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(info);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmin > 0.0) || lmax / lmin > options.condition_limit)
      throw FitError(FitError::Kind::RankDeficient,
                     "fit_wlogit: design is rank deficient or ill-conditioned "
                     "(collinear columns: " + collinear_column_list(es) + ")",
                     beta, score.cwiseAbs().maxCoeff(), iter);

    const Eigen::VectorXd step = es.eigenvectors() *
                                 es.eigenvalues().cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose() * score;

    // Step-halving: accept the first step that improves the merit function.
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 30; ++half, scale *= 0.5) {
      const Eigen::VectorXd cand = beta + scale * step;
      const Eigen::VectorXd cand_score = score_at(cand, X, y, w, n_scale);
      const double cand_merit =
          any_negative_w ? cand_score.norm() : weighted_deviance(cand, X, y, w);
      if (cand_merit <= merit + 1e-14 * (1.0 + std::fabs(merit))) {
        beta = cand;
        score = cand_score;
        merit = cand_merit;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw FitError(FitError::Kind::NonConvergence,
                     "fit_wlogit: step-halving failed to improve the fit", beta,
                     score.cwiseAbs().maxCoeff(), iter);
    if (beta.cwiseAbs().maxCoeff() > options.beta_bound)
      throw FitError(FitError::Kind::Separation,
                     "fit_wlogit: |beta| exceeded " + std::to_string(options.beta_bound) +
                         "; data appear separated",
                     beta, score.cwiseAbs().maxCoeff(), iter);
  }

  const double max_score = score.cwiseAbs().maxCoeff();
  if (max_score > tol)
    throw FitError(FitError::Kind::NonConvergence,
                   "fit_wlogit: no convergence after " +
                       std::to_string(options.max_iterations) + " iterations (max |score| = " +
                       std::to_string(max_score) + ")",
                   beta, max_score, iter);

  LogisticFit fit;
  fit.beta = beta;
  fit.converged = true;
  fit.iterations = iter;
  fit.max_score = max_score;
  fit.fitted_p.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) fit.fitted_p[i] = expit(X.row(i).dot(beta));
  fit.score_jacobian = -information(beta, X, w, n_scale);
  if (options.compute_influence) fit.influence = influence_vectors(fit, X, y, n_scale);
  return fit;
}

Eigen::MatrixXd influence_vectors(const LogisticFit& fit, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, double n_scale) {
  const Eigen::MatrixXd info = -fit.score_jacobian;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw FitError(FitError::Kind::RankDeficient,
                   "influence_vectors: singular score Jacobian", fit.beta, fit.max_score,
                   fit.iterations);
  Eigen::MatrixXd resid_rows(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    resid_rows.row(i) = (y[i] - fit.fitted_p[i]) * X.row(i);
  // influence_i = n_scale^-1 * info^-1 * (y_i - p_i) X_i
  return ldlt.solve(resid_rows.transpose()).transpose() / n_scale;
}

}  // namespace tpcalib
