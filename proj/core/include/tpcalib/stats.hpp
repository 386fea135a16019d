#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace tpcalib {

/// Numerically stable logistic function.
inline double expit(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// log(1 + exp(t)) without overflow.
inline double log1pexp(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double weighted_mean(const Eigen::VectorXd& x, const Eigen::VectorXd& w);

/// Weighted Pearson correlation.
double weighted_correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& w);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Student t CDF with df degrees of freedom.
double student_t_cdf(double t, double df);

/// Student t quantile (inverse CDF); df >= 1, p in (0, 1).
double student_t_quantile(double p, double df);

}  // namespace tpcalib
