#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "tpcalib/data.hpp"

namespace tpcalib {

struct VarianceEstimate {
  Eigen::MatrixXd covariance;
  int df = 0;
  std::vector<std::pair<std::string, int>> stratum_psu_counts;
};

/// Stratified with-replacement PSU-total covariance of estimated totals:
///   B = sum_h [m_h/(m_h-1)] sum_j (t_hj - tbar_h)(t_hj - tbar_h)^T
/// where t_hj aggregates the per-row contributions over PSU j of stratum h.
/// `rows` selects the dataset rows matching the rows of `contrib`; PSUs of the
/// frame without any contributing row enter with a zero total. Rows are summed
/// in a canonical order (unit_id, in_s2) so within-PSU permutations of the
/// input leave the result bit-identical. Strata with a single PSU are an
/// error; no collapsing is performed.
Eigen::MatrixXd psu_total_covariance(const TwoPhaseDataset& ds, const DesignFrame& frame,
                                     const std::vector<std::size_t>& rows,
                                     const Eigen::MatrixXd& contrib);

/// Taylor-linearization sandwich for a plain weighted fit: V = J^-1 B J^-1
/// with J the (positive definite) information and contrib the per-row scaled
/// score contributions w_i (y_i - p_i) X_i / N.
VarianceEstimate variance_sandwich(const TwoPhaseDataset& ds, const DesignFrame& frame,
                                   const std::vector<std::size_t>& rows,
                                   const Eigen::MatrixXd& contrib,
                                   const Eigen::MatrixXd& information);

/// Stacked M-estimator system for jointly estimated parameters. psi holds the
/// per-row stacked contributions (rows align with `rows` passed to
/// stacked_sandwich); jacobian is d(stacked totals)/d(theta) at the solution.
struct StackedSystem {
  Eigen::MatrixXd psi;       // n x D
  Eigen::MatrixXd jacobian;  // D x D
  Eigen::Index beta_dim = 0; // leading block whose covariance is reported
};

/// Covariance of the leading beta_dim block of A^-1 B A^-T.
VarianceEstimate stacked_sandwich(const StackedSystem& system, const TwoPhaseDataset& ds,
                                  const DesignFrame& frame,
                                  const std::vector<std::size_t>& rows);

struct CoefficientInterval {
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Per-coefficient t intervals with the design degrees of freedom.
std::vector<CoefficientInterval> wald_ci(const Eigen::VectorXd& beta,
                                          const Eigen::MatrixXd& covariance, int df,
                                          double level);

}  // namespace tpcalib
