#include "tpcalib/variance.hpp"

#include <algorithm>
#include <map>

#include "tpcalib/errors.hpp"
#include "tpcalib/stats.hpp"

namespace tpcalib {

namespace {

void check_psd(Eigen::MatrixXd& v, const char* what) {
  v = 0.5 * (v + v.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v, Eigen::EigenvaluesOnly);
  const double floor = -1e-12 * std::max(1e-300, v.trace());
  if (es.eigenvalues().minCoeff() < floor)
    throw VarianceError(std::string(what) + ": covariance has a significantly negative eigenvalue");
}

}  // namespace

Eigen::MatrixXd psu_total_covariance(const TwoPhaseDataset& ds, const DesignFrame& frame,
                                     const std::vector<std::size_t>& rows,
                                     const Eigen::MatrixXd& contrib) {
  if (contrib.rows() != static_cast<Eigen::Index>(rows.size()))
    throw VarianceError("psu_total_covariance: contribution row count mismatch");
  const Eigen::Index dim = contrib.cols();

  // Bucket contribution rows by (stratum, psu); sort each bucket into the
  // canonical (unit_id, in_s2) order before summing.
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = ds.rows[rows[i]];
    buckets[{ds.variance_stratum(r), r.psu}].push_back(i);
  }
  for (auto& [key, idx] : buckets) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const Row& ra = ds.rows[rows[a]];
      const Row& rb = ds.rows[rows[b]];
      if (ra.unit_id != rb.unit_id) return ra.unit_id < rb.unit_id;
      return ra.in_s2 < rb.in_s2;
    });
  }

  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, dim);
  for (const StratumInfo& stratum : frame.strata) {
    const int m = static_cast<int>(stratum.psus.size());
    if (m < 2)
      throw VarianceError("stratum '" + stratum.label +
                          "' has a single PSU; variance is not estimable");
    Eigen::MatrixXd totals = Eigen::MatrixXd::Zero(m, dim);
    for (int j = 0; j < m; ++j) {
      auto it = buckets.find({stratum.label, stratum.psus[static_cast<std::size_t>(j)]});
      if (it == buckets.end()) continue;  // PSU with no contributing rows: zero total
      for (std::size_t i : it->second) totals.row(j) += contrib.row(static_cast<Eigen::Index>(i));
    }
    const Eigen::RowVectorXd mean = totals.colwise().mean();
    Eigen::MatrixXd centered = totals.rowwise() - mean;
    b.noalias() += (static_cast<double>(m) / (m - 1.0)) * centered.transpose() * centered;
  }
  return b;
}

VarianceEstimate variance_sandwich(const TwoPhaseDataset& ds, const DesignFrame& frame,
                                   const std::vector<std::size_t>& rows,
                                   const Eigen::MatrixXd& contrib,
                                   const Eigen::MatrixXd& information) {
  const Eigen::MatrixXd b = psu_total_covariance(ds, frame, rows, contrib);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw VarianceError("variance_sandwich: singular information matrix");
  Eigen::MatrixXd v = ldlt.solve(ldlt.solve(b).transpose());
  check_psd(v, "variance_sandwich");

  VarianceEstimate est;
  est.covariance = std::move(v);
  est.df = frame.df();
  for (const StratumInfo& s : frame.strata)
    est.stratum_psu_counts.emplace_back(s.label, static_cast<int>(s.psus.size()));
  return est;
}

VarianceEstimate stacked_sandwich(const StackedSystem& system, const TwoPhaseDataset& ds,
                                  const DesignFrame& frame,
                                  const std::vector<std::size_t>& rows) {
  const Eigen::Index dim = system.jacobian.rows();
  if (system.jacobian.cols() != dim || system.psi.cols() != dim)
    throw VarianceError("stacked_sandwich: dimension mismatch");
  if (system.beta_dim < 1 || system.beta_dim > dim)
    throw VarianceError("stacked_sandwich: bad beta_dim");

  const Eigen::MatrixXd b = psu_total_covariance(ds, frame, rows, system.psi);
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system.jacobian);
  if (!lu.isInvertible())
    throw VarianceError("stacked_sandwich: singular stacked Jacobian");
  const Eigen::MatrixXd a_inv = lu.inverse();
  Eigen::MatrixXd v_full = a_inv * b * a_inv.transpose();
  Eigen::MatrixXd v = v_full.topLeftCorner(system.beta_dim, system.beta_dim);
  check_psd(v, "stacked_sandwich");

  VarianceEstimate est;
  est.covariance = std::move(v);
  est.df = frame.df();
  for (const StratumInfo& s : frame.strata)
    est.stratum_psu_counts.emplace_back(s.label, static_cast<int>(s.psus.size()));
  return est;
}

std::vector<CoefficientInterval> wald_ci(const Eigen::VectorXd& beta,
                                          const Eigen::MatrixXd& covariance, int df,
                                          double level) {
  if (!(level > 0.0 && level < 1.0))
    throw VarianceError("wald_ci: level must lie in (0,1)");
  if (df < 1) throw VarianceError("wald_ci: df must be >= 1");
  const double mult = student_t_quantile(0.5 + 0.5 * level, static_cast<double>(df));
  std::vector<CoefficientInterval> out;
  out.reserve(static_cast<std::size_t>(beta.size()));
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    CoefficientInterval ci;
    ci.estimate = beta[j];
    ci.se = std::sqrt(std::max(0.0, covariance(j, j)));
    ci.lower = beta[j] - mult * ci.se;
    ci.upper = beta[j] + mult * ci.se;
    out.push_back(ci);
  }
  return out;
}

}  // namespace tpcalib
