#include "tpcalib/calibrate.hpp"

#include <cmath>
#include <string>

#include "tpcalib/errors.hpp"

namespace tpcalib {

Eigen::MatrixXd CalibrationProblem::v_s2() const {
  Eigen::MatrixXd v(static_cast<Eigen::Index>(s2_rows.size()), v_s1.cols());
  for (std::size_t i = 0; i < s2_rows.size(); ++i)
    v.row(static_cast<Eigen::Index>(i)) = v_s1.row(s2_rows[i]);
  return v;
}

Eigen::VectorXd CalibrationProblem::target_totals() const {
  if (explicit_target) return *explicit_target;
  return v_s1.transpose() * w1;
}

namespace {

struct Scaled {
  Eigen::MatrixXd v2;       // n2 x k, columns scaled to unit max-abs
  Eigen::VectorXd target;   // scaled
  Eigen::VectorXd scales;   // per-column divisor
};

std::string offending_directions(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
  const Eigen::VectorXd v = es.eigenvectors().col(0).cwiseAbs();
  std::string cols;
  const double cutoff = 0.5 * v.maxCoeff();
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (v[j] >= cutoff) cols += (cols.empty() ? "" : ", ") + std::to_string(j);
  return cols;
}

Scaled scale_problem(const CalibrationProblem& p, const Eigen::MatrixXd& v2_raw,
                     const Eigen::VectorXd& target_raw) {
  const Eigen::Index k = v2_raw.cols();
  Scaled s;
  s.scales.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    double m = v2_raw.col(j).cwiseAbs().maxCoeff();
    if (p.v_s1.size() > 0) m = std::max(m, p.v_s1.col(j).cwiseAbs().maxCoeff());
    if (!(m > 0.0))
      throw CalibError("calibration auxiliary column " + std::to_string(j) +
                       " is identically zero");
    s.scales[j] = m;
  }
  s.v2 = v2_raw * s.scales.cwiseInverse().asDiagonal();
  s.target = target_raw.cwiseQuotient(s.scales);
  return s;
}

// Gram = sum_s2 w v v^T on the scaled auxiliaries, with a condition check.
Eigen::MatrixXd checked_gram(const Eigen::MatrixXd& v2, const Eigen::VectorXd& w,
                             const std::vector<int>& active, double condition_limit) {
  const Eigen::Index k = v2.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  for (int i : active)
    gram.selfadjointView<Eigen::Lower>().rankUpdate(v2.row(i).transpose(), w[i]);
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > 0.0) || lmax / lmin > condition_limit)
    throw CalibError("calibration Gram matrix is singular or ill-conditioned "
                     "(offending auxiliary directions: " + offending_directions(es) + ")");
  return gram;
}

double residual_scale(const CalibrationProblem& p, const Eigen::VectorXd& target_raw) {
  return 1.0 + target_raw.cwiseAbs().maxCoeff() / p.n_scale;
}

CalibrationResult finalize(const CalibrationProblem& p, const Eigen::MatrixXd& v2_raw,
                           const Eigen::VectorXd& target_raw, const Eigen::VectorXd& eta_raw,
                           const Eigen::VectorXd& factors, int iterations) {
  CalibrationResult r;
  r.eta = eta_raw;
  r.factors = factors;
  r.calibrated_weights = factors.cwiseProduct(p.w);
  const Eigen::VectorXd achieved = v2_raw.transpose() * r.calibrated_weights;
  r.constraint_residual = (achieved - target_raw).cwiseAbs().maxCoeff() / p.n_scale;
  r.negative_weight_count = static_cast<int>((factors.array() <= 0.0).count());
  r.solver_iterations = iterations;
  return r;
}

void check_shapes(const CalibrationProblem& p) {
  if (p.s2_rows.empty()) throw CalibError("calibration: empty second phase");
  if (p.w.size() != static_cast<Eigen::Index>(p.s2_rows.size()))
    throw CalibError("calibration: weight vector length mismatch");
  if (!(p.n_scale > 0.0)) throw CalibError("calibration: n_scale must be positive");
  if (!p.explicit_target && p.w1.size() != p.v_s1.rows())
    throw CalibError("calibration: w1 length mismatch");
  const Eigen::Index k = p.v_s1.cols();
  if (k < 1) throw CalibError("calibration: no auxiliary columns");
  if (k > static_cast<Eigen::Index>(p.s2_rows.size()))
    throw CalibError("calibration: more auxiliaries (" + std::to_string(k) +
                     ") than second-phase units (" + std::to_string(p.s2_rows.size()) + ")");
  for (int i : p.s2_rows)
    if (i < 0 || i >= p.v_s1.rows())
      throw CalibError("calibration: s2 row index out of range");
}

}  // namespace

CalibrationResult solve_chisq(const CalibrationProblem& p) {
  check_shapes(p);
  const Eigen::MatrixXd v2_raw = p.v_s2();
  const Eigen::VectorXd target_raw = p.target_totals();
  const Scaled s = scale_problem(p, v2_raw, target_raw);
  const Eigen::Index n2 = v2_raw.rows();

  std::vector<int> free_rows(n2);
  for (Eigen::Index i = 0; i < n2; ++i) free_rows[static_cast<std::size_t>(i)] = static_cast<int>(i);

  Eigen::VectorXd factors = Eigen::VectorXd::Ones(n2);
  Eigen::VectorXd eta_scaled = Eigen::VectorXd::Zero(s.v2.cols());
  std::vector<bool> clamped(static_cast<std::size_t>(n2), false);
  int rounds = 0;

  for (;;) {
    ++rounds;
    // Target reduced by the contribution of clamped units.
    Eigen::VectorXd reduced = s.target;
    for (Eigen::Index i = 0; i < n2; ++i)
      if (clamped[static_cast<std::size_t>(i)])
        reduced -= *p.factor_floor * p.w[i] * s.v2.row(i).transpose();
    Eigen::VectorXd t2 = Eigen::VectorXd::Zero(s.v2.cols());
    for (int i : free_rows) t2 += p.w[i] * s.v2.row(i).transpose();

    const Eigen::MatrixXd gram = checked_gram(s.v2, p.w, free_rows, 1e12);
    eta_scaled = gram.ldlt().solve(reduced - t2);

    for (Eigen::Index i = 0; i < n2; ++i)
      if (!clamped[static_cast<std::size_t>(i)])
        factors[i] = s.v2.row(i).dot(eta_scaled) + 1.0;

    if (!p.factor_floor) break;
    bool newly_clamped = false;
    for (Eigen::Index i = 0; i < n2; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      if (!clamped[iu] && factors[i] < *p.factor_floor) {
        clamped[iu] = true;
        factors[i] = *p.factor_floor;
        newly_clamped = true;
      }
    }
    if (!newly_clamped) break;
    free_rows.clear();
    for (Eigen::Index i = 0; i < n2; ++i)
      if (!clamped[static_cast<std::size_t>(i)]) free_rows.push_back(static_cast<int>(i));
    if (free_rows.size() < static_cast<std::size_t>(s.v2.cols()))
      throw CalibError("factor floor infeasible: too few unclamped units left");
    if (rounds > 50) throw CalibError("factor floor iteration did not settle");
  }

  CalibrationResult r = finalize(p, v2_raw, target_raw, eta_scaled.cwiseQuotient(s.scales),
                                 factors, rounds);
  const double tol = 1e-8 * residual_scale(p, target_raw);
  if (!p.factor_floor && r.constraint_residual > tol)
    throw CalibError("chi-square calibration residual " + std::to_string(r.constraint_residual) +
                     " exceeds tolerance");
  return r;
}

CalibrationResult solve_newton(const CalibrationProblem& p) {
  check_shapes(p);
  const Eigen::MatrixXd v2_raw = p.v_s2();
  const Eigen::VectorXd target_raw = p.target_totals();
  const Scaled s = scale_problem(p, v2_raw, target_raw);
  const Eigen::Index n2 = v2_raw.rows();
  const Eigen::Index k = s.v2.cols();

  const bool exponential = p.distance == CalibDistance::Exponential;
  auto factor = [&](double u) { return exponential ? std::exp(u) : u + 1.0; };
  auto dfactor = [&](double u) { return exponential ? std::exp(u) : 1.0; };

  auto q_of = [&](const Eigen::VectorXd& eta) {
    Eigen::VectorXd q = -s.target;
    for (Eigen::Index i = 0; i < n2; ++i)
      q += factor(s.v2.row(i).dot(eta)) * p.w[i] * s.v2.row(i).transpose();
    return Eigen::VectorXd(q / p.n_scale);
  };

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd q = q_of(eta);
  const double tol = 1e-10 * residual_scale(p, target_raw);

  int iter = 0;
  for (; iter < 100 && q.cwiseAbs().maxCoeff() > tol; ++iter) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < n2; ++i)
      jac.selfadjointView<Eigen::Lower>().rankUpdate(
          s.v2.row(i).transpose(), dfactor(s.v2.row(i).dot(eta)) * p.w[i]);
    jac = jac.selfadjointView<Eigen::Lower>();
    jac /= p.n_scale;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) throw CalibError("calibration Newton Jacobian is singular");
    const Eigen::VectorXd step = lu.solve(-q);

    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half, scale *= 0.5) {
      const Eigen::VectorXd cand = eta + scale * step;
      const Eigen::VectorXd cand_q = q_of(cand);
      if (cand_q.norm() <= q.norm() * (1.0 - 1e-4 * scale) || cand_q.cwiseAbs().maxCoeff() <= tol) {
        eta = cand;
        q = cand_q;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw CalibError("calibration Newton step-halving stalled");
  }
  if (q.cwiseAbs().maxCoeff() > tol)
    throw CalibError("calibration Newton did not converge in 100 iterations");

  Eigen::VectorXd factors(n2);
  for (Eigen::Index i = 0; i < n2; ++i) factors[i] = factor(s.v2.row(i).dot(eta));
  if (exponential && factors.minCoeff() <= 0.0)
    throw CalibError("exponential calibration produced non-positive factors");
  return finalize(p, v2_raw, target_raw, eta.cwiseQuotient(s.scales), factors, iter);
}

bool linear_map_factor_invariance_check(const CalibrationProblem& problem,
                                        const Eigen::MatrixXd& m, double tol) {
  CalibrationProblem mapped = problem;
  mapped.distance = CalibDistance::ChiSquare;
  mapped.v_s1 = problem.v_s1 * m.transpose();
  if (problem.explicit_target) mapped.explicit_target = m * *problem.explicit_target;

  CalibrationProblem base = problem;
  base.distance = CalibDistance::ChiSquare;

  const Eigen::VectorXd f0 = solve_chisq(base).factors;
  const Eigen::VectorXd f1 = solve_chisq(mapped).factors;
  return (f0 - f1).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace tpcalib
