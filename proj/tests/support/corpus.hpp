#pragma once

// Small fixed datasets shared across test suites. Values are hard-coded so
// every suite sees identical inputs.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "tpcalib/data.hpp"

namespace corpus {

struct WeightedLogitData {
  Eigen::MatrixXd x;  // design with intercept column
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

// Six units, two parameters (intercept + slope).
inline WeightedLogitData logit6() {
  WeightedLogitData d;
  const std::vector<double> xs{-1.2, -0.5, 0.3, 0.8, 1.5, 2.0};
  const std::vector<double> ws{1.0, 2.0, 1.5, 0.7, 1.2, 0.9};
  const std::vector<double> ys{0, 0, 1, 0, 1, 1};
  d.x.resize(6, 2);
  d.y.resize(6);
  d.w.resize(6);
  for (int i = 0; i < 6; ++i) {
    d.x(i, 0) = 1.0;
    d.x(i, 1) = xs[static_cast<std::size_t>(i)];
    d.y[i] = ys[static_cast<std::size_t>(i)];
    d.w[i] = ws[static_cast<std::size_t>(i)];
  }
  return d;
}

// Twenty units, intercept + two covariates; weights spread over [0.5, 3].
inline WeightedLogitData logit20() {
  WeightedLogitData d;
  const std::vector<double> x1{-1.7, -1.3, -1.0, -0.8, -0.5, -0.3, -0.1, 0.1, 0.2, 0.4,
                               0.5,  0.7,  0.9,  1.1,  1.2,  1.4,  1.6, 1.8, 2.0, 2.2};
  const std::vector<double> x2{0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0};
  const std::vector<double> ys{0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1};
  const std::vector<double> ws{1.1, 0.6, 2.4, 1.9, 0.5, 1.4, 2.8, 0.9, 1.7, 2.2,
                               0.8, 1.3, 3.0, 1.0, 2.6, 0.7, 1.8, 2.1, 1.5, 0.95};
  d.x.resize(20, 3);
  d.y.resize(20);
  d.w.resize(20);
  for (int i = 0; i < 20; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    d.x(i, 0) = 1.0;
    d.x(i, 1) = x1[iu];
    d.x(i, 2) = x2[iu];
    d.y[i] = ys[iu];
    d.w[i] = ws[iu];
  }
  return d;
}

// Two auxiliary columns over five first-phase units; the first three are the
// second phase.
struct CalibToy {
  Eigen::MatrixXd v_s1;  // 5 x 2
  std::vector<int> s2_rows{0, 1, 2};
  Eigen::VectorXd w1;  // 5
  Eigen::VectorXd w;   // 3
};

inline CalibToy calib_toy() {
  CalibToy t;
  t.v_s1.resize(5, 2);
  t.v_s1 << 1.0, 0.5,
            1.0, -1.0,
            1.0, 2.0,
            1.0, 0.8,
            1.0, -0.3;
  t.w1.resize(5);
  t.w1 << 1.4, 1.1, 0.9, 1.3, 1.2;
  t.w.resize(3);
  t.w << 2.0, 1.0, 1.5;
  return t;
}

inline tpcalib::Row make_row(const std::string& id, const std::string& stratum,
                             const std::string& psu, double w1, bool in_s2,
                             std::optional<double> w2, int y, std::vector<double> x1,
                             std::vector<double> z, std::optional<double> x2) {
  tpcalib::Row r;
  r.unit_id = id;
  r.stratum = stratum;
  r.psu = psu;
  r.w1 = w1;
  r.in_s2 = in_s2;
  r.w2 = w2;
  r.y = y;
  r.x1 = std::move(x1);
  r.z = std::move(z);
  r.x2 = x2;
  return r;
}

// A well-formed little two-phase dataset: 2 strata x 2 PSUs x 4 units, the
// even units in the second phase, one covariate and one ancillary column.
inline tpcalib::TwoPhaseDataset toy_dataset() {
  tpcalib::TwoPhaseDataset ds;
  ds.design_type = tpcalib::DesignType::TypeI;
  ds.x1_names = {"x1_1"};
  ds.z_names = {"z_1"};
  int id = 0;
  const double xs[16] = {-1.3, 0.2, 1.1, -0.4, 0.8, -0.9, 1.6, 0.1,
                         -0.6, 1.4, -1.8, 0.5, 0.9, -0.2, 0.3, 1.9};
  const int ys[16] = {0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1};
  for (const char* stratum : {"a", "b"}) {
    for (const char* psu : {"p1", "p2"}) {
      for (int u = 0; u < 4; ++u, ++id) {
        const bool in_s2 = (u % 2) == 0;
        const double x = xs[id];
        ds.rows.push_back(make_row(std::to_string(id), stratum, psu, 1.0 + 0.1 * id, in_s2,
                                   in_s2 ? std::optional<double>(3.0) : std::nullopt, ys[id],
                                   {x}, {0.5 * x + 0.1 * u},
                                   in_s2 ? std::optional<double>(0.7 * x - 0.2)
                                         : std::nullopt));
        ds.rows.back().x2_oracle = 0.7 * x - 0.2;
      }
    }
  }
  return ds;
}

}  // namespace corpus
