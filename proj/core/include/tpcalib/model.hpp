#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tpcalib/data.hpp"

namespace tpcalib {

/// Outcome-model specification: named covariate columns plus interaction
/// pairs. "x2" refers to the phase-2 covariate (or whatever stands in for it
/// in a given fit); other names resolve against x1/z/x2_oracle columns.
struct ModelSpec {
  std::vector<std::string> covariates;
  std::vector<std::pair<std::string, std::string>> interactions;

  /// Coefficient names: intercept, covariates, then "a*b" per interaction.
  std::vector<std::string> coefficient_names() const;
  Eigen::Index dimension() const {
    return 1 + static_cast<Eigen::Index>(covariates.size() + interactions.size());
  }
};

/// Where the value substituted for "x2" comes from when building design rows.
struct X2Observed {};                 // the row's own x2 (requires presence)
struct X2FromColumn { std::string column; };
struct X2FromValues { Eigen::VectorXd values; };  // aligned with dataset rows
using X2Source = std::variant<X2Observed, X2FromColumn, X2FromValues>;

/// Value of a named column for one row ("x2" resolved through the source).
double column_value(const TwoPhaseDataset& ds, const Row& row, std::size_t row_index,
                    const std::string& name, const X2Source& x2);

/// Design matrix with leading intercept column for the given subset of rows.
Eigen::MatrixXd build_design(const TwoPhaseDataset& ds, const ModelSpec& model,
                             const X2Source& x2, const std::vector<std::size_t>& rows);

/// Outcome and weight vectors for a row subset.
Eigen::VectorXd outcome_vector(const TwoPhaseDataset& ds, const std::vector<std::size_t>& rows);
Eigen::VectorXd w1_vector(const TwoPhaseDataset& ds, const std::vector<std::size_t>& rows);
Eigen::VectorXd combined_weight_vector(const TwoPhaseDataset& ds,
                                       const std::vector<std::size_t>& rows);

std::vector<std::size_t> all_row_indices(const TwoPhaseDataset& ds);

}  // namespace tpcalib
