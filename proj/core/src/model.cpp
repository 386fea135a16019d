#include "tpcalib/model.hpp"

#include <algorithm>

#include "tpcalib/errors.hpp"

namespace tpcalib {

std::vector<std::string> ModelSpec::coefficient_names() const {
  std::vector<std::string> names;
  names.push_back("(intercept)");
  names.insert(names.end(), covariates.begin(), covariates.end());
  for (const auto& [a, b] : interactions) names.push_back(a + "*" + b);
  return names;
}

double column_value(const TwoPhaseDataset& ds, const Row& row, std::size_t row_index,
                    const std::string& name, const X2Source& x2) {
  if (name == "x2") {
    if (std::holds_alternative<X2Observed>(x2)) {
      if (!row.x2) throw DataError("row " + std::to_string(row_index) + ": x2 not observed");
      return *row.x2;
    }
    if (const auto* col = std::get_if<X2FromColumn>(&x2))
      return column_value(ds, row, row_index, col->column, X2Observed{});
    const auto& vals = std::get<X2FromValues>(x2).values;
    if (row_index >= static_cast<std::size_t>(vals.size()))
      throw DataError("x2 substitute vector too short");
    return vals[static_cast<Eigen::Index>(row_index)];
  }
  if (name == "x2_oracle") {
    if (!row.x2_oracle)
      throw DataError("row " + std::to_string(row_index) + ": x2_oracle not available");
    return *row.x2_oracle;
  }
  if (name == "y") return static_cast<double>(row.y);
  auto x1_it = std::find(ds.x1_names.begin(), ds.x1_names.end(), name);
  if (x1_it != ds.x1_names.end())
    return row.x1[static_cast<std::size_t>(x1_it - ds.x1_names.begin())];
  auto z_it = std::find(ds.z_names.begin(), ds.z_names.end(), name);
  if (z_it != ds.z_names.end())
    return row.z[static_cast<std::size_t>(z_it - ds.z_names.begin())];
  throw DataError("unknown column '" + name + "'");
}

Eigen::MatrixXd build_design(const TwoPhaseDataset& ds, const ModelSpec& model,
                             const X2Source& x2, const std::vector<std::size_t>& rows) {
  const Eigen::Index d = model.dimension();
  Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = ds.rows[rows[i]];
    const auto ri = static_cast<Eigen::Index>(i);
    design(ri, 0) = 1.0;
    Eigen::Index j = 1;
    for (const auto& name : model.covariates)
      design(ri, j++) = column_value(ds, row, rows[i], name, x2);
    for (const auto& [a, b] : model.interactions)
      design(ri, j++) = column_value(ds, row, rows[i], a, x2) *
                        column_value(ds, row, rows[i], b, x2);
  }
  return design;
}

Eigen::VectorXd outcome_vector(const TwoPhaseDataset& ds, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = static_cast<double>(ds.rows[rows[i]].y);
  return y;
}

Eigen::VectorXd w1_vector(const TwoPhaseDataset& ds, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    w[static_cast<Eigen::Index>(i)] = ds.rows[rows[i]].w1;
  return w;
}

Eigen::VectorXd combined_weight_vector(const TwoPhaseDataset& ds,
                                       const std::vector<std::size_t>& rows) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    w[static_cast<Eigen::Index>(i)] = ds.rows[rows[i]].weight();
  return w;
}

std::vector<std::size_t> all_row_indices(const TwoPhaseDataset& ds) {
  std::vector<std::size_t> idx(ds.rows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace tpcalib
