#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tpcalib {

enum class DesignType { TypeI, TypeII };
enum class Phase2StrataRule { Phase1PsuAsStratum, CycleSubset };

/// One sampled unit. Phase-1 variables (y, x1, z) are present on every row;
/// the phase-2 covariate x2 only where in_s2. Simulated datasets additionally
/// carry the population value of x2 in the x2_oracle sidecar.
struct Row {
  std::string unit_id;
  std::string stratum;
  std::string psu;
  std::optional<std::string> cycle;
  double w1 = 0.0;
  bool in_s2 = false;
  std::optional<double> w2;
  int y = 0;
  std::vector<double> x1;
  std::optional<double> x2;
  std::vector<double> z;
  std::optional<double> x2_oracle;

  /// Combined two-phase weight w1*w2; only defined for in_s2 rows.
  double weight() const;
};

struct TwoPhaseDataset {
  std::vector<Row> rows;
  DesignType design_type = DesignType::TypeI;
  Phase2StrataRule phase2_strata_rule = Phase2StrataRule::Phase1PsuAsStratum;
  std::optional<double> fp_size;
  std::optional<int> cycles_total;   // C (TypeII)
  std::optional<int> cycles_with_x2; // B (TypeII)
  std::vector<std::string> x1_names;
  std::vector<std::string> z_names;

  std::size_t n1() const { return rows.size(); }
  std::size_t n2() const;
  std::vector<std::size_t> s2_indices() const;
  double sum_w1() const;

  /// Scale used wherever an estimating equation divides by the population
  /// size: fp_size when known, otherwise the weighted count sum(w1).
  double n_scale() const;

  /// Stratum key used for variance estimation. Under TypeII the cycle label
  /// is prepended so that cycles act as additional strata.
  std::string variance_stratum(const Row& r) const;

  /// Cycle labels whose rows form the second phase (TypeII).
  std::set<std::string> designated_cycles() const;
};

struct StratumInfo {
  std::string label;
  std::vector<std::string> psus;
};

struct DesignFrame {
  std::vector<StratumInfo> strata;
  int total_psus = 0;
  int total_strata = 0;
  int df() const { return total_psus - total_strata; }
};

struct Violation {
  std::ptrdiff_t row;  // -1 for dataset-level violations
  std::string rule;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool accepted() const { return violations.empty(); }
};

/// Checks every Row / TwoPhaseDataset invariant and reports all violations;
/// never throws.
ValidationReport validate(const TwoPhaseDataset& ds);

/// Phase-1 design frame (strata with their PSU lists, sorted by label).
/// Throws VarianceError when df < 1 or some stratum has no PSU.
DesignFrame design_frame(const TwoPhaseDataset& ds);

/// Frame restricted to the strata that structurally carry second-phase rows:
/// under TypeI every phase-1 PSU is phase-2 eligible (same frame); under
/// TypeII only the designated cycles' strata remain.
DesignFrame phase2_frame(const TwoPhaseDataset& ds);

/// One survey cycle before combination; rows carry the per-cycle weight in w1.
struct CycleSample {
  std::string label;
  std::vector<Row> rows;
};

/// Combines C independently drawn cycles into a TypeII two-phase dataset:
/// every row gets w1 = w_cycle / C; rows in designated cycles become the
/// second phase with combined weight w_cycle / B, i.e. w2 = C / B.
TwoPhaseDataset combine_cycles(const std::vector<CycleSample>& cycles, int c_total,
                               const std::set<std::string>& designated);

}  // namespace tpcalib
