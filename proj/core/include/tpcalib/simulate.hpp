#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tpcalib/data.hpp"
#include "tpcalib/estimators.hpp"

namespace tpcalib {

/// Finite-population recipe. Units are generated i.i.d., then assigned to
/// clusters hierarchically: units sort into stage-1 clusters ("bands") on the
/// key z1 + sort_noise_sd * noise, and within each band into stage-2 clusters
/// on the key sort_outcome_weight * (y - p) + sort_x12_weight * (x12 - 0.3)
/// + sort_z2_weight * z2 + noise. The z1 banding makes the
/// size measures (and hence the sampling weights) vary across clusters; the
/// residual key creates within-cluster outcome correlation beyond the model
/// covariates, as real populations exhibit geographically. Sorting only
/// relabels clusters, so unit-level distributions are exactly as stated.
struct FpConfig {
  std::int64_t n = 200000;
  double rho_x11_z2 = 0.0995;
  double eps_sd = 0.5;
  // (beta_0, beta_11, beta_12, beta_2, beta_22); the last entry multiplies
  // the x2 * x1_2 interaction.
  std::array<double, 5> beta_true{-3.0, 0.7, 0.9, 0.5, 0.3};
  int stage1_clusters = 400;
  int stage2_per_stage1 = 10;
  int units_per_stage2 = 0;  // 0: derive as n / (stage1 * stage2_per_stage1)
  double mos_coefficient = 0.2;
  double sort_outcome_weight = 1.0;
  double sort_x12_weight = 0.0;
  double sort_z2_weight = 0.0;
  double sort_noise_sd = 1.0;
  std::uint64_t seed = 42;

  int derived_units_per_stage2() const;
};

struct FinitePopulation {
  FpConfig config;
  std::vector<double> x11, z1, z2, eps, x2, x2_star, x2_dstar, x2_tstar;
  std::vector<std::int8_t> x12, y;
  std::vector<std::int32_t> stage1_of, stage2_of;  // per unit
  std::vector<std::int64_t> cluster_units;         // unit ids grouped by stage-2 cluster
  std::vector<double> stage2_mos, stage1_mos;
  std::vector<double> stage1_cum;  // cumulative stage-1 MOS
  std::vector<double> stage2_cum;  // within-stage-1 cumulative stage-2 MOS
  double total_mos = 0.0;
  double z2_q40 = 0.0, z2_q60 = 0.0;

  std::int64_t size() const { return static_cast<std::int64_t>(z1.size()); }

  /// Column totals in the dataset naming scheme (x1_1, x1_2, z_1..z_5).
  FpTotals totals(const std::vector<std::string>& columns) const;
  double column_total(const std::string& name) const;

  /// Whole population in the dataset CSV schema: unit weights 1, stage-1
  /// clusters as PSUs, no second phase, x2 in the x2_oracle sidecar.
  TwoPhaseDataset to_dataset() const;
};

FinitePopulation generate_fp(const FpConfig& config);

struct Type1SampleConfig {
  int n1 = 2000;
  double f2 = 1.0 / 3.0;
  int stage1_draws = 50;
  int stage2_draws = 1;
  /// Second phase as one SRS over all of s1 instead of within-PSU SRS.
  bool plain_srs_phase2 = false;
};

/// Two-stage PPS-with-replacement first phase (each stage-1 draw is one PSU;
/// duplicate draws stay distinct) followed by within-PSU subsampling at rate
/// f2 with w2 = 1/f2. The population x2 is kept in the x2_oracle sidecar for
/// every row; x2 itself is observed only in the second phase.
TwoPhaseDataset sample_type1(const FinitePopulation& fp, const Type1SampleConfig& config,
                             std::uint64_t seed);

struct Type2SampleConfig {
  int cycles = 3;        // C
  int x2_cycles = 1;     // B, the first B cycles observe x2
  double n_per_cycle = 2000.0 / 3.0;  // expected; realized varies by rounding
  int stage1_draws = 50;
  int stage2_draws = 1;
};

/// C independent single-phase samples combined into a TypeII dataset via
/// combine_cycles; w2 = C/B on the designated cycles.
TwoPhaseDataset sample_type2(const FinitePopulation& fp, const Type2SampleConfig& config,
                             std::uint64_t seed);

}  // namespace tpcalib
