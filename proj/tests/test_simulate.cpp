#include <doctest.h>

#include <cmath>
#include <sstream>

#include "tpcalib/csv.hpp"
#include "tpcalib/data.hpp"
#include "tpcalib/errors.hpp"
#include "tpcalib/rng.hpp"
#include "tpcalib/simulate.hpp"

using namespace tpcalib;

namespace {

FpConfig small_cfg(std::uint64_t seed = 5) {
  FpConfig cfg;
  cfg.n = 20000;
  cfg.stage1_clusters = 100;
  cfg.stage2_per_stage1 = 10;
  cfg.units_per_stage2 = 20;
  cfg.seed = seed;
  return cfg;
}

FpConfig desk_cfg() {
  FpConfig cfg;
  cfg.n = 200000;
  cfg.stage1_clusters = 500;
  cfg.stage2_per_stage1 = 10;
  cfg.units_per_stage2 = 40;
  cfg.seed = 20240811;
  return cfg;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string dataset_fingerprint(const TwoPhaseDataset& ds) {
  std::ostringstream out;
  write_dataset_csv(out, ds);
  return out.str();
}

}  // namespace

TEST_SUITE("simgen") {

TEST_CASE("identical seed and config reproduce the population bit for bit") {
  const auto a = generate_fp(small_cfg());
  const auto b = generate_fp(small_cfg());
  REQUIRE(a.size() == b.size());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.x2[static_cast<std::size_t>(i)] == b.x2[static_cast<std::size_t>(i)]);
    CHECK(a.y[static_cast<std::size_t>(i)] == b.y[static_cast<std::size_t>(i)]);
    CHECK(a.stage2_of[static_cast<std::size_t>(i)] == b.stage2_of[static_cast<std::size_t>(i)]);
  }
  const auto c = generate_fp(small_cfg(6));
  CHECK(a.x2[0] != c.x2[0]);
}

TEST_CASE("x2 decomposes exactly into its generating parts") {
  const auto fp = generate_fp(small_cfg());
  double worst = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(fp.size()); ++i) {
    const double resid =
        fp.x2[i] - (1.0 + 0.5 * fp.z1[i] + 1.5 * fp.z2[i] + fp.eps[i]);
    worst = std::max(worst, std::fabs(resid));
  }
  CHECK(worst == 0.0);
}

TEST_CASE("population correlations match their closed forms at full desk size") {
  const auto fp = generate_fp(desk_cfg());
  // corr(x2, exact prediction) = sqrt(2.5 / 2.75) with eps_sd = 0.5.
  CHECK(correlation(fp.x2, fp.x2_star) == doctest::Approx(0.9535).epsilon(0.011));
  // corr(x2, single-term prediction) = 0.25 / sqrt(0.25 * 2.75).
  CHECK(correlation(fp.x2, fp.x2_tstar) == doctest::Approx(0.3015).epsilon(0.07));
  // corr(x2, coarsened prediction) is about 0.84.
  CHECK(std::fabs(correlation(fp.x2, fp.x2_dstar) - 0.84) < 0.02);

  // The coarsened code splits the population 40/20/40.
  std::int64_t low = 0, mid = 0, high = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(fp.size()); ++i) {
    if (fp.z2[i] <= fp.z2_q40)
      ++low;
    else if (fp.z2[i] <= fp.z2_q60)
      ++mid;
    else
      ++high;
  }
  const double n = static_cast<double>(fp.size());
  CHECK(low / n == doctest::Approx(0.40).epsilon(0.025));
  CHECK(mid / n == doctest::Approx(0.20).epsilon(0.05));
  CHECK(high / n == doctest::Approx(0.40).epsilon(0.025));
}

TEST_CASE("desk-scale weights vary materially but not wildly") {
  const auto fp = generate_fp(desk_cfg());
  Type1SampleConfig sc;
  sc.n1 = 2000;
  sc.f2 = 1.0 / 3.0;
  const auto ds = sample_type1(fp, sc, 3);
  double lo = 1e300, hi = 0.0;
  for (const Row& r : ds.rows) {
    lo = std::min(lo, r.w1);
    hi = std::max(hi, r.w1);
  }
  CHECK(hi / lo > 1.5);
  CHECK(hi / lo < 50.0);
  CHECK(static_cast<int>(ds.rows.size()) == 2000);
  const auto n2 = ds.n2();
  CHECK(n2 > 580);
  CHECK(n2 < 760);
}

TEST_CASE("samples are reproducible and validate cleanly") {
  const auto fp = generate_fp(small_cfg());
  Type1SampleConfig sc;
  sc.n1 = 500;
  sc.f2 = 0.5;
  sc.stage1_draws = 25;
  const auto a = sample_type1(fp, sc, 11);
  const auto b = sample_type1(fp, sc, 11);
  CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
  CHECK(validate(a).accepted());

  Type2SampleConfig tc;
  tc.cycles = 3;
  tc.x2_cycles = 1;
  tc.n_per_cycle = 200;
  tc.stage1_draws = 10;
  const auto t2 = sample_type2(fp, tc, 12);
  CHECK(validate(t2).accepted());
  CHECK(dataset_fingerprint(t2) == dataset_fingerprint(sample_type2(fp, tc, 12)));
}

TEST_CASE("f2 = 1 keeps the whole first phase with unit phase-2 weights") {
  const auto fp = generate_fp(small_cfg());
  Type1SampleConfig sc;
  sc.n1 = 500;
  sc.f2 = 1.0;
  sc.stage1_draws = 25;
  const auto ds = sample_type1(fp, sc, 13);
  CHECK(ds.n2() == ds.rows.size());
  for (const Row& r : ds.rows) CHECK(*r.w2 == doctest::Approx(1.0));
}

TEST_CASE("weighted counts estimate the population size over replicates") {
  const auto fp = generate_fp(small_cfg());
  Type1SampleConfig sc;
  sc.n1 = 500;
  sc.f2 = 0.5;
  sc.stage1_draws = 25;
  double sum_ratio = 0.0;
  double sum_x11 = 0.0, sum_x11_sq = 0.0, sum_z2 = 0.0, sum_z2_sq = 0.0;
  double fp_mean_x11 = 0.0, fp_mean_z2 = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(fp.size()); ++i) {
    fp_mean_x11 += fp.x11[i];
    fp_mean_z2 += fp.z2[i];
  }
  fp_mean_x11 /= static_cast<double>(fp.size());
  fp_mean_z2 /= static_cast<double>(fp.size());

  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto ds = sample_type1(fp, sc, derive_stream_seed(99, static_cast<std::uint64_t>(r)));
    double nhat = 0.0, wx = 0.0, wz = 0.0;
    for (const Row& row : ds.rows) {
      nhat += row.w1;
      wx += row.w1 * row.x1[0];
      wz += row.w1 * row.z[1];
    }
    sum_ratio += nhat / static_cast<double>(fp.size());
    const double mean_x = wx / nhat;
    const double mean_z = wz / nhat;
    sum_x11 += mean_x;
    sum_x11_sq += mean_x * mean_x;
    sum_z2 += mean_z;
    sum_z2_sq += mean_z * mean_z;
  }
  const double mean_ratio = sum_ratio / reps;
  CHECK(mean_ratio > 0.98);
  CHECK(mean_ratio < 1.02);

  const double mean_x11 = sum_x11 / reps;
  const double se_x = std::sqrt((sum_x11_sq / reps - mean_x11 * mean_x11) / reps);
  CHECK(std::fabs(mean_x11 - fp_mean_x11) < 3.0 * se_x + 1e-9);
  const double mean_z2 = sum_z2 / reps;
  const double se_z = std::sqrt((sum_z2_sq / reps - mean_z2 * mean_z2) / reps);
  CHECK(std::fabs(mean_z2 - fp_mean_z2) < 3.0 * se_z + 1e-9);
}

TEST_CASE("the whole population exports through the dataset schema") {
  const auto fp = generate_fp(small_cfg());
  const auto ds = fp.to_dataset();
  CHECK(ds.rows.size() == static_cast<std::size_t>(fp.size()));
  CHECK(validate(ds).accepted());
  CHECK(ds.n2() == 0);
  CHECK(*ds.rows[5].x2_oracle == fp.x2[5]);
  // Stage-1 clusters become PSUs of a single stratum.
  const auto frame = design_frame(ds);
  CHECK(frame.total_strata == 1);
  CHECK(frame.total_psus == small_cfg().stage1_clusters);
}

TEST_CASE("single-cycle combination is a degenerate second phase") {
  const auto fp = generate_fp(small_cfg());
  Type2SampleConfig tc;
  tc.cycles = 1;
  tc.x2_cycles = 1;
  tc.n_per_cycle = 300;
  tc.stage1_draws = 15;
  const auto ds = sample_type2(fp, tc, 21);
  CHECK(ds.n2() == ds.rows.size());
  for (const Row& r : ds.rows) CHECK(*r.w2 == doctest::Approx(1.0));
}

TEST_CASE("cycle structure multiplies strata and inflates the design df") {
  const auto fp = generate_fp(small_cfg());
  const int n1 = 400, n2 = 100;

  Type1SampleConfig t1;
  t1.n1 = n1;
  t1.f2 = static_cast<double>(n2) / n1;
  t1.stage1_draws = 20;
  const auto ds1 = sample_type1(fp, t1, 31);
  const int df1 = design_frame(ds1).df();
  CHECK(df1 == 19);

  for (int cycles : {2, 4}) {
    Type2SampleConfig t2;
    t2.cycles = cycles;
    t2.x2_cycles = 1;
    t2.n_per_cycle = static_cast<double>(n1) / cycles;
    t2.stage1_draws = 20;
    const auto ds2 = sample_type2(fp, t2, 37);
    const auto frame = design_frame(ds2);
    CHECK(frame.total_strata == cycles);
    CHECK(frame.total_psus == 20 * cycles);
    CHECK(frame.df() == 20 * cycles - cycles);
    CHECK(frame.df() > df1);
    // The phase-2 estimator frame stays at one cycle's worth of df.
    CHECK(phase2_frame(ds2).df() == 19);
  }
}

TEST_CASE("infeasible draw sizes are rejected") {
  const auto fp = generate_fp(small_cfg());
  Type1SampleConfig sc;
  sc.n1 = 50000;  // would need more than a whole cluster per draw
  sc.stage1_draws = 25;
  CHECK_THROWS_AS(sample_type1(fp, sc, 41), DataError);

  FpConfig bad = small_cfg();
  bad.units_per_stage2 = 21;  // grid no longer multiplies out to n
  CHECK_THROWS_AS(generate_fp(bad), DataError);
}

}  // TEST_SUITE
