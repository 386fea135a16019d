#include "tpcalib/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tpcalib/errors.hpp"
#include "tpcalib/rng.hpp"
#include "tpcalib/stats.hpp"

namespace tpcalib {

int FpConfig::derived_units_per_stage2() const {
  if (units_per_stage2 > 0) return units_per_stage2;
  const std::int64_t clusters =
      static_cast<std::int64_t>(stage1_clusters) * stage2_per_stage1;
  if (clusters <= 0 || n % clusters != 0)
    throw DataError("FpConfig: population size is not divisible by the cluster grid");
  return static_cast<int>(n / clusters);
}

FpTotals FinitePopulation::totals(const std::vector<std::string>& columns) const {
  FpTotals t;
  t.columns = columns;
  t.totals.resize(static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    t.totals[static_cast<Eigen::Index>(j)] = column_total(columns[j]);
  t.population_size = static_cast<double>(size());
  return t;
}

double FinitePopulation::column_total(const std::string& name) const {
  auto sum = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
  };
  if (name == "x1_1") return sum(x11);
  if (name == "x1_2") return std::accumulate(x12.begin(), x12.end(), 0.0);
  if (name == "z_1") return sum(z1);
  if (name == "z_2") return sum(z2);
  if (name == "z_3") return sum(x2_star);
  if (name == "z_4") return sum(x2_dstar);
  if (name == "z_5") return sum(x2_tstar);
  if (name == "x2") return sum(x2);
  throw DataError("FinitePopulation: unknown column '" + name + "'");
}

TwoPhaseDataset FinitePopulation::to_dataset() const {
  TwoPhaseDataset ds;
  ds.design_type = DesignType::TypeI;
  ds.phase2_strata_rule = Phase2StrataRule::Phase1PsuAsStratum;
  ds.fp_size = static_cast<double>(size());
  ds.x1_names = {"x1_1", "x1_2"};
  ds.z_names = {"z_1", "z_2", "z_3", "z_4", "z_5"};
  ds.rows.reserve(static_cast<std::size_t>(size()));
  const int psu_width = config.stage1_clusters >= 100 ? 3 : 2;
  char psu_buf[32];
  for (std::int64_t i = 0; i < size(); ++i) {
    const auto iu = static_cast<std::size_t>(i);
    Row r;
    r.unit_id = std::to_string(i);
    r.stratum = "1";
    std::snprintf(psu_buf, sizeof(psu_buf), "g%0*d", psu_width, stage1_of[iu] + 1);
    r.psu = psu_buf;
    r.w1 = 1.0;
    r.y = y[iu];
    r.x1 = {x11[iu], static_cast<double>(x12[iu])};
    r.z = {z1[iu], z2[iu], x2_star[iu], x2_dstar[iu], x2_tstar[iu]};
    r.x2_oracle = x2[iu];
    ds.rows.push_back(std::move(r));
  }
  return ds;
}

FinitePopulation generate_fp(const FpConfig& config) {
  const std::int64_t n = config.n;
  if (n <= 0) throw DataError("FpConfig: population size must be positive");
  if (!(config.rho_x11_z2 >= 0.0 && config.rho_x11_z2 < 1.0))
    throw DataError("FpConfig: rho_x11_z2 must lie in [0,1)");
  const int k = config.derived_units_per_stage2();
  const std::int64_t n_stage2 =
      static_cast<std::int64_t>(config.stage1_clusters) * config.stage2_per_stage1;
  if (n_stage2 * k != n)
    throw DataError("FpConfig: cluster geometry does not multiply out to the population size");

  FinitePopulation fp;
  fp.config = config;
  fp.x11.resize(n); fp.z1.resize(n); fp.z2.resize(n); fp.eps.resize(n);
  fp.x2.resize(n); fp.x2_star.resize(n); fp.x2_dstar.resize(n); fp.x2_tstar.resize(n);
  fp.x12.resize(n); fp.y.resize(n);
  fp.stage1_of.resize(n); fp.stage2_of.resize(n);

  Rng rng(config.seed);
  const auto& b = config.beta_true;
  const double rho = config.rho_x11_z2;
  const double rho_c = std::sqrt(1.0 - rho * rho);

  std::vector<double> band_key(n), cluster_key(n);
  for (std::int64_t i = 0; i < n; ++i) {
    const double g1 = rng.normal();
    const double g2 = rng.normal();
    fp.z1[i] = rng.normal();
    fp.x11[i] = g1;
    fp.z2[i] = rho * g1 + rho_c * g2;
    fp.x12[i] = rng.bernoulli(0.3) ? 1 : 0;
    fp.eps[i] = config.eps_sd * rng.normal();
    fp.x2[i] = 1.0 + 0.5 * fp.z1[i] + 1.5 * fp.z2[i] + fp.eps[i];
    fp.x2_star[i] = 1.0 + 0.5 * fp.z1[i] + 1.5 * fp.z2[i];
    fp.x2_tstar[i] = 1.0 + 0.5 * fp.z1[i];
    const double lp = b[0] + b[1] * fp.x11[i] + b[2] * fp.x12[i] + b[3] * fp.x2[i] +
                      b[4] * fp.x2[i] * fp.x12[i];
    const double p = expit(lp);
    fp.y[i] = rng.bernoulli(p) ? 1 : 0;
    band_key[i] = fp.z1[i] + config.sort_noise_sd * rng.normal();
    cluster_key[i] = config.sort_outcome_weight * (fp.y[i] - p) +
                     config.sort_x12_weight * (fp.x12[i] - 0.3) +
                     config.sort_z2_weight * fp.z2[i] + rng.normal();
  }

  // Empirical 40th/60th percentiles of z2 define the coarsened 3-level code.
  {
    std::vector<double> z2_sorted = fp.z2;
    const auto i40 = static_cast<std::size_t>(0.40 * static_cast<double>(n));
    const auto i60 = static_cast<std::size_t>(0.60 * static_cast<double>(n));
    std::nth_element(z2_sorted.begin(), z2_sorted.begin() + static_cast<std::ptrdiff_t>(i40),
                     z2_sorted.end());
    fp.z2_q40 = z2_sorted[i40];
    std::nth_element(z2_sorted.begin(), z2_sorted.begin() + static_cast<std::ptrdiff_t>(i60),
                     z2_sorted.end());
    fp.z2_q60 = z2_sorted[i60];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const double coded = fp.z2[i] <= fp.z2_q40 ? 1.0 : (fp.z2[i] <= fp.z2_q60 ? 2.0 : 3.0);
    fp.x2_dstar[i] = -1.9 + 0.5 * fp.z1[i] + 1.45 * coded;
  }

  // Hierarchical cluster assignment, ties broken by unit index for
  // bit-reproducibility: sort units into stage-1 bands on the noisy z1 key
  // (this drives the size measures and hence the weight spread), then sort
  // within each band on the noisy outcome-residual key and chunk into stage-2
  // clusters. Sorting never touches the unit-level variables, so population
  // functionals are unaffected; it only decides who shares a cluster.
  std::vector<std::int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto by_key = [](const std::vector<double>& key) {
    return [&key](std::int64_t a_, std::int64_t b_) {
      if (key[a_] != key[b_]) return key[a_] < key[b_];
      return a_ < b_;
    };
  };
  std::sort(order.begin(), order.end(), by_key(band_key));
  const std::int64_t band_size = static_cast<std::int64_t>(config.stage2_per_stage1) * k;
  for (std::int64_t band = 0; band < config.stage1_clusters; ++band) {
    std::sort(order.begin() + band * band_size, order.begin() + (band + 1) * band_size,
              by_key(cluster_key));
  }
  fp.cluster_units = order;
  for (std::int64_t pos = 0; pos < n; ++pos) {
    const std::int64_t unit = order[pos];
    const auto c = static_cast<std::int32_t>(pos / k);
    fp.stage2_of[unit] = c;
    fp.stage1_of[unit] = c / config.stage2_per_stage1;
  }

  fp.stage2_mos.assign(static_cast<std::size_t>(n_stage2), 0.0);
  for (std::int64_t i = 0; i < n; ++i)
    fp.stage2_mos[static_cast<std::size_t>(fp.stage2_of[i])] +=
        std::exp(config.mos_coefficient * fp.z1[i]);
  fp.stage1_mos.assign(static_cast<std::size_t>(config.stage1_clusters), 0.0);
  fp.stage2_cum.resize(static_cast<std::size_t>(n_stage2));
  for (int g = 0; g < config.stage1_clusters; ++g) {
    double acc = 0.0;
    for (int j = 0; j < config.stage2_per_stage1; ++j) {
      const auto c = static_cast<std::size_t>(g) * config.stage2_per_stage1 + j;
      acc += fp.stage2_mos[c];
      fp.stage2_cum[c] = acc;
    }
    fp.stage1_mos[static_cast<std::size_t>(g)] = acc;
  }
  fp.stage1_cum.resize(fp.stage1_mos.size());
  std::partial_sum(fp.stage1_mos.begin(), fp.stage1_mos.end(), fp.stage1_cum.begin());
  fp.total_mos = fp.stage1_cum.back();
  return fp;
}

namespace {

std::string padded_label(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

std::size_t pps_index(const std::vector<double>& cum, std::size_t begin, std::size_t end,
                      double offset, double u) {
  // Find the first index in [begin, end) whose cumulative exceeds offset + u.
  const double target = offset + u;
  auto it = std::upper_bound(cum.begin() + static_cast<std::ptrdiff_t>(begin),
                             cum.begin() + static_cast<std::ptrdiff_t>(end), target);
  if (it == cum.begin() + static_cast<std::ptrdiff_t>(end)) --it;
  return static_cast<std::size_t>(it - cum.begin());
}

// One single-phase first-stage sample: stage1_draws PPS-WR PSU draws, one or
// more PPS-WR stage-2 cluster draws inside each, then an SRS of take_exp
// units (in expectation, via randomized rounding) inside each drawn cluster.
// Row weights are inverse expected inclusion counts.
std::vector<Row> draw_first_phase(const FinitePopulation& fp, int stage1_draws,
                                  int stage2_draws, double take_exp,
                                  const std::string& stratum, Rng& rng) {
  const auto& cfg = fp.config;
  const int k = cfg.derived_units_per_stage2();
  if (!(take_exp > 0.0) || take_exp > static_cast<double>(k))
    throw DataError("sampler: infeasible sizes (per-cluster take " +
                    std::to_string(take_exp) + " of " + std::to_string(k) + ")");
  const double take_prob = take_exp / static_cast<double>(k);
  const int psu_width = stage1_draws >= 100 ? 3 : 2;

  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(stage1_draws * stage2_draws) *
               static_cast<std::size_t>(std::ceil(take_exp)));
  std::vector<std::int32_t> pick(static_cast<std::size_t>(k));

  for (int d1 = 0; d1 < stage1_draws; ++d1) {
    const std::size_t g = pps_index(fp.stage1_cum, 0, fp.stage1_cum.size(), 0.0,
                                    rng.u01() * fp.total_mos);
    const double q_g = fp.stage1_mos[g] / fp.total_mos;
    const std::string psu = padded_label("p", d1 + 1, psu_width);

    for (int d2 = 0; d2 < stage2_draws; ++d2) {
      const std::size_t c_begin = g * static_cast<std::size_t>(cfg.stage2_per_stage1);
      const std::size_t c_end = c_begin + static_cast<std::size_t>(cfg.stage2_per_stage1);
      // stage2_cum restarts at every stage-1 cluster, so the target is just u.
      const std::size_t c =
          pps_index(fp.stage2_cum, c_begin, c_end, 0.0, rng.u01() * fp.stage1_mos[g]);
      const double q_cg = fp.stage2_mos[c] / fp.stage1_mos[g];

      int take = static_cast<int>(std::floor(take_exp));
      const double frac = take_exp - std::floor(take_exp);
      if (frac > 0.0 && rng.bernoulli(frac)) ++take;
      if (take == 0) continue;

      const double w1 = 1.0 / (static_cast<double>(stage1_draws) * q_g *
                               static_cast<double>(stage2_draws) * q_cg * take_prob);

      std::iota(pick.begin(), pick.end(), 0);
      for (int t = 0; t < take; ++t) {
        const auto j = t + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k - t)));
        std::swap(pick[static_cast<std::size_t>(t)], pick[static_cast<std::size_t>(j)]);
        const std::int64_t unit =
            fp.cluster_units[c * static_cast<std::size_t>(k) +
                             static_cast<std::size_t>(pick[static_cast<std::size_t>(t)])];
        Row r;
        r.unit_id = std::to_string(unit);
        r.stratum = stratum;
        r.psu = psu;
        r.w1 = w1;
        r.y = fp.y[unit];
        r.x1 = {fp.x11[unit], static_cast<double>(fp.x12[unit])};
        r.z = {fp.z1[unit], fp.z2[unit], fp.x2_star[unit], fp.x2_dstar[unit],
               fp.x2_tstar[unit]};
        r.x2_oracle = fp.x2[unit];
        rows.push_back(std::move(r));
      }
    }
  }
  return rows;
}

void set_column_names(TwoPhaseDataset& ds) {
  ds.x1_names = {"x1_1", "x1_2"};
  ds.z_names = {"z_1", "z_2", "z_3", "z_4", "z_5"};
}

}  // namespace

TwoPhaseDataset sample_type1(const FinitePopulation& fp, const Type1SampleConfig& config,
                             std::uint64_t seed) {
  if (config.n1 <= 0 || config.stage1_draws <= 0 || config.stage2_draws <= 0)
    throw DataError("sample_type1: sizes must be positive");
  if (!(config.f2 > 0.0 && config.f2 <= 1.0))
    throw DataError("sample_type1: f2 must lie in (0,1]");
  Rng rng(seed);
  const double take_exp = static_cast<double>(config.n1) /
                          (static_cast<double>(config.stage1_draws) * config.stage2_draws);

  TwoPhaseDataset ds;
  ds.design_type = DesignType::TypeI;
  ds.phase2_strata_rule = Phase2StrataRule::Phase1PsuAsStratum;
  ds.fp_size = static_cast<double>(fp.size());
  ds.rows = draw_first_phase(fp, config.stage1_draws, config.stage2_draws, take_exp, "1", rng);
  set_column_names(ds);

  // Second phase: SRS at rate f2, by default within each PSU (the PSUs act
  // as phase-2 strata), with w2 = 1/f2 exactly; the sample size uses
  // randomized rounding so the inclusion probability is exactly f2.
  auto srs_mark = [&](std::vector<std::size_t>& members) {
    const double expected = config.f2 * static_cast<double>(members.size());
    int m = static_cast<int>(std::floor(expected));
    const double frac = expected - std::floor(expected);
    if (frac > 0.0 && rng.bernoulli(frac)) ++m;
    for (int t = 0; t < m; ++t) {
      const auto j =
          t + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(members.size()) - t));
      std::swap(members[static_cast<std::size_t>(t)], members[static_cast<std::size_t>(j)]);
      Row& r = ds.rows[members[static_cast<std::size_t>(t)]];
      r.in_s2 = true;
      r.w2 = 1.0 / config.f2;
      r.x2 = r.x2_oracle;
    }
  };

  if (config.plain_srs_phase2) {
    std::vector<std::size_t> all(ds.rows.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    srs_mark(all);
  } else {
    std::vector<std::size_t> members;
    std::size_t i = 0;
    while (i < ds.rows.size()) {
      members.clear();
      const std::string& psu = ds.rows[i].psu;
      for (; i < ds.rows.size() && ds.rows[i].psu == psu; ++i) members.push_back(i);
      srs_mark(members);
    }
  }
  return ds;
}

TwoPhaseDataset sample_type2(const FinitePopulation& fp, const Type2SampleConfig& config,
                             std::uint64_t seed) {
  if (config.cycles < 1 || config.x2_cycles < 1 || config.x2_cycles > config.cycles)
    throw DataError("sample_type2: need cycles >= x2_cycles >= 1");
  if (!(config.n_per_cycle > 0.0)) throw DataError("sample_type2: n_per_cycle must be positive");
  Rng rng(seed);
  const double take_exp = config.n_per_cycle /
                          (static_cast<double>(config.stage1_draws) * config.stage2_draws);
  const int width = config.cycles >= 100 ? 3 : 2;

  std::vector<CycleSample> cycles;
  std::set<std::string> designated;
  for (int c = 0; c < config.cycles; ++c) {
    CycleSample cycle;
    cycle.label = padded_label("c", c + 1, width);
    cycle.rows = draw_first_phase(fp, config.stage1_draws, config.stage2_draws, take_exp,
                                  "1", rng);
    if (c < config.x2_cycles) designated.insert(cycle.label);
    cycles.push_back(std::move(cycle));
  }

  TwoPhaseDataset ds = combine_cycles(cycles, config.cycles, designated);
  ds.fp_size = static_cast<double>(fp.size());
  set_column_names(ds);
  for (Row& r : ds.rows)
    if (r.in_s2) r.x2 = r.x2_oracle;
  return ds;
}

}  // namespace tpcalib
