#include "tpcalib/data.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "tpcalib/errors.hpp"

namespace tpcalib {

double Row::weight() const {
  if (!in_s2 || !w2) throw std::logic_error("Row::weight: combined weight requires in_s2");
  return w1 * *w2;
}

std::size_t TwoPhaseDataset::n2() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const Row& r) { return r.in_s2; }));
}

std::vector<std::size_t> TwoPhaseDataset::s2_indices() const {
  std::vector<std::size_t> idx;
  idx.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].in_s2) idx.push_back(i);
  return idx;
}

double TwoPhaseDataset::sum_w1() const {
  double s = 0.0;
  for (const Row& r : rows) s += r.w1;
  return s;
}

double TwoPhaseDataset::n_scale() const {
  if (fp_size) return *fp_size;
  return sum_w1();
}

std::string TwoPhaseDataset::variance_stratum(const Row& r) const {
  if (design_type == DesignType::TypeII && r.cycle) return *r.cycle + ":" + r.stratum;
  return r.stratum;
}

std::set<std::string> TwoPhaseDataset::designated_cycles() const {
  std::set<std::string> out;
  for (const Row& r : rows)
    if (r.in_s2 && r.cycle) out.insert(*r.cycle);
  return out;
}

ValidationReport validate(const TwoPhaseDataset& ds) {
  ValidationReport report;
  auto flag = [&](std::ptrdiff_t row, const char* rule, std::string msg) {
    report.violations.push_back({row, rule, std::move(msg)});
  };

  const std::size_t p1 = ds.x1_names.size();
  const std::size_t q = ds.z_names.size();

  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    const Row& r = ds.rows[i];
    const auto ri = static_cast<std::ptrdiff_t>(i);
    if (!(r.w1 > 0.0)) flag(ri, "w1_positive", "phase-1 weight must be positive");
    if (r.in_s2) {
      if (!r.w2)
        flag(ri, "w2_missing", "missing phase-2 weight");
      else if (!(*r.w2 > 0.0))
        flag(ri, "w2_positive", "phase-2 weight must be positive");
      if (!r.x2) flag(ri, "x2_missing", "x2 required for second-phase rows");
    } else {
      if (r.w2) flag(ri, "w2_unexpected", "phase-2 weight defined outside s2");
      if (r.x2) flag(ri, "x2_unexpected", "x2 observed outside s2");
    }
    if (r.y != 0 && r.y != 1) flag(ri, "y_binary", "outcome must be 0 or 1");
    if (r.x1.size() != p1) flag(ri, "x1_length", "x1 vector length mismatch");
    if (r.z.size() != q) flag(ri, "z_length", "z vector length mismatch");
    if (ds.design_type == DesignType::TypeII && !r.cycle)
      flag(ri, "cycle_required", "cycle required for TypeII");
    if (r.stratum.empty()) flag(ri, "stratum_label", "empty stratum label");
    if (r.psu.empty()) flag(ri, "psu_label", "empty PSU label");
  }

  if (ds.design_type == DesignType::TypeII) {
    const int c = ds.cycles_total.value_or(0);
    const int b = ds.cycles_with_x2.value_or(0);
    if (!(c >= b && b >= 1))
      flag(-1, "cycle_counts", "TypeII requires cycles_total >= cycles_with_x2 >= 1");

    // Membership in s2 must coincide with membership in the designated cycles.
    std::map<std::string, std::pair<bool, bool>> cycle_seen;  // cycle -> (any s2, any s1-only)
    for (const Row& r : ds.rows) {
      if (!r.cycle) continue;
      auto& e = cycle_seen[*r.cycle];
      (r.in_s2 ? e.first : e.second) = true;
    }
    int designated = 0;
    for (const auto& [label, seen] : cycle_seen) {
      if (seen.first && seen.second)
        flag(-1, "cycle_s2_consistency",
             "cycle '" + label + "' mixes second-phase and non-second-phase rows");
      if (seen.first) ++designated;
    }
    if (b >= 1 && designated != b && !ds.rows.empty())
      flag(-1, "cycle_s2_count",
           "number of cycles containing s2 rows (" + std::to_string(designated) +
               ") differs from cycles_with_x2 (" + std::to_string(b) + ")");
    if (c > 0 && !ds.rows.empty() && static_cast<int>(cycle_seen.size()) != c)
      flag(-1, "cycle_total_count",
           "distinct cycle labels (" + std::to_string(cycle_seen.size()) +
               ") differ from cycles_total (" + std::to_string(c) + ")");
  }

  if (!ds.rows.empty() && !(ds.sum_w1() > 0.0))
    flag(-1, "nhat_positive", "sum of phase-1 weights must be positive");
  if (ds.fp_size && !(*ds.fp_size > 0.0))
    flag(-1, "fp_size_positive", "fp_size must be positive when supplied");

  return report;
}

namespace {

DesignFrame build_frame(const TwoPhaseDataset& ds,
                        const std::set<std::string>* cycle_filter) {
  std::map<std::string, std::set<std::string>> psus_by_stratum;
  for (const Row& r : ds.rows) {
    if (cycle_filter && (!r.cycle || !cycle_filter->count(*r.cycle))) continue;
    psus_by_stratum[ds.variance_stratum(r)].insert(r.psu);
  }
  DesignFrame frame;
  for (const auto& [label, psus] : psus_by_stratum) {
    if (psus.empty()) throw VarianceError("stratum '" + label + "' has no PSUs");
    StratumInfo info;
    info.label = label;
    info.psus.assign(psus.begin(), psus.end());
    frame.total_psus += static_cast<int>(psus.size());
    frame.strata.push_back(std::move(info));
  }
  frame.total_strata = static_cast<int>(frame.strata.size());
  if (frame.df() < 1)
    throw VarianceError("design degrees of freedom " + std::to_string(frame.df()) +
                        " < 1 (PSUs=" + std::to_string(frame.total_psus) +
                        ", strata=" + std::to_string(frame.total_strata) + ")");
  return frame;
}

}  // namespace

DesignFrame design_frame(const TwoPhaseDataset& ds) { return build_frame(ds, nullptr); }

DesignFrame phase2_frame(const TwoPhaseDataset& ds) {
  if (ds.design_type == DesignType::TypeII) {
    const auto designated = ds.designated_cycles();
    return build_frame(ds, &designated);
  }
  return build_frame(ds, nullptr);
}

TwoPhaseDataset combine_cycles(const std::vector<CycleSample>& cycles, int c_total,
                               const std::set<std::string>& designated) {
  if (static_cast<int>(cycles.size()) != c_total)
    throw DataError("combine_cycles: got " + std::to_string(cycles.size()) +
                    " cycle samples but cycles_total = " + std::to_string(c_total));
  std::set<std::string> supplied;
  for (const auto& c : cycles) supplied.insert(c.label);
  if (supplied.size() != cycles.size())
    throw DataError("combine_cycles: duplicate cycle labels");
  for (const auto& d : designated)
    if (!supplied.count(d))
      throw DataError("combine_cycles: unknown designated cycle label '" + d + "'");
  if (designated.empty()) throw DataError("combine_cycles: no designated cycles");

  const double c = static_cast<double>(c_total);
  const double b = static_cast<double>(designated.size());

  TwoPhaseDataset ds;
  ds.design_type = DesignType::TypeII;
  ds.phase2_strata_rule = Phase2StrataRule::CycleSubset;
  ds.cycles_total = c_total;
  ds.cycles_with_x2 = static_cast<int>(designated.size());
  for (const auto& cycle : cycles) {
    const bool in_s2 = designated.count(cycle.label) > 0;
    for (Row r : cycle.rows) {
      r.cycle = cycle.label;
      r.w1 /= c;  // per-cycle weight w^(c) -> combined first-phase weight
      r.in_s2 = in_s2;
      if (in_s2)
        r.w2 = c / b;  // combined weight w^(k)/B
      else
        r.w2.reset();
      ds.rows.push_back(std::move(r));
    }
  }
  if (!ds.rows.empty()) {
    ds.x1_names.assign(ds.rows.front().x1.size(), "");
    ds.z_names.assign(ds.rows.front().z.size(), "");
    for (std::size_t j = 0; j < ds.x1_names.size(); ++j)
      ds.x1_names[j] = "x1_" + std::to_string(j + 1);
    for (std::size_t j = 0; j < ds.z_names.size(); ++j)
      ds.z_names[j] = "z_" + std::to_string(j + 1);
  }
  return ds;
}

}  // namespace tpcalib
