#include <doctest.h>

#include <algorithm>

#include "support/corpus.hpp"
#include "tpcalib/data.hpp"
#include "tpcalib/errors.hpp"

using namespace tpcalib;

namespace {

bool has_rule(const ValidationReport& report, const std::string& rule) {
  return std::any_of(report.violations.begin(), report.violations.end(),
                     [&](const Violation& v) { return v.rule == rule; });
}

}  // namespace

TEST_SUITE("datamodel") {

TEST_CASE("well-formed toy dataset validates cleanly") {
  const auto ds = corpus::toy_dataset();
  CHECK(validate(ds).accepted());
}

TEST_CASE("missing phase-2 weight is flagged") {
  auto ds = corpus::toy_dataset();
  ds.rows[0].w2.reset();  // row 0 is in_s2
  const auto report = validate(ds);
  CHECK_FALSE(report.accepted());
  CHECK(has_rule(report, "w2_missing"));
}

TEST_CASE("TypeII rows need cycle labels") {
  auto ds = corpus::toy_dataset();
  ds.design_type = DesignType::TypeII;
  ds.cycles_total = 2;
  ds.cycles_with_x2 = 1;
  const auto report = validate(ds);
  CHECK(has_rule(report, "cycle_required"));
}

TEST_CASE("non-positive weights and non-binary outcomes are flagged") {
  auto ds = corpus::toy_dataset();
  ds.rows[1].w1 = 0.0;
  ds.rows[2].y = 2;
  const auto report = validate(ds);
  CHECK(has_rule(report, "w1_positive"));
  CHECK(has_rule(report, "y_binary"));
}

TEST_CASE("x2 outside the second phase is flagged") {
  auto ds = corpus::toy_dataset();
  ds.rows[1].x2 = 1.0;  // row 1 is not in_s2
  CHECK(has_rule(validate(ds), "x2_unexpected"));
}

TEST_CASE("design frame counts strata, PSUs and df") {
  const auto ds = corpus::toy_dataset();
  const auto frame = design_frame(ds);
  CHECK(frame.total_strata == 2);
  CHECK(frame.total_psus == 4);
  CHECK(frame.df() == 2);
}

TEST_CASE("single stratum with one PSU has no df") {
  TwoPhaseDataset ds;
  ds.x1_names = {"x1_1"};
  ds.z_names = {"z_1"};
  ds.rows.push_back(corpus::make_row("0", "a", "p1", 1.0, false, {}, 0, {0.1}, {0.2}, {}));
  ds.rows.push_back(corpus::make_row("1", "a", "p1", 1.0, false, {}, 1, {0.3}, {0.4}, {}));
  CHECK_THROWS_AS(design_frame(ds), VarianceError);
}

TEST_CASE("combine_cycles implements the weight arithmetic") {
  Row unit = corpus::make_row("7", "s", "p1", 100.0, false, {}, 1, {0.5}, {0.1}, {});

  SUBCASE("two cycles, one designated") {
    Row other = unit;
    other.unit_id = "8";
    const auto ds = combine_cycles({{"c1", {unit}}, {"c2", {other}}}, 2, {"c1"});
    REQUIRE(ds.rows.size() == 2);
    const Row& first = ds.rows[0];
    CHECK(first.w1 == doctest::Approx(50.0));
    CHECK(first.in_s2);
    CHECK(first.weight() == doctest::Approx(100.0));
    CHECK_FALSE(ds.rows[1].in_s2);
  }

  SUBCASE("all cycles designated gives unit phase-2 weights") {
    Row other = unit;
    other.unit_id = "8";
    const auto ds = combine_cycles({{"c1", {unit}}, {"c2", {other}}}, 2, {"c1", "c2"});
    for (const Row& r : ds.rows) {
      CHECK(*r.w2 == doctest::Approx(1.0));
      CHECK(r.weight() == doctest::Approx(r.w1));
    }
  }

  SUBCASE("ten cycles pin down all three weights") {
    Row w40 = unit;
    w40.w1 = 40.0;
    std::vector<CycleSample> cycles;
    for (int c = 0; c < 10; ++c) {
      Row r = w40;
      r.unit_id = std::to_string(c);
      cycles.push_back({"c" + std::to_string(c + 1), {r}});
    }
    const auto ds = combine_cycles(cycles, 10, {"c1"});
    const Row& first = ds.rows[0];
    CHECK(first.w1 == doctest::Approx(4.0));
    CHECK(*first.w2 == doctest::Approx(10.0));
    CHECK(first.weight() == doctest::Approx(40.0));
  }

  SUBCASE("unknown designated label and count mismatch are errors") {
    CHECK_THROWS_AS(combine_cycles({{"c1", {unit}}}, 1, {"zz"}), DataError);
    CHECK_THROWS_AS(combine_cycles({{"c1", {unit}}}, 2, {"c1"}), DataError);
  }
}

TEST_CASE("cycles multiply variance strata") {
  Row unit = corpus::make_row("1", "s", "p1", 10.0, false, {}, 1, {0.5}, {0.1}, {});
  std::vector<CycleSample> cycles;
  for (int c = 0; c < 3; ++c) {
    CycleSample cycle;
    cycle.label = "c" + std::to_string(c + 1);
    for (const char* stratum : {"a", "b", "c", "d"}) {
      for (const char* psu : {"p1", "p2"}) {
        Row r = unit;
        r.unit_id = std::to_string(cycles.size() * 100 + cycle.rows.size());
        r.stratum = stratum;
        r.psu = psu;
        cycle.rows.push_back(r);
      }
    }
    cycles.push_back(std::move(cycle));
  }
  const auto ds = combine_cycles(cycles, 3, {"c1"});
  const auto frame = design_frame(ds);
  CHECK(frame.total_strata == 12);
  CHECK(frame.total_psus == 24);
  CHECK(frame.df() == 12);

  // The phase-2 frame keeps only the designated cycle's strata.
  const auto p2 = phase2_frame(ds);
  CHECK(p2.total_strata == 4);
  CHECK(p2.total_psus == 8);
}

TEST_CASE("weighted counts from both phases are positive and finite") {
  const auto ds = corpus::toy_dataset();
  double s1 = 0.0, s2 = 0.0;
  for (const Row& r : ds.rows) {
    s1 += r.w1;
    if (r.in_s2) s2 += r.weight();
  }
  CHECK(s1 > 0.0);
  CHECK(s2 > 0.0);
  CHECK(std::isfinite(s1));
  CHECK(std::isfinite(s2));
  CHECK(ds.n_scale() == doctest::Approx(s1));  // no fp_size on the toy data
}

}  // TEST_SUITE
