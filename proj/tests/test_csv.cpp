#include <doctest.h>

#include <sstream>

#include "support/corpus.hpp"
#include "tpcalib/csv.hpp"
#include "tpcalib/errors.hpp"

using namespace tpcalib;

TEST_SUITE("csv") {

TEST_CASE("write/read round trip is value-exact") {
  const auto ds = corpus::toy_dataset();
  std::stringstream buf;
  write_dataset_csv(buf, ds);
  const auto back = read_dataset_csv(buf, DesignType::TypeI);
  REQUIRE(back.rows.size() == ds.rows.size());
  for (std::size_t i = 0; i < ds.rows.size(); ++i) {
    CHECK(back.rows[i].unit_id == ds.rows[i].unit_id);
    CHECK(back.rows[i].w1 == ds.rows[i].w1);
    CHECK(back.rows[i].in_s2 == ds.rows[i].in_s2);
    CHECK(back.rows[i].x1[0] == ds.rows[i].x1[0]);
    CHECK(back.rows[i].z[0] == ds.rows[i].z[0]);
    if (ds.rows[i].x2) CHECK(*back.rows[i].x2 == *ds.rows[i].x2);
    if (ds.rows[i].x2_oracle) CHECK(*back.rows[i].x2_oracle == *ds.rows[i].x2_oracle);
  }
}

TEST_CASE("header is required and order-free") {
  std::stringstream no_header("a,b,c\n");
  CHECK_THROWS_AS(read_dataset_csv(no_header, DesignType::TypeI), DataError);

  std::stringstream shuffled(
      "y,x2,w2,in_s2,w1,cycle,psu,stratum,unit_id,x1_1,z_1\n"
      "1,0.5,2,1,1.5,,p1,a,u1,0.3,0.7\n");
  const auto ds = read_dataset_csv(shuffled, DesignType::TypeI);
  REQUIRE(ds.rows.size() == 1);
  CHECK(ds.rows[0].unit_id == "u1");
  CHECK(ds.rows[0].w1 == 1.5);
  CHECK(*ds.rows[0].x2 == 0.5);
}

TEST_CASE("empty and NA mark x2 as absent; other junk is an error") {
  std::stringstream ok(
      "unit_id,stratum,psu,cycle,w1,in_s2,w2,y,x1_1,z_1,x2\n"
      "u1,a,p1,,1,0,,0,0.1,0.2,\n"
      "u2,a,p1,,1,0,,1,0.1,0.2,NA\n");
  const auto ds = read_dataset_csv(ok, DesignType::TypeI);
  CHECK_FALSE(ds.rows[0].x2.has_value());
  CHECK_FALSE(ds.rows[1].x2.has_value());

  std::stringstream junk(
      "unit_id,stratum,psu,cycle,w1,in_s2,w2,y,x1_1,z_1,x2\n"
      "u1,a,p1,,1,0,,0,0.1,0.2,oops\n");
  CHECK_THROWS_AS(read_dataset_csv(junk, DesignType::TypeI), DataError);
}

TEST_CASE("in_s2 must be exactly 0 or 1") {
  std::stringstream bad(
      "unit_id,stratum,psu,cycle,w1,in_s2,w2,y,x1_1,z_1,x2\n"
      "u1,a,p1,,1,yes,,0,0.1,0.2,\n");
  CHECK_THROWS_AS(read_dataset_csv(bad, DesignType::TypeI), DataError);
}

TEST_CASE("validation report serializes one JSON object per violation") {
  auto ds = corpus::toy_dataset();
  ds.rows[0].w2.reset();
  ds.rows[3].w1 = -1.0;
  const auto report = validate(ds);
  const std::string jsonl = report_to_jsonl(report);
  const auto lines = std::count(jsonl.begin(), jsonl.end(), '\n');
  CHECK(lines == static_cast<long>(report.violations.size()));
  CHECK(jsonl.find("\"rule\":\"w2_missing\"") != std::string::npos);
  CHECK(jsonl.find("\"row\":0") != std::string::npos);
}

}  // TEST_SUITE
