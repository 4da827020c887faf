#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sae/error.hpp"
#include "sae/estimate_table.hpp"

using namespace sae;

namespace {

const RegionGraph& path3() {
  static const RegionGraph g = RegionGraph::from_edge_list("a b\nb c");
  return g;
}

DirectEstimateTable parse(const std::string& text, CsvOptions opts = {}) {
  std::istringstream in(text);
  return read_estimate_csv(in, path3(), opts);
}

ErrorKind kind_of(const std::string& text, CsvOptions opts = {}) {
  try {
    parse(text, opts);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("rows are aligned to the graph and an intercept is added") {
  const DirectEstimateTable t = parse(
      "region_id,y_inc,se_inc,y_pov,se_pov,x_age\n"
      "c,3,0.3,30,3,1.5\n"
      "a,1,0.1,,,0.5\n"
      "b,2,0.2,20,2,-1\n");
  CHECK(t.responses == std::vector<std::string>{"inc", "pov"});
  CHECK(t.covariates == std::vector<std::string>{"intercept", "age"});
  CHECK(t.y(0, 0) == 1.0);
  CHECK(t.y(2, 1) == 30.0);
  CHECK(t.gamma(1, 0) == 0.2);
  CHECK(std::isnan(t.y(0, 1)));
  CHECK(std::isnan(t.gamma(0, 1)));
  CHECK_FALSE(t.observed(0, 1));
  CHECK(t.observed(0, 0));
  CHECK(t.n_observed() == 5);
  CHECK(t.x(2, 0) == 1.0);
  CHECK(t.x(2, 1) == 1.5);
}

TEST_CASE("margins of error and the log transform") {
  const DirectEstimateTable t = parse(
      "region_id,y_v,moe_v\n"
      "a,100,16.448536269514722\n"
      "b,100,16.448536269514722\n"
      "c,100,16.448536269514722\n",
      {.moe_level = 0.90, .log_transform = true});
  CHECK(t.y(0, 0) == doctest::Approx(std::log(100.0)));
  CHECK(t.gamma(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("schema errors") {
  CHECK(kind_of("id,y_v,se_v\na,1,1\n") == ErrorKind::Parse);
  CHECK(kind_of("region_id,y_v\na,1\nb,1\nc,1\n") == ErrorKind::Parse);
  CHECK(kind_of("region_id,y_v,se_v,moe_v\na,1,1,1\n") == ErrorKind::Parse);
  CHECK(kind_of("region_id,y_v,se_v\na,1,1\nb,1,1\n") == ErrorKind::ShapeMismatch);
  CHECK(kind_of("region_id,y_v,se_v\na,1,1\nb,1,1\nc,1,1\nz,1,1\n") == ErrorKind::Parse);
  CHECK(kind_of("region_id,y_v,se_v\na,1,1\nb,1,\nc,1,1\n") == ErrorKind::ShapeMismatch);
  CHECK(kind_of("region_id,y_v,se_v\na,1,1\nb,1,0\nc,1,1\n") == ErrorKind::NonPositiveScale);
  CHECK(kind_of("region_id,y_v,se_v\na,1,1\na,1,1\nc,1,1\n") == ErrorKind::Parse);
  CHECK(kind_of("region_id,y_v,se_v\na,-1,1\nb,1,1\nc,1,1\n", {.log_transform = true}) == ErrorKind::NonPositiveEstimate);
  CHECK(kind_of("region_id,y_v,se_v,x_u,x_w\na,1,1,1,2\nb,1,1,2,4\nc,1,1,3,6\n") == ErrorKind::SingularDesign);
}

TEST_CASE("unknown regions can be skipped") {
  CHECK_NOTHROW(parse("region_id,y_v,se_v\na,1,1\nb,1,1\nc,1,1\nz,1,1\n", {.skip_unknown_regions = true}));
}

TEST_CASE("quoted fields") {
  CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(split_csv_line("\"x\"\"y\",") == std::vector<std::string>{"x\"y", ""});
}

TEST_CASE("write then read round-trips") {
  const DirectEstimateTable t = parse(
      "region_id,y_inc,se_inc,x_age\n"
      "a,1.25,0.1,0.5\n"
      "b,,,0.25\n"
      "c,3.0000000000000004,0.3,1.5\n");
  std::ostringstream out;
  write_estimate_csv(out, t);
  const DirectEstimateTable back = parse(out.str());
  CHECK(back.covariates == t.covariates);
  CHECK(back.x == t.x);
  CHECK(back.y(2, 0) == t.y(2, 0));
  CHECK(std::isnan(back.y(1, 0)));
  CHECK(back.gamma(0, 0) == t.gamma(0, 0));
}
