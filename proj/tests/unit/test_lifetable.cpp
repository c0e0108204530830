#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "synthetic.hpp"

#include "lmemort/error.hpp"
#include "lmemort/lifetable.hpp"

using namespace lmemort;

namespace {

AgeSeries constant(const AgeGrid& grid, double m) {
  AgeSeries r;
  for (const auto& g : grid) r[g.lower] = m;
  return r;
}

AgeSeries gompertz_rates(const AgeGrid& grid) {
  AgeSeries r;
  for (const auto& g : grid) r[g.lower] = std::exp(synthetic::gompertz("AAA", Gender::Female, g.lower, 2000));
  return r;
}

}  // namespace

TEST_CASE("constant hazard matches the exponential-lifetime oracle") {
  const auto grid = AgeGrid::single_year(0, 110);
  REQUIRE(grid[grid.size() - 1].open());
  const auto t = build_life_table(constant(grid, 0.01), grid);
  CHECK(std::abs(t.e0() - oracle::exponential_lifetime(0.01)) < 0.5);
  CHECK(oracle::exponential_lifetime(0.01) == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("table identities") {
  const auto grid = AgeGrid::hmd_5x1(0, 110);
  const auto rates = gompertz_rates(grid);
  const auto t = build_life_table(rates, grid);
  REQUIRE(t.rows.size() == grid.size());
  CHECK(t.rows.front().l == 100000.0);
  for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
    CHECK(t.rows[i + 1].l == t.rows[i].l * (1.0 - t.rows[i].q));
    CHECK(t.rows[i].q >= 0.0);
    CHECK(t.rows[i].q <= 1.0);
    CHECK(t.rows[i + 1].l <= t.rows[i].l);
  }
  CHECK(t.rows.back().q == 1.0);
  CHECK(t.rows.back().e == 1.0 / t.rows.back().m);
  for (const auto& r : t.rows) CHECK(r.e >= 0.0);

  // m recovered from q under the same convention rebuilds the same q.
  AgeSeries back;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const double n = r.age.width.value_or(1);
    back[r.age.lower] = i + 1 == t.rows.size() ? r.m : r.q / (n * (1.0 - 0.5 * r.q));
  }
  const auto t2 = build_life_table(back, grid);
  for (std::size_t i = 0; i < t.rows.size(); ++i) CHECK(std::abs(t2.rows[i].q - t.rows[i].q) < 1e-12);
}

TEST_CASE("very high infant mortality leaves half a year") {
  const auto grid = AgeGrid::single_year(0, 110);
  auto rates = constant(grid, 0.01);
  rates[0] = 1e12;
  const auto t = build_life_table(rates, grid);
  CHECK(t.rows[0].q == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(t.e0() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("raising one rate never raises expectancy at younger ages") {
  const auto grid = AgeGrid::hmd_5x1(0, 110);
  const auto base = gompertz_rates(grid);
  const auto t0 = build_life_table(base, grid);
  for (const auto& g : grid) {
    auto bumped = base;
    bumped[g.lower] *= 1.5;
    const auto t1 = build_life_table(bumped, grid);
    for (std::size_t i = 0; i < grid.size() && grid[i].lower <= g.lower; ++i)
      CHECK(t1.rows[i].e <= t0.rows[i].e);
  }
}

TEST_CASE("invalid rates are rejected") {
  const auto grid = AgeGrid::hmd_5x1(0, 20);
  auto rates = constant(grid, 0.01);
  rates[5] = 0.0;
  CHECK_THROWS_AS(build_life_table(rates, grid), ValidationError);
  rates.erase(5);
  CHECK_THROWS_AS(build_life_table(rates, grid), ValidationError);
}

TEST_CASE("expectancy bands follow the rate bands") {
  const auto grid = AgeGrid::hmd_5x1(0, 110);
  const Population pop{"AAA", Gender::Female};
  RateForecast degenerate, banded;
  for (int year = 2011; year <= 2019; ++year)
    for (const auto& g : grid) {
      const double y = synthetic::gompertz("AAA", Gender::Female, g.lower, year);
      const double w = 0.02 * (year - 2010);
      degenerate.cells[{pop.country, pop.gender, g.lower, year}] = {y, y, y, 0.0};
      banded.cells[{pop.country, pop.gender, g.lower, year}] = {y, y - w, y + w, 0.95};
    }
  const auto flat = life_expectancy_series(degenerate, pop, grid);
  REQUIRE(flat.size() == 9);
  for (const auto& [y, p] : flat) {
    CHECK(p.lower == p.point);
    CHECK(p.upper == p.point);
  }
  const auto bands = life_expectancy_series(banded, pop, grid);
  double prev = 0.0;
  for (const auto& [y, p] : bands) {
    CHECK(p.lower <= p.point);
    CHECK(p.point <= p.upper);
    CHECK(p.point == flat.at(y).point);
    CHECK(p.upper - p.lower > prev);
    prev = p.upper - p.lower;
  }
  // Falling rates lengthen life.
  CHECK(bands.at(2019).point > bands.at(2011).point);
  CHECK_THROWS_AS(life_expectancy_series(banded, {"BBB", Gender::Male}, grid), ValidationError);
}

TEST_CASE("panel rates and CSV output") {
  const auto grid = AgeGrid::hmd_5x1(0, 10);
  const auto panel = synthetic::panel({"AAA"}, grid, {2000, 2001}, synthetic::gompertz);
  const auto rates = rates_for(panel, {"AAA", Gender::Male}, 2001);
  CHECK(rates.at(5) == doctest::Approx(std::exp(synthetic::gompertz("AAA", Gender::Male, 5, 2001))));
  CHECK_THROWS_AS(rates_for(panel, {"AAA", Gender::Male}, 1999), ValidationError);

  const auto t = build_life_table(constant(grid, 0.5), grid);
  std::ostringstream out;
  write_life_table_csv(out, t);
  CHECK(out.str().rfind("age_lower,m,q,l,e\n0,0.5,0.4,1e+05,2\n1,0.5,1,60000,2\n", 0) == 0);
  std::ostringstream es;
  write_expectancy_csv(es, {{2011, {80.5, 79.25, 81}}});
  CHECK(es.str() == "year,point,lower,upper\n2011,80.5,79.25,81\n");
}
