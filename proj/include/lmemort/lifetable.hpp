#pragma once

#include <iosfwd>
#include <map>
#include <vector>

#include "lmemort/benchmarks.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/projection.hpp"

namespace lmemort {

struct LifeTableRow {
  AgeGroup age;
  double m = 0.0;  // central death rate
  double q = 0.0;  // probability of dying in the group
  double l = 0.0;  // survivors at the start of the group
  double L = 0.0;  // person-years lived in the group
  double e = 0.0;  // remaining expectancy at the start of the group
};

struct LifeTable {
  std::vector<LifeTableRow> rows;

  double e0() const { return rows.front().e; }
  const LifeTableRow& at(int age_lower) const;
};

// Period table from natural-scale rates, half the interval lived by those who
// die in a closed group. The last group of the grid closes the table (q = 1,
// L = l / m) whether or not it is open-ended. A q above 1 is capped.
LifeTable build_life_table(const AgeSeries& rates, const AgeGrid& grid, double radix = 100000.0);

enum class Band { Point, Lower, Upper };

// exp(log rate) for one population-year; throws when a group is missing.
AgeSeries rates_for(const RateForecast& forecast, const Population& pop, int year, const AgeGrid& grid,
                    Band band = Band::Point);
AgeSeries rates_for(const MortalityPanel& panel, const Population& pop, int year);

struct ExpectancyPoint {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

using ExpectancySeries = std::map<int, ExpectancyPoint>;

// Expectancy at the grid's first age for every forecast year. The lower band
// comes from the upper rate surface and the upper band from the lower one.
ExpectancySeries life_expectancy_series(const RateForecast& forecast, const Population& pop,
                                        const AgeGrid& grid);

// CSV columns: age_lower,m,q,l,e
void write_life_table_csv(std::ostream& out, const LifeTable& table);
// CSV columns: year,point,lower,upper
void write_expectancy_csv(std::ostream& out, const ExpectancySeries& series);

}  // namespace lmemort
