#include "lmemort/lifetable.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"

namespace lmemort {

const LifeTableRow& LifeTable::at(int age_lower) const {
  for (const auto& r : rows)
    if (r.age.lower == age_lower) return r;
  throw ValidationError("life table has no age group starting at " + std::to_string(age_lower));
}

LifeTable build_life_table(const AgeSeries& rates, const AgeGrid& grid, double radix) {
  if (grid.size() == 0) throw ValidationError("life table needs a non-empty age grid");
  if (!(radix > 0.0)) throw ValidationError("life table radix must be positive");
  LifeTable t;
  double l = radix;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    auto it = rates.find(g.lower);
    if (it == rates.end()) throw ValidationError("no death rate for age group " + g.label());
    const double m = it->second;
    if (!(m > 0.0) || !std::isfinite(m))
      throw ValidationError("death rate for age group " + g.label() + " must be positive and finite");
    LifeTableRow row{g, m, 1.0, l, 0.0, 0.0};
    if (i + 1 == grid.size()) {
      row.L = l / m;
    } else {
      const double n = g.width.value_or(1);
      row.q = std::min(1.0, n * m / (1.0 + 0.5 * n * m));
      const double next = l * (1.0 - row.q);
      row.L = 0.5 * n * (l + next);
      l = next;
    }
    t.rows.push_back(row);
  }
  double T = 0.0;
  for (auto it = t.rows.rbegin(); it != t.rows.rend(); ++it) {
    T += it->L;
    it->e = it == t.rows.rbegin() ? 1.0 / it->m : (it->l > 0.0 ? T / it->l : 0.0);
  }
  return t;
}

AgeSeries rates_for(const RateForecast& forecast, const Population& pop, int year,
                    const AgeGrid& grid, Band band) {
  AgeSeries out;
  for (const auto& g : grid) {
    const auto& c = forecast.at({pop.country, pop.gender, g.lower, year});
    out[g.lower] = std::exp(band == Band::Point ? c.point : band == Band::Lower ? c.lower : c.upper);
  }
  return out;
}

AgeSeries rates_for(const MortalityPanel& panel, const Population& pop, int year) {
  AgeSeries out;
  for (const auto& g : panel.age_grid()) {
    const PanelKey key{pop.country, pop.gender, g.lower, year};
    const auto v = panel.find(key);
    if (!v) throw ValidationError("panel has no cell " + to_string(key));
    out[g.lower] = std::exp(*v);
  }
  return out;
}

ExpectancySeries life_expectancy_series(const RateForecast& forecast, const Population& pop,
                                        const AgeGrid& grid) {
  ExpectancySeries out;
  for (int year : forecast.years()) {
    auto e0 = [&](Band b) { return build_life_table(rates_for(forecast, pop, year, grid, b), grid).e0(); };
    out[year] = {e0(Band::Point), e0(Band::Upper), e0(Band::Lower)};
  }
  return out;
}

void write_life_table_csv(std::ostream& out, const LifeTable& table) {
  out << "age_lower,m,q,l,e\n";
  for (const auto& r : table.rows)
    out << r.age.lower << ',' << csv::format_double(r.m) << ',' << csv::format_double(r.q) << ','
        << csv::format_double(r.l) << ',' << csv::format_double(r.e) << '\n';
}

void write_expectancy_csv(std::ostream& out, const ExpectancySeries& series) {
  out << "year,point,lower,upper\n";
  for (const auto& [y, p] : series)
    out << y << ',' << csv::format_double(p.point) << ',' << csv::format_double(p.lower) << ','
        << csv::format_double(p.upper) << '\n';
}

}  // namespace lmemort
