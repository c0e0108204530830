#include "lmemort/covariates.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"
#include "lmemort/random.hpp"

namespace lmemort {
namespace {

void check_split(const AgeGrid& grid, int split_age) {
  for (const auto& g : grid) {
    const bool interior = g.open() ? split_age > g.lower
                                   : (split_age > g.lower && split_age < g.last_age());
    if (interior)
      throw ValidationError("split age " + std::to_string(split_age) + " falls inside age group " +
                            g.label());
  }
}

}  // namespace

SegmentedSeries country_covariate(const MortalityPanel& panel, const std::string& country,
                                  int split_age) {
  const auto& grid = panel.age_grid();
  check_split(grid, split_age);
  std::size_t n_young = 0;
  for (const auto& g : grid) n_young += g.lower <= split_age ? 1 : 0;
  const std::size_t n_old = grid.size() - n_young;
  if (n_young == 0 || n_old == 0)
    throw ValidationError("split age " + std::to_string(split_age) +
                          " leaves an empty age segment");

  SegmentedSeries out{country, split_age, {}, {}};
  std::map<int, std::pair<double, std::size_t>> young, old;
  for (const auto& r : panel.records()) {
    if (r.country != country) continue;
    auto& acc = (r.age.lower <= split_age ? young : old)[r.year];
    acc.first += r.log_rate;
    acc.second += 1;
  }
  if (young.empty()) throw ValidationError("country " + country + " not in panel");
  for (int t = panel.years().first; t <= panel.years().last; ++t) {
    const auto& y = young[t];
    const auto& o = old[t];
    if (y.second != 2 * n_young || o.second != 2 * n_old)
      throw ValidationError("country " + country + " lacks both genders on the full grid in " +
                            std::to_string(t));
    out.young[t] = y.first / static_cast<double>(y.second);
    out.old[t] = o.first / static_cast<double>(o.second);
  }
  return out;
}

GlobalSeries global_covariate(const MortalityPanel& panel) {
  if (!panel.is_rectangular()) throw ValidationError("global covariate needs a rectangular panel");
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& r : panel.records()) {
    auto& a = acc[r.year];
    a.first += r.log_rate;
    a.second += 1;
  }
  GlobalSeries out;
  for (const auto& [t, a] : acc) out.values[t] = a.first / static_cast<double>(a.second);
  return out;
}

RandomWalkModel fit_rwd(const YearSeries& series) {
  if (series.size() < 3) throw ValidationError("random walk fit needs at least 3 points");
  const int first_year = series.begin()->first;
  const int last_year = series.rbegin()->first;
  if (last_year - first_year + 1 != static_cast<int>(series.size()))
    throw ValidationError("random walk fit needs contiguous years");
  std::vector<double> diffs;
  for (auto it = std::next(series.begin()); it != series.end(); ++it)
    diffs.push_back(it->second - std::prev(it)->second);
  const double n = static_cast<double>(diffs.size());
  const double drift = (series.rbegin()->second - series.begin()->second) / n;
  double ss = 0.0;
  for (double d : diffs) ss += (d - drift) * (d - drift);
  return {drift, ss / (n - 1.0), last_year, series.rbegin()->second};
}

double rwd_point(const RandomWalkModel& model, int h) {
  return model.last_value + h * model.drift;
}

YearSeries forecast_rwd(const RandomWalkModel& model, int horizon) {
  YearSeries out;
  for (int h = 1; h <= horizon; ++h) out[model.last_year + h] = rwd_point(model, h);
  return out;
}

Eigen::MatrixXd simulate_rwd(const RandomWalkModel& model, int horizon, int n_paths,
                             std::uint64_t seed, SeedStream stream) {
  if (n_paths < 1 || horizon < 0) throw ValidationError("simulate_rwd: bad dimensions");
  Eigen::MatrixXd paths(n_paths, horizon);
  const double sd = std::sqrt(std::max(model.innovation_variance, 0.0));
  for (int p = 0; p < n_paths; ++p) {
    auto engine = make_engine(seed, stream, static_cast<std::uint64_t>(p));
    std::normal_distribution<double> z;
    double value = model.last_value;
    for (int h = 0; h < horizon; ++h) {
      value += model.drift + (sd > 0.0 ? sd * z(engine) : 0.0);
      paths(p, h) = value;
    }
  }
  return paths;
}

double CovariateSet::kt(int year) const {
  auto it = global.values.find(year);
  if (it == global.values.end())
    throw ValidationError("no k_t value for year " + std::to_string(year));
  return it->second;
}

double CovariateSet::kct(const std::string& country, int year, int age_lower) const {
  auto c = countries.find(country);
  if (c == countries.end()) throw ValidationError("no k_ct series for country " + country);
  const auto& seg = age_lower <= c->second.split_age ? c->second.young : c->second.old;
  auto it = seg.find(year);
  if (it == seg.end())
    throw ValidationError("no k_ct value for " + country + " in " + std::to_string(year));
  return it->second;
}

double CovariateSet::extra_value(const std::string& name, const std::string& country,
                                 int year) const {
  auto e = extra.find(name);
  if (e == extra.end()) throw ValidationError("unknown covariate '" + name + "'");
  auto it = e->second.find({country, year});
  if (it == e->second.end())
    throw ValidationError("covariate '" + name + "' has no value for " + country + " in " +
                          std::to_string(year));
  return it->second;
}

CovariateSet compute_covariates(const MortalityPanel& panel, int split_age, bool segmented) {
  CovariateSet set;
  set.split_age = split_age;
  set.global = global_covariate(panel);
  if (segmented)
    for (const auto& c : panel.countries())
      set.countries.emplace(c, country_covariate(panel, c, split_age));
  return set;
}

CovariateWalks fit_walks(const CovariateSet& observed) {
  CovariateWalks w;
  w.global = fit_rwd(observed.global.values);
  for (const auto& [c, s] : observed.countries)
    w.countries.emplace(c, std::make_pair(fit_rwd(s.young), fit_rwd(s.old)));
  return w;
}

CovariateSet extend_with_forecast(const CovariateSet& observed, const CovariateWalks& walks,
                                  int through_year) {
  CovariateSet out = observed;
  auto extend = [&](YearSeries& series, const RandomWalkModel& m) {
    for (int t = m.last_year + 1; t <= through_year; ++t)
      series[t] = rwd_point(m, t - m.last_year);
  };
  extend(out.global.values, walks.global);
  for (auto& [c, s] : out.countries) {
    auto it = walks.countries.find(c);
    if (it == walks.countries.end()) throw ValidationError("no random walk for country " + c);
    extend(s.young, it->second.first);
    extend(s.old, it->second.second);
  }
  return out;
}

void write_covariates_csv(std::ostream& out, const CovariateSet& set) {
  out << "country,segment,year,value\n";
  for (const auto& [t, v] : set.global.values)
    out << "ALL,all," << t << ',' << csv::format_double(v) << '\n';
  for (const auto& [c, s] : set.countries) {
    for (const auto& [t, v] : s.young) out << c << ",young," << t << ',' << csv::format_double(v) << '\n';
    for (const auto& [t, v] : s.old) out << c << ",old," << t << ',' << csv::format_double(v) << '\n';
  }
}

CovariateSet read_covariates_csv(std::istream& in, int split_age) {
  const auto t = csv::read(in);
  const auto cc = t.column("country"), cs = t.column("segment"), cy = t.column("year"),
             cv = t.column("value");
  CovariateSet set;
  set.split_age = split_age;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long ln = t.line_numbers[i];
    const int year = csv::to_int(row[cy], ln);
    const double v = csv::to_double(row[cv], ln);
    if (row[cs] == "all") {
      set.global.values[year] = v;
      continue;
    }
    auto& s = set.countries[row[cc]];
    s.country = row[cc];
    s.split_age = split_age;
    if (row[cs] == "young")
      s.young[year] = v;
    else if (row[cs] == "old")
      s.old[year] = v;
    else
      throw ParseError("unknown segment '" + row[cs] + "'", ln);
  }
  return set;
}

void read_extra_covariates_csv(std::istream& in, CovariateSet& set) {
  const auto t = csv::read(in);
  const auto cn = t.column("name"), cc = t.column("country"), cy = t.column("year"),
             cv = t.column("value");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long ln = t.line_numbers[i];
    set.extra[row[cn]][{row[cc], csv::to_int(row[cy], ln)}] = csv::to_double(row[cv], ln);
  }
}

}  // namespace lmemort
