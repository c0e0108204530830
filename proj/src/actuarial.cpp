#include "lmemort/actuarial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"
#include "lmemort/random.hpp"

namespace lmemort {
namespace {

std::string cell_name(const SurfaceCell& c) {
  return std::string(1, gender_code(c.gender)) + " age " + std::to_string(c.age) + " in " +
         std::to_string(c.year);
}

double one_year_q(double m) { return std::min(1.0, m / (1.0 + 0.5 * m)); }

// Value of `path` in `year`, falling back to observed history.
double series_value(const YearSeries& path, const YearSeries& history, int year) {
  if (auto it = path.find(year); it != path.end()) return it->second;
  if (auto it = history.find(year); it != history.end()) return it->second;
  throw ValidationError("no index value for year " + std::to_string(year));
}

int last_year_needed(const std::vector<SurfaceCell>& cells) {
  int last = 0;
  for (const auto& c : cells) last = std::max(last, c.year);
  return last;
}

}  // namespace

std::string to_string(LegType t) {
  switch (t) {
    case LegType::Premium: return "premium";
    case LegType::Annuity: return "annuity";
    case LegType::Both: return "both";
  }
  return "both";
}

LegType parse_leg_type(const std::string& s) {
  if (s == "premium") return LegType::Premium;
  if (s == "annuity") return LegType::Annuity;
  if (s == "both") return LegType::Both;
  throw ValidationError("unknown policy type '" + s + "' (premium, annuity or both)");
}

double ExperienceTable::at(int age) const {
  auto it = factor.find(age);
  if (it == factor.end()) throw ValidationError("no experience factor for age " + std::to_string(age));
  return it->second;
}

void ExperienceTable::validate(int max_age) const {
  for (int a = 0; a <= max_age; ++a)
    if (!(at(a) > 0.0)) throw ValidationError("experience factor for age " + std::to_string(a) + " must be positive");
}

void ValuationConfig::validate() const {
  if (retirement_age >= max_age) throw ValidationError("retirement age must be below the maximum age");
  if (retirement_age < 0) throw ValidationError("retirement age must be non-negative");
  if (!(interest_rate > -1.0)) throw ValidationError("interest rate must exceed -1");
  if (n_sim < 1) throw ValidationError("need at least one simulation");
}

double RateSurface::rate(Gender g, int age, int year) const {
  const SurfaceCell c{g, age, year};
  auto it = m.find(c);
  if (it == m.end()) throw ValidationError("mortality surface has no rate for " + cell_name(c));
  return it->second;
}

RateSurface surface_from_forecast(const RateForecast& forecast, const std::string& country, Band band) {
  RateSurface s;
  for (const auto& [k, c] : forecast.cells) {
    if (k.country != country) continue;
    const double y = band == Band::Point ? c.point : band == Band::Lower ? c.lower : c.upper;
    s.m[{k.gender, k.age_lower, k.year}] = std::exp(y);
  }
  if (s.m.empty()) throw ValidationError("forecast has no cells for country " + country);
  return s;
}

RateSurface apply_experience(const RateSurface& surface, const ExperienceTable& table) {
  RateSurface out;
  for (const auto& [c, m] : surface.m) out.m[c] = table.at(c.age) * m;
  return out;
}

double policy_bel(const Policy& policy, const RateSurface& surface, const ValuationConfig& config) {
  config.validate();
  if (policy.premium < 0.0 || policy.annuity < 0.0)
    throw ValidationError("premium and annuity must be non-negative");
  const int age0 = config.valuation_year - policy.year_of_birth;
  if (age0 < 0) throw ValidationError("policyholder born after the valuation year");
  if (age0 > config.max_age) return 0.0;
  const bool annuity_leg = policy.type != LegType::Premium;
  const bool premium_leg = policy.type != LegType::Annuity;
  const double v = 1.0 / (1.0 + config.interest_rate);
  double alive = 1.0, discount = 1.0, pv = 0.0;
  for (int j = 0; age0 + j <= config.max_age; ++j) {
    const int age = age0 + j;
    if (age >= config.retirement_age) {
      if (annuity_leg) pv += policy.annuity * alive * discount;
    } else if (premium_leg) {
      pv -= policy.premium * alive * discount;
    }
    if (age == config.max_age) break;
    alive *= 1.0 - one_year_q(surface.rate(policy.gender, age, config.valuation_year + j));
    discount *= v;
  }
  return pv;
}

double portfolio_bel(const Portfolio& portfolio, const RateSurface& surface,
                     const ValuationConfig& config) {
  double total = 0.0;
  for (const auto& p : portfolio) total += policy_bel(p, surface, config);
  return total;
}

std::vector<SurfaceCell> required_cells(const Portfolio& portfolio, const ValuationConfig& config) {
  std::set<SurfaceCell> cells;
  for (const auto& p : portfolio) {
    const int age0 = config.valuation_year - p.year_of_birth;
    for (int j = 0; age0 >= 0 && age0 + j < config.max_age; ++j)
      cells.insert({p.gender, age0 + j, config.valuation_year + j});
  }
  return {cells.begin(), cells.end()};
}

ScenarioModel lc_scenarios(const LcFit& fit) { return lc_scenarios(std::vector<LcFit>{fit}); }

ScenarioModel lc_scenarios(const std::vector<LcFit>& fits) {
  std::set<Gender> seen;
  for (const auto& f : fits)
    if (!seen.insert(f.population.gender).second)
      throw ValidationError("two LC fits for gender " + std::string(1, gender_code(f.population.gender)));
  ScenarioModel model;
  for (const auto& f : fits) model.walks.push_back(f.rw);
  model.surface = [fits](const std::vector<YearSeries>& paths, const std::vector<SurfaceCell>& cells) {
    RateSurface s;
    for (const auto& c : cells) {
      std::size_t i = 0;
      while (i < fits.size() && fits[i].population.gender != c.gender) ++i;
      if (i == fits.size()) throw ValidationError("no LC fit can value " + cell_name(c));
      const auto& fit = fits[i];
      auto a = fit.a.find(c.age);
      if (a == fit.a.end()) throw ValidationError("LC fit has no age " + std::to_string(c.age));
      s.m[c] = std::exp(a->second + fit.b.at(c.age) * series_value(paths[i], fit.k, c.year));
    }
    return s;
  };
  return model;
}

ScenarioModel lme_scenarios(const FittedMixedModel& fit, const CovariateSet& observed,
                            const CovariateWalks& walks, const std::string& country) {
  ScenarioModel model;
  model.walks.push_back(walks.global);
  for (const auto& [c, w] : walks.countries) {
    model.walks.push_back(w.first);
    model.walks.push_back(w.second);
  }
  model.surface = [fit, observed, walks, country](const std::vector<YearSeries>& paths,
                                                  const std::vector<SurfaceCell>& cells) {
    CovariateSet cov = observed;
    std::size_t i = 0;
    for (const auto& [y, v] : paths[i++]) cov.global.values[y] = v;
    for (const auto& [c, w] : walks.countries) {
      auto& seg = cov.countries[c];
      seg.country = c;
      seg.split_age = cov.split_age;
      for (const auto& [y, v] : paths[i++]) seg.young[y] = v;
      for (const auto& [y, v] : paths[i++]) seg.old[y] = v;
    }
    std::vector<PanelKey> keys;
    for (const auto& c : cells) keys.push_back({country, c.gender, c.age, c.year});
    const auto f = predict_rates(fit, cov, keys);
    RateSurface s;
    for (std::size_t k = 0; k < cells.size(); ++k) s.m[cells[k]] = std::exp(f.at(keys[k]).point);
    return s;
  };
  return model;
}

std::vector<YearSeries> drift_paths(const std::vector<RandomWalkModel>& walks, int last_year) {
  std::vector<YearSeries> out;
  for (const auto& w : walks) {
    YearSeries p;
    double v = w.last_value;
    for (int y = w.last_year + 1; y <= last_year; ++y) p[y] = v += w.drift;
    out.push_back(std::move(p));
  }
  return out;
}

SolvencyResult solvency_capital(const Portfolio& portfolio, const ScenarioModel& model,
                                const ValuationConfig& config,
                                const std::optional<ExperienceTable>& experience) {
  config.validate();
  const auto cells = required_cells(portfolio, config);
  const int last = last_year_needed(cells);
  auto value = [&](const std::vector<YearSeries>& paths) {
    auto s = model.surface(paths, cells);
    if (experience) s = apply_experience(s, *experience);
    return portfolio_bel(portfolio, s, config);
  };

  SolvencyResult res;
  res.n_sim = config.n_sim;
  res.seed = config.seed;
  res.bel = value(drift_paths(model.walks, last));

  std::vector<double> liabilities(static_cast<std::size_t>(config.n_sim));
  for (int s = 0; s < config.n_sim; ++s) {
    auto rng = make_engine(config.seed, SeedStream::Solvency, static_cast<std::uint64_t>(s));
    std::normal_distribution<double> z;
    std::vector<YearSeries> paths;
    for (const auto& w : model.walks) {
      const double sd = std::sqrt(std::max(w.innovation_variance, 0.0));
      YearSeries p;
      double v = w.last_value;
      for (int y = w.last_year + 1; y <= last; ++y) p[y] = v += w.drift + (sd > 0.0 ? sd * z(rng) : 0.0);
      paths.push_back(std::move(p));
    }
    liabilities[static_cast<std::size_t>(s)] = value(paths);
  }
  std::sort(liabilities.begin(), liabilities.end());
  const auto rank = static_cast<std::size_t>(std::ceil(res.percentile * config.n_sim));
  res.quantile = liabilities[std::clamp<std::size_t>(rank, 1, liabilities.size()) - 1];
  res.scr = std::max(res.quantile - res.bel, 0.0);
  return res;
}

Portfolio read_portfolio_csv(std::istream& in) {
  const auto t = csv::read(in);
  const auto cy = t.column("year_of_birth"), cg = t.column("gender"), cp = t.column("premium"),
             ca = t.column("annuity"), ct = t.column("type");
  Portfolio out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const long ln = t.line_numbers[i];
    Policy p;
    p.year_of_birth = csv::to_int(r[cy], ln);
    p.premium = csv::to_double(r[cp], ln);
    p.annuity = csv::to_double(r[ca], ln);
    try {
      p.gender = parse_gender(r[cg]);
      p.type = parse_leg_type(r[ct]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ln);
    }
    if (p.premium < 0.0 || p.annuity < 0.0) throw ParseError("premium and annuity must be non-negative", ln);
    out.push_back(p);
  }
  return out;
}

Portfolio read_portfolio_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open portfolio file " + path);
  return read_portfolio_csv(in);
}

ExperienceTable read_experience_csv(std::istream& in) {
  const auto t = csv::read(in);
  const auto ca = t.column("age"), cf = t.column("factor");
  ExperienceTable out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const long ln = t.line_numbers[i];
    const int age = csv::to_int(t.rows[i][ca], ln);
    const double f = csv::to_double(t.rows[i][cf], ln);
    if (!(f > 0.0)) throw ParseError("experience factor must be positive", ln);
    if (!out.factor.emplace(age, f).second) throw ParseError("duplicate age " + std::to_string(age), ln);
  }
  return out;
}

ExperienceTable read_experience_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open experience file " + path);
  return read_experience_csv(in);
}

}  // namespace lmemort
