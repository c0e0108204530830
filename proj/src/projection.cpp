#include "lmemort/projection.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <set>
#include <tuple>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"
#include "lmemort/random.hpp"

namespace lmemort {
namespace {

const DesignLayout& layout_of(const FittedMixedModel& fit) {
  if (!fit.layout) throw ValidationError("fit carries no design layout; cannot predict");
  return *fit.layout;
}

// Symmetric square root that tolerates singular (e.g. all-zero) covariances.
Eigen::MatrixXd covariance_root(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal();
}

// Fixed rows and, per random block, (level, regressor row) for each key.
struct KeyRows {
  Eigen::MatrixXd X;
  std::vector<std::vector<int>> level;         // [block][key]
  std::vector<Eigen::MatrixXd> random_values;  // [block] keys x q
};

KeyRows key_rows(const FittedMixedModel& fit, const CovariateSet& cov,
                 const std::vector<PanelKey>& keys) {
  const auto& layout = layout_of(fit);
  KeyRows kr;
  const auto n = static_cast<Eigen::Index>(keys.size());
  kr.X.resize(n, static_cast<Eigen::Index>(layout.p()));
  kr.level.resize(layout.n_blocks());
  for (std::size_t b = 0; b < layout.n_blocks(); ++b)
    kr.random_values.emplace_back(n, static_cast<Eigen::Index>(layout.block_term(b).regressors.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& key = keys[static_cast<std::size_t>(i)];
    if (!layout.grid().index_of(key.age_lower))
      throw ValidationError("cell " + to_string(key) + " is outside the fitted age grid");
    kr.X.row(i) = layout.fixed_row(key, cov);
    for (std::size_t b = 0; b < layout.n_blocks(); ++b) {
      const auto level = layout.level_index(b, key);
      if (!level)
        throw ValidationError("cell " + to_string(key) + " has no fitted level in " +
                              layout.block_term(b).label());
      kr.level[b].push_back(*level);
      kr.random_values[b].row(i) = layout.random_row(b, key, cov);
    }
  }
  return kr;
}

}  // namespace

const ForecastCell& RateForecast::at(const PanelKey& key) const {
  auto it = cells.find(key);
  if (it == cells.end()) throw ValidationError("forecast has no cell " + to_string(key));
  return it->second;
}

std::vector<Population> RateForecast::populations() const {
  std::set<Population> s;
  for (const auto& [k, c] : cells) s.insert({k.country, k.gender});
  return {s.begin(), s.end()};
}

std::vector<int> RateForecast::years() const {
  std::set<int> s;
  for (const auto& [k, c] : cells) s.insert(k.year);
  return {s.begin(), s.end()};
}

std::vector<int> year_span(int first, int last) {
  std::vector<int> out;
  for (int y = first; y <= last; ++y) out.push_back(y);
  return out;
}

std::vector<PanelKey> forecast_keys(const FittedMixedModel& fit, const std::vector<int>& years) {
  std::set<std::tuple<std::string, Gender, int>> cells;
  for (const auto& r : fit.rows) cells.emplace(r.country, r.gender, r.age_lower);
  std::vector<PanelKey> keys;
  for (const auto& [c, g, a] : cells)
    for (int y : years) keys.push_back({c, g, a, y});
  return keys;
}

RateForecast predict_rates(const FittedMixedModel& fit, const CovariateSet& cov,
                           const std::vector<PanelKey>& keys) {
  const auto kr = key_rows(fit, cov, keys);
  Eigen::VectorXd eta = kr.X * fit.beta;
  for (std::size_t b = 0; b < kr.level.size(); ++b)
    for (std::size_t i = 0; i < keys.size(); ++i)
      eta(static_cast<Eigen::Index>(i)) +=
          kr.random_values[b].row(static_cast<Eigen::Index>(i))
              .dot(fit.terms[b].blups.row(kr.level[b][i]));
  RateForecast out;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const double v = eta(static_cast<Eigen::Index>(i));
    out.cells[keys[i]] = {v, v, v, 0.0};
  }
  return out;
}

RateForecast predict_rates(const FittedMixedModel& fit, const CovariateSet& cov,
                           const std::vector<int>& years) {
  return predict_rates(fit, cov, forecast_keys(fit, years));
}

double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

RateForecast prediction_intervals(const FittedMixedModel& fit, const CovariateSet& cov,
                                  const std::vector<PanelKey>& keys,
                                  const IntervalSettings& settings) {
  if (settings.n_sim < 1) throw ValidationError("need at least one simulation");
  if (!(settings.level > 0.0 && settings.level < 1.0))
    throw ValidationError("interval level must lie in (0, 1)");
  const auto kr = key_rows(fit, cov, keys);
  const auto n_keys = static_cast<Eigen::Index>(keys.size());
  const Eigen::MatrixXd beta_root = covariance_root(fit.beta_cov);

  // Only levels that some key uses need a conditional root.
  std::vector<std::map<int, Eigen::MatrixXd>> level_roots(kr.level.size());
  for (std::size_t b = 0; b < kr.level.size(); ++b)
    for (int l : kr.level[b])
      if (!level_roots[b].count(l))
        level_roots[b][l] = covariance_root(fit.terms[b].cond_cov[static_cast<std::size_t>(l)]);

  const double sigma = std::sqrt(std::max(fit.sigma2, 0.0));
  Eigen::MatrixXd sims(n_keys, settings.n_sim);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int s = 0; s < settings.n_sim; ++s) {
    auto rng = make_engine(settings.seed, SeedStream::PredictionIntervals,
                           static_cast<std::uint64_t>(s));
    Eigen::VectorXd zb(fit.beta.size());
    for (auto& v : zb) v = z(rng);
    Eigen::VectorXd col = kr.X * (fit.beta + beta_root * zb);
    for (std::size_t b = 0; b < kr.level.size(); ++b) {
      std::map<int, Eigen::VectorXd> draws;
      for (const auto& [l, root] : level_roots[b]) {
        Eigen::VectorXd zl(root.cols());
        for (auto& v : zl) v = z(rng);
        draws[l] = fit.terms[b].blups.row(l).transpose() + root * zl;
      }
      for (Eigen::Index i = 0; i < n_keys; ++i)
        col(i) += kr.random_values[b].row(i).dot(draws.at(kr.level[b][static_cast<std::size_t>(i)]));
    }
    for (Eigen::Index i = 0; i < n_keys; ++i) col(i) += sigma * z(rng);
    sims.col(s) = col;
  }

  const double tail = (1.0 - settings.level) / 2.0;
  RateForecast out;
  std::vector<double> row(static_cast<std::size_t>(settings.n_sim));
  for (Eigen::Index i = 0; i < n_keys; ++i) {
    for (int s = 0; s < settings.n_sim; ++s) row[static_cast<std::size_t>(s)] = sims(i, s);
    std::sort(row.begin(), row.end());
    out.cells[keys[static_cast<std::size_t>(i)]] = {
        sorted_quantile(row, 0.5), sorted_quantile(row, tail), sorted_quantile(row, 1.0 - tail),
        settings.level};
  }
  return out;
}

RateForecast prediction_intervals(const FittedMixedModel& fit, const CovariateSet& cov,
                                  const std::vector<int>& years,
                                  const IntervalSettings& settings) {
  return prediction_intervals(fit, cov, forecast_keys(fit, years), settings);
}

LcForm to_lc_form(const FittedMixedModel& fit) {
  const auto& f = layout_of(fit).formula();
  const bool shape_ok = f == ModelFormula::parse("I(kt) + (1 + I(kt) | x)");
  if (!shape_ok)
    throw ValidationError("LC form needs the formula I(kt) + (1 + I(kt) | x), got " + f.to_string());
  LcForm lc;
  const auto& term = fit.terms[0];
  for (std::size_t l = 0; l < term.levels.size(); ++l) {
    const int age = std::stoi(term.levels[l]);
    lc.a[age] = fit.beta(0) + term.blups(static_cast<Eigen::Index>(l), 0);
    lc.b[age] = fit.beta(1) + term.blups(static_cast<Eigen::Index>(l), 1);
  }
  return lc;
}

void write_forecast_csv(std::ostream& out, const RateForecast& f) {
  out << "country,gender,age_lower,year,point,lower,upper\n";
  for (const auto& [k, c] : f.cells)
    out << k.country << ',' << gender_code(k.gender) << ',' << k.age_lower << ',' << k.year << ','
        << csv::format_double(c.point) << ',' << csv::format_double(c.lower) << ','
        << csv::format_double(c.upper) << '\n';
}

RateForecast read_forecast_csv(std::istream& in) {
  const auto t = csv::read(in);
  const auto cc = t.column("country"), cg = t.column("gender"), ca = t.column("age_lower"),
             cy = t.column("year"), cp = t.column("point"), cl = t.column("lower"),
             cu = t.column("upper");
  RateForecast f;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const long ln = t.line_numbers[i];
    Gender g;
    try {
      g = parse_gender(r[cg]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ln);
    }
    const PanelKey key{r[cc], g, csv::to_int(r[ca], ln), csv::to_int(r[cy], ln)};
    ForecastCell cell{csv::to_double(r[cp], ln), csv::to_double(r[cl], ln),
                      csv::to_double(r[cu], ln), 0.0};
    if (cell.lower != cell.point || cell.upper != cell.point) cell.level = -1.0;  // unknown level
    f.cells[key] = cell;
  }
  return f;
}

}  // namespace lmemort
