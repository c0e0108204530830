#include "lmemort/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"
#include "lmemort/random.hpp"

namespace lmemort {
namespace {

struct RankOne {
  Eigen::VectorXd b;  // sums to 1
  Eigen::VectorXd k;  // sums to 0
};

// Leading singular pair of a row-centred matrix, normalised. A zero matrix
// returns nullopt when `allow_zero` is set and throws otherwise.
std::optional<RankOne> leading_factor(const Eigen::MatrixXd& c, double scale, bool allow_zero,
                                      const std::string& what) {
  if (c.rows() < 3 || c.cols() < 3)
    throw ValidationError(what + ": need at least 3 ages and 3 years");
  if (c.norm() <= 1e-12 * std::max(1.0, scale)) {
    if (allow_zero) return std::nullopt;
    throw ValidationError(what + ": log-rate matrix has no variation over time");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (s.size() > 1 && s(1) >= s(0) * (1.0 - 1e-10))
    throw ValidationError(what + ": leading singular value is tied; the age loading is not unique");
  const double sum_u = svd.matrixU().col(0).sum();
  if (std::abs(sum_u) < 1e-10)
    throw ValidationError(what + ": age loadings sum to zero and cannot be normalised");
  RankOne r;
  r.b = svd.matrixU().col(0) / sum_u;
  r.k = svd.matrixV().col(0) * (s(0) * sum_u);
  r.k.array() -= r.k.mean();
  return r;
}

AgeSeries by_age(const AgeGrid& grid, const Eigen::VectorXd& v) {
  AgeSeries out;
  for (std::size_t i = 0; i < grid.size(); ++i) out[grid[i].lower] = v(static_cast<Eigen::Index>(i));
  return out;
}

YearSeries by_year(const std::vector<int>& years, const Eigen::VectorXd& v) {
  YearSeries out;
  for (std::size_t j = 0; j < years.size(); ++j) out[years[j]] = v(static_cast<Eigen::Index>(j));
  return out;
}

void check_forecast_args(int horizon, const IntervalSettings& s) {
  if (horizon < 1) throw ValidationError("forecast horizon must be at least 1");
  if (s.n_sim < 1) throw ValidationError("need at least one simulation");
  if (!(s.level > 0.0 && s.level < 1.0)) throw ValidationError("interval level must lie in (0, 1)");
}

ForecastCell summarize(std::vector<double>& draws, double point, double level) {
  std::sort(draws.begin(), draws.end());
  const double tail = (1.0 - level) / 2.0;
  return {point, sorted_quantile(draws, tail), sorted_quantile(draws, 1.0 - tail), level};
}

}  // namespace

RateMatrix rate_matrix(const MortalityPanel& panel, const Population& pop) {
  RateMatrix m;
  m.population = pop;
  m.grid = panel.age_grid();
  for (int t = panel.years().first; t <= panel.years().last; ++t) m.years.push_back(t);
  m.y.resize(static_cast<Eigen::Index>(m.grid.size()), static_cast<Eigen::Index>(m.years.size()));
  for (std::size_t i = 0; i < m.grid.size(); ++i)
    for (std::size_t j = 0; j < m.years.size(); ++j) {
      const PanelKey key{pop.country, pop.gender, m.grid[i].lower, m.years[j]};
      const auto v = panel.find(key);
      if (!v) throw ValidationError("rate matrix: missing cell " + to_string(key));
      m.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *v;
    }
  return m;
}

LcFit fit_lc(const MortalityPanel& panel, const Population& pop) {
  const auto m = rate_matrix(panel, pop);
  const Eigen::VectorXd a = m.y.rowwise().mean();
  const Eigen::MatrixXd c = m.y.colwise() - a;
  const auto f = *leading_factor(c, m.y.norm(), false, "LC fit for " + to_string(pop));
  LcFit fit;
  fit.population = pop;
  fit.grid = m.grid;
  fit.a = by_age(m.grid, a);
  fit.b = by_age(m.grid, f.b);
  fit.k = by_year(m.years, f.k);
  fit.rw = fit_rwd(fit.k);
  return fit;
}

LcFit fit_lc(const MortalityPanel& panel) {
  const auto pops = panel.populations();
  if (pops.size() != 1)
    throw ValidationError("LC fit needs exactly one population, panel has " +
                          std::to_string(pops.size()));
  return fit_lc(panel, pops.front());
}

RateForecast forecast_lc(const LcFit& fit, int horizon, const IntervalSettings& settings) {
  check_forecast_args(horizon, settings);
  const auto paths =
      simulate_rwd(fit.rw, horizon, settings.n_sim, settings.seed, SeedStream::LeeCarterPaths);
  RateForecast out;
  std::vector<double> draws(static_cast<std::size_t>(settings.n_sim));
  for (const auto& g : fit.grid) {
    const double a = fit.a.at(g.lower), b = fit.b.at(g.lower);
    for (int h = 1; h <= horizon; ++h) {
      for (int s = 0; s < settings.n_sim; ++s)
        draws[static_cast<std::size_t>(s)] = a + b * paths(s, h - 1);
      const PanelKey key{fit.population.country, fit.population.gender, g.lower,
                         fit.rw.last_year + h};
      out.cells[key] = summarize(draws, a + b * rwd_point(fit.rw, h), settings.level);
    }
  }
  return out;
}

double Ar1Model::point(int h) const {
  double v = last_value;
  for (int i = 0; i < h; ++i) v = intercept + phi * v;
  return v;
}

Ar1Model fit_ar1(const YearSeries& series) {
  if (series.size() < 4) throw ValidationError("AR(1) fit needs at least 4 points");
  std::vector<double> x, y;
  for (auto it = std::next(series.begin()); it != series.end(); ++it) {
    if (it->first != std::prev(it)->first + 1) throw ValidationError("AR(1) fit needs contiguous years");
    x.push_back(std::prev(it)->second);
    y.push_back(it->second);
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Ar1Model m;
  m.phi = sxx > 1e-300 ? sxy / sxx : 0.0;
  m.intercept = my - m.phi * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(y[i] - m.intercept - m.phi * x[i], 2);
  m.innovation_variance = ss / (n - 2.0);
  m.last_year = series.rbegin()->first;
  m.last_value = series.rbegin()->second;
  return m;
}

LlFit fit_ll(const MortalityPanel& panel, std::vector<Population> populations) {
  if (populations.empty()) populations = panel.populations();
  if (populations.empty()) throw ValidationError("LL fit needs at least one population");
  std::vector<RateMatrix> mats;
  for (const auto& p : populations) mats.push_back(rate_matrix(panel, p));
  const auto& years = mats.front().years;

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(mats.front().y.rows(), mats.front().y.cols());
  for (const auto& m : mats) pooled += m.y;
  pooled /= static_cast<double>(mats.size());
  const Eigen::MatrixXd pc = pooled.colwise() - pooled.rowwise().mean();
  const auto common = *leading_factor(pc, pooled.norm(), false, "LL common factor");

  LlFit fit;
  fit.grid = panel.age_grid();
  fit.B = by_age(fit.grid, common.b);
  fit.K = by_year(years, common.k);
  fit.rw = fit_rwd(fit.K);
  const Eigen::MatrixXd bk = common.b * common.k.transpose();
  for (const auto& m : mats) {
    const Eigen::VectorXd alpha = m.y.rowwise().mean();
    const Eigen::MatrixXd resid = (m.y.colwise() - alpha) - bk;
    LlSpecific sp;
    sp.alpha = by_age(fit.grid, alpha);
    const auto f = leading_factor(resid, m.y.norm(), true, "LL specific factor for " +
                                                              to_string(m.population));
    if (f) {
      sp.beta = by_age(fit.grid, f->b);
      sp.kappa = by_year(years, f->k);
    } else {
      sp.beta = by_age(fit.grid, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(fit.grid.size()),
                                                           1.0 / static_cast<double>(fit.grid.size())));
      sp.kappa = by_year(years, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(years.size())));
    }
    sp.ar = fit_ar1(sp.kappa);
    fit.specific.emplace(m.population, std::move(sp));
  }
  return fit;
}

RateForecast forecast_ll(const LlFit& fit, int horizon, const IntervalSettings& settings) {
  check_forecast_args(horizon, settings);
  const auto K = simulate_rwd(fit.rw, horizon, settings.n_sim, settings.seed, SeedStream::LiLeePaths);
  RateForecast out;
  std::vector<double> draws(static_cast<std::size_t>(settings.n_sim));
  std::uint64_t pop_index = 0;
  for (const auto& [pop, sp] : fit.specific) {
    ++pop_index;
    // kappa paths use indices after the common-factor paths of the same stream.
    Eigen::MatrixXd kappa(settings.n_sim, horizon);
    const double sd = std::sqrt(std::max(sp.ar.innovation_variance, 0.0));
    for (int s = 0; s < settings.n_sim; ++s) {
      auto rng = make_engine(settings.seed, SeedStream::LiLeePaths,
                             pop_index * static_cast<std::uint64_t>(settings.n_sim) +
                                 static_cast<std::uint64_t>(s));
      std::normal_distribution<double> z;
      double v = sp.ar.last_value;
      for (int h = 0; h < horizon; ++h) {
        v = sp.ar.intercept + sp.ar.phi * v + (sd > 0.0 ? sd * z(rng) : 0.0);
        kappa(s, h) = v;
      }
    }
    for (const auto& g : fit.grid) {
      const double alpha = sp.alpha.at(g.lower), B = fit.B.at(g.lower), beta = sp.beta.at(g.lower);
      for (int h = 1; h <= horizon; ++h) {
        for (int s = 0; s < settings.n_sim; ++s)
          draws[static_cast<std::size_t>(s)] = alpha + B * K(s, h - 1) + beta * kappa(s, h - 1);
        const double point = alpha + B * rwd_point(fit.rw, h) + beta * sp.ar.point(h);
        out.cells[{pop.country, pop.gender, g.lower, fit.rw.last_year + h}] =
            summarize(draws, point, settings.level);
      }
    }
  }
  return out;
}

MseScale parse_mse_scale(const std::string& s) {
  if (s == "log") return MseScale::Log;
  if (s == "natural") return MseScale::Natural;
  throw ValidationError("unknown MSE scale '" + s + "' (log or natural)");
}

std::vector<MseRow> mse(const RateForecast& forecast, const MortalityPanel& actual, MseScale scale) {
  std::map<Population, std::pair<double, int>> acc;
  for (const auto& r : actual.records()) {
    auto it = forecast.cells.find(r.key());
    if (it == forecast.cells.end()) continue;
    const double e = scale == MseScale::Log ? it->second.point - r.log_rate
                                            : std::exp(it->second.point) - std::exp(r.log_rate);
    auto& [ss, n] = acc[{r.country, r.gender}];
    ss += e * e;
    ++n;
  }
  if (acc.empty()) throw ValidationError("forecast and observed panel share no cells");
  std::vector<MseRow> out;
  for (const auto& [pop, a] : acc) out.push_back({pop, a.first / a.second, a.second});
  return out;
}

void write_mse_comparison_csv(std::ostream& out, const std::vector<MseRow>& lme,
                              const std::vector<MseRow>& other, const std::string& other_name) {
  std::map<Population, double> o;
  for (const auto& r : other) o[r.population] = r.mse;
  if (o.size() != lme.size()) throw ValidationError("MSE tables list different populations");
  out << "country,gender,mse_lme,mse_" << other_name << ",ratio\n";
  for (const auto& r : lme) {
    auto it = o.find(r.population);
    if (it == o.end())
      throw ValidationError("no " + other_name + " MSE for " + to_string(r.population));
    out << r.population.country << ',' << gender_code(r.population.gender) << ','
        << csv::format_double(r.mse) << ',' << csv::format_double(it->second) << ','
        << csv::format_double(it->second / r.mse) << '\n';
  }
}

}  // namespace lmemort
