#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "lmemort/covariates.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/mixedlm.hpp"

namespace lmemort {

struct ForecastCell {
  double point = 0.0;
  double lower = 0.0;  // equal to point when no interval was computed
  double upper = 0.0;
  double level = 0.0;  // 0 when no interval was computed
};

// Log death-rate forecasts keyed by cell.
struct RateForecast {
  std::map<PanelKey, ForecastCell> cells;

  const ForecastCell& at(const PanelKey& key) const;
  std::vector<Population> populations() const;
  std::vector<int> years() const;
};

// Every (country, gender, age group) seen in the fit's training rows, crossed
// with `years`.
std::vector<PanelKey> forecast_keys(const FittedMixedModel& fit, const std::vector<int>& years);
std::vector<int> year_span(int first, int last);

// X beta + Z eta evaluated with the given covariates, parameters held fixed.
RateForecast predict_rates(const FittedMixedModel& fit, const CovariateSet& cov,
                           const std::vector<PanelKey>& keys);
RateForecast predict_rates(const FittedMixedModel& fit, const CovariateSet& cov,
                           const std::vector<int>& years);

struct IntervalSettings {
  int n_sim = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
};

// Simulates beta* ~ N(beta, Cov beta), eta* per level from its conditional
// distribution given the data and eps* ~ N(0, sigma^2); reports the median
// and the empirical (1 -/+ level)/2 quantiles per cell.
RateForecast prediction_intervals(const FittedMixedModel& fit, const CovariateSet& cov,
                                  const std::vector<PanelKey>& keys,
                                  const IntervalSettings& settings = {});
RateForecast prediction_intervals(const FittedMixedModel& fit, const CovariateSet& cov,
                                  const std::vector<int>& years,
                                  const IntervalSettings& settings = {});

// Linear-interpolation sample quantile of sorted data (the common "type 7").
double sorted_quantile(const std::vector<double>& sorted, double p);

// log m = a_x + b_x k_t for a fit of I(kt) + (1 + I(kt) | x).
struct LcForm {
  std::map<int, double> a;  // by age-group lower bound
  std::map<int, double> b;
};

LcForm to_lc_form(const FittedMixedModel& fit);

// CSV columns: country,gender,age_lower,year,point,lower,upper
void write_forecast_csv(std::ostream& out, const RateForecast& f);
RateForecast read_forecast_csv(std::istream& in);

}  // namespace lmemort
