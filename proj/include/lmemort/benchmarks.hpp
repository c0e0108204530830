#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmemort/covariates.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/projection.hpp"

namespace lmemort {

using AgeSeries = std::map<int, double>;  // by age-group lower bound

// Ages x years log-rate matrix of one population; throws unless every cell
// of the panel's grid and year range is present.
struct RateMatrix {
  Population population;
  AgeGrid grid;
  std::vector<int> years;
  Eigen::MatrixXd y;
};

RateMatrix rate_matrix(const MortalityPanel& panel, const Population& pop);

// log m = a_x + b_x k_t with sum(b) = 1 and sum(k) = 0.
struct LcFit {
  Population population;
  AgeGrid grid;
  AgeSeries a;
  AgeSeries b;
  YearSeries k;
  RandomWalkModel rw;
};

// Row means plus the leading singular pair of the centred matrix. Equal
// leading singular values have no unique answer and are rejected.
LcFit fit_lc(const MortalityPanel& panel, const Population& pop);
LcFit fit_lc(const MortalityPanel& panel);  // the panel's only population

// Points follow the drift path of k; intervals come from simulated k paths.
RateForecast forecast_lc(const LcFit& fit, int horizon, const IntervalSettings& settings = {});

// k_t = c + phi k_{t-1} + e_t, least squares.
struct Ar1Model {
  double intercept = 0.0;
  double phi = 0.0;
  double innovation_variance = 0.0;
  int last_year = 0;
  double last_value = 0.0;

  double point(int h) const;
};

Ar1Model fit_ar1(const YearSeries& series);

struct LlSpecific {
  AgeSeries alpha;
  AgeSeries beta;
  YearSeries kappa;
  Ar1Model ar;
};

// log m_i = alpha_ix + B_x K_t + beta_ix kappa_it.
struct LlFit {
  AgeGrid grid;
  AgeSeries B;
  YearSeries K;
  RandomWalkModel rw;
  std::map<Population, LlSpecific> specific;
};

// Stage one: LC on the unweighted mean of the populations' log rates. Stage
// two: LC on each population's residual. A residual that is identically zero
// gives kappa = 0 and flat beta.
LlFit fit_ll(const MortalityPanel& panel, std::vector<Population> populations = {});

RateForecast forecast_ll(const LlFit& fit, int horizon, const IntervalSettings& settings = {});

enum class MseScale { Log, Natural };

MseScale parse_mse_scale(const std::string& s);

struct MseRow {
  Population population;
  double mse = 0.0;
  int n = 0;
};

// Mean squared error of forecast points per population over the cells found
// in both inputs. Natural scale compares exp(log rate).
std::vector<MseRow> mse(const RateForecast& forecast, const MortalityPanel& actual,
                        MseScale scale = MseScale::Log);

// CSV columns: country,gender,mse_lme,mse_<other>,ratio where ratio is
// other / lme. Both tables must list the same populations.
void write_mse_comparison_csv(std::ostream& out, const std::vector<MseRow>& lme,
                              const std::vector<MseRow>& other, const std::string& other_name);

}  // namespace lmemort
