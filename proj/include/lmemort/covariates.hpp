#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "lmemort/hmd.hpp"
#include "lmemort/random.hpp"

namespace lmemort {

using YearSeries = std::map<int, double>;

// Per-country average log rate split by age: groups whose lower bound is
// <= split_age form the young segment, the rest the old segment.
struct SegmentedSeries {
  std::string country;
  int split_age = 40;
  YearSeries young;
  YearSeries old;
};

struct GlobalSeries {
  YearSeries values;
};

// ARIMA(0,1,0) with drift.
struct RandomWalkModel {
  double drift = 0.0;
  double innovation_variance = 0.0;
  int last_year = 0;
  double last_value = 0.0;
};

SegmentedSeries country_covariate(const MortalityPanel& panel, const std::string& country,
                                  int split_age = 40);
GlobalSeries global_covariate(const MortalityPanel& panel);

RandomWalkModel fit_rwd(const YearSeries& series);
// last_value + h * drift; h = 0 gives the last observation.
double rwd_point(const RandomWalkModel& model, int h);
// Deterministic forecasts for years last_year + 1 .. last_year + horizon.
YearSeries forecast_rwd(const RandomWalkModel& model, int horizon);
// n_paths x horizon; column h-1 holds the value at last_year + h.
Eigen::MatrixXd simulate_rwd(const RandomWalkModel& model, int horizon, int n_paths,
                             std::uint64_t seed,
                             SeedStream stream = SeedStream::CovariatePaths);

// Everything a design matrix may reference besides the panel itself.
struct CovariateSet {
  int split_age = 40;
  GlobalSeries global;
  std::map<std::string, SegmentedSeries> countries;
  // Named group-level covariates such as GDP: name -> (country, year) -> value.
  std::map<std::string, std::map<std::pair<std::string, int>, double>> extra;

  double kt(int year) const;
  double kct(const std::string& country, int year, int age_lower) const;
  double extra_value(const std::string& name, const std::string& country, int year) const;
};

// k_t always; k_ct for every country when `segmented` is set.
CovariateSet compute_covariates(const MortalityPanel& panel, int split_age = 40,
                                bool segmented = true);

struct CovariateWalks {
  RandomWalkModel global;
  std::map<std::string, std::pair<RandomWalkModel, RandomWalkModel>> countries;  // young, old
};

CovariateWalks fit_walks(const CovariateSet& observed);

// Copy of `observed` with every series extended by its drift forecast up to
// `through_year`. Extra covariates are left as they are.
CovariateSet extend_with_forecast(const CovariateSet& observed, const CovariateWalks& walks,
                                  int through_year);

// CSV columns: country,segment,year,value. The global series uses country
// "ALL" and segment "all"; segments are "young" and "old".
void write_covariates_csv(std::ostream& out, const CovariateSet& set);
CovariateSet read_covariates_csv(std::istream& in, int split_age);

// CSV columns: name,country,year,value
void read_extra_covariates_csv(std::istream& in, CovariateSet& set);

}  // namespace lmemort
