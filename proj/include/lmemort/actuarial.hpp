#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmemort/benchmarks.hpp"
#include "lmemort/covariates.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/lifetable.hpp"
#include "lmemort/mixedlm.hpp"
#include "lmemort/projection.hpp"

namespace lmemort {

enum class LegType { Premium, Annuity, Both };

std::string to_string(LegType t);
LegType parse_leg_type(const std::string& s);

struct Policy {
  int year_of_birth = 0;
  Gender gender = Gender::Female;
  double premium = 0.0;  // per year until retirement
  double annuity = 0.0;  // per year from retirement
  LegType type = LegType::Both;
};

using Portfolio = std::vector<Policy>;

// Multiplicative adjustment of m by single year of age.
struct ExperienceTable {
  std::map<int, double> factor;

  double at(int age) const;  // throws when the age is missing
  // Factors positive and present for every age 0..max_age.
  void validate(int max_age = 110) const;
};

struct ValuationConfig {
  int valuation_year = 2023;
  double interest_rate = 0.001;
  int retirement_age = 65;
  int max_age = 110;
  int n_sim = 1000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SurfaceCell {
  Gender gender = Gender::Female;
  int age = 0;
  int year = 0;
  friend auto operator<=>(const SurfaceCell&, const SurfaceCell&) = default;
};

// Natural-scale one-year death rates by gender, attained age and calendar year.
struct RateSurface {
  std::map<SurfaceCell, double> m;

  double rate(Gender g, int age, int year) const;  // throws when absent
};

// exp of the chosen band for one country. The forecast grid must be single-year.
RateSurface surface_from_forecast(const RateForecast& forecast, const std::string& country,
                                  Band band = Band::Point);

RateSurface apply_experience(const RateSurface& surface, const ExperienceTable& table);

// Expected present value at the valuation year of annuity payments minus
// premium receipts, both paid at the start of each year while alive.
// Survival follows the surface diagonal with q = m / (1 + m / 2). A policy
// older than max_age is worth 0.
double policy_bel(const Policy& policy, const RateSurface& surface, const ValuationConfig& config);
double portfolio_bel(const Portfolio& portfolio, const RateSurface& surface,
                     const ValuationConfig& config);

// Cells policy_bel reads for this portfolio.
std::vector<SurfaceCell> required_cells(const Portfolio& portfolio, const ValuationConfig& config);

// Random walks driving a mortality model, and the surface implied by one
// joint path (one series per walk, starting the year after the walk's last
// observation).
struct ScenarioModel {
  std::vector<RandomWalkModel> walks;
  std::function<RateSurface(const std::vector<YearSeries>& paths,
                            const std::vector<SurfaceCell>& cells)>
      surface;
};

// k_t of an LC fit; cells must match the fit's gender.
ScenarioModel lc_scenarios(const LcFit& fit);
// One k_t walk per fit, in order; each cell is priced by the fit of its gender.
ScenarioModel lc_scenarios(const std::vector<LcFit>& fits);
// Global k_t and every country's segment walks feeding an LME fit.
ScenarioModel lme_scenarios(const FittedMixedModel& fit, const CovariateSet& observed,
                            const CovariateWalks& walks, const std::string& country);

struct SolvencyResult {
  double bel = 0.0;         // liability on the drift paths
  double quantile = 0.0;    // nearest-rank 99.5% liability over simulations
  double scr = 0.0;         // max(quantile - bel, 0)
  double percentile = 0.995;
  int n_sim = 0;
  std::uint64_t seed = 0;
};

// Simulates n_sim joint walk paths, values the portfolio on each rebuilt
// surface (after experience factors when given) and reads off the 1-in-200
// liability.
SolvencyResult solvency_capital(const Portfolio& portfolio, const ScenarioModel& model,
                                const ValuationConfig& config,
                                const std::optional<ExperienceTable>& experience = std::nullopt);

// Drift path of every walk through `last_year`, accumulated the same way as
// the simulated paths.
std::vector<YearSeries> drift_paths(const std::vector<RandomWalkModel>& walks, int last_year);

// CSV columns: year_of_birth,gender,premium,annuity,type
Portfolio read_portfolio_csv(std::istream& in);
Portfolio read_portfolio_csv_file(const std::string& path);
// CSV columns: age,factor
ExperienceTable read_experience_csv(std::istream& in);
ExperienceTable read_experience_csv_file(const std::string& path);

}  // namespace lmemort
