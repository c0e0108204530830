#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmemort/actuarial.hpp"
#include "lmemort/benchmarks.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/selection.hpp"
#include "lmemort/serialize.hpp"

namespace lmemort::cli {

// "AUT" selects both genders, "AUT:F" one population.
struct PopulationFilter {
  std::string country;
  std::optional<Gender> gender;
};

std::vector<PopulationFilter> parse_population_list(const std::string& text);

struct ValuationBlock {
  std::string country;
  std::filesystem::path portfolio;
  std::optional<std::filesystem::path> experience;
  std::string formula = "I(kt) + (1 + I(kt) | x)";
  std::vector<std::string> models{"lme", "lc"};
  ValuationConfig config;
};

struct RunConfig {
  // Data location. The root falls back to LMEMORT_DATA_ROOT.
  std::optional<std::filesystem::path> data_root;
  std::string file_pattern = "{country}.Mx_5x1.txt";
  std::map<std::string, std::string> files;
  std::vector<std::string> countries;
  std::vector<PopulationFilter> populations;  // empty keeps everything

  AgeGrid grid = AgeGrid::hmd_5x1(0, 110);
  YearRange years{1961, 2019};
  std::optional<int> train_cutoff;

  int split_age = 40;
  bool segmented = true;
  std::optional<std::filesystem::path> extra_covariates;

  std::optional<std::string> formula;
  std::optional<std::string> maximal_formula;
  Criterion criterion = Criterion::AIC;
  std::optional<double> cleaning_threshold;
  bool clean_with_maximal = false;
  bool per_population = false;

  int horizon = 9;
  double level = 0.95;
  int n_sim = 1000;
  std::vector<std::string> benchmarks;  // "lc", "ll"

  MseScale scale = MseScale::Log;

  std::optional<ValuationBlock> valuation;

  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;

  bool selected(const Population& pop) const;
  std::uint64_t require_seed(const std::string& command) const;
};

// Relative input paths resolve against `base_dir`. Unknown keys are rejected
// so that typos surface as config errors.
RunConfig parse_config(const Json& j, const std::filesystem::path& base_dir = ".");

// Full command line, argv[0] excluded. Returns the process exit status:
// 0 success, 1 unexpected failure, 2 bad usage or config, 3 data error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lmemort::cli
