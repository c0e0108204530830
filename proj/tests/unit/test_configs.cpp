#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "lmemort/cli.hpp"
#include "lmemort/formula.hpp"

using namespace lmemort;
namespace fs = std::filesystem;

TEST_CASE("shipped configs parse and name valid formulas") {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(LMEMORT_CONFIGS)) {
    if (entry.path().extension() != ".json") continue;
    ++n;
    INFO(entry.path().filename().string());
    std::ifstream in(entry.path());
    const auto cfg = cli::parse_config(Json::parse(in), entry.path().parent_path());
    CHECK(cfg.seed);
    CHECK_FALSE(cfg.countries.empty());
    if (cfg.formula) CHECK_NOTHROW(ModelFormula::parse(*cfg.formula));
    if (cfg.maximal_formula) CHECK_NOTHROW(ModelFormula::parse(*cfg.maximal_formula));
    if (cfg.valuation) {
      CHECK(fs::exists(cfg.valuation->portfolio));
      if (cfg.valuation->experience) CHECK(fs::exists(*cfg.valuation->experience));
      CHECK_NOTHROW(ModelFormula::parse(cfg.valuation->formula));
    }
  }
  CHECK(n == 5);
}

TEST_CASE("the twelve-population config selects from the maximal family") {
  std::ifstream in(std::string(LMEMORT_CONFIGS) + "/twelve_populations.json");
  const auto cfg = cli::parse_config(Json::parse(in));
  const auto chosen = ModelFormula::parse(*cfg.formula);
  const auto maximal = ModelFormula::parse(*cfg.maximal_formula);
  CHECK(chosen.fixed.size() + 1 == maximal.fixed.size());
  CHECK(cfg.grid.size() == 24);
  CHECK(cfg.countries.size() * 2 * cfg.grid.size() * 50 == 14400);
}
