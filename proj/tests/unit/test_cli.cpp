#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "synthetic.hpp"

#include "lmemort/cli.hpp"
#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"
#include "lmemort/projection.hpp"

using namespace lmemort;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lmemort_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome lmemort_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Gompertz-like rates with a common decline plus country and gender shifts.
double true_log_rate(const std::string& country, Gender g, int age, int year, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 0.03);
  const double shift = (country == "AAA" ? 0.0 : 0.15) + (g == Gender::Male ? 0.25 : 0.0);
  return -8.5 + 0.085 * age + shift - 0.012 * (year - 1961) * (1.0 + age / 120.0) + z(rng);
}

// HMD text layout with the full 5x1 or 1x1 age column.
void write_mx(const fs::path& p, const std::string& country, bool single_year, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::ostringstream s;
  s << country << ", Death rates\n\n  Year      Age        Female      Male      Total\n";
  const auto grid = single_year ? AgeGrid::single_year(0, 110) : AgeGrid::hmd_5x1(0, 110);
  for (int y = 1961; y <= 2000; ++y)
    for (const auto& a : grid) {
      const double f = std::exp(true_log_rate(country, Gender::Female, a.lower, y, rng));
      const double m = std::exp(true_log_rate(country, Gender::Male, a.lower, y, rng));
      s << "  " << y << "  " << a.label() << "  " << f << "  " << m << "  " << 0.5 * (f + m) << '\n';
    }
  write_text(p, s.str());
}

const char* kPipelineConfig = R"cfg({
  "data": {"root": "hmd", "file_pattern": "{country}.Mx_5x1.txt"},
  "countries": ["AAA", "BBB"],
  "age_grid": {"kind": "hmd_5x1", "min": 0, "max": 60},
  "years": {"first": 1961, "last": 2000},
  "train_cutoff": 1990,
  "covariates": {"split_age": 40, "segmented": true},
  "model": {"formula": "x + g:x + I(kt) + (1 + I(kt) | c:g:x)"},
  "forecast": {"horizon": 10, "level": 0.9, "n_sim": 200, "benchmarks": ["lc", "ll"]},
  "output": "out",
  "seed": 7
})cfg";

}  // namespace

TEST_CASE("population lists accept countries and single populations") {
  const auto f = cli::parse_population_list("AUT,CZE:M");
  REQUIRE(f.size() == 2);
  CHECK(f[0].country == "AUT");
  CHECK_FALSE(f[0].gender);
  CHECK(*f[1].gender == Gender::Male);
  CHECK_THROWS_AS(cli::parse_population_list("CZE:X"), ConfigError);
}

TEST_CASE("config parsing rejects unknown keys and names them") {
  try {
    cli::parse_config(Json::parse(R"({"model": {"formla": "x"}})"));
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "model.formla");
  }
  CHECK_THROWS_AS(cli::parse_config(Json::parse(R"({"forecast": {"horizon": "ten"}})")), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(Json::parse(R"({"age_grid": {"kind": "decades"}})")), ConfigError);
  const auto c = cli::parse_config(Json::parse(R"({"populations": ["AUT:F"], "seed": 3})"));
  CHECK(c.selected({"AUT", Gender::Female}));
  CHECK_FALSE(c.selected({"AUT", Gender::Male}));
  CHECK(c.require_seed("forecast") == 3);
}

TEST_CASE("exit codes separate usage, config and data errors") {
  const auto dir = scratch("codes");
  write_text(dir / "run.json", kPipelineConfig);
  const auto cfg = (dir / "run.json").string();

  CHECK(lmemort_cli({"bogus", "--config", cfg}).code == 2);
  CHECK(lmemort_cli({"fit"}).code == 2);

  write_text(dir / "bad.json", R"({"sed": 1})");
  auto r = lmemort_cli({"fit", "--config", (dir / "bad.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("'sed'") != std::string::npos);

  write_text(dir / "noseed.json", R"({"output": "out"})");
  r = lmemort_cli({"forecast", "--config", (dir / "noseed.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("'seed'") != std::string::npos);

  // Nothing ingested yet.
  r = lmemort_cli({"fit", "--config", cfg, "--out", (dir / "out").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("panel_train.csv") != std::string::npos);
}

TEST_CASE("evaluate of a perfect forecast reports zero error") {
  const auto dir = scratch("perfect");
  const auto test = synthetic::panel({"AAA", "BBB"}, AgeGrid::hmd_5x1(0, 20), {1991, 1995},
                                     [](const std::string& c, Gender g, int age, int year) {
                                       return -6.0 + 0.02 * age - 0.01 * (year - 1991) +
                                              (c == "BBB" ? 0.1 : 0.0) + (g == Gender::Male ? 0.2 : 0.0);
                                     });
  {
    std::ofstream p(dir / "panel_test.csv");
    write_panel_csv(p, test);
    RateForecast f;
    for (const auto& r : test.records()) f.cells[r.key()] = {r.log_rate, r.log_rate, r.log_rate, 0.0};
    std::ofstream o(dir / "forecast_lme.csv");
    write_forecast_csv(o, f);
  }
  write_text(dir / "run.json", R"({"output": "."})");
  const auto r = lmemort_cli({"evaluate", "--config", (dir / "run.json").string(), "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(slurp(dir / "mse_lme.csv") ==
        "country,gender,mse,n\nAAA,F,0,30\nAAA,M,0,30\nBBB,F,0,30\nBBB,M,0,30\n");
  CHECK(r.out.find("AAA F: mse lme 0") != std::string::npos);
}

TEST_CASE("pipeline runs end to end and forecasts are reproducible") {
  const auto dir = scratch("pipeline");
  fs::create_directories(dir / "hmd");
  write_mx(dir / "hmd" / "AAA.Mx_5x1.txt", "AAA", false, 11);
  write_mx(dir / "hmd" / "BBB.Mx_5x1.txt", "BBB", false, 12);
  write_text(dir / "run.json", kPipelineConfig);
  const auto out = dir / "out";
  auto step = [&](const std::string& cmd, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{cmd, "--config", (dir / "run.json").string(), "--out", out.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = lmemort_cli(args);
    INFO(cmd, ": ", r.err);
    REQUIRE(r.code == 0);
    return r;
  };

  auto r = step("ingest");
  CHECK(r.out.find("AAA F: 560 records, 14 age groups, 1961-2000 (train to 1990)") != std::string::npos);
  step("covariates");
  CHECK(slurp(out / "covariates_observed.csv").rfind("country,segment,year,value\n", 0) == 0);
  r = step("fit");
  CHECK(r.out.find("BBB M: 420 records") != std::string::npos);
  const auto fit_json = read_json_file((out / "fit.json").string());
  CHECK(fit_json.at("n_obs") == 4 * 14 * 30);

  step("forecast");
  const auto first = slurp(out / "forecast_lme.csv");
  const auto first_lc = slurp(out / "forecast_lc.csv");
  step("forecast");
  CHECK(slurp(out / "forecast_lme.csv") == first);
  CHECK(slurp(out / "forecast_lc.csv") == first_lc);
  step("forecast", {"--seed", "8"});
  CHECK(slurp(out / "forecast_lme.csv") != first);
  step("forecast");

  r = step("evaluate");
  for (const auto* f : {"mse_lme.csv", "mse_lme_vs_lc.csv", "mse_lme_vs_ll.csv"}) CHECK(fs::exists(out / f));
  CHECK(slurp(out / "mse_lme_vs_lc.csv").rfind("country,gender,mse_lme,mse_lc,ratio\n", 0) == 0);
  // The data follow the fitted structure, so the LME error stays near the noise level.
  std::ifstream mse_in(out / "mse_lme.csv");
  const auto t = csv::read(mse_in);
  REQUIRE(t.rows.size() == 4);
  for (const auto& row : t.rows) CHECK(std::stod(row[t.column("mse")]) < 0.01);

  r = step("lifetable");
  CHECK(fs::exists(out / "e0_lme_AAA_F.csv"));
  CHECK(fs::exists(out / "lifetable_lme_BBB_M_2000.csv"));
  CHECK(r.out.find("AAA F lme: e(0) in 2000") != std::string::npos);
}

TEST_CASE("value prices a portfolio under both surfaces") {
  const auto dir = scratch("value");
  fs::create_directories(dir / "hmd");
  write_mx(dir / "hmd" / "CCC.Mx_1x1.txt", "CCC", true, 21);
  write_text(dir / "portfolio.csv",
             "year_of_birth,gender,premium,annuity,type\n1950,M,5000,20000,both\n1955,M,6000,20000,both\n");
  write_text(dir / "run.json", R"cfg({
    "data": {"root": "hmd", "file_pattern": "{country}.Mx_1x1.txt"},
    "countries": ["CCC"],
    "populations": ["CCC:M"],
    "age_grid": {"kind": "single_year", "min": 45, "max": 110},
    "years": {"first": 1961, "last": 2000},
    "covariates": {"segmented": false},
    "valuation": {"country": "CCC", "portfolio": "portfolio.csv", "valuation_year": 2002,
                  "n_sim": 100},
    "seed": 5
  })cfg");
  const auto cfg = (dir / "run.json").string(), out = (dir / "out").string();
  auto r = lmemort_cli({"ingest", "--config", cfg, "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = lmemort_cli({"value", "--config", cfg, "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = read_json_file((dir / "out" / "valuation.json").string());
  for (const auto* m : {"lme", "lc"}) {
    CHECK(j.at(m).at("n_sim") == 100);
    CHECK(j.at(m).at("scr").get<double>() >= 0.0);
    CHECK(j.at(m).at("bel").get<double>() > 0.0);
  }
  CHECK(r.out.find("CCC lme: BEL") != std::string::npos);
  const auto again = lmemort_cli({"value", "--config", cfg, "--out", out});
  CHECK(read_json_file((dir / "out" / "valuation.json").string()) == j);
}
