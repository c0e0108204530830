#include "lmemort/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>

#include "lmemort/covariates.hpp"
#include "lmemort/csv.hpp"
#include "lmemort/design.hpp"
#include "lmemort/error.hpp"
#include "lmemort/formula.hpp"
#include "lmemort/lifetable.hpp"
#include "lmemort/mixedlm.hpp"
#include "lmemort/projection.hpp"

namespace lmemort::cli {
namespace fs = std::filesystem;
namespace {

// ---- config reading ------------------------------------------------------

// A JSON object plus its dotted path, for error messages.
class Section {
public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  const Json& raw(const std::string& k) const { return j_.at(k); }
  Section sub(const std::string& k) const { return Section(j_.at(k), key(k)); }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items())
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
        throw ConfigError(key(k), "unknown key");
  }

  template <typename T>
  T get(const std::string& k) const {
    try {
      return j_.at(k).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key(k), "has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& k, T& into) const {
    if (has(k)) into = get<T>(k);
  }

  template <typename T>
  void read(const std::string& k, std::optional<T>& into) const {
    if (has(k)) into = get<T>(k);
  }

private:
  const Json& j_;
  std::string path_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

AgeGrid parse_grid(const Section& s) {
  s.allow({"kind", "min", "max", "groups"});
  const auto kind = s.has("kind") ? s.get<std::string>("kind") : std::string("hmd_5x1");
  try {
    if (kind == "groups") {
      if (!s.has("groups")) throw ConfigError(s.key("groups"), "required for kind 'groups'");
      return grid_from_json(s.raw("groups"));
    }
    const int lo = s.has("min") ? s.get<int>("min") : 0;
    const int hi = s.has("max") ? s.get<int>("max") : 110;
    if (kind == "hmd_5x1") return AgeGrid::hmd_5x1(lo, hi);
    if (kind == "single_year") return AgeGrid::single_year(lo, hi);
  } catch (const ValidationError& e) {
    throw ConfigError(s.key("kind"), e.what());
  }
  throw ConfigError(s.key("kind"), "expected hmd_5x1, single_year or groups, got '" + kind + "'");
}

ValuationBlock parse_valuation(const Section& s, const fs::path& base) {
  s.allow({"country", "portfolio", "experience", "formula", "models", "valuation_year",
           "interest_rate", "retirement_age", "max_age", "n_sim"});
  ValuationBlock v;
  if (!s.has("country")) throw ConfigError(s.key("country"), "required");
  if (!s.has("portfolio")) throw ConfigError(s.key("portfolio"), "required");
  v.country = s.get<std::string>("country");
  v.portfolio = resolve(base, s.get<std::string>("portfolio"));
  if (s.has("experience")) v.experience = resolve(base, s.get<std::string>("experience"));
  s.read("formula", v.formula);
  s.read("models", v.models);
  for (const auto& m : v.models)
    if (m != "lme" && m != "lc") throw ConfigError(s.key("models"), "unknown model '" + m + "'");
  s.read("valuation_year", v.config.valuation_year);
  s.read("interest_rate", v.config.interest_rate);
  s.read("retirement_age", v.config.retirement_age);
  s.read("max_age", v.config.max_age);
  s.read("n_sim", v.config.n_sim);
  return v;
}

// ---- artifacts -------------------------------------------------------------

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p, const std::string& producer) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("missing " + p.string() + " (run '" + producer + "' first)");
  return in;
}

Json load_json(const fs::path& p, const std::string& producer) {
  open_in(p, producer);
  return read_json_file(p.string());
}

std::string pop_tag(const Population& p) { return p.country + "_" + gender_code(p.gender); }
std::string pop_label(const Population& p) { return p.country + " " + gender_code(p.gender); }

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

// One modelling run: the pooled panel, or a single population when
// per_population is set. Artifacts go to `dir`.
struct Unit {
  fs::path dir;
  std::optional<Population> only;
};

struct Context {
  const RunConfig& cfg;
  std::ostream& out;

  MortalityPanel panel(const std::string& name) const {
    auto in = open_in(cfg.out / name, "ingest");
    const auto p = read_panel_csv(in);
    return p.filter([&](const PanelRecord& r) { return cfg.selected({r.country, r.gender}); });
  }

  std::vector<Unit> units() const {
    if (!cfg.per_population) return {{cfg.out, std::nullopt}};
    std::vector<Unit> u;
    for (const auto& pop : panel("panel_train.csv").populations())
      u.push_back({cfg.out / pop_tag(pop), pop});
    return u;
  }

  MortalityPanel unit_panel(const Unit& u, const std::string& name) const {
    auto p = panel(name);
    return u.only ? p.restrict_to(*u.only) : p;
  }

  CovariateSet observed_covariates(const Unit& u) const {
    auto in = open_in(u.dir / "covariates_observed.csv", "covariates");
    auto cov = read_covariates_csv(in, cfg.split_age);
    if (cfg.extra_covariates) {
      std::ifstream ex(*cfg.extra_covariates);
      if (!ex) throw ValidationError("cannot open extra covariates " + cfg.extra_covariates->string());
      read_extra_covariates_csv(ex, cov);
    }
    return cov;
  }

  ModelFormula formula(const std::optional<std::string>& text, const std::string& key) const {
    if (!text) throw ConfigError(key, "required for this command");
    try {
      return ModelFormula::parse(*text);
    } catch (const Error& e) {
      throw ConfigError(key, e.what());
    }
  }
};

// ---- commands --------------------------------------------------------------

void cmd_ingest(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  fs::path root;
  if (cfg.data_root) {
    root = *cfg.data_root;
  } else if (const char* env = std::getenv("LMEMORT_DATA_ROOT"); env && *env) {
    root = env;
  } else {
    throw ConfigError("data.root", "not set and LMEMORT_DATA_ROOT is unset");
  }

  std::vector<std::string> countries = cfg.countries;
  if (!cfg.populations.empty()) {
    std::set<std::string> wanted;
    for (const auto& f : cfg.populations) wanted.insert(f.country);
    if (countries.empty()) {
      countries.assign(wanted.begin(), wanted.end());
    } else {
      std::erase_if(countries, [&](const std::string& c) { return !wanted.count(c); });
    }
  }
  if (countries.empty()) throw ConfigError("countries", "no countries to ingest");

  std::vector<RawRateTable> tables;
  for (const auto& c : countries) {
    std::string rel;
    if (auto it = cfg.files.find(c); it != cfg.files.end()) {
      rel = it->second;
    } else {
      rel = cfg.file_pattern;
      for (auto pos = rel.find("{country}"); pos != std::string::npos; pos = rel.find("{country}"))
        rel.replace(pos, 9, c);
    }
    const auto path = resolve(root, rel);
    if (!fs::exists(path)) throw ValidationError("rate file for " + c + " not found: " + path.string());
    tables.push_back(read_mx_file(path.string(), c));
  }
  auto panel = build_panel(tables, cfg.years, cfg.grid)
                   .filter([&](const PanelRecord& r) { return cfg.selected({r.country, r.gender}); });
  if (panel.empty()) throw ValidationError("population filter leaves no records");

  auto all = open_out(cfg.out / "panel.csv");
  write_panel_csv(all, panel);
  MortalityPanel train = panel, test;
  if (cfg.train_cutoff && *cfg.train_cutoff < cfg.years.last) {
    std::tie(train, test) = split_train_test(panel, *cfg.train_cutoff);
    auto tf = open_out(cfg.out / "panel_test.csv");
    write_panel_csv(tf, test);
  }
  auto tr = open_out(cfg.out / "panel_train.csv");
  write_panel_csv(tr, train);

  for (const auto& pop : panel.populations()) {
    const auto n = panel.restrict_to(pop).size();
    ctx.out << pop_label(pop) << ": " << n << " records, " << cfg.grid.size() << " age groups, "
            << cfg.years.first << "-" << cfg.years.last;
    if (!test.empty()) ctx.out << " (train to " << *cfg.train_cutoff << ")";
    ctx.out << '\n';
  }
}

void cmd_covariates(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  for (const auto& u : ctx.units()) {
    const auto panel = ctx.unit_panel(u, "panel_train.csv");
    const auto cov = compute_covariates(panel, cfg.split_age, cfg.segmented);
    const auto walks = fit_walks(cov);
    const int through = walks.global.last_year + cfg.horizon;
    auto o = open_out(u.dir / "covariates_observed.csv");
    write_covariates_csv(o, cov);
    auto f = open_out(u.dir / "covariates_forecast.csv");
    write_covariates_csv(f, extend_with_forecast(cov, walks, through));
    write_json_file((u.dir / "walks.json").string(), walks_to_json(walks));

    const auto& g = walks.global;
    for (const auto& pop : panel.populations()) {
      ctx.out << pop_label(pop) << ": k_t drift " << fmt(g.drift) << ", " << through << " -> "
              << fmt(rwd_point(g, cfg.horizon));
      if (auto it = walks.countries.find(pop.country); it != walks.countries.end())
        ctx.out << "; young " << fmt(rwd_point(it->second.first, cfg.horizon)) << ", old "
                << fmt(rwd_point(it->second.second, cfg.horizon));
      ctx.out << '\n';
    }
  }
}

void per_population_fit_summary(const Context& ctx, const FittedMixedModel& fit) {
  std::map<Population, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < fit.rows.size(); ++i) {
    auto& [ss, n] = acc[{fit.rows[i].country, fit.rows[i].gender}];
    const double r = fit.residuals(static_cast<Eigen::Index>(i));
    ss += r * r;
    ++n;
  }
  for (const auto& [pop, v] : acc)
    ctx.out << pop_label(pop) << ": " << v.second << " records, residual rms "
            << fmt(std::sqrt(v.first / v.second)) << '\n';
}

void cmd_fit(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto formula = ctx.formula(cfg.formula, "model.formula");
  for (const auto& u : ctx.units()) {
    auto panel = ctx.unit_panel(u, "panel_train.csv");
    const auto cov = ctx.observed_covariates(u);
    FittedMixedModel fit;
    if (cfg.cleaning_threshold) {
      const auto& clean_formula =
          cfg.clean_with_maximal ? ctx.formula(cfg.maximal_formula, "model.maximal_formula") : formula;
      auto cr = clean_refit(panel, cov, clean_formula, *cfg.cleaning_threshold);
      write_json_file((u.dir / "cleaning.json").string(), cleaning_to_json(cr.report));
      write_json_file((u.dir / "fit_initial.json").string(), fit_to_json(cr.initial));
      auto pc = open_out(u.dir / "panel_clean.csv");
      write_panel_csv(pc, cr.cleaned);
      ctx.out << "cleaning kept " << cr.report.n_after << " of " << cr.report.n_before << " records ("
              << fmt(cr.report.retained_fraction, 4) << ")\n";
      fit = cfg.clean_with_maximal ? fit_reml(build_design(cr.cleaned, cov, formula))
                                   : std::move(cr.refit);
    } else {
      fit = fit_reml(build_design(panel, cov, formula));
    }
    write_json_file((u.dir / "fit.json").string(), fit_to_json(fit));
    auto b = open_out(u.dir / "blups.csv");
    write_blups_csv(b, fit);
    write_json_file((u.dir / "diagnostics.json").string(), diagnostics_to_json(residual_diagnostics(fit)));
    if (formula == ModelFormula::parse("I(kt) + (1 + I(kt) | x)")) {
      const auto lc = to_lc_form(fit);
      Json j;
      for (const auto& [age, a] : lc.a) j.push_back({{"age_lower", age}, {"a", a}, {"b", lc.b.at(age)}});
      write_json_file((u.dir / "lc_form.json").string(), j);
    }
    per_population_fit_summary(ctx, fit);
    const auto ic = information_criteria(fit);
    ctx.out << (u.only ? pop_label(*u.only) + " model" : std::string("model")) << ": REML "
            << fmt(fit.deviance) << ", AIC " << fmt(ic.aic) << ", sigma2 " << fmt(fit.sigma2)
            << ", ICC " << fmt(icc(fit), 4) << (fit.boundary ? ", boundary" : "")
            << (fit.converged ? "" : ", not converged") << '\n';
  }
}

void cmd_select(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto maximal = ctx.formula(cfg.maximal_formula, "model.maximal_formula");
  for (const auto& u : ctx.units()) {
    auto panel = ctx.unit_panel(u, "panel_train.csv");
    const auto cov = ctx.observed_covariates(u);
    if (cfg.cleaning_threshold) {
      auto cr = clean_refit(panel, cov, maximal, *cfg.cleaning_threshold);
      write_json_file((u.dir / "selection_cleaning.json").string(), cleaning_to_json(cr.report));
      panel = std::move(cr.cleaned);
    }
    const auto trace = backward_select(panel, cov, maximal, cfg.criterion);
    write_json_file((u.dir / "selection.json").string(), trace_to_json(trace));
    for (const auto& s : trace.steps)
      ctx.out << "drop " << s.phase << " " << s.removed << ": " << to_string(cfg.criterion) << " "
              << fmt(s.before) << " -> " << fmt(s.after) << '\n';
    for (const auto& pop : panel.populations())
      ctx.out << pop_label(pop) << ": " << panel.restrict_to(pop).size() << " records, selected "
              << trace.final_formula.to_string() << '\n';
  }
}

void write_forecast(const fs::path& p, const RateForecast& f) {
  auto o = open_out(p);
  write_forecast_csv(o, f);
}

RateForecast merge(RateForecast into, const RateForecast& more) {
  for (const auto& [k, c] : more.cells) into.cells[k] = c;
  return into;
}

void cmd_forecast(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto seed = cfg.require_seed("forecast");
  const IntervalSettings is{cfg.n_sim, cfg.level, seed};
  for (const auto& u : ctx.units()) {
    const auto fit = fit_from_json(load_json(u.dir / "fit.json", "fit"));
    const auto observed = ctx.observed_covariates(u);
    const auto walks = walks_from_json(load_json(u.dir / "walks.json", "covariates"));
    const int first = walks.global.last_year + 1, last = walks.global.last_year + cfg.horizon;
    const auto cov = extend_with_forecast(observed, walks, last);

    auto keys = forecast_keys(fit, year_span(first, last));
    std::erase_if(keys, [&](const PanelKey& k) { return !cfg.selected({k.country, k.gender}); });
    const auto lme = prediction_intervals(fit, cov, keys, is);
    write_forecast(u.dir / "forecast_lme.csv", lme);

    const auto train = ctx.unit_panel(u, "panel_train.csv");
    for (const auto& b : cfg.benchmarks) {
      RateForecast f;
      if (b == "lc") {
        Json fits = Json::array();
        for (const auto& pop : train.populations()) {
          const auto lc = fit_lc(train, pop);
          fits.push_back(lc_to_json(lc));
          f = merge(std::move(f), forecast_lc(lc, cfg.horizon, is));
        }
        write_json_file((u.dir / "lc.json").string(), fits);
      } else {
        const auto ll = fit_ll(train);
        write_json_file((u.dir / "ll.json").string(), ll_to_json(ll));
        f = forecast_ll(ll, cfg.horizon, is);
      }
      write_forecast(u.dir / ("forecast_" + b + ".csv"), f);
    }

    for (const auto& pop : lme.populations()) {
      const auto& c = lme.at({pop.country, pop.gender, cfg.grid[0].lower, last});
      ctx.out << pop_label(pop) << ": " << first << "-" << last << ", age " << cfg.grid[0].label()
              << " in " << last << " log m " << fmt(c.point) << " [" << fmt(c.lower) << ", "
              << fmt(c.upper) << "]\n";
    }
  }
}

RateForecast load_forecast(const fs::path& p) {
  auto in = open_in(p, "forecast");
  return read_forecast_csv(in);
}

void cmd_evaluate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::map<std::string, std::vector<MseRow>> tables;
  for (const auto& u : ctx.units()) {
    const auto test = ctx.unit_panel(u, "panel_test.csv");
    std::vector<std::string> models{"lme"};
    for (const auto& b : cfg.benchmarks) models.push_back(b);
    for (const auto& m : models) {
      auto f = load_forecast(u.dir / ("forecast_" + m + ".csv"));
      std::erase_if(f.cells, [&](const auto& kv) {
        return !cfg.selected({kv.first.country, kv.first.gender});
      });
      auto rows = mse(f, test, cfg.scale);
      auto& t = tables[m];
      t.insert(t.end(), rows.begin(), rows.end());
    }
  }
  auto o = open_out(cfg.out / "mse_lme.csv");
  o << "country,gender,mse,n\n";
  for (const auto& r : tables["lme"])
    o << r.population.country << ',' << gender_code(r.population.gender) << ','
      << csv::format_double(r.mse) << ',' << r.n << '\n';
  for (const auto& b : cfg.benchmarks) {
    auto c = open_out(cfg.out / ("mse_lme_vs_" + b + ".csv"));
    write_mse_comparison_csv(c, tables["lme"], tables[b], b);
  }

  for (std::size_t i = 0; i < tables["lme"].size(); ++i) {
    const auto& r = tables["lme"][i];
    ctx.out << pop_label(r.population) << ": mse lme " << fmt(r.mse);
    for (const auto& b : cfg.benchmarks) {
      const auto& other = tables[b];
      auto it = std::find_if(other.begin(), other.end(),
                             [&](const MseRow& x) { return x.population == r.population; });
      if (it != other.end()) ctx.out << ", " << b << " " << fmt(it->mse);
    }
    ctx.out << '\n';
  }
}

void cmd_lifetable(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<std::string> models{"lme"};
  for (const auto& b : cfg.benchmarks) models.push_back(b);
  for (const auto& u : ctx.units()) {
    for (const auto& m : models) {
      const auto f = load_forecast(u.dir / ("forecast_" + m + ".csv"));
      for (const auto& pop : f.populations()) {
        if (!cfg.selected(pop)) continue;
        const auto series = life_expectancy_series(f, pop, cfg.grid);
        auto o = open_out(u.dir / ("e0_" + m + "_" + pop_tag(pop) + ".csv"));
        write_expectancy_csv(o, series);
        const int last = series.rbegin()->first;
        auto t = open_out(u.dir / ("lifetable_" + m + "_" + pop_tag(pop) + "_" + std::to_string(last) + ".csv"));
        write_life_table_csv(t, build_life_table(rates_for(f, pop, last, cfg.grid), cfg.grid));
        const auto& e = series.rbegin()->second;
        ctx.out << pop_label(pop) << " " << m << ": e(" << cfg.grid[0].lower << ") in " << last << " "
                << fmt(e.point, 5) << " [" << fmt(e.lower, 5) << ", " << fmt(e.upper, 5) << "]\n";
      }
    }
  }
}

void cmd_value(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (!cfg.valuation) throw ConfigError("valuation", "required for the value command");
  const auto& v = *cfg.valuation;
  auto vc = v.config;
  vc.seed = cfg.require_seed("value");
  vc.validate();

  const auto portfolio = read_portfolio_csv_file(v.portfolio.string());
  std::optional<ExperienceTable> experience;
  if (v.experience) {
    experience = read_experience_csv_file(v.experience->string());
    experience->validate(vc.max_age);
  }
  std::set<Gender> genders;
  for (const auto& p : portfolio) genders.insert(p.gender);

  const auto panel = ctx.panel("panel.csv").filter(
      [&](const PanelRecord& r) { return r.country == v.country && genders.count(r.gender); });
  if (panel.empty()) throw ValidationError("no data for valuation country " + v.country);

  Json result;
  for (const auto& m : v.models) {
    ScenarioModel model;
    if (m == "lme") {
      const auto cov = compute_covariates(panel, cfg.split_age, cfg.segmented);
      const auto fit = fit_reml(build_design(panel, cov, ctx.formula(v.formula, "valuation.formula")));
      model = lme_scenarios(fit, cov, fit_walks(cov), v.country);
    } else {
      std::vector<LcFit> fits;
      for (Gender g : genders) fits.push_back(fit_lc(panel, {v.country, g}));
      model = lc_scenarios(fits);
    }
    const auto r = solvency_capital(portfolio, model, vc, experience);
    result[m] = solvency_to_json(r);
    ctx.out << v.country << " " << m << ": BEL " << fmt(r.bel, 10) << ", SCR " << fmt(r.scr, 8)
            << " (" << r.n_sim << " paths, seed " << r.seed << ")\n";
  }
  write_json_file((cfg.out / "valuation.json").string(), result);
}

}  // namespace

std::vector<PopulationFilter> parse_population_list(const std::string& text) {
  std::vector<PopulationFilter> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    PopulationFilter f;
    const auto colon = item.find(':');
    f.country = item.substr(0, colon);
    if (colon != std::string::npos) {
      try {
        f.gender = parse_gender(item.substr(colon + 1));
      } catch (const ValidationError& e) {
        throw ConfigError("populations", e.what());
      }
    }
    if (f.country.empty()) throw ConfigError("populations", "empty country in '" + item + "'");
    out.push_back(f);
  }
  return out;
}

bool RunConfig::selected(const Population& pop) const {
  if (populations.empty()) return true;
  return std::any_of(populations.begin(), populations.end(), [&](const PopulationFilter& f) {
    return f.country == pop.country && (!f.gender || *f.gender == pop.gender);
  });
}

std::uint64_t RunConfig::require_seed(const std::string& command) const {
  if (!seed) throw ConfigError("seed", "required for " + command);
  return *seed;
}

RunConfig parse_config(const Json& j, const fs::path& base) {
  const Section root(j, "");
  root.allow({"data", "countries", "populations", "age_grid", "years", "train_cutoff", "covariates",
              "model", "forecast", "evaluate", "valuation", "output", "seed"});
  RunConfig c;
  if (root.has("data")) {
    const auto d = root.sub("data");
    d.allow({"root", "file_pattern", "files"});
    if (d.has("root")) c.data_root = resolve(base, d.get<std::string>("root"));
    d.read("file_pattern", c.file_pattern);
    d.read("files", c.files);
  }
  root.read("countries", c.countries);
  if (root.has("populations")) {
    std::string joined;
    for (const auto& p : root.get<std::vector<std::string>>("populations")) joined += p + ",";
    c.populations = parse_population_list(joined);
  }
  if (root.has("age_grid")) c.grid = parse_grid(root.sub("age_grid"));
  if (root.has("years")) {
    const auto y = root.sub("years");
    y.allow({"first", "last"});
    y.read("first", c.years.first);
    y.read("last", c.years.last);
    if (c.years.last < c.years.first) throw ConfigError("years", "last before first");
  }
  root.read("train_cutoff", c.train_cutoff);
  if (c.train_cutoff && !c.years.contains(*c.train_cutoff))
    throw ConfigError("train_cutoff", "outside the year range");
  if (root.has("covariates")) {
    const auto s = root.sub("covariates");
    s.allow({"split_age", "segmented", "extra"});
    s.read("split_age", c.split_age);
    s.read("segmented", c.segmented);
    if (s.has("extra")) c.extra_covariates = resolve(base, s.get<std::string>("extra"));
  }
  if (root.has("model")) {
    const auto s = root.sub("model");
    s.allow({"formula", "maximal_formula", "criterion", "cleaning_threshold", "clean_with",
             "per_population"});
    s.read("formula", c.formula);
    s.read("maximal_formula", c.maximal_formula);
    if (s.has("criterion")) {
      try {
        c.criterion = parse_criterion(s.get<std::string>("criterion"));
      } catch (const ValidationError& e) {
        throw ConfigError(s.key("criterion"), e.what());
      }
    }
    s.read("cleaning_threshold", c.cleaning_threshold);
    if (c.cleaning_threshold && !(*c.cleaning_threshold > 0.0))
      throw ConfigError(s.key("cleaning_threshold"), "must be positive");
    if (s.has("clean_with")) {
      const auto w = s.get<std::string>("clean_with");
      if (w != "formula" && w != "maximal")
        throw ConfigError(s.key("clean_with"), "expected formula or maximal");
      c.clean_with_maximal = w == "maximal";
    }
    s.read("per_population", c.per_population);
  }
  if (root.has("forecast")) {
    const auto s = root.sub("forecast");
    s.allow({"horizon", "level", "n_sim", "benchmarks"});
    s.read("horizon", c.horizon);
    s.read("level", c.level);
    s.read("n_sim", c.n_sim);
    s.read("benchmarks", c.benchmarks);
  }
  for (const auto& b : c.benchmarks)
    if (b != "lc" && b != "ll") throw ConfigError("forecast.benchmarks", "unknown model '" + b + "'");
  if (c.per_population && std::count(c.benchmarks.begin(), c.benchmarks.end(), "ll"))
    throw ConfigError("forecast.benchmarks", "ll needs several populations; drop it or per_population");
  if (root.has("evaluate")) {
    const auto s = root.sub("evaluate");
    s.allow({"scale"});
    if (s.has("scale")) {
      try {
        c.scale = parse_mse_scale(s.get<std::string>("scale"));
      } catch (const ValidationError& e) {
        throw ConfigError(s.key("scale"), e.what());
      }
    }
  }
  if (root.has("valuation")) c.valuation = parse_valuation(root.sub("valuation"), base);
  if (root.has("output")) c.out = root.get<std::string>("output");
  root.read("seed", c.seed);
  return c;
}

namespace {

void check_ranges(const RunConfig& c) {
  if (c.horizon < 1) throw ConfigError("forecast.horizon", "must be at least 1");
  if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("forecast.level", "must lie in (0, 1)");
  if (c.n_sim < 1) throw ConfigError("forecast.n_sim", "must be at least 1");
  if (c.valuation && c.valuation->config.n_sim < 1)
    throw ConfigError("valuation.n_sim", "must be at least 1");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-effects mortality modelling"};
  app.name("lmemort");
  std::string command, config_path, out_dir, populations;
  std::optional<std::uint64_t> seed;
  std::optional<int> horizon, nsim;
  std::optional<double> level;
  app.add_option("command", command, "ingest, covariates, fit, select, forecast, evaluate, lifetable or value")
      ->required()
      ->check(CLI::IsMember({"ingest", "covariates", "fit", "select", "forecast", "evaluate",
                             "lifetable", "value"}));
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_dir, "output directory (overrides output)");
  app.add_option("--seed", seed, "root seed");
  app.add_option("--populations", populations, "comma list such as AUT,CZE:M");
  app.add_option("--horizon", horizon, "forecast years");
  app.add_option("--level", level, "prediction interval level");
  app.add_option("--nsim", nsim, "simulations for intervals and valuation");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("--config", "cannot open " + config_path);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    auto cfg = parse_config(j, fs::path(config_path).parent_path());
    if (!out_dir.empty()) cfg.out = out_dir;
    if (seed) cfg.seed = seed;
    if (!populations.empty()) cfg.populations = parse_population_list(populations);
    if (horizon) cfg.horizon = *horizon;
    if (level) cfg.level = *level;
    if (nsim) {
      cfg.n_sim = *nsim;
      if (cfg.valuation) cfg.valuation->config.n_sim = *nsim;
    }
    check_ranges(cfg);

    const Context ctx{cfg, out};
    if (command == "ingest") cmd_ingest(ctx);
    else if (command == "covariates") cmd_covariates(ctx);
    else if (command == "fit") cmd_fit(ctx);
    else if (command == "select") cmd_select(ctx);
    else if (command == "forecast") cmd_forecast(ctx);
    else if (command == "evaluate") cmd_evaluate(ctx);
    else if (command == "lifetable") cmd_lifetable(ctx);
    else cmd_value(ctx);
    return 0;
  } catch (const ConfigError& e) {
    err << "lmemort " << command << ": config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "lmemort " << command << ": data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "lmemort " << command << ": error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace lmemort::cli
