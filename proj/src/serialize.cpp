#include "lmemort/serialize.hpp"

#include <fstream>
#include <ostream>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"

namespace lmemort {
namespace {

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& r = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(r.size()) != cols) throw ValidationError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json series_to_json(const std::map<int, double>& s) {
  Json j = Json::object();
  for (const auto& [k, v] : s) j[std::to_string(k)] = v;
  return j;
}

std::map<int, double> series_from_json(const Json& j) {
  std::map<int, double> s;
  for (const auto& [k, v] : j.items()) s[std::stoi(k)] = v.get<double>();
  return s;
}

Json rw_to_json(const RandomWalkModel& m) {
  return {{"drift", m.drift},
          {"innovation_variance", m.innovation_variance},
          {"last_year", m.last_year},
          {"last_value", m.last_value}};
}

RandomWalkModel rw_from_json(const Json& j) {
  return {j.at("drift").get<double>(), j.at("innovation_variance").get<double>(),
          j.at("last_year").get<int>(), j.at("last_value").get<double>()};
}

std::string grouping_of(const std::string& term_label) {
  const auto bar = term_label.rfind(" | ");
  if (bar == std::string::npos) return term_label;
  auto g = term_label.substr(bar + 3);
  if (!g.empty() && g.back() == ')') g.pop_back();
  return g;
}

}  // namespace

Json grid_to_json(const AgeGrid& grid) {
  Json j = Json::array();
  for (const auto& g : grid) j.push_back(g.label());
  return j;
}

AgeGrid grid_from_json(const Json& j) {
  std::vector<AgeGroup> groups;
  for (const auto& s : j) groups.push_back(parse_age_group(s.get<std::string>()));
  return AgeGrid(std::move(groups));
}

Json fit_to_json(const FittedMixedModel& fit) {
  if (!fit.layout) throw ValidationError("only fits built from a panel can be saved");
  const auto& layout = *fit.layout;
  const auto ic = information_criteria(fit);
  Json j;
  j["formula"] = layout.formula().to_string();
  j["age_grid"] = grid_to_json(layout.grid());
  j["objective"] = fit.objective == Objective::REML ? "REML" : "ML";
  j["n_obs"] = fit.n_obs;
  j["n_params"] = fit.n_params;
  j["converged"] = fit.converged;
  j["boundary"] = fit.boundary;
  j["evaluations"] = fit.evaluations;
  j["sigma2"] = fit.sigma2;
  j["criteria"] = {{"deviance", fit.deviance}, {"loglik", fit.loglik()}, {"aic", ic.aic}, {"bic", ic.bic}};
  j["icc"] = icc(fit);
  j["theta"] = fit.theta;

  Json fixed = Json::array();
  for (const auto& f : fit.fixed)
    fixed.push_back({{"name", f.name}, {"estimate", f.estimate}, {"std_error", f.std_error}});
  j["fixed"] = fixed;
  j["beta_cov"] = matrix_to_json(fit.beta_cov);

  Json terms = Json::array();
  for (std::size_t b = 0; b < fit.terms.size(); ++b) {
    const auto& t = fit.terms[b];
    const auto& f = layout.formula().random;
    const auto it = std::find(f.begin(), f.end(), layout.block_term(b));
    Json cc = Json::array();
    for (const auto& c : t.cond_cov) cc.push_back(matrix_to_json(c));
    terms.push_back({{"label", t.label},
                     {"formula_index", it - f.begin()},
                     {"regressors", t.regressors},
                     {"psi", matrix_to_json(t.psi)},
                     {"correlation", matrix_to_json(t.correlation())},
                     {"levels", t.levels},
                     {"blups", matrix_to_json(t.blups)},
                     {"cond_cov", cc}});
  }
  j["random"] = terms;

  Json rows = Json::array();
  for (const auto& r : fit.rows)
    rows.push_back({r.country, std::string(1, gender_code(r.gender)), r.age_lower, r.year});
  j["rows"] = rows;
  j["fitted"] = vector_to_json(fit.fitted);
  j["residuals"] = vector_to_json(fit.residuals);
  return j;
}

FittedMixedModel fit_from_json(const Json& j) {
  try {
    const auto formula = ModelFormula::parse(j.at("formula").get<std::string>());
    const auto grid = grid_from_json(j.at("age_grid"));
    FittedMixedModel fit;
    fit.objective = j.at("objective").get<std::string>() == "ML" ? Objective::ML : Objective::REML;
    fit.n_obs = j.at("n_obs").get<int>();
    fit.n_params = j.at("n_params").get<int>();
    fit.converged = j.at("converged").get<bool>();
    fit.boundary = j.at("boundary").get<bool>();
    fit.evaluations = j.at("evaluations").get<int>();
    fit.sigma2 = j.at("sigma2").get<double>();
    fit.deviance = j.at("criteria").at("deviance").get<double>();
    fit.theta = j.at("theta").get<std::vector<double>>();

    const auto& fixed = j.at("fixed");
    fit.beta.resize(static_cast<Eigen::Index>(fixed.size()));
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      fit.fixed.push_back({fixed[i].at("name").get<std::string>(), fixed[i].at("estimate").get<double>(),
                           fixed[i].at("std_error").get<double>()});
      fit.beta(static_cast<Eigen::Index>(i)) = fit.fixed.back().estimate;
    }
    fit.beta_cov = matrix_from_json(j.at("beta_cov"), fit.beta.size());

    std::vector<RandomTerm> block_terms;
    std::vector<std::vector<std::string>> levels;
    for (const auto& t : j.at("random")) {
      RandomTermFit r;
      r.label = t.at("label").get<std::string>();
      r.regressors = t.at("regressors").get<std::vector<std::string>>();
      r.levels = t.at("levels").get<std::vector<std::string>>();
      const auto q = static_cast<Eigen::Index>(r.regressors.size());
      r.psi = matrix_from_json(t.at("psi"), q);
      r.blups = matrix_from_json(t.at("blups"), q);
      for (const auto& c : t.at("cond_cov")) r.cond_cov.push_back(matrix_from_json(c, q));
      if (r.blups.rows() != static_cast<Eigen::Index>(r.levels.size()) ||
          r.cond_cov.size() != r.levels.size())
        throw ValidationError("random term " + r.label + ": level counts disagree");
      const auto idx = t.at("formula_index").get<std::size_t>();
      if (idx >= formula.random.size()) throw ValidationError("random term index out of range");
      block_terms.push_back(formula.random[idx]);
      levels.push_back(r.levels);
      fit.terms.push_back(std::move(r));
    }
    fit.layout = DesignLayout(formula, grid, std::move(block_terms), std::move(levels));
    if (fit.layout->p() != static_cast<std::size_t>(fit.beta.size()))
      throw ValidationError("fixed-effect count does not match the formula");

    for (const auto& r : j.at("rows"))
      fit.rows.push_back({r.at(0).get<std::string>(), parse_gender(r.at(1).get<std::string>()),
                          r.at(2).get<int>(), r.at(3).get<int>()});
    fit.fitted = vector_from_json(j.at("fitted"));
    fit.residuals = vector_from_json(j.at("residuals"));
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed fit JSON: ") + e.what());
  }
}

void write_blups_csv(std::ostream& out, const FittedMixedModel& fit) {
  out << "group_key,regressor,value\n";
  const bool qualify = fit.terms.size() > 1;
  for (const auto& t : fit.terms)
    for (std::size_t l = 0; l < t.levels.size(); ++l)
      for (std::size_t r = 0; r < t.regressors.size(); ++r)
        out << t.levels[l] << ','
            << (qualify ? t.regressors[r] + " | " + grouping_of(t.label) : t.regressors[r]) << ','
            << csv::format_double(t.blups(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(r)))
            << '\n';
}

Json walks_to_json(const CovariateWalks& walks) {
  Json c = Json::object();
  for (const auto& [country, w] : walks.countries)
    c[country] = {{"young", rw_to_json(w.first)}, {"old", rw_to_json(w.second)}};
  return {{"global", rw_to_json(walks.global)}, {"countries", c}};
}

CovariateWalks walks_from_json(const Json& j) {
  try {
    CovariateWalks w;
    w.global = rw_from_json(j.at("global"));
    for (const auto& [country, v] : j.at("countries").items())
      w.countries[country] = {rw_from_json(v.at("young")), rw_from_json(v.at("old"))};
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed walks JSON: ") + e.what());
  }
}

Json trace_to_json(const SelectionTrace& trace) {
  Json steps = Json::array();
  for (const auto& s : trace.steps)
    steps.push_back({{"phase", s.phase},
                     {"removed", s.removed},
                     {"before", s.before},
                     {"after", s.after},
                     {"formula", s.formula}});
  return {{"criterion", to_string(trace.criterion)},
          {"initial", trace.initial.to_string()},
          {"final", trace.final_formula.to_string()},
          {"steps", steps}};
}

Json cleaning_to_json(const CleaningReport& report) {
  Json dropped = Json::array();
  for (const auto& k : report.dropped_keys) dropped.push_back(to_string(k));
  return {{"threshold", report.threshold},
          {"n_before", report.n_before},
          {"n_after", report.n_after},
          {"retained_fraction", report.retained_fraction},
          {"dropped", dropped}};
}

Json diagnostics_to_json(const ResidualDiagnostics& d) {
  Json qq = Json::array();
  for (const auto& p : d.qq) qq.push_back({p.theoretical, p.empirical});
  Json bins = Json::array();
  for (const auto& b : d.bins)
    bins.push_back({{"fitted_min", b.fitted_min},
                    {"fitted_max", b.fitted_max},
                    {"fitted_mean", b.fitted_mean},
                    {"residual_mean", b.residual_mean},
                    {"residual_variance", b.residual_variance},
                    {"count", b.count}});
  return {{"qq", qq}, {"bins", bins}};
}

Json lc_to_json(const LcFit& fit) {
  return {{"country", fit.population.country},
          {"gender", std::string(1, gender_code(fit.population.gender))},
          {"age_grid", grid_to_json(fit.grid)},
          {"a", series_to_json(fit.a)},
          {"b", series_to_json(fit.b)},
          {"k", series_to_json(fit.k)},
          {"rw", rw_to_json(fit.rw)}};
}

LcFit lc_from_json(const Json& j) {
  try {
    LcFit fit;
    fit.population = {j.at("country").get<std::string>(), parse_gender(j.at("gender").get<std::string>())};
    fit.grid = grid_from_json(j.at("age_grid"));
    fit.a = series_from_json(j.at("a"));
    fit.b = series_from_json(j.at("b"));
    fit.k = series_from_json(j.at("k"));
    fit.rw = rw_from_json(j.at("rw"));
    return fit;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed LC JSON: ") + e.what());
  }
}

Json ll_to_json(const LlFit& fit) {
  Json per_pop = Json::array();
  for (const auto& [pop, s] : fit.specific)
    per_pop.push_back({{"country", pop.country},
                    {"gender", std::string(1, gender_code(pop.gender))},
                    {"alpha", series_to_json(s.alpha)},
                    {"beta", series_to_json(s.beta)},
                    {"kappa", series_to_json(s.kappa)},
                    {"ar", {{"intercept", s.ar.intercept},
                            {"phi", s.ar.phi},
                            {"innovation_variance", s.ar.innovation_variance},
                            {"last_year", s.ar.last_year},
                            {"last_value", s.ar.last_value}}}});
  return {{"age_grid", grid_to_json(fit.grid)},
          {"common", {{"B", series_to_json(fit.B)}, {"K", series_to_json(fit.K)}, {"rw", rw_to_json(fit.rw)}}},
          {"specific", per_pop}};
}

Json solvency_to_json(const SolvencyResult& r) {
  return {{"bel", r.bel}, {"scr", r.scr}, {"quantile", r.quantile},
          {"n_sim", r.n_sim}, {"seed", r.seed}, {"percentile", r.percentile}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace lmemort
