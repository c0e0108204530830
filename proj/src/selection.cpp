#include "lmemort/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/normal.hpp>

#include "lmemort/design.hpp"
#include "lmemort/error.hpp"

namespace lmemort {
namespace {

bool blocked_by_marginality(const ModelFormula& f, const FixedTerm& t) {
  auto present = [&](FixedKind k) {
    return std::any_of(f.fixed.begin(), f.fixed.end(),
                       [&](const FixedTerm& other) { return other.kind == k; });
  };
  if (t.kind == FixedKind::Age) return present(FixedKind::GenderAge);
  if (t.kind == FixedKind::GenderAge) return present(FixedKind::GenderAgeCountryPower);
  return false;
}

bool used_by_random(const ModelFormula& f, const FixedTerm& t) {
  for (const auto& r : f.random)
    for (const auto& reg : r.regressors)
      if (reg.fixed_counterpart() == t) return true;
  return false;
}

FittedMixedModel fit_formula(const MortalityPanel& panel, const CovariateSet& cov,
                             const ModelFormula& f, const FitSettings& settings) {
  return fit_reml(build_design(panel, cov, f), settings);
}

}  // namespace

CleaningResult clean_refit(const MortalityPanel& panel, const CovariateSet& cov,
                           const ModelFormula& formula, double threshold,
                           const FitSettings& settings) {
  if (!(threshold > 0.0)) throw ValidationError("cleaning threshold must be positive");
  const auto design = build_design(panel, cov, formula);
  CleaningResult out;
  out.initial = fit_reml(design, settings);

  std::set<PanelKey> dropped;
  for (Eigen::Index i = 0; i < out.initial.residuals.size(); ++i)
    if (std::abs(out.initial.residuals(i)) > threshold)
      dropped.insert(design.rows[static_cast<std::size_t>(i)]);
  out.cleaned = panel.filter([&](const PanelRecord& r) { return !dropped.count(r.key()); });

  const auto& layout = *design.layout;
  for (std::size_t b = 0; b < layout.n_blocks(); ++b) {
    std::set<std::string> seen;
    for (const auto& r : out.cleaned.records()) seen.insert(layout.level_key(b, r.key()));
    std::vector<std::string> lost;
    for (const auto& level : layout.levels(b))
      if (!seen.count(level)) lost.push_back(level);
    if (!lost.empty()) {
      std::string names;
      for (const auto& l : lost) names += (names.empty() ? "" : ", ") + l;
      throw ValidationError("cleaning removes every record of group level(s) " + names + " in " +
                            layout.block_term(b).label());
    }
  }

  out.report.threshold = threshold;
  out.report.n_before = static_cast<int>(panel.size());
  out.report.n_after = static_cast<int>(out.cleaned.size());
  out.report.retained_fraction =
      panel.empty() ? 1.0 : static_cast<double>(out.cleaned.size()) / static_cast<double>(panel.size());
  out.report.dropped_keys.assign(dropped.begin(), dropped.end());
  out.refit = dropped.empty() ? out.initial : fit_formula(out.cleaned, cov, formula, settings);
  return out;
}

std::string to_string(Criterion c) { return c == Criterion::AIC ? "AIC" : "BIC"; }

Criterion parse_criterion(const std::string& s) {
  if (s == "AIC" || s == "aic") return Criterion::AIC;
  if (s == "BIC" || s == "bic") return Criterion::BIC;
  throw ValidationError("unknown selection criterion '" + s + "'");
}

double criterion_value(const FittedMixedModel& fit, Criterion c) {
  const auto ic = information_criteria(fit);
  return c == Criterion::AIC ? ic.aic : ic.bic;
}

std::vector<std::pair<std::string, ModelFormula>> random_removals(const ModelFormula& f) {
  std::vector<std::pair<std::string, ModelFormula>> out;
  for (std::size_t t = 0; t < f.random.size(); ++t) {
    const auto& term = f.random[t];
    for (std::size_t j = 0; j < term.regressors.size(); ++j) {
      ModelFormula g = f;
      auto& regs = g.random[t].regressors;
      regs.erase(regs.begin() + static_cast<std::ptrdiff_t>(j));
      if (regs.empty()) g.random.erase(g.random.begin() + static_cast<std::ptrdiff_t>(t));
      if (g.random.empty()) continue;  // a mixed model needs a random term
      out.emplace_back(term.regressors[j].label() + " | " + to_string(term.grouping), std::move(g));
    }
  }
  return out;
}

std::vector<std::pair<std::string, ModelFormula>> fixed_removals(const ModelFormula& f) {
  std::vector<std::pair<std::string, ModelFormula>> out;
  for (std::size_t i = 0; i < f.fixed.size(); ++i) {
    const auto& t = f.fixed[i];
    if (t.kind == FixedKind::Intercept || used_by_random(f, t) || blocked_by_marginality(f, t))
      continue;
    ModelFormula g = f;
    g.fixed.erase(g.fixed.begin() + static_cast<std::ptrdiff_t>(i));
    out.emplace_back(t.label(), std::move(g));
  }
  return out;
}

SelectionTrace backward_select(const MortalityPanel& panel, const CovariateSet& cov,
                               const ModelFormula& maximal, Criterion criterion,
                               const FitSettings& settings) {
  SelectionTrace trace;
  trace.criterion = criterion;
  trace.initial = maximal;
  ModelFormula current = maximal;

  auto run_phase = [&](const char* phase, Objective objective, auto candidates_of) {
    FitSettings s = settings;
    s.objective = objective;
    double value = criterion_value(fit_formula(panel, cov, current, s), criterion);
    for (;;) {
      std::string best_label;
      ModelFormula best_formula;
      double best_value = value;
      for (auto& [label, candidate] : candidates_of(current)) {
        double v;
        try {
          v = criterion_value(fit_formula(panel, cov, candidate, s), criterion);
        } catch (const ValidationError&) {
          continue;  // e.g. the reduced design is rank deficient
        }
        if (v < best_value) {
          best_value = v;
          best_label = label;
          best_formula = candidate;
        }
      }
      if (best_label.empty()) return;
      trace.steps.push_back({phase, best_label, value, best_value, best_formula.to_string()});
      current = std::move(best_formula);
      value = best_value;
    }
  };
  run_phase("random", Objective::REML, random_removals);
  run_phase("fixed", Objective::ML, fixed_removals);
  trace.final_formula = current;
  return trace;
}

ResidualDiagnostics residual_diagnostics(const Eigen::VectorXd& fitted,
                                         const Eigen::VectorXd& residuals, int n_bins) {
  const auto n = static_cast<std::size_t>(residuals.size());
  if (static_cast<std::size_t>(fitted.size()) != n)
    throw ValidationError("fitted and residual lengths differ");
  if (n < 10) throw ValidationError("residual diagnostics need at least 10 residuals");
  if (n_bins < 1) throw ValidationError("need at least one bin");

  ResidualDiagnostics out;
  std::vector<double> sorted(residuals.data(), residuals.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const boost::math::normal_distribution<double> z;
  for (std::size_t i = 0; i < n; ++i)
    out.qq.push_back({boost::math::quantile(z, (static_cast<double>(i) + 0.5) / static_cast<double>(n)),
                      sorted[i]});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitted(static_cast<Eigen::Index>(a)) < fitted(static_cast<Eigen::Index>(b));
  });
  const std::size_t bins = std::min(static_cast<std::size_t>(n_bins), n);
  for (std::size_t k = 0; k < bins; ++k) {
    const std::size_t lo = k * n / bins, hi = (k + 1) * n / bins;
    ResidualBin bin;
    bin.count = static_cast<int>(hi - lo);
    bin.fitted_min = fitted(static_cast<Eigen::Index>(order[lo]));
    bin.fitted_max = fitted(static_cast<Eigen::Index>(order[hi - 1]));
    double fs = 0.0, rs = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      fs += fitted(static_cast<Eigen::Index>(order[i]));
      rs += residuals(static_cast<Eigen::Index>(order[i]));
    }
    bin.fitted_mean = fs / bin.count;
    bin.residual_mean = rs / bin.count;
    double ss = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      ss += std::pow(residuals(static_cast<Eigen::Index>(order[i])) - bin.residual_mean, 2);
    bin.residual_variance = bin.count > 1 ? ss / (bin.count - 1) : 0.0;
    out.bins.push_back(bin);
  }
  return out;
}

ResidualDiagnostics residual_diagnostics(const FittedMixedModel& fit, int n_bins) {
  return residual_diagnostics(fit.fitted, fit.residuals, n_bins);
}

}  // namespace lmemort
