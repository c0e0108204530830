#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmemort/covariates.hpp"
#include "lmemort/formula.hpp"
#include "lmemort/hmd.hpp"
#include "lmemort/mixedlm.hpp"

namespace lmemort {

struct CleaningReport {
  double threshold = 0.1;
  int n_before = 0;
  int n_after = 0;
  double retained_fraction = 1.0;
  std::vector<PanelKey> dropped_keys;
};

struct CleaningResult {
  MortalityPanel cleaned;
  FittedMixedModel initial;  // fit on the full panel
  FittedMixedModel refit;    // fit on the cleaned panel
  CleaningReport report;
};

// Fits once, drops records with |residual| > threshold, refits once. Throws
// when a random-effect group level loses all of its records. Covariates are
// taken as given (computed from the uncleaned panel).
CleaningResult clean_refit(const MortalityPanel& panel, const CovariateSet& cov,
                           const ModelFormula& formula, double threshold = 0.1,
                           const FitSettings& settings = {});

enum class Criterion { AIC, BIC };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& s);

struct SelectionStep {
  std::string phase;    // "random" or "fixed"
  std::string removed;  // term label, random regressors as "I(kt) | c:g:x"
  double before = 0.0;
  double after = 0.0;
  std::string formula;  // formula after the removal
};

struct SelectionTrace {
  Criterion criterion = Criterion::AIC;
  ModelFormula initial;
  ModelFormula final_formula;
  std::vector<SelectionStep> steps;
};

double criterion_value(const FittedMixedModel& fit, Criterion c);

// Candidate moves, in the order they are tried.
std::vector<std::pair<std::string, ModelFormula>> random_removals(const ModelFormula& f);
std::vector<std::pair<std::string, ModelFormula>> fixed_removals(const ModelFormula& f);

// Backward elimination: random regressors first (REML fits, fixed part held),
// then fixed terms (ML fits). Each step takes the removal with the lowest
// criterion and stops when none improves on the current model.
SelectionTrace backward_select(const MortalityPanel& panel, const CovariateSet& cov,
                               const ModelFormula& maximal, Criterion criterion = Criterion::AIC,
                               const FitSettings& settings = {});

struct QuantilePair {
  double theoretical = 0.0;
  double empirical = 0.0;
};

struct ResidualBin {
  double fitted_min = 0.0;
  double fitted_max = 0.0;
  double fitted_mean = 0.0;
  double residual_mean = 0.0;
  double residual_variance = 0.0;
  int count = 0;
};

struct ResidualDiagnostics {
  std::vector<QuantilePair> qq;  // standard normal quantile at (i - 0.5)/n vs sorted residual
  std::vector<ResidualBin> bins;  // equal-count bins over fitted values
};

ResidualDiagnostics residual_diagnostics(const Eigen::VectorXd& fitted,
                                         const Eigen::VectorXd& residuals, int n_bins = 20);
ResidualDiagnostics residual_diagnostics(const FittedMixedModel& fit, int n_bins = 20);

}  // namespace lmemort
