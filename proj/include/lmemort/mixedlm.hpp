#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "lmemort/design.hpp"

namespace lmemort {

enum class Objective { REML, ML };

// theta packs, per random block, the lower triangle of the q x q relative
// covariance factor Lambda column by column; Psi = sigma^2 Lambda Lambda^T.
std::size_t theta_size(const DesignMatrices& design);
std::vector<double> theta_lower_bounds(const DesignMatrices& design);
std::vector<Eigen::MatrixXd> unpack_theta(const DesignMatrices& design,
                                          std::span<const double> theta);
std::vector<double> pack_theta(const std::vector<Eigen::MatrixXd>& factors);

// Penalized least-squares solution at fixed theta.
struct PlsSolution {
  Eigen::VectorXd beta;
  Eigen::VectorXd u;          // spherical random effects
  Eigen::VectorXd b;          // Lambda u, on the response scale
  double pwrss = 0.0;         // |y - X beta - Z b|^2 + |u|^2
  double log_det_l2 = 0.0;    // log |Lambda^T Z^T Z Lambda + I|
  double log_det_rx2 = 0.0;   // log |X^T V_theta^{-1} X|
  Eigen::MatrixXd fixed_precision;  // X^T V_theta^{-1} X, V_theta = Z Lambda Lambda^T Z^T + I
  double deviance = 0.0;
};

// Deviance as a function of theta with beta and sigma^2 profiled out. The
// cross-products are formed once; the design must outlive this object.
class ProfiledDeviance {
public:
  explicit ProfiledDeviance(const DesignMatrices& design, Objective objective = Objective::REML);

  Objective objective() const { return objective_; }
  double operator()(std::span<const double> theta) const { return solve(theta).deviance; }
  PlsSolution solve(std::span<const double> theta) const;

  // Per block and level: Lambda_r [(Lambda^T Z^T Z Lambda + I)^{-1}]_{level} Lambda_r^T,
  // the conditional covariance of b_level divided by sigma^2.
  std::vector<std::vector<Eigen::MatrixXd>> conditional_covariances(
      std::span<const double> theta) const;

private:
  Eigen::SparseMatrix<double> lambda(std::span<const double> theta) const;

  const DesignMatrices& design_;
  Objective objective_;
  Eigen::SparseMatrix<double> ztz_;
  Eigen::MatrixXd ztx_;
  Eigen::VectorXd zty_;
  Eigen::MatrixXd xtx_;
  Eigen::VectorXd xty_;
};

// -2 x restricted log-likelihood with beta and sigma^2 profiled out.
double profiled_reml_deviance(const DesignMatrices& design, std::span<const double> theta);

struct FitSettings {
  Objective objective = Objective::REML;
  double tolerance = 1e-8;
  int max_evaluations = 5000;
};

struct FixedEffect {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct RandomTermFit {
  std::string label;
  std::vector<std::string> regressors;
  std::vector<std::string> levels;
  Eigen::MatrixXd psi;                     // q x q
  Eigen::MatrixXd blups;                   // levels x q
  std::vector<Eigen::MatrixXd> cond_cov;   // per level, q x q

  Eigen::MatrixXd correlation() const;
};

struct FittedMixedModel {
  std::optional<DesignLayout> layout;
  Objective objective = Objective::REML;
  std::vector<FixedEffect> fixed;
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;
  std::vector<RandomTermFit> terms;
  double sigma2 = 0.0;
  std::vector<double> theta;
  double deviance = 0.0;  // objective value at the optimum (REML criterion when REML)
  int n_obs = 0;
  int n_params = 0;  // fixed effects + covariance parameters + residual variance
  bool converged = false;
  bool boundary = false;
  int evaluations = 0;

  std::vector<PanelKey> rows;
  Eigen::VectorXd fitted;
  Eigen::VectorXd residuals;

  double loglik() const { return -0.5 * deviance; }
  double reml_criterion() const { return deviance; }
};

// Minimizes the profiled deviance with the bounded simplex from two starts
// (identity and 0.1 x identity on internally rescaled random regressors).
FittedMixedModel fit_reml(const DesignMatrices& design, const FitSettings& settings = {});

struct BlupRow {
  std::string term;
  std::string group;
  std::string regressor;
  double value = 0.0;
};

// Psi Z^T V^{-1} (y - X beta) evaluated blockwise at the fit's theta.
std::vector<BlupRow> predict_blups(const FittedMixedModel& fit, const DesignMatrices& design);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

InformationCriteria information_criteria(double loglik, int n_params, int n_obs);
InformationCriteria information_criteria(const FittedMixedModel& fit);

double icc(std::span<const double> random_variances, double sigma2);
double icc(const FittedMixedModel& fit);

struct VarianceShare {
  std::string component;
  double variance = 0.0;
  double share = 0.0;
};

std::vector<VarianceShare> variance_decomposition(
    const std::vector<std::pair<std::string, double>>& random_variances, double sigma2);
std::vector<VarianceShare> variance_decomposition(const FittedMixedModel& fit);

}  // namespace lmemort
