#include "lmemort/mixedlm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include "lmemort/error.hpp"
#include "lmemort/optimizer.hpp"

namespace lmemort {
namespace {

using SpMat = Eigen::SparseMatrix<double>;
using SparseLLT = Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>;

std::size_t tri(int q) { return static_cast<std::size_t>(q * (q + 1) / 2); }

SpMat identity(Eigen::Index n) {
  SpMat I(n, n);
  I.setIdentity();
  return I;
}

double log_diag_sum(const Eigen::VectorXd& d) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) s += std::log(d(i));
  return 2.0 * s;
}

}  // namespace

std::size_t theta_size(const DesignMatrices& design) {
  std::size_t n = 0;
  for (const auto& b : design.blocks) n += tri(b.q());
  return n;
}

std::vector<double> theta_lower_bounds(const DesignMatrices& design) {
  std::vector<double> lower;
  for (const auto& b : design.blocks)
    for (int j = 0; j < b.q(); ++j)
      for (int i = j; i < b.q(); ++i)
        lower.push_back(i == j ? 0.0 : -std::numeric_limits<double>::infinity());
  return lower;
}

std::vector<Eigen::MatrixXd> unpack_theta(const DesignMatrices& design,
                                          std::span<const double> theta) {
  if (theta.size() != theta_size(design))
    throw ValidationError("theta has " + std::to_string(theta.size()) + " entries, expected " +
                          std::to_string(theta_size(design)));
  std::vector<Eigen::MatrixXd> out;
  std::size_t k = 0;
  for (const auto& b : design.blocks) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(b.q(), b.q());
    for (int j = 0; j < b.q(); ++j)
      for (int i = j; i < b.q(); ++i) F(i, j) = theta[k++];
    out.push_back(std::move(F));
  }
  return out;
}

std::vector<double> pack_theta(const std::vector<Eigen::MatrixXd>& factors) {
  std::vector<double> theta;
  for (const auto& F : factors)
    for (Eigen::Index j = 0; j < F.cols(); ++j)
      for (Eigen::Index i = j; i < F.rows(); ++i) theta.push_back(F(i, j));
  return theta;
}

ProfiledDeviance::ProfiledDeviance(const DesignMatrices& design, Objective objective)
    : design_(design), objective_(objective) {
  const auto& Z = design.Z;
  ztz_ = (Z.transpose() * Z).pruned();
  ztx_ = Z.transpose() * design.X;
  zty_ = Z.transpose() * design.y;
  xtx_ = design.X.transpose() * design.X;
  xty_ = design.X.transpose() * design.y;
}

SpMat ProfiledDeviance::lambda(std::span<const double> theta) const {
  const auto factors = unpack_theta(design_, theta);
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < design_.blocks.size(); ++r) {
    const auto& b = design_.blocks[r];
    const int q = b.q();
    for (int l = 0; l < b.n_levels(); ++l) {
      const auto base = static_cast<int>(b.offset) + l * q;
      for (int j = 0; j < q; ++j)
        for (int i = j; i < q; ++i)
          if (factors[r](i, j) != 0.0) trips.emplace_back(base + i, base + j, factors[r](i, j));
    }
  }
  SpMat L(design_.random_size(), design_.random_size());
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

PlsSolution ProfiledDeviance::solve(std::span<const double> theta) const {
  const auto n = static_cast<double>(design_.n());
  const auto p = static_cast<double>(design_.p());
  const SpMat Lam = lambda(theta);
  const SpMat LamT = Lam.transpose();
  SpMat A = LamT * ztz_ * Lam + identity(design_.random_size());
  SparseLLT llt(A);
  if (llt.info() != Eigen::Success) throw ValidationError("random-effects factorization failed");

  const auto L = llt.matrixL();
  const Eigen::VectorXd cu = L.solve(Eigen::VectorXd(LamT * zty_));
  const Eigen::MatrixXd rzx = L.solve(Eigen::MatrixXd(LamT * ztx_));
  Eigen::MatrixXd M = xtx_;
  M.selfadjointView<Eigen::Lower>().rankUpdate(rzx.transpose(), -1.0);
  M.triangularView<Eigen::StrictlyUpper>() = M.transpose();
  Eigen::LLT<Eigen::MatrixXd> mllt(M);
  if (mllt.info() != Eigen::Success)
    throw ValidationError("fixed-effect normal equations are singular");

  PlsSolution s;
  s.beta = mllt.solve(xty_ - rzx.transpose() * cu);
  s.u = llt.matrixU().solve(cu - rzx * s.beta);
  s.b = Lam * s.u;
  const Eigen::VectorXd r = design_.y - design_.X * s.beta - design_.Z * s.b;
  s.pwrss = r.squaredNorm() + s.u.squaredNorm();
  s.log_det_l2 = log_diag_sum(L.nestedExpression().diagonal());
  s.log_det_rx2 = log_diag_sum(mllt.matrixL().nestedExpression().diagonal());
  s.fixed_precision = std::move(M);
  const double two_pi = 2.0 * std::numbers::pi;
  if (objective_ == Objective::REML) {
    const double df = n - p;
    s.deviance = s.log_det_l2 + s.log_det_rx2 + df * (1.0 + std::log(two_pi * s.pwrss / df));
  } else {
    s.deviance = s.log_det_l2 + n * (1.0 + std::log(two_pi * s.pwrss / n));
  }
  return s;
}

std::vector<std::vector<Eigen::MatrixXd>> ProfiledDeviance::conditional_covariances(
    std::span<const double> theta) const {
  const auto factors = unpack_theta(design_, theta);
  const SpMat Lam = lambda(theta);
  SpMat A = Lam.transpose() * ztz_ * Lam + identity(design_.random_size());
  SparseLLT llt(A);
  if (llt.info() != Eigen::Success) throw ValidationError("random-effects factorization failed");
  std::vector<std::vector<Eigen::MatrixXd>> out(design_.blocks.size());
  for (std::size_t r = 0; r < design_.blocks.size(); ++r) {
    const auto& b = design_.blocks[r];
    const int q = b.q();
    for (int l = 0; l < b.n_levels(); ++l) {
      const Eigen::Index base = static_cast<Eigen::Index>(b.offset) + l * q;
      Eigen::MatrixXd E = Eigen::MatrixXd::Zero(design_.random_size(), q);
      for (int j = 0; j < q; ++j) E(base + j, j) = 1.0;
      const Eigen::MatrixXd sol = llt.solve(E);
      const Eigen::MatrixXd block = sol.middleRows(base, q);
      out[r].push_back(factors[r] * block * factors[r].transpose());
    }
  }
  return out;
}

double profiled_reml_deviance(const DesignMatrices& design, std::span<const double> theta) {
  return ProfiledDeviance(design, Objective::REML)(theta);
}

Eigen::MatrixXd RandomTermFit::correlation() const {
  Eigen::MatrixXd c = psi;
  for (Eigen::Index i = 0; i < psi.rows(); ++i)
    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
      const double d = std::sqrt(psi(i, i) * psi(j, j));
      c(i, j) = i == j ? 1.0 : (d > 0.0 ? psi(i, j) / d : 0.0);
    }
  return c;
}

FittedMixedModel fit_reml(const DesignMatrices& design, const FitSettings& settings) {
  if (design.blocks.empty()) throw ValidationError("model has no random terms");
  if (design.n() <= design.p())
    throw ValidationError("need more observations than fixed effects");

  // Optimize over factors for regressors rescaled to unit root-mean-square;
  // Lambda for the original regressors has row i divided by that scale.
  std::vector<Eigen::VectorXd> scales;
  for (const auto& b : design.blocks) {
    Eigen::VectorXd s(b.q());
    for (int j = 0; j < b.q(); ++j) {
      const double rms = std::sqrt(b.values.col(j).squaredNorm() / static_cast<double>(design.n()));
      s(j) = (std::isfinite(rms) && rms > 0.0) ? rms : 1.0;
    }
    scales.push_back(std::move(s));
  }
  auto to_original = [&](std::span<const double> scaled) {
    auto factors = unpack_theta(design, scaled);
    for (std::size_t r = 0; r < factors.size(); ++r)
      for (Eigen::Index i = 0; i < factors[r].rows(); ++i) factors[r].row(i) /= scales[r](i);
    return pack_theta(factors);
  };

  const ProfiledDeviance pd(design, settings.objective);
  auto objective = [&](const std::vector<double>& scaled) {
    try {
      return pd(to_original(scaled));
    } catch (const ValidationError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const auto lower = theta_lower_bounds(design);
  SimplexResult best;
  best.value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  for (double c : {1.0, 0.1}) {
    std::vector<double> start;
    for (const auto& b : design.blocks)
      for (int j = 0; j < b.q(); ++j)
        for (int i = j; i < b.q(); ++i) start.push_back(i == j ? c : 0.0);
    SimplexOptions opts;
    opts.tolerance = settings.tolerance;
    opts.max_evaluations = settings.max_evaluations;
    opts.initial_step.assign(start.size(), 0.25 * c);
    auto res = minimize_simplex(objective, start, lower, opts);
    evaluations += res.evaluations;
    if (res.value < best.value) best = std::move(res);
  }
  if (!std::isfinite(best.value))
    throw ValidationError("profiled deviance is not finite at any evaluated theta");

  FittedMixedModel fit;
  fit.layout = design.layout;
  fit.objective = settings.objective;
  fit.theta = to_original(best.x);
  fit.converged = best.converged;
  fit.evaluations = evaluations;
  {
    const auto scaled = unpack_theta(design, best.x);
    for (const auto& F : scaled)
      for (Eigen::Index i = 0; i < F.rows(); ++i)
        if (F(i, i) < 1e-4) fit.boundary = true;
  }

  const PlsSolution sol = pd.solve(fit.theta);
  const auto n = design.n();
  const auto p = design.p();
  const double df = settings.objective == Objective::REML ? static_cast<double>(n - p)
                                                          : static_cast<double>(n);
  fit.sigma2 = sol.pwrss / df;
  fit.deviance = sol.deviance;
  fit.beta = sol.beta;
  fit.beta_cov = fit.sigma2 * sol.fixed_precision.llt().solve(
                                  Eigen::MatrixXd::Identity(p, p));
  for (Eigen::Index j = 0; j < p; ++j)
    fit.fixed.push_back({design.column_names[static_cast<std::size_t>(j)], fit.beta(j),
                         std::sqrt(fit.beta_cov(j, j))});

  const auto factors = unpack_theta(design, fit.theta);
  const auto cond = pd.conditional_covariances(fit.theta);
  int n_cov = 0;
  for (std::size_t r = 0; r < design.blocks.size(); ++r) {
    const auto& b = design.blocks[r];
    RandomTermFit t;
    t.label = b.label;
    t.regressors = b.regressor_names;
    t.levels = b.levels;
    t.psi = fit.sigma2 * factors[r] * factors[r].transpose();
    t.blups.resize(b.n_levels(), b.q());
    for (int l = 0; l < b.n_levels(); ++l) {
      t.blups.row(l) = sol.b.segment(static_cast<Eigen::Index>(b.offset) + l * b.q(), b.q());
      t.cond_cov.push_back(fit.sigma2 * cond[r][static_cast<std::size_t>(l)]);
    }
    n_cov += static_cast<int>(tri(b.q()));
    fit.terms.push_back(std::move(t));
  }
  fit.n_obs = static_cast<int>(n);
  fit.n_params = static_cast<int>(p) + n_cov + 1;
  fit.rows = design.rows;
  fit.fitted = design.X * sol.beta + design.Z * sol.b;
  fit.residuals = design.y - fit.fitted;
  return fit;
}

std::vector<BlupRow> predict_blups(const FittedMixedModel& fit, const DesignMatrices& design) {
  const auto sol = ProfiledDeviance(design, fit.objective).solve(fit.theta);
  std::vector<BlupRow> out;
  for (const auto& b : design.blocks)
    for (int l = 0; l < b.n_levels(); ++l)
      for (int j = 0; j < b.q(); ++j)
        out.push_back({b.label, b.levels[static_cast<std::size_t>(l)],
                       b.regressor_names[static_cast<std::size_t>(j)],
                       sol.b(static_cast<Eigen::Index>(b.offset) + l * b.q() + j)});
  return out;
}

InformationCriteria information_criteria(double loglik, int n_params, int n_obs) {
  return {-2.0 * loglik + 2.0 * n_params,
          -2.0 * loglik + std::log(static_cast<double>(n_obs)) * n_params};
}

InformationCriteria information_criteria(const FittedMixedModel& fit) {
  return information_criteria(fit.loglik(), fit.n_params, fit.n_obs);
}

double icc(std::span<const double> random_variances, double sigma2) {
  double s = 0.0;
  for (double v : random_variances) s += v;
  const double total = s + sigma2;
  return total > 0.0 ? s / total : 0.0;
}

double icc(const FittedMixedModel& fit) {
  std::vector<double> v;
  for (const auto& t : fit.terms)
    for (Eigen::Index i = 0; i < t.psi.rows(); ++i) v.push_back(t.psi(i, i));
  return icc(v, fit.sigma2);
}

std::vector<VarianceShare> variance_decomposition(
    const std::vector<std::pair<std::string, double>>& random_variances, double sigma2) {
  std::vector<VarianceShare> out;
  double total = sigma2;
  for (const auto& [name, v] : random_variances) {
    out.push_back({name, v, 0.0});
    total += v;
  }
  out.push_back({"residual", sigma2, 0.0});
  for (auto& row : out) row.share = total > 0.0 ? row.variance / total : 0.0;
  return out;
}

std::vector<VarianceShare> variance_decomposition(const FittedMixedModel& fit) {
  std::vector<std::pair<std::string, double>> v;
  for (const auto& t : fit.terms)
    for (Eigen::Index i = 0; i < t.psi.rows(); ++i)
      v.emplace_back(t.regressors[static_cast<std::size_t>(i)] + " | " + t.label, t.psi(i, i));
  return variance_decomposition(v, fit.sigma2);
}

}  // namespace lmemort
