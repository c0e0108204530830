#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They favour the textbook dense formulas over anything the library does.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmemort/design.hpp"
#include "lmemort/mixedlm.hpp"

namespace oracle {

inline lmemort::RandomBlock make_block(const std::string& label,
                                       std::vector<std::string> regressors,
                                       std::vector<int> row_level, Eigen::MatrixXd values) {
  lmemort::RandomBlock b;
  b.label = label;
  b.regressor_names = std::move(regressors);
  int g = 0;
  for (int l : row_level) g = std::max(g, l + 1);
  for (int i = 0; i < g; ++i) b.levels.push_back("g" + std::to_string(i));
  b.row_level = std::move(row_level);
  b.values = std::move(values);
  return b;
}

// Dense relative covariance of the random-effect vector: blockdiag(Lambda Lambda^T).
inline Eigen::MatrixXd dense_relative_cov(const lmemort::DesignMatrices& d,
                                          std::span<const double> theta) {
  const auto factors = lmemort::unpack_theta(d, theta);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(d.random_size(), d.random_size());
  for (std::size_t r = 0; r < d.blocks.size(); ++r) {
    const auto& b = d.blocks[r];
    const Eigen::MatrixXd psi = factors[r] * factors[r].transpose();
    for (int l = 0; l < b.n_levels(); ++l) {
      const auto o = static_cast<Eigen::Index>(b.offset) + l * b.q();
      G.block(o, o, b.q(), b.q()) = psi;
    }
  }
  return G;
}

// REML deviance from V = Z G Z^T + I:
// log|V| + log|X^T V^-1 X| + (n-p)(1 + log(2 pi r^T V^-1 r / (n-p))).
inline double dense_reml_deviance(const lmemort::DesignMatrices& d,
                                  std::span<const double> theta, bool reml = true) {
  const Eigen::MatrixXd Z = Eigen::MatrixXd(d.Z);
  const Eigen::MatrixXd V =
      Z * dense_relative_cov(d, theta) * Z.transpose() +
      Eigen::MatrixXd::Identity(d.n(), d.n());
  Eigen::LDLT<Eigen::MatrixXd> vl(V);
  const Eigen::MatrixXd ViX = vl.solve(d.X);
  const Eigen::MatrixXd XtViX = d.X.transpose() * ViX;
  const Eigen::VectorXd beta = XtViX.ldlt().solve(ViX.transpose() * d.y);
  const Eigen::VectorXd r = d.y - d.X * beta;
  const double q = r.dot(vl.solve(r));
  const double logdet_v = vl.vectorD().array().log().sum();
  const double n = static_cast<double>(d.n());
  const double p = static_cast<double>(d.p());
  const double two_pi = 2.0 * std::numbers::pi;
  if (!reml) return logdet_v + n * (1.0 + std::log(two_pi * q / n));
  const double logdet_x = XtViX.ldlt().vectorD().array().log().sum();
  return logdet_v + logdet_x + (n - p) * (1.0 + std::log(two_pi * q / (n - p)));
}

// y = beta0 + beta1 t + eta0_g + eta1_g t + eps over `groups` x `per_group`
// rows with t in [-1, 1]; intercept and slope effects independent.
inline lmemort::DesignMatrices simulate_intercept_slope(int groups, int per_group, double sd0,
                                                        double sd1, double sigma,
                                                        std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = groups * per_group;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, 2), W(n, 2);
  std::vector<int> level(static_cast<std::size_t>(n));
  int i = 0;
  for (int g = 0; g < groups; ++g) {
    const double e0 = sd0 * z(rng), e1 = sd1 * z(rng);
    for (int k = 0; k < per_group; ++k, ++i) {
      const double t = -1.0 + 2.0 * k / std::max(1, per_group - 1);
      X(i, 0) = 1.0;
      X(i, 1) = t;
      W(i, 0) = 1.0;
      W(i, 1) = t;
      y(i) = -3.0 + 0.5 * t + e0 + e1 * t + sigma * z(rng);
      level[static_cast<std::size_t>(i)] = g;
    }
  }
  return lmemort::assemble_design(std::move(y), std::move(X), {"(Intercept)", "t"},
                                  {make_block("(1 + t | g)", {"(Intercept)", "t"},
                                              std::move(level), std::move(W))});
}

// Expected lifetime under constant hazard mu: integral of exp(-mu t) over
// [0, 110] by Simpson's rule, plus the open-ended tail S(110) / mu.
inline double exponential_lifetime(double mu) {
  const int n = 11000;
  const double h = 110.0 / n;
  double s = 1.0 + std::exp(-mu * 110.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * std::exp(-mu * i * h);
  return s * h / 3.0 + std::exp(-mu * 110.0) / mu;
}

}  // namespace oracle
