#pragma once

#include <functional>
#include <vector>

namespace lmemort {

struct SimplexOptions {
  // Converged when the simplex's objective spread falls below
  // tolerance * max(1, |best|).
  double tolerance = 1e-8;
  int max_evaluations = 5000;
  // Per-coordinate edge of the initial simplex; 0.1 per coordinate when empty.
  std::vector<double> initial_step;
  // Fresh simplices built around the incumbent after convergence.
  int max_restarts = 3;
};

struct SimplexResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead with every trial point projected onto the box x >= lower.
SimplexResult minimize_simplex(const std::function<double(const std::vector<double>&)>& f,
                               std::vector<double> start, const std::vector<double>& lower,
                               const SimplexOptions& options = {});

}  // namespace lmemort
