#include "lmemort/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lmemort/error.hpp"

namespace lmemort {
namespace {

struct Vertex {
  std::vector<double> x;
  double f;
};

}  // namespace

SimplexResult minimize_simplex(const std::function<double(const std::vector<double>&)>& f,
                               std::vector<double> start, const std::vector<double>& lower,
                               const SimplexOptions& options) {
  const std::size_t dim = start.size();
  if (lower.size() != dim) throw ValidationError("simplex: bound dimension mismatch");
  std::vector<double> step = options.initial_step;
  if (step.empty()) step.assign(dim, 0.1);
  if (step.size() != dim) throw ValidationError("simplex: step dimension mismatch");

  int evals = 0;
  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < dim; ++i) x[i] = std::max(x[i], lower[i]);
  };
  auto eval = [&](std::vector<double> x) {
    project(x);
    ++evals;
    double v = f(x);
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    return Vertex{std::move(x), v};
  };
  auto tol_for = [&](double v) { return options.tolerance * std::max(1.0, std::abs(v)); };

  project(start);
  Vertex best = eval(start);
  if (dim == 0) return {best.x, best.f, evals, true};

  bool converged = false;
  for (int round = 0; round <= options.max_restarts; ++round) {
    std::vector<Vertex> simplex{best};
    for (std::size_t i = 0; i < dim; ++i) {
      auto x = best.x;
      // Step away from an active bound rather than into it.
      x[i] += (x[i] - step[i] < lower[i] || round % 2 == 0) ? step[i] : -step[i];
      simplex.push_back(eval(std::move(x)));
    }
    const double round_start = best.f;
    bool round_converged = false;
    while (evals < options.max_evaluations) {
      std::sort(simplex.begin(), simplex.end(),
                [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
      if (simplex.back().f - simplex.front().f <= tol_for(simplex.front().f)) {
        round_converged = true;
        break;
      }
      std::vector<double> centroid(dim, 0.0);
      for (std::size_t k = 0; k < dim; ++k)
        for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[k].x[i] / static_cast<double>(dim);
      auto along = [&](double t) {
        std::vector<double> x(dim);
        for (std::size_t i = 0; i < dim; ++i)
          x[i] = centroid[i] + t * (simplex.back().x[i] - centroid[i]);
        return x;
      };
      Vertex reflected = eval(along(-1.0));
      if (reflected.f < simplex.front().f) {
        Vertex expanded = eval(along(-2.0));
        simplex.back() = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
      } else if (reflected.f < simplex[dim - 1].f) {
        simplex.back() = std::move(reflected);
      } else {
        const bool outside = reflected.f < simplex.back().f;
        Vertex contracted = eval(along(outside ? -0.5 : 0.5));
        if (contracted.f < std::min(reflected.f, simplex.back().f)) {
          simplex.back() = std::move(contracted);
        } else {
          for (std::size_t k = 1; k <= dim; ++k) {
            std::vector<double> x(dim);
            for (std::size_t i = 0; i < dim; ++i)
              x[i] = simplex[0].x[i] + 0.5 * (simplex[k].x[i] - simplex[0].x[i]);
            simplex[k] = eval(std::move(x));
          }
        }
      }
    }
    auto it = std::min_element(simplex.begin(), simplex.end(),
                               [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    if (it->f < best.f) best = *it;
    converged = round_converged;
    if (!round_converged) break;  // evaluation budget exhausted
    if (round > 0 && round_start - best.f <= tol_for(best.f)) break;
    for (auto& s : step) s *= 0.5;
  }
  return {best.x, best.f, evals, converged};
}

}  // namespace lmemort
