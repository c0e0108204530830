#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "synthetic.hpp"

#include "lmemort/benchmarks.hpp"
#include "lmemort/error.hpp"

using namespace lmemort;

namespace {

const Population kPop{"AAA", Gender::Female};

// Exact a_x + b_x k_t with sum(b) = 1 and sum(k) = 0.
struct RankOneTruth {
  AgeSeries a, b;
  YearSeries k;
};

RankOneTruth rank_one_truth(const AgeGrid& grid, YearRange years, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RankOneTruth t;
  double bsum = 0.0;
  for (const auto& g : grid) {
    t.a[g.lower] = -9.0 + 0.08 * g.lower + 0.1 * u(rng);
    t.b[g.lower] = 0.5 + u(rng);
    bsum += t.b[g.lower];
  }
  for (auto& [x, v] : t.b) v /= bsum;
  double ksum = 0.0;
  for (int y = years.first; y <= years.last; ++y) {
    t.k[y] = -1.5 * (y - years.first) + 2.0 * u(rng);
    ksum += t.k[y];
  }
  for (auto& [y, v] : t.k) v -= ksum / years.count();
  return t;
}

MortalityPanel from_fn(const std::vector<std::string>& countries, const AgeGrid& grid,
                       YearRange years, const synthetic::RateFn& fn) {
  return synthetic::panel(countries, grid, years, fn);
}

double sum(const std::map<int, double>& m) {
  double s = 0.0;
  for (const auto& [k, v] : m) s += v;
  return s;
}

}  // namespace

TEST_CASE("LC recovers exact rank-one data") {
  std::mt19937_64 rng(1);
  const auto grid = AgeGrid::hmd_5x1(0, 100);
  const YearRange years{1961, 2010};
  for (int rep = 0; rep < 5; ++rep) {
    const auto t = rank_one_truth(grid, years, rng);
    const auto panel = from_fn({"AAA"}, grid, years, [&](const std::string&, Gender, int x, int y) {
                         return t.a.at(x) + t.b.at(x) * t.k.at(y);
                       }).restrict_to(kPop);
    const auto fit = fit_lc(panel);
    for (const auto& g : grid) {
      CHECK(std::abs(fit.a.at(g.lower) - t.a.at(g.lower)) < 1e-8);
      CHECK(std::abs(fit.b.at(g.lower) - t.b.at(g.lower)) < 1e-8);
    }
    for (const auto& [y, k] : t.k) CHECK(std::abs(fit.k.at(y) - k) < 1e-8);
    CHECK(std::abs(sum(fit.b) - 1.0) < 1e-10);
    CHECK(std::abs(sum(fit.k)) < 1e-10);
  }
}

TEST_CASE("LC constraints hold on noisy data and match the best rank-one approximation") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 0.05);
  const auto grid = AgeGrid::hmd_5x1(0, 40);
  const YearRange years{1981, 2000};
  const auto panel = from_fn({"AAA"}, grid, years, [&](const std::string&, Gender, int x, int y) {
                       return synthetic::gompertz("AAA", Gender::Female, x, y) + z(rng);
                     }).restrict_to(kPop);
  const auto fit = fit_lc(panel);
  CHECK(std::abs(sum(fit.b) - 1.0) < 1e-10);
  CHECK(std::abs(sum(fit.k)) < 1e-10);

  // Oracle: Eckart-Young residual is the sum of the trailing squared singular values.
  const auto m = rate_matrix(panel, kPop);
  const Eigen::MatrixXd c = m.y.colwise() - m.y.rowwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(c);
  const auto& s = svd.singularValues();
  const double best = s.squaredNorm() - s(0) * s(0);
  double resid = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < m.years.size(); ++j) {
      const int x = grid[i].lower, y = m.years[j];
      resid += std::pow(m.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - fit.a.at(x) -
                            fit.b.at(x) * fit.k.at(y),
                        2);
    }
  CHECK(resid == doctest::Approx(best).epsilon(1e-10));
  // Mortality falls over time, so k trends down.
  CHECK(fit.rw.drift < 0.0);
}

TEST_CASE("LC rejects degenerate matrices") {
  const auto grid = AgeGrid::hmd_5x1(0, 20);
  const YearRange years{1981, 1990};
  const auto flat = from_fn({"AAA"}, grid, years, [](const std::string&, Gender, int x, int) {
                      return -5.0 + 0.01 * x;
                    }).restrict_to(kPop);
  CHECK_THROWS_AS(fit_lc(flat), ValidationError);

  // Two orthogonal components of equal strength tie the leading singular value.
  const auto tied = from_fn({"AAA"}, AgeGrid::hmd_5x1(0, 10), {1981, 1984},
                            [](const std::string&, Gender, int x, int y) {
                              const double u1[] = {1, 1, 0, 0}, u2[] = {0, 0, 1, 1};
                              const double v1[] = {1, -1, 0, 0}, v2[] = {0, 0, 1, -1};
                              const int i = x == 0 ? 0 : x == 1 ? 1 : x == 5 ? 2 : 3;
                              const int j = y - 1981;
                              return u1[i] * v1[j] + u2[i] * v2[j];
                            }).restrict_to(kPop);
  CHECK_THROWS_AS(fit_lc(tied), ValidationError);

  const auto two = from_fn({"AAA"}, grid, years, synthetic::gompertz);
  CHECK_THROWS_AS(fit_lc(two), ValidationError);
}

TEST_CASE("LC identification is invariant to rescaling b and k") {
  std::mt19937_64 rng(3);
  const auto grid = AgeGrid::hmd_5x1(0, 30);
  const YearRange years{1971, 1990};
  const auto t = rank_one_truth(grid, years, rng);
  auto make = [&](double c) {
    return from_fn({"AAA"}, grid, years, [&](const std::string&, Gender, int x, int y) {
             return t.a.at(x) + (c * t.b.at(x)) * (t.k.at(y) / c);
           }).restrict_to(kPop);
  };
  const auto f1 = fit_lc(make(1.0)), f2 = fit_lc(make(-3.7));
  for (const auto& g : grid) CHECK(f1.b.at(g.lower) == doctest::Approx(f2.b.at(g.lower)).epsilon(1e-10));
}

TEST_CASE("LC forecast collapses without innovation noise and scales with sqrt(h)") {
  std::mt19937_64 rng(4);
  const auto grid = AgeGrid::hmd_5x1(0, 30);
  const YearRange years{1971, 1990};
  const auto t = rank_one_truth(grid, years, rng);
  auto fit = fit_lc(from_fn({"AAA"}, grid, years, [&](const std::string&, Gender, int x, int y) {
                      return t.a.at(x) + t.b.at(x) * t.k.at(y);
                    }).restrict_to(kPop));

  auto quiet = fit;
  quiet.rw.innovation_variance = 0.0;
  quiet.b[5] = 0.0;
  const auto fq = forecast_lc(quiet, 10, {200, 0.95, 1});
  CHECK(fq.cells.size() == grid.size() * 10);
  for (const auto& [k, c] : fq.cells) {
    CHECK(c.lower == doctest::Approx(c.point).epsilon(1e-12));
    CHECK(c.upper == doctest::Approx(c.point).epsilon(1e-12));
  }
  CHECK(fq.at({"AAA", Gender::Female, 5, 2000}).point == quiet.a.at(5));

  fit.rw.innovation_variance = 0.25;
  const auto f = forecast_lc(fit, 16, {4000, 0.95, 2});
  for (const auto& g : grid) {
    const double b = fit.b.at(g.lower);
    for (int h : {1, 4, 16}) {
      const auto& c = f.at({"AAA", Gender::Female, g.lower, 1990 + h});
      const double expected = 2 * 1.959964 * std::abs(b) * std::sqrt(h * 0.25);
      CHECK((c.upper - c.lower) == doctest::Approx(expected).epsilon(0.08));
      CHECK(c.point == doctest::Approx(fit.a.at(g.lower) + b * rwd_point(fit.rw, h)));
    }
  }
  CHECK_THROWS_AS(forecast_lc(fit, 0), ValidationError);
}

TEST_CASE("AR(1) fit recovers its coefficients") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 0.1);
  YearSeries s;
  double v = 0.0;
  for (int t = 0; t < 4000; ++t) s[t] = v = 0.2 + 0.6 * v + z(rng);
  const auto m = fit_ar1(s);
  CHECK(m.phi == doctest::Approx(0.6).epsilon(0.05));
  CHECK(m.intercept == doctest::Approx(0.2).epsilon(0.1));
  CHECK(m.innovation_variance == doctest::Approx(0.01).epsilon(0.1));
  CHECK(m.point(0) == m.last_value);
  CHECK(m.point(2) == doctest::Approx(m.intercept + m.phi * (m.intercept + m.phi * m.last_value)));
  CHECK_THROWS_AS(fit_ar1({{1, 0.0}, {2, 1.0}}), ValidationError);
}

TEST_CASE("LL on identical populations leaves no specific factor") {
  std::mt19937_64 rng(6);
  const auto grid = AgeGrid::hmd_5x1(0, 40);
  const YearRange years{1971, 2000};
  const auto t = rank_one_truth(grid, years, rng);
  const auto panel = from_fn({"AAA", "BBB"}, grid, years, [&](const std::string&, Gender, int x, int y) {
    return t.a.at(x) + t.b.at(x) * t.k.at(y);
  });
  const auto fit = fit_ll(panel);
  CHECK(fit.specific.size() == 4);
  double var_k = 0.0;
  for (const auto& [y, k] : fit.K) var_k += k * k;
  for (const auto& [pop, sp] : fit.specific) {
    double var_s = 0.0;
    for (const auto& [y, k] : sp.kappa) var_s += k * k;
    CHECK(var_s <= 1e-8 * var_k);
    CHECK(std::abs(sum(sp.beta) - 1.0) < 1e-10);
    CHECK(std::abs(sum(sp.kappa)) < 1e-10);
  }
  CHECK(std::abs(sum(fit.B) - 1.0) < 1e-10);
  CHECK(std::abs(sum(fit.K)) < 1e-10);
}

TEST_CASE("LL recovers planted common and specific factors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto grid = AgeGrid::hmd_5x1(0, 40);
  const YearRange years{1971, 2010};
  const auto common = rank_one_truth(grid, years, rng);
  std::map<std::string, std::pair<AgeSeries, YearSeries>> planted;
  for (const std::string c : {"AAA", "BBB"}) {
    AgeSeries beta;
    double s = 0.0;
    for (const auto& g : grid) s += (beta[g.lower] = 0.5 + u(rng));
    for (auto& [x, v] : beta) v /= s;
    YearSeries kappa;
    double ks = 0.0;
    for (int y = years.first; y <= years.last; ++y) ks += (kappa[y] = 0.8 * std::sin(0.7 * y + c[0]));
    for (auto& [y, v] : kappa) v -= ks / years.count();
    planted[c] = {beta, kappa};
  }
  // BBB's specific factor is the negation of AAA's, so they cancel in the pool.
  for (auto& [x, v] : planted["BBB"].first) v = planted["AAA"].first.at(x);
  for (auto& [y, v] : planted["BBB"].second) v = -planted["AAA"].second.at(y);
  const auto panel = from_fn({"AAA", "BBB"}, grid, years, [&](const std::string& c, Gender g, int x, int y) {
    return (g == Gender::Male ? 0.3 : 0.0) + common.a.at(x) + common.b.at(x) * common.k.at(y) +
           (g == Gender::Female ? planted[c].first.at(x) * planted[c].second.at(y) : 0.0);
  });
  const auto fit = fit_ll(panel, {{"AAA", Gender::Female}, {"BBB", Gender::Female}});
  for (const auto& g : grid) CHECK(fit.B.at(g.lower) == doctest::Approx(common.b.at(g.lower)).epsilon(1e-8));
  const auto& sa = fit.specific.at({"AAA", Gender::Female});
  // Sign of the specific pair is fixed by sum(beta) = 1.
  for (const auto& [y, k] : planted["AAA"].second) CHECK(sa.kappa.at(y) == doctest::Approx(k).epsilon(1e-8).scale(1));
  for (const auto& g : grid) CHECK(sa.beta.at(g.lower) == doctest::Approx(planted["AAA"].first.at(g.lower)).epsilon(1e-8));
  const auto& sb = fit.specific.at({"BBB", Gender::Female});
  for (const auto& [y, k] : planted["BBB"].second) CHECK(sb.kappa.at(y) == doctest::Approx(k).epsilon(1e-8).scale(1));

  const auto f = forecast_ll(fit, 5, {300, 0.9, 3});
  CHECK(f.cells.size() == 2 * grid.size() * 5);
  for (const auto& [k, c] : f.cells) {
    CHECK(c.lower <= c.upper);
    CHECK(c.level == 0.9);
  }
  const auto again = forecast_ll(fit, 5, {300, 0.9, 3});
  for (const auto& [k, c] : f.cells) CHECK(again.at(k).lower == c.lower);
}

TEST_CASE("MSE per population") {
  const auto grid = AgeGrid::hmd_5x1(0, 20);
  const auto actual = from_fn({"AAA", "BBB"}, grid, {2001, 2005}, synthetic::gompertz);
  RateForecast perfect, shifted;
  for (const auto& r : actual.records()) {
    perfect.cells[r.key()] = {r.log_rate, r.log_rate, r.log_rate, 0.0};
    shifted.cells[r.key()] = {r.log_rate + 1.0, r.log_rate + 1.0, r.log_rate + 1.0, 0.0};
  }
  for (const auto& row : mse(perfect, actual)) CHECK(row.mse == 0.0);
  for (const auto& row : mse(perfect, actual, MseScale::Natural)) CHECK(row.mse == 0.0);
  const auto rows = mse(shifted, actual);
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.mse == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(row.n == static_cast<int>(grid.size()) * 5);
  }
  const auto nat = mse(shifted, actual, MseScale::Natural);
  double expected = 0.0;
  int n = 0;
  for (const auto& r : actual.restrict_to({"AAA", Gender::Female}).records()) {
    expected += std::pow(std::exp(r.log_rate) * (std::exp(1.0) - 1.0), 2);
    ++n;
  }
  CHECK(nat.front().mse == doctest::Approx(expected / n).epsilon(1e-12));

  RateForecast elsewhere;
  elsewhere.cells[{"ZZZ", Gender::Male, 0, 1900}] = {};
  CHECK_THROWS_AS(mse(elsewhere, actual), ValidationError);
  CHECK(parse_mse_scale("natural") == MseScale::Natural);
  CHECK_THROWS_AS(parse_mse_scale("linear"), ValidationError);
}

TEST_CASE("MSE of a noisy forecast concentrates near the noise variance") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 0.1);
  const auto actual = from_fn({"AAA"}, AgeGrid::single_year(0, 99), {1901, 2000}, synthetic::gompertz)
                          .restrict_to(kPop);
  RateForecast f;
  for (const auto& r : actual.records()) f.cells[r.key()] = {r.log_rate + z(rng), 0, 0, 0};
  CHECK(mse(f, actual).front().mse == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("MSE comparison CSV") {
  const std::vector<MseRow> lme{{{"AUT", Gender::Female}, 0.02, 9}, {{"AUT", Gender::Male}, 0.01, 9}};
  const std::vector<MseRow> lc{{{"AUT", Gender::Male}, 0.03, 9}, {{"AUT", Gender::Female}, 0.01, 9}};
  std::ostringstream out;
  write_mse_comparison_csv(out, lme, lc, "lc");
  CHECK(out.str() == "country,gender,mse_lme,mse_lc,ratio\nAUT,F,0.02,0.01,0.5\nAUT,M,0.01,0.03,3\n");
  CHECK_THROWS_AS(write_mse_comparison_csv(out, lme, {lc[0]}, "lc"), ValidationError);
}
