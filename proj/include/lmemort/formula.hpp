#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lmemort {

// Panel index columns usable in a grouping key.
enum class Factor { Country, Gender, Age };

using GroupingKey = std::vector<Factor>;

std::string to_string(const GroupingKey& key);

enum class FixedKind {
  Intercept,
  Age,                 // x, treatment-coded against the first age group
  GenderAge,           // g:x, male offsets for every age group
  GlobalPower,         // I(kt^j)
  GenderAgeCountryPower,  // g:x:I(kct^j), one slope per gender and age group
  Cohort,              // year - age lower bound
  Extra,               // named group-level covariate, e.g. gdp
};

struct FixedTerm {
  FixedKind kind = FixedKind::Intercept;
  int power = 1;
  std::string name;  // only for Extra

  std::string label() const;
  friend bool operator==(const FixedTerm&, const FixedTerm&) = default;
};

enum class RandomKind { Intercept, GlobalPower, Cohort, Extra };

struct RandomRegressor {
  RandomKind kind = RandomKind::Intercept;
  int power = 1;
  std::string name;

  std::string label() const;
  // The fixed term that must accompany this random regressor.
  FixedTerm fixed_counterpart() const;
  friend bool operator==(const RandomRegressor&, const RandomRegressor&) = default;
};

struct RandomTerm {
  GroupingKey grouping;
  std::vector<RandomRegressor> regressors;

  std::string label() const;  // "(1 + I(kt^2) + cohort | c:g:x)"
  friend bool operator==(const RandomTerm&, const RandomTerm&) = default;
};

// Fixed and random structure in lme4-like notation, e.g.
//   x + g:x + g:x:I(kct) + I(kt^2) + g:x:I(kct^2) + cohort + (I(kt^2) + cohort | c:g:x)
// The fixed intercept is always present; random terms carry an intercept
// unless their regressor list starts with "0".
struct ModelFormula {
  std::vector<FixedTerm> fixed;
  std::vector<RandomTerm> random;

  static ModelFormula parse(std::string_view text);
  std::string to_string() const;

  bool has_fixed(const FixedTerm& term) const;
  // Throws ValidationError when a random regressor lacks its fixed counterpart
  // or a term is repeated.
  void validate() const;

  friend bool operator==(const ModelFormula&, const ModelFormula&) = default;
};

}  // namespace lmemort
