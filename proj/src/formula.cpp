#include "lmemort/formula.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "lmemort/error.hpp"

namespace lmemort {
namespace {

std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char ch : s)
    if (!std::isspace(static_cast<unsigned char>(ch))) out.push_back(ch);
  return out;
}

// Splits on `sep` at parenthesis depth zero.
std::vector<std::string> split_top(const std::string& s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char ch : s) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (depth < 0) throw ValidationError("unbalanced parentheses in formula");
    if (ch == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (depth != 0) throw ValidationError("unbalanced parentheses in formula");
  out.push_back(cur);
  return out;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_';
  });
}

std::string power_suffix(int power) { return power == 1 ? "" : "^" + std::to_string(power); }

// Parses "I(kt)", "I(k_t^2)", ... into (variable, power); variable is "kt" or "kct".
bool parse_power(const std::string& token, std::string& var, int& power) {
  if (token.size() < 4 || token.rfind("I(", 0) != 0 || token.back() != ')') return false;
  std::string inner = token.substr(2, token.size() - 3);
  power = 1;
  if (const auto caret = inner.find('^'); caret != std::string::npos) {
    const auto digits = inner.substr(caret + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), power);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || power < 1)
      throw ValidationError("bad power in '" + token + "'");
    inner = inner.substr(0, caret);
  }
  if (inner == "kt" || inner == "k_t") {
    var = "kt";
    return true;
  }
  if (inner == "kct" || inner == "k_ct") {
    var = "kct";
    return true;
  }
  throw ValidationError("unknown covariate in '" + token + "'");
}

std::string normalize_factor(const std::string& part) {
  if (part == "g" || part == "gender") return "g";
  if (part == "x" || part == "age") return "x";
  if (part == "c" || part == "country") return "c";
  return part;
}

FixedTerm parse_fixed(const std::string& token) {
  if (token == "cohort") return {FixedKind::Cohort, 1, {}};
  std::string var;
  int power = 1;
  if (token.rfind("I(", 0) == 0) {
    parse_power(token, var, power);
    if (var != "kt") throw ValidationError("k_ct enters only as g:x:I(kct^j), got '" + token + "'");
    return {FixedKind::GlobalPower, power, {}};
  }
  auto parts = split_top(token, ':');
  if (parts.size() == 1) {
    const auto f = normalize_factor(parts[0]);
    if (f == "x") return {FixedKind::Age, 1, {}};
    if (f == "g" || f == "c")
      throw ValidationError("main effect '" + token + "' is not a supported fixed term");
    if (is_identifier(parts[0])) return {FixedKind::Extra, 1, parts[0]};
  }
  std::vector<std::string> factors;
  std::string covariate;
  for (const auto& p : parts) {
    if (p.rfind("I(", 0) == 0)
      covariate = p;
    else
      factors.push_back(normalize_factor(p));
  }
  std::sort(factors.begin(), factors.end());
  if (factors == std::vector<std::string>{"g", "x"}) {
    if (covariate.empty()) return {FixedKind::GenderAge, 1, {}};
    parse_power(covariate, var, power);
    if (var != "kct") throw ValidationError("only k_ct interacts with g:x, got '" + token + "'");
    return {FixedKind::GenderAgeCountryPower, power, {}};
  }
  throw ValidationError("unknown fixed term '" + token + "'");
}

RandomRegressor parse_random_regressor(const std::string& token) {
  if (token == "1") return {RandomKind::Intercept, 1, {}};
  if (token == "cohort") return {RandomKind::Cohort, 1, {}};
  if (token.rfind("I(", 0) == 0) {
    std::string var;
    int power = 1;
    parse_power(token, var, power);
    if (var != "kt") throw ValidationError("random slopes support k_t powers only, got '" + token + "'");
    return {RandomKind::GlobalPower, power, {}};
  }
  if (is_identifier(token)) return {RandomKind::Extra, 1, token};
  throw ValidationError("unknown random regressor '" + token + "'");
}

RandomTerm parse_random(const std::string& token) {
  const auto inner = token.substr(1, token.size() - 2);
  const auto bar = inner.find('|');
  if (bar == std::string::npos || inner.find('|', bar + 1) != std::string::npos)
    throw ValidationError("random term '" + token + "' needs exactly one '|'");
  RandomTerm term;
  bool intercept = true;
  std::vector<RandomRegressor> slopes;
  for (const auto& piece : split_top(inner.substr(0, bar), '+')) {
    if (piece.empty()) throw ValidationError("empty regressor in '" + token + "'");
    if (piece == "0" || piece == "-1") {
      intercept = false;
      continue;
    }
    auto r = parse_random_regressor(piece);
    if (r.kind == RandomKind::Intercept) continue;
    if (std::find(slopes.begin(), slopes.end(), r) != slopes.end())
      throw ValidationError("repeated regressor '" + piece + "' in '" + token + "'");
    slopes.push_back(r);
  }
  if (intercept) term.regressors.push_back({RandomKind::Intercept, 1, {}});
  term.regressors.insert(term.regressors.end(), slopes.begin(), slopes.end());
  if (term.regressors.empty()) throw ValidationError("random term '" + token + "' has no regressors");
  for (const auto& part : split_top(inner.substr(bar + 1), ':')) {
    const auto f = normalize_factor(part);
    Factor factor;
    if (f == "c")
      factor = Factor::Country;
    else if (f == "g")
      factor = Factor::Gender;
    else if (f == "x")
      factor = Factor::Age;
    else
      throw ValidationError("unknown grouping factor '" + part + "'");
    if (std::find(term.grouping.begin(), term.grouping.end(), factor) != term.grouping.end())
      throw ValidationError("repeated grouping factor in '" + token + "'");
    term.grouping.push_back(factor);
  }
  return term;
}

}  // namespace

std::string to_string(const GroupingKey& key) {
  std::string s;
  for (auto f : key) {
    if (!s.empty()) s += ':';
    s += f == Factor::Country ? "c" : f == Factor::Gender ? "g" : "x";
  }
  return s;
}

std::string FixedTerm::label() const {
  switch (kind) {
    case FixedKind::Intercept: return "1";
    case FixedKind::Age: return "x";
    case FixedKind::GenderAge: return "g:x";
    case FixedKind::GlobalPower: return "I(kt" + power_suffix(power) + ")";
    case FixedKind::GenderAgeCountryPower: return "g:x:I(kct" + power_suffix(power) + ")";
    case FixedKind::Cohort: return "cohort";
    case FixedKind::Extra: return name;
  }
  return {};
}

std::string RandomRegressor::label() const {
  switch (kind) {
    case RandomKind::Intercept: return "1";
    case RandomKind::GlobalPower: return "I(kt" + power_suffix(power) + ")";
    case RandomKind::Cohort: return "cohort";
    case RandomKind::Extra: return name;
  }
  return {};
}

FixedTerm RandomRegressor::fixed_counterpart() const {
  switch (kind) {
    case RandomKind::Intercept: return {FixedKind::Intercept, 1, {}};
    case RandomKind::GlobalPower: return {FixedKind::GlobalPower, power, {}};
    case RandomKind::Cohort: return {FixedKind::Cohort, 1, {}};
    case RandomKind::Extra: return {FixedKind::Extra, 1, name};
  }
  return {};
}

std::string RandomTerm::label() const {
  std::string s = "(";
  if (regressors.empty() || regressors.front().kind != RandomKind::Intercept) s += "0 + ";
  for (std::size_t i = 0; i < regressors.size(); ++i) {
    if (i) s += " + ";
    s += regressors[i].label();
  }
  return s + " | " + lmemort::to_string(grouping) + ")";
}

ModelFormula ModelFormula::parse(std::string_view text) {
  const auto s = strip_spaces(text);
  if (s.empty()) throw ValidationError("empty formula");
  ModelFormula f;
  f.fixed.push_back({FixedKind::Intercept, 1, {}});
  for (const auto& token : split_top(s, '+')) {
    if (token.empty()) throw ValidationError("empty term in formula '" + std::string(text) + "'");
    if (token.front() == '(') {
      if (token.back() != ')') throw ValidationError("malformed random term '" + token + "'");
      f.random.push_back(parse_random(token));
      continue;
    }
    if (token == "1") continue;
    auto term = parse_fixed(token);
    if (f.has_fixed(term)) throw ValidationError("repeated fixed term '" + token + "'");
    f.fixed.push_back(term);
  }
  f.validate();
  return f;
}

std::string ModelFormula::to_string() const {
  std::string s;
  for (const auto& t : fixed) {
    if (t.kind == FixedKind::Intercept) continue;
    if (!s.empty()) s += " + ";
    s += t.label();
  }
  if (s.empty()) s = "1";
  for (const auto& r : random) s += " + " + r.label();
  return s;
}

bool ModelFormula::has_fixed(const FixedTerm& term) const {
  return std::find(fixed.begin(), fixed.end(), term) != fixed.end();
}

void ModelFormula::validate() const {
  if (!has_fixed({FixedKind::Intercept, 1, {}})) throw ValidationError("formula lacks an intercept");
  for (std::size_t i = 0; i < fixed.size(); ++i)
    for (std::size_t j = i + 1; j < fixed.size(); ++j)
      if (fixed[i] == fixed[j]) throw ValidationError("repeated fixed term " + fixed[i].label());
  for (const auto& r : random) {
    if (r.grouping.empty()) throw ValidationError("random term without grouping factor");
    for (const auto& reg : r.regressors)
      if (!has_fixed(reg.fixed_counterpart()))
        throw ValidationError("random regressor " + reg.label() + " in " + r.label() +
                              " has no fixed counterpart");
  }
}

}  // namespace lmemort
