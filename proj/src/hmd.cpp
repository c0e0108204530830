#include "lmemort/hmd.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "lmemort/csv.hpp"
#include "lmemort/error.hpp"

namespace lmemort {

char gender_code(Gender g) { return g == Gender::Female ? 'F' : 'M'; }

Gender parse_gender(const std::string& s) {
  if (s == "F" || s == "Female" || s == "female") return Gender::Female;
  if (s == "M" || s == "Male" || s == "male") return Gender::Male;
  throw ValidationError("unknown gender '" + s + "'");
}

std::string AgeGroup::label() const {
  if (open()) return std::to_string(lower) + "+";
  if (*width == 1) return std::to_string(lower);
  return std::to_string(lower) + "-" + std::to_string(last_age());
}

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

AgeGroup parse_age_group(const std::string& token) {
  int lower = 0;
  if (!token.empty() && token.back() == '+') {
    if (!parse_int(std::string_view(token).substr(0, token.size() - 1), lower) || lower < 0)
      throw ValidationError("bad age '" + token + "'");
    return AgeGroup::open_from(lower);
  }
  if (const auto dash = token.find('-'); dash != std::string::npos && dash > 0) {
    int upper = 0;
    if (!parse_int(std::string_view(token).substr(0, dash), lower) ||
        !parse_int(std::string_view(token).substr(dash + 1), upper) || lower < 0 || upper < lower)
      throw ValidationError("bad age range '" + token + "'");
    return AgeGroup::closed(lower, upper - lower + 1);
  }
  if (!parse_int(token, lower) || lower < 0) throw ValidationError("bad age '" + token + "'");
  return AgeGroup::closed(lower, 1);
}

AgeGrid::AgeGrid(std::vector<AgeGroup> groups) : groups_(std::move(groups)) {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    const auto& g = groups_[i];
    if (g.lower < 0) throw ValidationError("negative age lower bound");
    if (g.width && *g.width < 1) throw ValidationError("age group width must be >= 1");
    if (g.open() && i + 1 != groups_.size())
      throw ValidationError("open age group " + g.label() + " must be last");
    if (i > 0 && groups_[i - 1].last_age() >= g.lower)
      throw ValidationError("age groups " + groups_[i - 1].label() + " and " + g.label() +
                            " overlap or are out of order");
  }
}

AgeGrid AgeGrid::hmd_5x1(int min_lower, int max_lower) {
  std::vector<AgeGroup> all{AgeGroup::closed(0, 1), AgeGroup::closed(1, 4)};
  for (int a = 5; a < 110; a += 5) all.push_back(AgeGroup::closed(a, 5));
  all.push_back(AgeGroup::open_from(110));
  std::vector<AgeGroup> kept;
  for (const auto& g : all)
    if (g.lower >= min_lower && g.lower <= max_lower) kept.push_back(g);
  return AgeGrid(std::move(kept));
}

AgeGrid AgeGrid::single_year(int min_age, int max_age) {
  std::vector<AgeGroup> kept;
  for (int a = min_age; a <= max_age; ++a)
    kept.push_back(a == 110 ? AgeGroup::open_from(110) : AgeGroup::closed(a, 1));
  return AgeGrid(std::move(kept));
}

std::optional<std::size_t> AgeGrid::index_of(int lower) const {
  auto it = std::lower_bound(groups_.begin(), groups_.end(), lower,
                             [](const AgeGroup& g, int v) { return g.lower < v; });
  if (it == groups_.end() || it->lower != lower) return std::nullopt;
  return static_cast<std::size_t>(it - groups_.begin());
}

std::size_t AgeGrid::at(int lower) const {
  if (auto i = index_of(lower)) return *i;
  throw ValidationError("age " + std::to_string(lower) + " is not a group of the grid");
}

RawRateTable parse_mx_file(std::istream& text, const std::string& country) {
  RawRateTable table{country, {}};
  std::string line;
  long lineno = 0;
  bool in_body = false;
  while (std::getline(text, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (!in_body) {
      if (tok[0] == "Year") in_body = true;
      continue;
    }
    if (tok.size() != 5)
      throw ParseError("expected 5 fields (Year Age Female Male Total), got " +
                           std::to_string(tok.size()),
                       lineno);
    int year = 0;
    if (!parse_int(tok[0], year)) throw ParseError("bad year '" + tok[0] + "'", lineno);
    AgeGroup age;
    try {
      age = parse_age_group(tok[1]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    for (int col = 0; col < 2; ++col) {
      const auto& field = tok[2 + col];
      if (field == ".") continue;
      double rate = 0.0;
      const auto* end = field.data() + field.size();
      auto [ptr, ec] = std::from_chars(field.data(), end, rate);
      if (ec != std::errc() || ptr != end || !std::isfinite(rate))
        throw ParseError("bad rate '" + field + "'", lineno);
      if (rate < 0.0)
        throw ValidationError("line " + std::to_string(lineno) + ": negative rate " + field);
      table.rows.push_back({year, age, col == 0 ? Gender::Female : Gender::Male, rate});
    }
  }
  if (!in_body) throw ParseError("no 'Year Age Female Male Total' header found", lineno);
  return table;
}

RawRateTable read_mx_file(const std::string& path, const std::string& country) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_mx_file(in, country);
}

std::string to_string(const PanelKey& key) {
  return key.country + ":" + gender_code(key.gender) + ":" + std::to_string(key.age_lower) + ":" +
         std::to_string(key.year);
}

std::string to_string(const Population& pop) {
  return pop.country + ":" + gender_code(pop.gender);
}

MortalityPanel::MortalityPanel(std::vector<PanelRecord> records, AgeGrid grid, YearRange years)
    : records_(std::move(records)), grid_(std::move(grid)), years_(years) {
  std::sort(records_.begin(), records_.end(),
            [](const PanelRecord& a, const PanelRecord& b) { return a.key() < b.key(); });
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!std::isfinite(r.log_rate))
      throw ValidationError("non-finite log rate at " + to_string(r.key()));
    const auto gi = grid_.index_of(r.age.lower);
    if (!gi || grid_[*gi] != r.age)
      throw ValidationError("record " + to_string(r.key()) + " has age group " + r.age.label() +
                            " outside the grid");
    if (!years_.contains(r.year))
      throw ValidationError("record " + to_string(r.key()) + " outside the year range");
    if (i > 0 && records_[i - 1].key() == r.key())
      throw ValidationError("duplicate record " + to_string(r.key()));
  }
}

std::vector<std::string> MortalityPanel::countries() const {
  std::set<std::string> s;
  for (const auto& r : records_) s.insert(r.country);
  return {s.begin(), s.end()};
}

std::vector<Population> MortalityPanel::populations() const {
  std::set<Population> s;
  for (const auto& r : records_) s.insert({r.country, r.gender});
  return {s.begin(), s.end()};
}

std::optional<double> MortalityPanel::find(const PanelKey& key) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), key,
                             [](const PanelRecord& r, const PanelKey& k) { return r.key() < k; });
  if (it == records_.end() || it->key() != key) return std::nullopt;
  return it->log_rate;
}

bool MortalityPanel::is_rectangular() const {
  const auto pops = populations();
  const auto expected = pops.size() * grid_.size() * static_cast<std::size_t>(years_.count());
  // Records are unique and inside (grid x years), so counting suffices.
  return records_.size() == expected;
}

MortalityPanel MortalityPanel::restrict_to(const Population& pop) const {
  return filter([&](const PanelRecord& r) {
    return r.country == pop.country && r.gender == pop.gender;
  });
}

MortalityPanel build_panel(const std::vector<RawRateTable>& tables, YearRange years,
                           const AgeGrid& grid) {
  if (years.last < years.first) throw ValidationError("empty year range");
  std::vector<PanelRecord> records;
  std::vector<std::string> missing;
  std::vector<std::string> zero;
  for (const auto& table : tables) {
    std::map<std::tuple<int, int, Gender>, const RawRateRow*> index;
    for (const auto& row : table.rows) index[{row.year, row.age.lower, row.gender}] = &row;
    for (Gender g : kGenders) {
      for (const auto& group : grid) {
        for (int t = years.first; t <= years.last; ++t) {
          const PanelKey key{table.country, g, group.lower, t};
          auto it = index.find({t, group.lower, g});
          if (it == index.end() || it->second->age != group) {
            missing.push_back(to_string(key));
            continue;
          }
          const double rate = it->second->rate;
          if (!(rate > 0.0)) {
            zero.push_back(to_string(key));
            continue;
          }
          records.push_back({table.country, g, group, t, std::log(rate)});
        }
      }
    }
  }
  auto join = [](const std::vector<std::string>& keys) {
    std::string s;
    for (const auto& k : keys) s += (s.empty() ? "" : ", ") + k;
    return s;
  };
  if (!missing.empty())
    throw ValidationError(std::to_string(missing.size()) + " missing cells: " + join(missing));
  if (!zero.empty())
    throw ValidationError("zero rates (log undefined) at: " + join(zero));
  return MortalityPanel(std::move(records), grid, years);
}

std::pair<MortalityPanel, MortalityPanel> split_train_test(const MortalityPanel& panel,
                                                           int cutoff_year) {
  const auto& yr = panel.years();
  if (cutoff_year < yr.first || cutoff_year >= yr.last)
    throw ValidationError("cutoff " + std::to_string(cutoff_year) + " outside [" +
                          std::to_string(yr.first) + ", " + std::to_string(yr.last - 1) + "]");
  std::vector<PanelRecord> train, test;
  for (const auto& r : panel.records()) (r.year <= cutoff_year ? train : test).push_back(r);
  return {MortalityPanel(std::move(train), panel.age_grid(), {yr.first, cutoff_year}),
          MortalityPanel(std::move(test), panel.age_grid(), {cutoff_year + 1, yr.last})};
}

void write_panel_csv(std::ostream& out, const MortalityPanel& panel) {
  out << "country,gender,age_lower,age_width,year,log_rate\n";
  for (const auto& r : panel.records()) {
    out << r.country << ',' << gender_code(r.gender) << ',' << r.age.lower << ','
        << (r.age.open() ? std::string("OPEN") : std::to_string(*r.age.width)) << ',' << r.year
        << ',' << csv::format_double(r.log_rate) << '\n';
  }
}

MortalityPanel read_panel_csv(std::istream& in) {
  const auto t = csv::read(in);
  const auto c_country = t.column("country"), c_gender = t.column("gender"),
             c_lower = t.column("age_lower"), c_width = t.column("age_width"),
             c_year = t.column("year"), c_y = t.column("log_rate");
  std::vector<PanelRecord> records;
  std::set<AgeGroup> groups;
  int first = 0, last = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long ln = t.line_numbers[i];
    PanelRecord r;
    r.country = row[c_country];
    try {
      r.gender = parse_gender(row[c_gender]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), ln);
    }
    r.age.lower = csv::to_int(row[c_lower], ln);
    if (row[c_width] != "OPEN") r.age.width = csv::to_int(row[c_width], ln);
    r.year = csv::to_int(row[c_year], ln);
    r.log_rate = csv::to_double(row[c_y], ln);
    if (records.empty()) first = last = r.year;
    first = std::min(first, r.year);
    last = std::max(last, r.year);
    groups.insert(r.age);
    records.push_back(std::move(r));
  }
  return MortalityPanel(std::move(records), AgeGrid({groups.begin(), groups.end()}), {first, last});
}

MortalityPanel read_panel_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_panel_csv(in);
}

}  // namespace lmemort
