#pragma once

#include <compare>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lmemort {

enum class Gender { Female, Male };

inline constexpr Gender kGenders[] = {Gender::Female, Gender::Male};

char gender_code(Gender g);
Gender parse_gender(const std::string& s);

// An age band [lower, lower + width - 1]; an absent width marks the open
// terminal band such as "110+".
struct AgeGroup {
  int lower = 0;
  std::optional<int> width;

  static AgeGroup closed(int lower, int width) { return {lower, width}; }
  static AgeGroup open_from(int lower) { return {lower, std::nullopt}; }

  bool open() const { return !width.has_value(); }
  // Last age covered by a closed group.
  int last_age() const { return lower + width.value_or(1) - 1; }
  std::string label() const;  // "0", "1-4", "110+"

  friend bool operator==(const AgeGroup&, const AgeGroup&) = default;
  friend auto operator<=>(const AgeGroup& a, const AgeGroup& b) { return a.lower <=> b.lower; }
};

// Parses "0", "1-4" or "110+".
AgeGroup parse_age_group(const std::string& token);

class AgeGrid {
public:
  AgeGrid() = default;
  // Groups must be disjoint and increasing; an open group may only come last.
  explicit AgeGrid(std::vector<AgeGroup> groups);

  // HMD 5x1 layout (0, 1-4, 5-9, ..., 105-109, 110+) restricted to groups
  // whose lower bound lies in [min_lower, max_lower].
  static AgeGrid hmd_5x1(int min_lower = 0, int max_lower = 110);
  // One-year ages; age 110 becomes the open group "110+" when included.
  static AgeGrid single_year(int min_age, int max_age);

  std::size_t size() const { return groups_.size(); }
  const AgeGroup& operator[](std::size_t i) const { return groups_[i]; }
  const std::vector<AgeGroup>& groups() const { return groups_; }
  auto begin() const { return groups_.begin(); }
  auto end() const { return groups_.end(); }

  std::optional<std::size_t> index_of(int lower) const;
  std::size_t at(int lower) const;  // throws ValidationError when absent

  friend bool operator==(const AgeGrid&, const AgeGrid&) = default;

private:
  std::vector<AgeGroup> groups_;
};

struct RawRateRow {
  int year = 0;
  AgeGroup age;
  Gender gender = Gender::Female;
  double rate = 0.0;
};

// One parsed Mx file: per-gender rates, missing values omitted.
struct RawRateTable {
  std::string country;
  std::vector<RawRateRow> rows;
};

RawRateTable parse_mx_file(std::istream& text, const std::string& country);
RawRateTable read_mx_file(const std::string& path, const std::string& country);

struct YearRange {
  int first = 0;
  int last = 0;
  int count() const { return last - first + 1; }
  bool contains(int year) const { return year >= first && year <= last; }
  friend bool operator==(const YearRange&, const YearRange&) = default;
};

struct PanelKey {
  std::string country;
  Gender gender = Gender::Female;
  int age_lower = 0;
  int year = 0;

  friend auto operator<=>(const PanelKey&, const PanelKey&) = default;
  friend bool operator==(const PanelKey&, const PanelKey&) = default;
};

std::string to_string(const PanelKey& key);

struct PanelRecord {
  std::string country;
  Gender gender = Gender::Female;
  AgeGroup age;
  int year = 0;
  double log_rate = 0.0;

  PanelKey key() const { return {country, gender, age.lower, year}; }
};

struct Population {
  std::string country;
  Gender gender = Gender::Female;
  friend auto operator<=>(const Population&, const Population&) = default;
  friend bool operator==(const Population&, const Population&) = default;
};

std::string to_string(const Population& pop);

// Long-format log death rates y = log m indexed by (country, gender, age, year).
// Records are kept sorted by key.
class MortalityPanel {
public:
  MortalityPanel() = default;
  MortalityPanel(std::vector<PanelRecord> records, AgeGrid grid, YearRange years);

  const std::vector<PanelRecord>& records() const { return records_; }
  const AgeGrid& age_grid() const { return grid_; }
  const YearRange& years() const { return years_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  std::vector<std::string> countries() const;
  std::vector<Population> populations() const;
  std::optional<double> find(const PanelKey& key) const;

  // Every (country, gender, group) carries the full year range.
  bool is_rectangular() const;

  template <typename Pred>
  MortalityPanel filter(Pred keep) const {
    std::vector<PanelRecord> out;
    for (const auto& r : records_)
      if (keep(r)) out.push_back(r);
    return MortalityPanel(std::move(out), grid_, years_);
  }

  MortalityPanel restrict_to(const Population& pop) const;

private:
  std::vector<PanelRecord> records_;
  AgeGrid grid_;
  YearRange years_;
};

// Rectangular panel over the tables' countries x {F, M} x grid x years.
// Missing cells are reported together; a zero rate is rejected.
MortalityPanel build_panel(const std::vector<RawRateTable>& tables, YearRange years,
                           const AgeGrid& grid);

std::pair<MortalityPanel, MortalityPanel> split_train_test(const MortalityPanel& panel,
                                                           int cutoff_year);

// CSV columns: country,gender,age_lower,age_width,year,log_rate
void write_panel_csv(std::ostream& out, const MortalityPanel& panel);
MortalityPanel read_panel_csv(std::istream& in);
MortalityPanel read_panel_csv_file(const std::string& path);

}  // namespace lmemort
