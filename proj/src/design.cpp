#include "lmemort/design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include <Eigen/QR>

#include "lmemort/error.hpp"

namespace lmemort {
namespace {

using LevelTuple = std::tuple<std::string, int, int>;

LevelTuple level_tuple(const GroupingKey& key, const PanelKey& cell) {
  LevelTuple t{"", -1, -1};
  for (auto f : key) {
    if (f == Factor::Country) std::get<0>(t) = cell.country;
    if (f == Factor::Gender) std::get<1>(t) = static_cast<int>(cell.gender);
    if (f == Factor::Age) std::get<2>(t) = cell.age_lower;
  }
  return t;
}

std::string level_string(const GroupingKey& key, const PanelKey& cell) {
  std::string s;
  for (auto f : key) {
    if (!s.empty()) s += ':';
    if (f == Factor::Country) s += cell.country;
    if (f == Factor::Gender) s += gender_code(cell.gender);
    if (f == Factor::Age) s += std::to_string(cell.age_lower);
  }
  return s;
}

std::string power_label(const char* var, int power) {
  return std::string("I(") + var + (power == 1 ? "" : "^" + std::to_string(power)) + ")";
}

double random_value(const RandomRegressor& r, const PanelKey& cell, const CovariateSet& cov) {
  switch (r.kind) {
    case RandomKind::Intercept: return 1.0;
    case RandomKind::GlobalPower: return std::pow(cov.kt(cell.year), r.power);
    case RandomKind::Cohort: return static_cast<double>(cell.year - cell.age_lower);
    case RandomKind::Extra: return cov.extra_value(r.name, cell.country, cell.year);
  }
  return 0.0;
}

}  // namespace

DesignLayout::DesignLayout(ModelFormula formula, AgeGrid grid, std::vector<RandomTerm> block_terms,
                           std::vector<std::vector<std::string>> levels)
    : formula_(std::move(formula)),
      grid_(std::move(grid)),
      block_terms_(std::move(block_terms)),
      levels_(std::move(levels)) {
  formula_.validate();
  if (block_terms_.size() != levels_.size())
    throw ValidationError("design layout: one level list per random term required");
  for (const auto& t : formula_.fixed) {
    switch (t.kind) {
      case FixedKind::Intercept: columns_.push_back("(Intercept)"); break;
      case FixedKind::Age:
        for (std::size_t i = 1; i < grid_.size(); ++i)
          columns_.push_back("x" + std::to_string(grid_[i].lower));
        break;
      case FixedKind::GenderAge:
        for (const auto& g : grid_) columns_.push_back("gM:x" + std::to_string(g.lower));
        break;
      case FixedKind::GlobalPower: columns_.push_back(power_label("kt", t.power)); break;
      case FixedKind::GenderAgeCountryPower:
        for (Gender gender : kGenders)
          for (const auto& g : grid_)
            columns_.push_back(std::string("g") + gender_code(gender) + ":x" +
                               std::to_string(g.lower) + ":" + power_label("kct", t.power));
        break;
      case FixedKind::Cohort: columns_.push_back("cohort"); break;
      case FixedKind::Extra: columns_.push_back(t.name); break;
    }
  }
  for (const auto& lv : levels_) {
    std::map<std::string, int> idx;
    for (std::size_t i = 0; i < lv.size(); ++i) idx.emplace(lv[i], static_cast<int>(i));
    level_index_.push_back(std::move(idx));
  }
}

DesignLayout DesignLayout::from_panel(const ModelFormula& formula, const MortalityPanel& panel) {
  std::vector<std::pair<RandomTerm, std::vector<std::string>>> blocks;
  for (const auto& term : formula.random) {
    std::set<LevelTuple> seen;
    std::vector<std::pair<LevelTuple, std::string>> levels;
    for (const auto& r : panel.records()) {
      const auto key = r.key();
      if (seen.insert(level_tuple(term.grouping, key)).second)
        levels.emplace_back(level_tuple(term.grouping, key), level_string(term.grouping, key));
    }
    std::sort(levels.begin(), levels.end());
    std::vector<std::string> names;
    for (auto& l : levels) names.push_back(std::move(l.second));
    blocks.emplace_back(term, std::move(names));
  }
  std::stable_sort(blocks.begin(), blocks.end(), [](const auto& a, const auto& b) {
    return a.second.size() > b.second.size();
  });
  std::vector<RandomTerm> terms;
  std::vector<std::vector<std::string>> levels;
  for (auto& [t, l] : blocks) {
    terms.push_back(t);
    levels.push_back(std::move(l));
  }
  return DesignLayout(formula, panel.age_grid(), std::move(terms), std::move(levels));
}

std::string DesignLayout::level_key(std::size_t b, const PanelKey& cell) const {
  return level_string(block_terms_[b].grouping, cell);
}

std::optional<int> DesignLayout::level_index(std::size_t b, const PanelKey& cell) const {
  auto it = level_index_[b].find(level_key(b, cell));
  if (it == level_index_[b].end()) return std::nullopt;
  return it->second;
}

Eigen::RowVectorXd DesignLayout::fixed_row(const PanelKey& cell, const CovariateSet& cov) const {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(p()));
  const auto age = grid_.at(cell.age_lower);
  const auto n_age = grid_.size();
  const bool male = cell.gender == Gender::Male;
  Eigen::Index col = 0;
  for (const auto& t : formula_.fixed) {
    switch (t.kind) {
      case FixedKind::Intercept: row(col++) = 1.0; break;
      case FixedKind::Age:
        if (age > 0) row(col + static_cast<Eigen::Index>(age) - 1) = 1.0;
        col += static_cast<Eigen::Index>(n_age) - 1;
        break;
      case FixedKind::GenderAge:
        if (male) row(col + static_cast<Eigen::Index>(age)) = 1.0;
        col += static_cast<Eigen::Index>(n_age);
        break;
      case FixedKind::GlobalPower: row(col++) = std::pow(cov.kt(cell.year), t.power); break;
      case FixedKind::GenderAgeCountryPower: {
        const auto offset = static_cast<Eigen::Index>((male ? n_age : 0) + age);
        row(col + offset) = std::pow(cov.kct(cell.country, cell.year, cell.age_lower), t.power);
        col += 2 * static_cast<Eigen::Index>(n_age);
        break;
      }
      case FixedKind::Cohort: row(col++) = static_cast<double>(cell.year - cell.age_lower); break;
      case FixedKind::Extra: row(col++) = cov.extra_value(t.name, cell.country, cell.year); break;
    }
  }
  return row;
}

Eigen::RowVectorXd DesignLayout::random_row(std::size_t b, const PanelKey& cell,
                                            const CovariateSet& cov) const {
  const auto& regs = block_terms_[b].regressors;
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(regs.size()));
  for (std::size_t j = 0; j < regs.size(); ++j)
    row(static_cast<Eigen::Index>(j)) = random_value(regs[j], cell, cov);
  return row;
}

DesignMatrices assemble_design(Eigen::VectorXd y, Eigen::MatrixXd X,
                               std::vector<std::string> column_names,
                               std::vector<RandomBlock> blocks) {
  const Eigen::Index n = y.size();
  if (X.rows() != n) throw ValidationError("X and y row counts differ");
  if (static_cast<Eigen::Index>(column_names.size()) != X.cols())
    throw ValidationError("one name per fixed column required");
  if (X.cols() == 0) throw ValidationError("X has no columns");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < X.cols()) {
    std::string names;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k)
      names += (names.empty() ? "" : ", ") + column_names[static_cast<std::size_t>(perm(k))];
    throw ValidationError("fixed-effects design is rank deficient; collinear columns: " + names);
  }

  std::vector<Eigen::Triplet<double>> triplets;
  std::size_t offset = 0;
  for (auto& b : blocks) {
    if (b.values.rows() != n || static_cast<Eigen::Index>(b.row_level.size()) != n)
      throw ValidationError("random block " + b.label + " has wrong row count");
    b.offset = offset;
    const auto q = static_cast<std::size_t>(b.q());
    for (Eigen::Index i = 0; i < n; ++i) {
      const int level = b.row_level[static_cast<std::size_t>(i)];
      if (level < 0 || level >= b.n_levels())
        throw ValidationError("random block " + b.label + " has a bad level index");
      for (std::size_t j = 0; j < q; ++j)
        triplets.emplace_back(static_cast<int>(i),
                              static_cast<int>(offset + static_cast<std::size_t>(level) * q + j),
                              b.values(i, static_cast<Eigen::Index>(j)));
    }
    offset += q * static_cast<std::size_t>(b.n_levels());
  }
  Eigen::SparseMatrix<double> Z(n, static_cast<Eigen::Index>(offset));
  Z.setFromTriplets(triplets.begin(), triplets.end());

  DesignMatrices d;
  d.y = std::move(y);
  d.X = std::move(X);
  d.column_names = std::move(column_names);
  d.blocks = std::move(blocks);
  d.Z = std::move(Z);
  return d;
}

DesignMatrices build_design(const MortalityPanel& panel, const CovariateSet& cov,
                            const ModelFormula& formula) {
  return build_design(panel, cov, DesignLayout::from_panel(formula, panel));
}

DesignMatrices build_design(const MortalityPanel& panel, const CovariateSet& cov,
                            const DesignLayout& layout) {
  const auto n = static_cast<Eigen::Index>(panel.size());
  const auto p = static_cast<Eigen::Index>(layout.p());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd X(n, p);
  std::vector<RandomBlock> blocks(layout.n_blocks());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& term = layout.block_term(b);
    blocks[b].label = term.label();
    for (const auto& r : term.regressors) blocks[b].regressor_names.push_back(r.label());
    blocks[b].levels = layout.levels(b);
    blocks[b].values.resize(n, static_cast<Eigen::Index>(term.regressors.size()));
    blocks[b].row_level.resize(static_cast<std::size_t>(n));
  }
  std::vector<PanelKey> rows;
  rows.reserve(static_cast<std::size_t>(n));
  Eigen::Index i = 0;
  for (const auto& rec : panel.records()) {
    const auto key = rec.key();
    y(i) = rec.log_rate;
    X.row(i) = layout.fixed_row(key, cov);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto level = layout.level_index(b, key);
      if (!level)
        throw ValidationError("cell " + to_string(key) + " has no level in random term " +
                              blocks[b].label);
      blocks[b].row_level[static_cast<std::size_t>(i)] = *level;
      blocks[b].values.row(i) = layout.random_row(b, key, cov);
    }
    rows.push_back(key);
    ++i;
  }
  auto d = assemble_design(std::move(y), std::move(X), layout.column_names(), std::move(blocks));
  d.layout = layout;
  d.rows = std::move(rows);
  return d;
}

}  // namespace lmemort
