#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "lmemort/covariates.hpp"
#include "lmemort/formula.hpp"
#include "lmemort/hmd.hpp"

namespace lmemort {

// Maps panel cells to fixed and random regressor rows for one formula. Built
// once from the training panel and reused for prediction on new years.
class DesignLayout {
public:
  DesignLayout() = default;
  // `levels[b]` lists the group levels of random block b. Blocks are ordered
  // by decreasing level count, which keeps the random-effects Cholesky factor
  // free of fill-in for nested grouping keys.
  DesignLayout(ModelFormula formula, AgeGrid grid, std::vector<RandomTerm> block_terms,
               std::vector<std::vector<std::string>> levels);

  static DesignLayout from_panel(const ModelFormula& formula, const MortalityPanel& panel);

  const ModelFormula& formula() const { return formula_; }
  const AgeGrid& grid() const { return grid_; }
  const std::vector<std::string>& column_names() const { return columns_; }
  std::size_t p() const { return columns_.size(); }

  std::size_t n_blocks() const { return block_terms_.size(); }
  const RandomTerm& block_term(std::size_t b) const { return block_terms_[b]; }
  const std::vector<std::string>& levels(std::size_t b) const { return levels_[b]; }

  std::string level_key(std::size_t b, const PanelKey& cell) const;
  std::optional<int> level_index(std::size_t b, const PanelKey& cell) const;

  Eigen::RowVectorXd fixed_row(const PanelKey& cell, const CovariateSet& cov) const;
  Eigen::RowVectorXd random_row(std::size_t b, const PanelKey& cell,
                                const CovariateSet& cov) const;

private:
  ModelFormula formula_;
  AgeGrid grid_;
  std::vector<std::string> columns_;
  std::vector<RandomTerm> block_terms_;
  std::vector<std::vector<std::string>> levels_;
  std::vector<std::map<std::string, int>> level_index_;
};

// One realized random term: q regressors per row, one q-vector of effects per
// group level. Z columns for the block are level-major, regressor-minor.
struct RandomBlock {
  std::string label;
  std::vector<std::string> regressor_names;
  std::vector<std::string> levels;
  std::vector<int> row_level;
  Eigen::MatrixXd values;  // n x q
  std::size_t offset = 0;  // first Z column

  int q() const { return static_cast<int>(values.cols()); }
  int n_levels() const { return static_cast<int>(levels.size()); }
};

struct DesignMatrices {
  std::optional<DesignLayout> layout;  // absent for hand-assembled problems
  std::vector<PanelKey> rows;
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> column_names;
  std::vector<RandomBlock> blocks;
  Eigen::SparseMatrix<double> Z;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index random_size() const { return Z.cols(); }
};

// Assembles Z from the blocks and checks X for full column rank, naming the
// collinear columns on failure.
DesignMatrices assemble_design(Eigen::VectorXd y, Eigen::MatrixXd X,
                               std::vector<std::string> column_names,
                               std::vector<RandomBlock> blocks);

DesignMatrices build_design(const MortalityPanel& panel, const CovariateSet& cov,
                            const ModelFormula& formula);
DesignMatrices build_design(const MortalityPanel& panel, const CovariateSet& cov,
                            const DesignLayout& layout);

}  // namespace lmemort
