#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "profmon/core.hpp"

namespace profmon {

enum class RegressorKind { tree, forest };

struct FitConfig {
  RegressorKind regressor_kind = RegressorKind::tree;
  int min_split_size = 10;
  int min_leaf_size = 5;
  double min_deviance_fraction = 0.01;
  int max_depth = 31;
  int forest_num_trees = 500;
  int forest_mtry = 0;  // 0 = max(floor(p/3), 1)
  bool forest_bootstrap = true;
  std::uint64_t rng_seed = 0;

  /// Defaults of the R `tree` package.
  static FitConfig tree_defaults();
  /// Defaults of the R `randomForest` package (regression, nodesize 5).
  static FitConfig forest_defaults();

  int resolved_mtry(std::size_t p) const noexcept;
  /// Throws invalid_input when the configuration is inconsistent for p predictors.
  void validate(std::size_t p) const;
};

/// Piecewise-constant CART model. Nodes live in one flat array; the children
/// of an internal node are stored next to each other (right = left + 1).
class RegressionTree {
 public:
  struct Node {
    double value = 0.0;  // split threshold (internal) or leaf constant
    std::int32_t feature = -1;  // -1 marks a leaf
    std::int32_t left = -1;
  };

  RegressionTree() = default;
  RegressionTree(std::size_t p, std::vector<Node> nodes, std::vector<std::int32_t> leaf_counts);

  std::size_t p() const noexcept { return p_; }
  std::size_t num_leaves() const noexcept;
  std::size_t depth() const noexcept { return depth_; }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  /// Number of training rows routed to each node (meaningful for leaves).
  std::span<const std::int32_t> training_counts() const noexcept { return counts_; }

  /// Index of the leaf reached by x. x goes left iff x[feature] < threshold.
  std::size_t leaf_index(std::span<const double> x) const noexcept {
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
      const Node& nd = nodes_[i];
      i = static_cast<std::size_t>(nd.left) + (x[static_cast<std::size_t>(nd.feature)] < nd.value ? 0 : 1);
    }
    return i;
  }

  double predict(std::span<const double> x) const;
  double predict_unchecked(std::span<const double> x) const noexcept {
    return nodes_[leaf_index(x)].value;
  }
  /// out[i] += scale * prediction(row i) over a row-major matrix.
  void accumulate(std::span<const double> rows, std::span<double> out, double scale) const noexcept;

 private:
  // Branch-free walk table: leaves send every row back to themselves.
  struct Hop {
    double threshold;
    std::int32_t feature;
    std::int32_t next;
  };

  std::size_t p_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> counts_;
  std::vector<Hop> hops_;
  std::size_t depth_ = 0;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<RegressionTree> trees, std::vector<std::uint64_t> seeds);

  std::size_t p() const noexcept { return trees_.empty() ? 0 : trees_.front().p(); }
  std::span<const RegressionTree> trees() const noexcept { return trees_; }
  std::span<const std::uint64_t> tree_seeds() const noexcept { return seeds_; }

  double predict(std::span<const double> x) const;
  void accumulate(std::span<const double> rows, std::span<double> out, double scale) const;

 private:
  std::vector<RegressionTree> trees_;
  std::vector<std::uint64_t> seeds_;
};

RegressionTree tree_fit(const ObservationBatch& batch, const FitConfig& config);
double tree_predict(const RegressionTree& tree, std::span<const double> x);

RandomForest forest_fit(const ObservationBatch& batch, const FitConfig& config);
double forest_predict(const RandomForest& forest, std::span<const double> x);

/// A fitted profile model: a single tree or a forest, with its configuration.
class FittedRegressor {
 public:
  FittedRegressor() = default;
  FittedRegressor(RegressionTree tree, FitConfig config);
  FittedRegressor(RandomForest forest, FitConfig config);

  const FitConfig& config() const noexcept { return config_; }
  std::size_t p() const noexcept;
  bool is_forest() const noexcept { return std::holds_alternative<RandomForest>(model_); }
  const RegressionTree& tree() const { return std::get<RegressionTree>(model_); }
  const RandomForest& forest() const { return std::get<RandomForest>(model_); }

  double predict(std::span<const double> x) const;
  /// out[i] += prediction(row i) for every row of a row-major matrix with p columns.
  void accumulate(std::span<const double> rows, std::span<double> out) const;

 private:
  std::variant<RegressionTree, RandomForest> model_;
  FitConfig config_;
};

/// Fits a tree or forest according to config.regressor_kind.
FittedRegressor fit_regressor(const ObservationBatch& batch, const FitConfig& config);

/// Equally weighted mean of every regressor's prediction at x.
double ensemble_mean_predict(std::span<const std::shared_ptr<const FittedRegressor>> history,
                             std::span<const double> x);
/// Ensemble mean prediction for every row of the batch.
std::vector<double> ensemble_mean_predict(
    std::span<const std::shared_ptr<const FittedRegressor>> history, const ObservationBatch& batch);

// --- serialization ---------------------------------------------------------

nlohmann::json to_json(const FitConfig& config);
FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = FitConfig{});

nlohmann::json to_json(const FittedRegressor& regressor);
FittedRegressor regressor_from_json(const nlohmann::json& j);

}  // namespace profmon
