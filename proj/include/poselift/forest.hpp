#pragma once

// Binary random forest: bootstrap CART trees with Gini splits over a random
// feature subset per node. Class-1 probability is the mean of the leaf
// frequencies across trees.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace poselift {

struct ForestOptions {
  int n_trees = 100;
  int max_features = 0;  // 0: floor(sqrt(feature count))
  int min_samples_leaf = 2;
  int max_depth = 0;  // 0: unlimited
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double p1 = 0;  // class-1 frequency of the training samples in this node
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  template <typename Row>
  double predict(const Row& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].p1;
  }
  std::size_t depth() const;
};

struct ForestModel {
  std::string behavior;
  std::size_t n_features = 0;
  ForestOptions options;
  std::vector<DecisionTree> trees;

  /// Class-1 probability for one feature row.
  double predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Class-1 probability for every row of X.
  Eigen::VectorXd predict_proba_rows(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
};

/// Trains on the rows of X with labels in {0, 1}. Tree t draws its bootstrap
/// and feature choices from a seed derived from (options.seed, t), so results
/// do not depend on the thread count. Throws ArgumentError when only one class
/// is present or shapes disagree.
ForestModel train_forest(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const int> labels,
                         const ForestOptions& options, std::string behavior = {});

nlohmann::json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc, const std::string& source = "model");
void save_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

}  // namespace poselift
