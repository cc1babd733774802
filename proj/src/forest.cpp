#include "poselift/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>

#include "poselift/csv.hpp"
#include "poselift/error.hpp"
#include "poselift/parallel.hpp"
#include "poselift/random.hpp"

namespace poselift {

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(int)> rec = [&](int i) -> std::size_t {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.feature < 0) return 0;
    return 1 + std::max(rec(n.left), rec(n.right));
  };
  return nodes.empty() ? 0 : rec(0);
}

double ForestModel::predict_proba(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (static_cast<std::size_t>(x.size()) != n_features)
    throw ArgumentError("feature length " + std::to_string(x.size()) + " does not match the model's " +
                        std::to_string(n_features));
  double sum = 0;
  for (const auto& t : trees) sum += t.predict(x);
  return trees.empty() ? 0.0 : sum / double(trees.size());
}

Eigen::VectorXd ForestModel::predict_proba_rows(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (static_cast<std::size_t>(X.cols()) != n_features)
    throw ArgumentError("feature length " + std::to_string(X.cols()) + " does not match the model's " +
                        std::to_string(n_features));
  Eigen::VectorXd out(X.rows());
  Eigen::VectorXd row(X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    row = X.row(r).transpose();
    double sum = 0;
    for (const auto& t : trees) sum += t.predict(row);
    out[r] = trees.empty() ? 0.0 : sum / double(trees.size());
  }
  return out;
}

namespace {

double gini(double n1, double n) {
  if (n <= 0) return 0;
  const double p = n1 / n;
  return 2 * p * (1 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const int> y, const ForestOptions& opt,
              int max_features, std::uint64_t seed)
      : X_(X), y_(y), opt_(opt), max_features_(max_features), rng_(seed) {}

  DecisionTree build() {
    const auto n = static_cast<std::size_t>(X_.rows());
    std::vector<int> sample(n);
    for (auto& s : sample) s = static_cast<int>(uniform_index(rng_, n));
    std::sort(sample.begin(), sample.end());
    features_.resize(static_cast<std::size_t>(X_.cols()));
    std::iota(features_.begin(), features_.end(), 0);

    DecisionTree tree;
    struct Pending {
      int node;
      std::vector<int> rows;
      int depth;
    };
    std::vector<Pending> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, std::move(sample), 0});
    while (!stack.empty()) {
      Pending job = std::move(stack.back());
      stack.pop_back();
      const auto& rows = job.rows;
      double n1 = 0;
      for (int r : rows) n1 += y_[static_cast<std::size_t>(r)];
      const double count = double(rows.size());
      tree.nodes[static_cast<std::size_t>(job.node)].p1 = n1 / count;

      const bool pure = n1 == 0 || n1 == count;
      const bool too_small = rows.size() < 2 * static_cast<std::size_t>(opt_.min_samples_leaf);
      const bool too_deep = opt_.max_depth > 0 && job.depth >= opt_.max_depth;
      if (pure || too_small || too_deep) continue;

      const auto split = best_split(rows, n1);
      if (!split) continue;
      std::vector<int> left, right;
      for (int r : rows) (X_(r, split->feature) <= split->threshold ? left : right).push_back(r);

      const int left_id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.feature = split->feature;
      node.threshold = split->threshold;
      node.left = left_id;
      node.right = left_id + 1;
      stack.push_back({left_id + 1, std::move(right), job.depth + 1});
      stack.push_back({left_id, std::move(left), job.depth + 1});
    }
    return tree;
  }

 private:
  struct Split {
    int feature;
    double threshold;
  };

  std::optional<Split> best_split(const std::vector<int>& rows, double n1) {
    const double n = double(rows.size());
    const double parent = gini(n1, n) * n;
    const auto min_leaf = static_cast<std::size_t>(opt_.min_samples_leaf);
    std::optional<Split> best;
    double best_impurity = parent - 1e-12;

    // Visit features in random order until max_features non-constant ones
    // have been evaluated.
    int evaluated = 0;
    std::size_t remaining = features_.size();
    std::vector<std::pair<double, int>> values(rows.size());
    while (remaining > 0 && evaluated < max_features_) {
      const auto pick = uniform_index(rng_, remaining);
      std::swap(features_[pick], features_[remaining - 1]);
      const int f = features_[--remaining];

      for (std::size_t i = 0; i < rows.size(); ++i)
        values[i] = {X_(rows[i], f), y_[static_cast<std::size_t>(rows[i])]};
      std::sort(values.begin(), values.end());
      if (values.front().first == values.back().first) continue;
      ++evaluated;

      double left1 = 0;
      for (std::size_t i = 1; i < values.size(); ++i) {
        left1 += values[i - 1].second;
        if (values[i - 1].first == values[i].first) continue;
        if (i < min_leaf || values.size() - i < min_leaf) continue;
        const double nl = double(i), nr = n - nl;
        const double impurity = gini(left1, nl) * nl + gini(n1 - left1, nr) * nr;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          double t = 0.5 * (values[i - 1].first + values[i].first);
          if (!(t < values[i].first)) t = values[i - 1].first;
          best = Split{f, t};
        }
      }
    }
    return best;
  }

  const Eigen::Ref<const Eigen::MatrixXd>& X_;
  std::span<const int> y_;
  const ForestOptions& opt_;
  int max_features_;
  Rng rng_;
  std::vector<int> features_;
};

}  // namespace

ForestModel train_forest(const Eigen::Ref<const Eigen::MatrixXd>& X, std::span<const int> labels,
                         const ForestOptions& options, std::string behavior) {
  if (static_cast<std::size_t>(X.rows()) != labels.size()) throw ArgumentError("one label per row is required");
  if (X.rows() == 0 || X.cols() == 0) throw ArgumentError("empty training set");
  if (options.n_trees < 1) throw ArgumentError("n_trees must be positive");
  if (options.min_samples_leaf < 1) throw ArgumentError("min_samples_leaf must be positive");
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ArgumentError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  if (positives == 0 || positives == labels.size())
    throw ArgumentError("training set contains a single class");
  if (!X.allFinite()) throw NumericError("training features contain non-finite values");

  const int max_features = options.max_features > 0
                               ? std::min<int>(options.max_features, static_cast<int>(X.cols()))
                               : std::max(1, static_cast<int>(std::floor(std::sqrt(double(X.cols())))));
  ForestModel model;
  model.behavior = std::move(behavior);
  model.n_features = static_cast<std::size_t>(X.cols());
  model.options = options;
  model.options.max_features = max_features;
  model.trees.resize(static_cast<std::size_t>(options.n_trees));
  parallel_for(model.trees.size(), options.threads, [&](std::size_t t) {
    TreeBuilder builder(X, labels, model.options, max_features, derive_seed(options.seed, std::uint64_t{t}));
    model.trees[t] = builder.build();
  });
  return model;
}

namespace {

nlohmann::json node_to_json(const DecisionTree& tree, int i) {
  const auto& n = tree.nodes[static_cast<std::size_t>(i)];
  if (n.feature < 0) return {{"p1", n.p1}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"p1", n.p1},
          {"left", node_to_json(tree, n.left)},
          {"right", node_to_json(tree, n.right)}};
}

int node_from_json(const nlohmann::json& j, DecisionTree& tree, std::size_t n_features) {
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  TreeNode node;
  node.p1 = j.at("p1").get<double>();
  if (node.p1 < 0 || node.p1 > 1) throw ConfigError("leaf probability outside [0, 1]");
  if (j.contains("feature")) {
    node.feature = j.at("feature").get<int>();
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= n_features)
      throw ConfigError("split feature index out of range");
    node.threshold = j.at("threshold").get<double>();
    node.left = node_from_json(j.at("left"), tree, n_features);
    node.right = node_from_json(j.at("right"), tree, n_features);
  }
  tree.nodes[static_cast<std::size_t>(id)] = node;
  return id;
}

}  // namespace

nlohmann::json forest_to_json(const ForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : model.trees) trees.push_back(node_to_json(t, 0));
  return {{"format", "poselift-random-forest"},
          {"version", 1},
          {"behavior", model.behavior},
          {"n_features", model.n_features},
          {"n_trees", model.options.n_trees},
          {"max_features", model.options.max_features},
          {"min_samples_leaf", model.options.min_samples_leaf},
          {"max_depth", model.options.max_depth},
          {"seed", model.options.seed},
          {"trees", trees}};
}

ForestModel forest_from_json(const nlohmann::json& doc, const std::string& source) {
  ForestModel model;
  try {
    if (doc.at("format").get<std::string>() != "poselift-random-forest" || doc.at("version").get<int>() != 1)
      throw ParseError(source, 0, "not a version-1 random forest document");
    model.behavior = doc.at("behavior").get<std::string>();
    model.n_features = doc.at("n_features").get<std::size_t>();
    model.options.n_trees = doc.at("n_trees").get<int>();
    model.options.max_features = doc.at("max_features").get<int>();
    model.options.min_samples_leaf = doc.at("min_samples_leaf").get<int>();
    model.options.max_depth = doc.at("max_depth").get<int>();
    model.options.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& jt : doc.at("trees")) {
      DecisionTree tree;
      node_from_json(jt, tree, model.n_features);
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
  if (model.trees.size() != static_cast<std::size_t>(model.options.n_trees))
    throw ParseError(source, 0, "tree count does not match n_trees");
  return model;
}

void save_forest(const ForestModel& model, const std::filesystem::path& path) {
  write_text(path, forest_to_json(model).dump() + "\n");
}

ForestModel load_forest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw StateError("no trained model at '" + path.string() + "'");
  return forest_from_json(read_json(path), path.string());
}

}  // namespace poselift
