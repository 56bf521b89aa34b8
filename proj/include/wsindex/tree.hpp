#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "wsindex/sparse.hpp"

namespace wsindex::tree {

struct TreeParams {
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_leaf = 1;
  /// Features examined per split; 0 means all of them.
  std::size_t max_features = 0;
};

/// Binary CART tree. Internal nodes send x[feature] <= threshold left.
class Tree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    bool positive = false;  // leaf majority, ties negative

    bool operator==(const Node&) const = default;
  };

  Tree() = default;
  explicit Tree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const;

  bool predict(const CsrMatrix& x, std::size_t row) const;

  bool operator==(const Tree&) const = default;

 private:
  std::vector<Node> nodes_;
};

/// Grows a Gini tree on rows weighted by `weights` (bootstrap multiplicities;
/// rows with weight 0 are ignored). `seed` drives per-split feature sampling.
Tree grow_tree(const CsrMatrix& x, std::span<const bool> y, std::span<const std::uint32_t> weights,
               const TreeParams& params, std::uint64_t seed);

struct ForestParams {
  TreeParams tree;
  std::size_t n_trees = 100;
};

/// Bagged trees; tree i uses its own bootstrap sample and generator derived
/// from `seed` and i.
std::vector<Tree> grow_forest(const CsrMatrix& x, std::span<const bool> y,
                              const ForestParams& params, std::uint64_t seed);

/// Strict majority vote; ties are negative.
bool predict_forest(const std::vector<Tree>& trees, const CsrMatrix& x, std::size_t row);

nlohmann::json tree_to_json(const Tree& t);
Tree tree_from_json(const nlohmann::json& j);

}  // namespace wsindex::tree
