#include "wsindex/tree.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "wsindex/error.hpp"
#include "wsindex/rng.hpp"

namespace wsindex::tree {

namespace {

struct Counts {
  double pos = 0.0;
  double neg = 0.0;
  double total() const { return pos + neg; }
};

// n * gini(n) = n - (pos^2 + neg^2) / n
double weighted_gini(const Counts& c) {
  const double n = c.total();
  return n > 0 ? n - (c.pos * c.pos + c.neg * c.neg) / n : 0.0;
}

struct Split {
  bool found = false;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Entry {
  std::uint32_t feature;
  double value;
  std::uint32_t weight;
  bool label;
};

class Grower {
 public:
  Grower(const CsrMatrix& x, std::span<const bool> y, std::span<const std::uint32_t> w,
         const TreeParams& p, std::uint64_t seed)
      : x_(x), y_(y), w_(w), p_(p), rng_(seed) {}

  Tree run() {
    std::vector<std::size_t> all;
    for (std::size_t r = 0; r < x_.rows(); ++r) {
      if (w_[r] > 0) all.push_back(r);
    }
    struct Pending {
      std::vector<std::size_t> rows;
      std::int32_t node;
      std::size_t depth;
    };
    nodes_.emplace_back();
    std::vector<Pending> stack;
    stack.push_back({std::move(all), 0, 0});
    while (!stack.empty()) {
      Pending cur = std::move(stack.back());
      stack.pop_back();
      const Counts c = count(cur.rows);
      nodes_[cur.node].positive = c.pos > c.neg;
      const bool depth_ok = !p_.max_depth || cur.depth < *p_.max_depth;
      if (!depth_ok || c.pos == 0 || c.neg == 0 ||
          c.total() < 2.0 * static_cast<double>(p_.min_leaf)) {
        continue;
      }
      const Split s = best_split(cur.rows, c);
      if (!s.found) continue;
      std::vector<std::size_t> left, right;
      for (auto r : cur.rows) {
        (x_.at(r, s.feature) <= s.threshold ? left : right).push_back(r);
      }
      const auto li = static_cast<std::int32_t>(nodes_.size());
      nodes_.emplace_back();
      nodes_.emplace_back();
      nodes_[cur.node].feature = static_cast<std::int32_t>(s.feature);
      nodes_[cur.node].threshold = s.threshold;
      nodes_[cur.node].left = li;
      nodes_[cur.node].right = li + 1;
      // right pushed first so the left subtree is expanded first
      stack.push_back({std::move(right), li + 1, cur.depth + 1});
      stack.push_back({std::move(left), li, cur.depth + 1});
    }
    return Tree(std::move(nodes_));
  }

 private:
  Counts count(const std::vector<std::size_t>& rows) const {
    Counts c;
    for (auto r : rows) (y_[r] ? c.pos : c.neg) += w_[r];
    return c;
  }

  // Candidate features are those with a nonzero value somewhere in the node;
  // all others are constant zero there and cannot split it.
  Split best_split(const std::vector<std::size_t>& rows, const Counts& parent) {
    std::vector<Entry> entries;
    for (auto r : rows) {
      const auto idx = x_.row_indices(r);
      const auto val = x_.row_values(r);
      for (std::size_t k = 0; k < idx.size(); ++k) entries.push_back({idx[k], val[k], w_[r], y_[r]});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.feature != b.feature ? a.feature < b.feature : a.value < b.value;
    });
    // [begin, end) ranges per feature
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < entries.size();) {
      std::size_t j = i;
      while (j < entries.size() && entries[j].feature == entries[i].feature) ++j;
      groups.emplace_back(i, j);
      i = j;
    }
    const std::size_t m = p_.max_features == 0 ? groups.size() : p_.max_features;
    if (m < groups.size()) rng_.shuffle(std::span(groups));

    Split best;
    const double parent_impurity = weighted_gini(parent);
    // Keep drawing batches of m features until one yields a valid split.
    for (std::size_t start = 0; start < groups.size() && !best.found; start += m) {
      const std::size_t stop = std::min(groups.size(), start + m);
      std::vector<std::pair<std::size_t, std::size_t>> batch(groups.begin() + start,
                                                             groups.begin() + stop);
      std::sort(batch.begin(), batch.end());  // feature order for deterministic ties
      for (auto [b, e] : batch) evaluate(entries, b, e, parent, parent_impurity, best);
    }
    return best;
  }

  void evaluate(const std::vector<Entry>& entries, std::size_t b, std::size_t e,
                const Counts& parent, double parent_impurity, Split& best) const {
    // Distinct values in ascending order with their class weights; the rows
    // absent from the feature's entries hold zero.
    std::vector<std::pair<double, Counts>> levels;
    Counts nonzero;
    for (std::size_t i = b; i < e; ++i) {
      if (levels.empty() || levels.back().first != entries[i].value) levels.push_back({entries[i].value, {}});
      (entries[i].label ? levels.back().second.pos : levels.back().second.neg) += entries[i].weight;
      (entries[i].label ? nonzero.pos : nonzero.neg) += entries[i].weight;
    }
    const Counts zeros{parent.pos - nonzero.pos, parent.neg - nonzero.neg};
    if (zeros.total() > 0) {
      auto it = std::lower_bound(levels.begin(), levels.end(), 0.0,
                                 [](const auto& l, double v) { return l.first < v; });
      levels.insert(it, {0.0, zeros});
    }
    const double min_leaf = static_cast<double>(p_.min_leaf);
    Counts left;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      left.pos += levels[i].second.pos;
      left.neg += levels[i].second.neg;
      const Counts right{parent.pos - left.pos, parent.neg - left.neg};
      if (left.total() < min_leaf || right.total() < min_leaf) continue;
      const double gain = parent_impurity - weighted_gini(left) - weighted_gini(right);
      if (gain > 1e-12 && (!best.found || gain > best.gain + 1e-12)) {
        best.found = true;
        best.gain = gain;
        best.feature = entries[b].feature;
        best.threshold = 0.5 * (levels[i].first + levels[i + 1].first);
        // guard against the midpoint rounding onto the upper value
        if (!(best.threshold < levels[i + 1].first)) best.threshold = levels[i].first;
      }
    }
  }

  const CsrMatrix& x_;
  std::span<const bool> y_;
  std::span<const std::uint32_t> w_;
  TreeParams p_;
  Rng rng_;
  std::vector<Tree::Node> nodes_;
};

}  // namespace

std::size_t Tree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[nodes_[i].left] = d[i] + 1;
      d[nodes_[i].right] = d[i] + 1;
    }
  }
  return best;
}

bool Tree::predict(const CsrMatrix& x, std::size_t row) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x.at(row, static_cast<std::size_t>(n.feature)) <= n.threshold
                                     ? n.left
                                     : n.right);
  }
  return nodes_[i].positive;
}

Tree grow_tree(const CsrMatrix& x, std::span<const bool> y, std::span<const std::uint32_t> weights,
               const TreeParams& params, std::uint64_t seed) {
  if (y.size() != x.rows() || weights.size() != x.rows()) {
    throw Error("grow_tree: label/weight count does not match matrix rows");
  }
  if (params.min_leaf == 0) throw ValidationError("min-leaf", "min_leaf must be at least 1");
  return Grower(x, y, weights, params, seed).run();
}

std::vector<Tree> grow_forest(const CsrMatrix& x, std::span<const bool> y,
                              const ForestParams& params, std::uint64_t seed) {
  if (params.n_trees == 0) throw ValidationError("n-trees", "n_trees must be at least 1");
  std::vector<Tree> trees;
  trees.reserve(params.n_trees);
  const std::size_t n = x.rows();
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(seed, "bootstrap-" + std::to_string(t)));
    std::vector<std::uint32_t> w(n, 0);
    for (std::size_t i = 0; i < n; ++i) ++w[rng.below(n)];
    trees.push_back(grow_tree(x, y, w, params.tree, derive_seed(seed, "split-" + std::to_string(t))));
  }
  return trees;
}

bool predict_forest(const std::vector<Tree>& trees, const CsrMatrix& x, std::size_t row) {
  std::size_t votes = 0;
  for (const auto& t : trees) votes += t.predict(x, row) ? 1 : 0;
  return 2 * votes > trees.size();
}

nlohmann::json tree_to_json(const Tree& t) {
  nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                 left = nlohmann::json::array(), right = nlohmann::json::array(),
                 positive = nlohmann::json::array();
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    positive.push_back(n.positive ? 1 : 0);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right},
          {"positive", positive}};
}

Tree tree_from_json(const nlohmann::json& j) {
  const auto& f = j.at("feature");
  const std::size_t n = f.size();
  if (j.at("threshold").size() != n || j.at("left").size() != n || j.at("right").size() != n ||
      j.at("positive").size() != n || n == 0) {
    throw ValidationError("tree-schema", "tree arrays have inconsistent lengths");
  }
  std::vector<Tree::Node> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& node = nodes[i];
    node.feature = f[i].get<std::int32_t>();
    node.threshold = j["threshold"][i].get<double>();
    node.left = j["left"][i].get<std::int32_t>();
    node.right = j["right"][i].get<std::int32_t>();
    node.positive = j["positive"][i].get<int>() != 0;
    if (node.feature >= 0) {
      const auto ok = [&](std::int32_t c) {
        return c > static_cast<std::int32_t>(i) && c < static_cast<std::int32_t>(n);
      };
      if (!ok(node.left) || !ok(node.right)) {
        throw ValidationError("tree-schema", "child index out of range at node " + std::to_string(i));
      }
    }
  }
  return Tree(std::move(nodes));
}

}  // namespace wsindex::tree
