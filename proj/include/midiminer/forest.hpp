// One-vs-rest random forest: CART trees with Gini impurity on bootstrap samples.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "midiminer/error.hpp"
#include "midiminer/file_io.hpp"

namespace midiminer {

enum class Role : std::uint8_t { Melody = 0, Bass = 1, Harmony = 2 };

inline constexpr std::array<Role, 3> kRoles{Role::Melody, Role::Bass, Role::Harmony};

inline constexpr std::string_view to_string(Role role) {
  switch (role) {
    case Role::Melody: return "melody";
    case Role::Bass: return "bass";
    case Role::Harmony: return "harmony";
  }
  return "unknown";
}

inline std::optional<Role> parse_role(std::string_view text) {
  for (Role role : kRoles) {
    if (text == to_string(role)) return role;
  }
  return std::nullopt;
}

/// Internal nodes route `x[feature] <= threshold` to `left`. Leaves have
/// feature -1 and carry the positive-class probability.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double probability = 0.0;

  bool operator==(const TreeNode&) const = default;
  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  bool operator==(const DecisionTree&) const = default;

  template <typename Row>
  double predict(const Row& x) const {
    std::uint32_t index = 0;
    while (!nodes[index].is_leaf()) {
      const TreeNode& node = nodes[index];
      index = x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[index].probability;
  }
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  std::uint64_t seed = 42;
  /// Worker threads for training; results do not depend on it.
  int threads = 1;
};

struct ForestModel {
  Role role = Role::Melody;
  std::uint32_t n_features = 0;
  std::uint32_t max_depth = 0;
  std::uint32_t min_leaf = 0;
  std::uint64_t seed = 0;
  double oob_accuracy = 0.0;
  std::vector<DecisionTree> trees;

  bool operator==(const ForestModel&) const = default;
};

namespace detail {

template <typename Row>
class TreeBuilder {
 public:
  TreeBuilder(std::span<const Row> rows, std::span<const int> labels, std::size_t n_features,
              const ForestParams& params, std::mt19937_64& rng)
      : rows_(rows), labels_(labels), n_features_(n_features), params_(params), rng_(rng) {
    mtry_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n_features)))));
    mtry_ = std::min(mtry_, n_features);
    features_.resize(n_features);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  DecisionTree build(std::vector<std::uint32_t> sample) {
    tree_.nodes.clear();
    grow(sample, 0);
    return std::move(tree_);
  }

 private:
  static double gini(double positives, double total) {
    if (total <= 0.0) return 0.0;
    const double p = positives / total;
    return 2.0 * p * (1.0 - p);
  }

  std::uint32_t grow(std::vector<std::uint32_t>& sample, int depth) {
    const auto index = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double positives = 0.0;
    for (std::uint32_t s : sample) positives += labels_[s] != 0 ? 1.0 : 0.0;
    const double total = static_cast<double>(sample.size());
    tree_.nodes[index].probability = positives / total;

    const auto min_leaf = static_cast<std::size_t>(std::max(1, params_.min_leaf));
    if (depth >= params_.max_depth || sample.size() < 2 * min_leaf || positives == 0.0 || positives == total) {
      return index;
    }

    // Partial Fisher-Yates picks mtry distinct candidate features.
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n_features_ - 1);
      std::swap(features_[i], features_[pick(rng_)]);
    }

    const double parent = gini(positives, total);
    double best_impurity = parent - 1e-12;
    std::optional<std::pair<std::size_t, double>> best;
    std::vector<std::pair<double, int>> column(sample.size());
    for (std::size_t c = 0; c < mtry_; ++c) {
      const std::size_t feature = features_[c];
      for (std::size_t i = 0; i < sample.size(); ++i) {
        column[i] = {static_cast<double>(rows_[sample[i]][feature]), labels_[sample[i]] != 0 ? 1 : 0};
      }
      std::sort(column.begin(), column.end());
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_pos += column[i].second;
        if (column[i].first == column[i + 1].first) continue;
        const double left_n = static_cast<double>(i + 1);
        const double right_n = total - left_n;
        if (i + 1 < min_leaf || column.size() - i - 1 < min_leaf) continue;
        const double impurity =
            (left_n * gini(left_pos, left_n) + right_n * gini(positives - left_pos, right_n)) / total;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          double threshold = 0.5 * (column[i].first + column[i + 1].first);
          if (!(threshold < column[i + 1].first)) threshold = column[i].first;
          best = {feature, threshold};
        }
      }
    }
    if (!best) return index;

    std::vector<std::uint32_t> left;
    std::vector<std::uint32_t> right;
    for (std::uint32_t s : sample) {
      (rows_[s][best->first] <= best->second ? left : right).push_back(s);
    }
    sample.clear();
    sample.shrink_to_fit();
    const std::uint32_t left_index = grow(left, depth + 1);
    const std::uint32_t right_index = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[index];
    node.feature = static_cast<std::int32_t>(best->first);
    node.threshold = best->second;
    node.left = left_index;
    node.right = right_index;
    return index;
  }

  std::span<const Row> rows_;
  std::span<const int> labels_;
  std::size_t n_features_;
  const ForestParams& params_;
  std::mt19937_64& rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> features_;
  DecisionTree tree_;
};

}  // namespace detail

/// Trains a binary forest. `labels` are 0/1 per row; each row must expose
/// `n_features` values through operator[]. Tree t draws from its own stream
/// seeded by (seed, t), so the model is independent of the thread count.
template <typename Row>
ForestModel train_binary_forest(std::span<const Row> rows, std::span<const int> labels, std::size_t n_features,
                                Role role, const ForestParams& params) {
  if (rows.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "rows and labels differ in length");
  if (n_features == 0) throw Error(ErrorCode::DimensionMismatch, "no features");
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid forest hyperparameters");
  }
  const auto positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(labels.size())) {
    throw Error(ErrorCode::DegenerateData, "training data for " + std::string(to_string(role)) +
                                               " needs both positive and negative examples");
  }

  ForestModel model;
  model.role = role;
  model.n_features = static_cast<std::uint32_t>(n_features);
  model.max_depth = static_cast<std::uint32_t>(params.max_depth);
  model.min_leaf = static_cast<std::uint32_t>(params.min_leaf);
  model.seed = params.seed;
  model.trees.resize(static_cast<std::size_t>(params.n_trees));
  const std::size_t n = rows.size();
  std::vector<std::vector<std::uint8_t>> in_bag(model.trees.size(), std::vector<std::uint8_t>(n, 0));

  auto train_one = [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(params.seed), static_cast<std::uint32_t>(params.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
    std::vector<std::uint32_t> sample(n);
    for (auto& s : sample) {
      s = draw(rng);
      in_bag[t][s] = 1;
    }
    detail::TreeBuilder<Row> builder(rows, labels, n_features, params, rng);
    model.trees[t] = builder.build(std::move(sample));
  };

  const auto workers = static_cast<std::size_t>(std::max(1, params.threads));
  if (workers == 1) {
    for (std::size_t t = 0; t < model.trees.size(); ++t) train_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < model.trees.size(); t = next++) train_one(t);
      });
    }
  }

  std::size_t scored = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    int votes = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      if (in_bag[t][i]) continue;
      sum += model.trees[t].predict(rows[i]);
      ++votes;
    }
    if (votes == 0) continue;
    ++scored;
    if ((sum / votes > 0.5) == (labels[i] != 0)) ++correct;
  }
  model.oob_accuracy = scored > 0 ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0;
  return model;
}

/// Mean of the per-tree leaf probabilities.
inline double predict(const ForestModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw Error(ErrorCode::DimensionMismatch, "expected " + std::to_string(model.n_features) + " features, got " +
                                                  std::to_string(x.size()));
  }
  if (model.trees.empty()) throw Error(ErrorCode::InvalidArgument, "forest has no trees");
  double sum = 0.0;
  for (const DecisionTree& tree : model.trees) sum += tree.predict(x);
  return sum / static_cast<double>(model.trees.size());
}

// ---------------------------------------------------------------------------
// Model files
//
// Little-endian layout:
//   "MMRF"  u32 version(=1)  u8 role  u32 n_features  u32 max_depth
//   u32 min_leaf  u64 seed  f64 oob_accuracy  u32 n_trees
//   per tree:  u32 n_nodes, then per node:
//     i32 feature  f64 threshold  u32 left  u32 right  f64 probability
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorCode::BadModelFile, "truncated model file");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> save_model(const ForestModel& model) {
  detail::ByteWriter w;
  w.raw("MMRF");
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(model.role));
  w.u32(model.n_features);
  w.u32(model.max_depth);
  w.u32(model.min_leaf);
  w.u64(model.seed);
  w.f64(model.oob_accuracy);
  w.u32(static_cast<std::uint32_t>(model.trees.size()));
  for (const DecisionTree& tree : model.trees) {
    w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
    for (const TreeNode& node : tree.nodes) {
      w.u32(static_cast<std::uint32_t>(node.feature));
      w.f64(node.threshold);
      w.u32(node.left);
      w.u32(node.right);
      w.f64(node.probability);
    }
  }
  return w.take();
}

inline ForestModel load_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), "MMRF", 4) != 0) throw Error(ErrorCode::BadModelFile, "bad magic bytes");
  if (const std::uint32_t version = r.u32(); version != kModelFormatVersion) {
    throw Error(ErrorCode::BadModelFile, "unsupported model version " + std::to_string(version));
  }
  ForestModel model;
  const std::uint8_t role = r.u8();
  if (role > 2) throw Error(ErrorCode::BadModelFile, "unknown role");
  model.role = static_cast<Role>(role);
  model.n_features = r.u32();
  model.max_depth = r.u32();
  model.min_leaf = r.u32();
  model.seed = r.u64();
  model.oob_accuracy = r.f64();
  const std::uint32_t n_trees = r.u32();
  if (n_trees == 0 || n_trees > r.remaining() / 4) throw Error(ErrorCode::BadModelFile, "bad tree count");
  model.trees.resize(n_trees);
  for (DecisionTree& tree : model.trees) {
    const std::uint32_t n_nodes = r.u32();
    if (n_nodes == 0 || n_nodes > r.remaining() / 28) throw Error(ErrorCode::BadModelFile, "bad node count");
    tree.nodes.resize(n_nodes);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
      TreeNode& node = tree.nodes[i];
      node.feature = static_cast<std::int32_t>(r.u32());
      node.threshold = r.f64();
      node.left = r.u32();
      node.right = r.u32();
      node.probability = r.f64();
      if (!(node.probability >= 0.0 && node.probability <= 1.0)) {
        throw Error(ErrorCode::BadModelFile, "leaf probability outside [0, 1]");
      }
      if (node.is_leaf()) continue;
      if (static_cast<std::uint32_t>(node.feature) >= model.n_features) {
        throw Error(ErrorCode::BadModelFile, "split feature out of range");
      }
      // Children always follow their parent, which rules out cycles.
      if (node.left <= i || node.right <= i || node.left >= n_nodes || node.right >= n_nodes) {
        throw Error(ErrorCode::BadModelFile, "bad child index");
      }
    }
  }
  if (r.remaining() != 0) throw Error(ErrorCode::BadModelFile, "trailing bytes after model");
  return model;
}

inline void save_model_file(const ForestModel& model, const std::string& path) {
  write_file_bytes(path, save_model(model));
}

inline ForestModel load_model_file(const std::string& path) { return load_model(read_file_bytes(path)); }

}  // namespace midiminer
