#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "kgembed/clustering.hpp"
#include "kgembed/error.hpp"
#include "kgembed/graph.hpp"
#include "kgembed/ranking.hpp"

namespace kgembed {

inline constexpr std::size_t kNumSubFeatures = 4;

// Block order inside every embedding vector.
enum class SubFeature : std::size_t { kHopPattern = 0, kLabels = 1, kCluster = 2, kProbability = 3 };

using Weights = std::array<double, kNumSubFeatures>;

// Flattened index space: hop patterns, then labels, clusters and probability
// buckets, each block contiguous.
struct VectorLayout {
  std::size_t max_hops = 3;
  std::size_t max_forks_perhop = 4;
  std::size_t max_edges_perfork = 4;
  std::size_t num_labels = 0;
  std::size_t max_num_clusters = 8;
  std::size_t num_probability_buckets = 10;

  std::size_t max_patterns() const noexcept { return max_hops * max_forks_perhop * max_edges_perfork; }

  std::size_t pattern_offset() const noexcept { return 0; }
  std::size_t label_offset() const noexcept { return max_patterns(); }
  std::size_t cluster_offset() const noexcept { return label_offset() + num_labels; }
  std::size_t probability_offset() const noexcept { return cluster_offset() + max_num_clusters; }
  std::size_t total_size() const noexcept { return probability_offset() + num_probability_buckets; }

  std::size_t block_begin(std::size_t r) const {
    switch (r) {
      case 0: return pattern_offset();
      case 1: return label_offset();
      case 2: return cluster_offset();
      case 3: return probability_offset();
      default: throw ValidationError("sub-feature index out of range");
    }
  }
  std::size_t block_end(std::size_t r) const {
    return r + 1 < kNumSubFeatures ? block_begin(r + 1) : total_size();
  }

  // num_labels may be zero (unlabeled graph); every other count must be >= 1.
  void validate() const {
    if (max_hops < 1 || max_forks_perhop < 1 || max_edges_perfork < 1) {
      throw ValidationError("max_hops, max_forks_perhop and max_edges_perfork must be >= 1");
    }
    if (max_num_clusters < 1) throw ValidationError("max_num_clusters must be >= 1");
    if (num_probability_buckets < 1) throw ValidationError("num_probability_buckets must be >= 1");
  }

  friend bool operator==(const VectorLayout&, const VectorLayout&) = default;
};

inline std::size_t vector_size(const VectorLayout& layout) {
  return layout.max_hops * layout.max_forks_perhop * layout.max_edges_perfork + layout.num_labels +
         layout.max_num_clusters + layout.num_probability_buckets;
}

struct SparseEntry {
  std::uint32_t index = 0;  // absolute position in the flattened vector
  double value = 0.0;

  friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

using SparseBlock = std::vector<SparseEntry>;  // sorted by index

inline double sparse_dot(const SparseBlock& a, const SparseBlock& b) {
  double s = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->index < ib->index) {
      ++ia;
    } else if (ib->index < ia->index) {
      ++ib;
    } else {
      s += ia->value * ib->value;
      ++ia;
      ++ib;
    }
  }
  return s;
}

inline double squared_norm(const SparseBlock& a) {
  double s = 0.0;
  for (const auto& e : a) s += e.value * e.value;
  return s;
}

// Per-node sub-feature blocks s_r. After assembly every block is either empty
// or unit length.
class SubFeatureMatrix {
 public:
  SubFeatureMatrix(VectorLayout layout, std::vector<std::array<SparseBlock, kNumSubFeatures>> blocks)
      : layout_(layout), blocks_(std::move(blocks)) {}

  const VectorLayout& layout() const noexcept { return layout_; }
  std::size_t num_nodes() const noexcept { return blocks_.size(); }

  const SparseBlock& block(NodeIndex i, std::size_t r) const { return blocks_.at(i).at(r); }

  // <s_r^i, s_r^k>
  double block_dot(NodeIndex i, NodeIndex k, std::size_t r) const { return sparse_dot(block(i, r), block(k, r)); }

  friend bool operator==(const SubFeatureMatrix&, const SubFeatureMatrix&) = default;

 private:
  VectorLayout layout_;
  std::vector<std::array<SparseBlock, kNumSubFeatures>> blocks_;
};

// Breadth-first hop pattern over the symmetrized graph. At hop h every
// frontier node that reaches unvisited nodes is a fork whose arm size is the
// number of nodes it reaches first; frontier nodes are scanned in index order.
// Forks are ranked by arm size (largest first, then smaller contributing
// index) and the top max_forks_perhop are one-hot encoded at
// k + ((h-1)*forks + rank)*edges + (min(arm, edges) - 1).
inline SparseBlock hop_pattern_block(const Graph& graph, NodeIndex i, const VectorLayout& layout) {
  layout.validate();
  struct Fork {
    NodeIndex node;
    std::size_t arm;
  };
  SparseBlock block;
  std::unordered_set<NodeIndex> seen{i};
  std::vector<NodeIndex> frontier{i};

  for (std::size_t hop = 1; hop <= layout.max_hops && !frontier.empty(); ++hop) {
    std::vector<Fork> forks;
    std::vector<NodeIndex> next;
    for (NodeIndex u : frontier) {
      std::size_t arm = 0;
      for (NodeIndex v : graph.neighbors_undirected(u)) {
        if (!seen.insert(v).second) continue;
        next.push_back(v);
        ++arm;
      }
      if (arm > 0) forks.push_back({u, arm});
    }
    std::stable_sort(forks.begin(), forks.end(), [](const Fork& a, const Fork& b) {
      if (a.arm != b.arm) return a.arm > b.arm;
      return a.node < b.node;
    });
    const std::size_t kept = std::min(forks.size(), layout.max_forks_perhop);
    for (std::size_t rank = 0; rank < kept; ++rank) {
      const std::size_t arm = std::min(forks[rank].arm, layout.max_edges_perfork);
      const std::size_t idx = layout.pattern_offset() +
                              ((hop - 1) * layout.max_forks_perhop + rank) * layout.max_edges_perfork + (arm - 1);
      block.push_back({static_cast<std::uint32_t>(idx), 1.0});
    }
    std::sort(next.begin(), next.end());
    frontier.swap(next);
  }
  std::sort(block.begin(), block.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  return block;
}

namespace detail {

inline void normalize_block(SparseBlock& block) {
  const double norm = std::sqrt(squared_norm(block));
  if (!(norm > 0.0)) return;
  for (auto& e : block) e.value /= norm;
}

}  // namespace detail

inline SubFeatureMatrix assemble_subfeatures(const Graph& graph, const LabelRegistry& labels,
                                             const ClusterAssignment& clusters, const ProbabilityVector& probs,
                                             const VectorLayout& layout) {
  layout.validate();
  const std::size_t n = graph.num_nodes();
  if (labels.num_nodes() != n || clusters.cluster_of.size() != n || probs.p.size() != n) {
    throw ValidationError("sub-feature inputs disagree on node count");
  }
  if (labels.num_labels() != layout.num_labels) {
    throw ValidationError("layout num_labels " + std::to_string(layout.num_labels) + " does not match " +
                          std::to_string(labels.num_labels()) + " registered labels");
  }
  if (clusters.num_clusters > layout.max_num_clusters) {
    throw ValidationError("cluster count " + std::to_string(clusters.num_clusters) + " exceeds max_num_clusters " +
                          std::to_string(layout.max_num_clusters));
  }
  const auto scaled = min_max_scale(probs.p);

  std::vector<std::array<SparseBlock, kNumSubFeatures>> blocks(n);
  for (NodeIndex i = 0; i < n; ++i) {
    auto& node = blocks[i];
    node[0] = hop_pattern_block(graph, i, layout);

    for (LabelIndex l : labels.labels_of(i)) {
      node[1].push_back({static_cast<std::uint32_t>(layout.label_offset() + l), 1.0});
    }

    const std::uint32_t cluster = clusters.cluster_of[i];
    if (cluster >= layout.max_num_clusters) {
      throw ValidationError("cluster index " + std::to_string(cluster) + " outside layout");
    }
    node[2].push_back({static_cast<std::uint32_t>(layout.cluster_offset() + cluster), 1.0});

    const std::size_t bucket = probability_bucket(scaled[i], layout.num_probability_buckets);
    node[3].push_back({static_cast<std::uint32_t>(layout.probability_offset() + bucket), 1.0});

    for (auto& b : node) detail::normalize_block(b);
  }
  return SubFeatureMatrix(layout, std::move(blocks));
}

// Dense per-node unit vectors; rows with no nonzero feature stay zero.
class EmbeddingTable {
 public:
  EmbeddingTable(std::size_t num_nodes, std::size_t dim) : dim_(dim), data_(num_nodes * dim, 0.0) {}

  std::size_t num_nodes() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

 private:
  std::size_t dim_;
  std::vector<double> data_;
};

inline void validate_weights(const Weights& w) {
  bool any_nonzero = false;
  for (double x : w) {
    if (!std::isfinite(x)) throw ValidationError("weights must be finite");
    any_nonzero = any_nonzero || x != 0.0;
  }
  if (!any_nonzero) throw ValidationError("at least one weight must be nonzero");
}

// f_i = normalize(w_0 s_0 | w_1 s_1 | w_2 s_2 | w_3 s_3)
inline EmbeddingTable embed_all(const SubFeatureMatrix& sub, const Weights& w) {
  validate_weights(w);
  const std::size_t n = sub.num_nodes();
  EmbeddingTable table(n, sub.layout().total_size());
  for (NodeIndex i = 0; i < n; ++i) {
    auto row = table.row(i);
    double norm2 = 0.0;
    for (std::size_t r = 0; r < kNumSubFeatures; ++r) {
      for (const auto& e : sub.block(i, r)) {
        const double v = w[r] * e.value;
        row[e.index] = v;
        norm2 += v * v;
      }
    }
    if (norm2 > 0.0) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& v : row) v *= inv;
    }
  }
  return table;
}

}  // namespace kgembed
