#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgembed/clustering.hpp"
#include "kgembed/error.hpp"
#include "kgembed/features.hpp"
#include "kgembed/graph.hpp"

namespace kgembed {

struct TrainConfig {
  double alpha = 0.5;            // Jaccard share of the ground truth
  double learning_rate = 0.05;   // beta
  std::size_t max_epochs = 100;
  double rel_delta_tol = 1e-3;
  std::optional<std::size_t> num_samples;  // unset: min(NV, 256)
  std::uint64_t rng_seed = 1;
  Weights initial_weights{1.0, 1.0, 1.0, 1.0};

  std::size_t effective_samples(std::size_t num_nodes) const {
    return num_samples.value_or(std::min<std::size_t>(num_nodes, 256));
  }

  void validate(std::size_t num_nodes) const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ValidationError("learning_rate must be positive");
    }
    if (!(rel_delta_tol > 0.0)) throw ValidationError("rel_delta_tol must be positive");
    if (effective_samples(num_nodes) > num_nodes) {
      throw ValidationError("num_samples " + std::to_string(effective_samples(num_nodes)) + " exceeds node count " +
                            std::to_string(num_nodes));
    }
    for (double w : initial_weights) {
      if (!std::isfinite(w)) throw ValidationError("initial weights must be finite");
    }
  }
};

struct HistoryEntry {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  Weights w{};
};

struct WeightVector {
  Weights w{};
  std::vector<HistoryEntry> history;  // entry 0 holds the initial weights
  bool converged = false;             // stopped on rel_delta_tol rather than max_epochs
};

struct SampleSet {
  std::vector<NodeIndex> nodes;  // sorted, unique

  std::size_t size() const noexcept { return nodes.size(); }
  std::size_t nk() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
};

using TruthFn = std::function<double(NodeIndex, NodeIndex)>;

// Jaccard index of the undirected neighbor sets; 1 on the diagonal, 0 when
// both sets are empty.
inline double jaccard(const Graph& graph, NodeIndex i, NodeIndex k) {
  auto a = graph.neighbors_undirected(i);
  auto b = graph.neighbors_undirected(k);
  if (i == k) return 1.0;
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - common;
  return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
}

// g(i,k) = alpha * jac(i,k) + (1 - alpha) * |labels(i) ∩ labels(k)| / L,
// with L the number of distinct node labels in the graph (label term is 0
// when the graph is unlabeled).
class GroundTruth {
 public:
  GroundTruth(const Graph& graph, const LabelRegistry& labels, double alpha)
      : graph_(graph), labels_(labels), alpha_(alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
  }

  double operator()(NodeIndex i, NodeIndex k) const {
    const double label_term =
        labels_.num_labels() == 0
            ? 0.0
            : static_cast<double>(labels_.common_labels(i, k)) / static_cast<double>(labels_.num_labels());
    return alpha_ * jaccard(graph_, i, k) + (1.0 - alpha_) * label_term;
  }

 private:
  const Graph& graph_;
  const LabelRegistry& labels_;
  double alpha_;
};

inline double ground_truth(const Graph& graph, const LabelRegistry& labels, NodeIndex i, NodeIndex k, double alpha) {
  return GroundTruth(graph, labels, alpha)(i, k);
}

// Pairwise block inner products and ground truth over a fixed sample, so the
// loss and its gradient are cheap polynomials in the four weights:
//   <f_a, f_b> = sum_r w_r^2 <s_r^a, s_r^b>
class LossModel {
 public:
  LossModel(const SubFeatureMatrix& sub, const TruthFn& truth, const SampleSet& sample)
      : n_(sample.size()), dots_(n_ * n_), truth_(n_ * n_) {
    if (n_ < 2) throw ValidationError("sample must contain at least two nodes");
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = a + 1; b < n_; ++b) {
        const NodeIndex i = sample.nodes[a];
        const NodeIndex k = sample.nodes[b];
        std::array<double, kNumSubFeatures> c{};
        for (std::size_t r = 0; r < kNumSubFeatures; ++r) c[r] = sub.block_dot(i, k, r);
        dots_[a * n_ + b] = dots_[b * n_ + a] = c;
        truth_[a * n_ + b] = truth(i, k);
        truth_[b * n_ + a] = truth(k, i);
      }
    }
  }

  std::size_t size() const noexcept { return n_; }

  double inner(std::size_t a, std::size_t b, const Weights& w) const {
    const auto& c = dots_[a * n_ + b];
    double s = 0.0;
    for (std::size_t r = 0; r < kNumSubFeatures; ++r) s += w[r] * w[r] * c[r];
    return s;
  }

  // Loss_a = (1/nk) sum_{b != a} (<f_a, f_b> - g(a, b))^2
  double node_loss(std::size_t a, const Weights& w) const {
    double s = 0.0;
    for (std::size_t b = 0; b < n_; ++b) {
      if (b == a) continue;
      const double res = inner(a, b, w) - truth_[a * n_ + b];
      s += res * res;
    }
    return s / static_cast<double>(n_ - 1);
  }

  double mean_loss(const Weights& w) const {
    double s = 0.0;
    for (std::size_t a = 0; a < n_; ++a) s += node_loss(a, w);
    return s / static_cast<double>(n_);
  }

  // d(mean_loss)/dw_j = (1/n) sum_a (1/nk) sum_b 4 (<f_a,f_b> - g) w_j <s_j^a, s_j^b>
  double gradient(const Weights& w, std::size_t j) const {
    if (j >= kNumSubFeatures) throw ValidationError("weight index out of range");
    double s = 0.0;
    for (std::size_t a = 0; a < n_; ++a) {
      double row = 0.0;
      for (std::size_t b = 0; b < n_; ++b) {
        if (b == a) continue;
        const std::size_t ab = a * n_ + b;
        row += (inner(a, b, w) - truth_[ab]) * dots_[ab][j];
      }
      s += row / static_cast<double>(n_ - 1);
    }
    return 4.0 * w[j] * s / static_cast<double>(n_);
  }

 private:
  std::size_t n_;
  std::vector<std::array<double, kNumSubFeatures>> dots_;
  std::vector<double> truth_;
};

inline double node_loss(const SubFeatureMatrix& sub, const Weights& w, const TruthFn& truth, NodeIndex i,
                        const SampleSet& sample) {
  auto it = std::lower_bound(sample.nodes.begin(), sample.nodes.end(), i);
  if (it == sample.nodes.end() || *it != i) throw ValidationError("node is not part of the sample");
  if (sample.nk() == 0) throw ValidationError("sample must contain at least two nodes");
  return LossModel(sub, truth, sample).node_loss(static_cast<std::size_t>(it - sample.nodes.begin()), w);
}

inline double mean_loss(const SubFeatureMatrix& sub, const Weights& w, const TruthFn& truth,
                        const SampleSet& sample) {
  return LossModel(sub, truth, sample).mean_loss(w);
}

inline double loss_gradient(const SubFeatureMatrix& sub, const Weights& w, const TruthFn& truth,
                            const SampleSet& sample, std::size_t j) {
  return LossModel(sub, truth, sample).gradient(w, j);
}

// Draws ceil(num_samples / C) nodes per nonempty cluster without replacement,
// then trims the surplus one node at a time from whichever cluster currently
// holds the most samples (the larger cluster losing out last on ties). If the
// clusters are too small to reach num_samples, the rest is drawn uniformly
// from the unsampled nodes.
inline SampleSet stratified_sample(const ClusterAssignment& clusters, std::size_t num_samples,
                                   std::uint64_t rng_seed) {
  if (num_samples < 2) throw ValidationError("num_samples must be at least 2");
  const std::size_t n = clusters.cluster_of.size();
  if (num_samples > n) {
    throw ValidationError("num_samples " + std::to_string(num_samples) + " exceeds node count " + std::to_string(n));
  }
  SampleSet sample;
  if (num_samples == n) {
    sample.nodes.resize(n);
    std::iota(sample.nodes.begin(), sample.nodes.end(), NodeIndex{0});
    return sample;
  }

  std::size_t num_clusters = clusters.num_clusters;
  for (auto c : clusters.cluster_of) num_clusters = std::max<std::size_t>(num_clusters, c + 1);
  std::vector<std::vector<NodeIndex>> members(num_clusters);
  for (NodeIndex v = 0; v < n; ++v) members[clusters.cluster_of[v]].push_back(v);
  std::erase_if(members, [](const auto& m) { return m.empty(); });

  std::mt19937_64 rng(rng_seed);
  // Moves `take` uniformly chosen elements to the front of `pool`.
  const auto partial_shuffle = [&rng](std::vector<NodeIndex>& pool, std::size_t take) {
    for (std::size_t j = 0; j < take; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng() % (pool.size() - j));
      std::swap(pool[j], pool[pick]);
    }
  };

  const std::size_t per_cluster = (num_samples + members.size() - 1) / members.size();
  std::vector<std::vector<NodeIndex>> chosen(members.size());
  std::size_t total = 0;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto pool = members[c];
    const std::size_t take = std::min(per_cluster, pool.size());
    partial_shuffle(pool, take);
    chosen[c].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    total += take;
  }

  while (total > num_samples) {
    std::size_t victim = 0;
    for (std::size_t c = 1; c < chosen.size(); ++c) {
      if (chosen[c].size() > chosen[victim].size() ||
          (chosen[c].size() == chosen[victim].size() && members[c].size() < members[victim].size())) {
        victim = c;
      }
    }
    chosen[victim].pop_back();
    --total;
  }

  for (const auto& c : chosen) sample.nodes.insert(sample.nodes.end(), c.begin(), c.end());
  if (total < num_samples) {
    std::vector<char> taken(n, 0);
    for (NodeIndex v : sample.nodes) taken[v] = 1;
    std::vector<NodeIndex> rest;
    for (NodeIndex v = 0; v < n; ++v) {
      if (!taken[v]) rest.push_back(v);
    }
    const std::size_t extra = num_samples - total;
    partial_shuffle(rest, extra);
    sample.nodes.insert(sample.nodes.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(extra));
  }
  std::sort(sample.nodes.begin(), sample.nodes.end());
  return sample;
}

// Coordinate-wise gradient descent on the mean sample loss. Within an epoch
// the weights are updated in order 0..3, each step seeing the previous
// updates. Stops once every weight's relative change in an epoch falls below
// rel_delta_tol, or after max_epochs.
inline WeightVector train_weights(const SubFeatureMatrix& sub, const Graph& graph, const LabelRegistry& labels,
                                  const ClusterAssignment& clusters, const TrainConfig& cfg) {
  const std::size_t n = graph.num_nodes();
  cfg.validate(n);
  if (sub.num_nodes() != n) throw ValidationError("sub-feature matrix does not match graph");

  const SampleSet sample = stratified_sample(clusters, cfg.effective_samples(n), cfg.rng_seed);
  const GroundTruth truth(graph, labels, cfg.alpha);
  const LossModel model(sub, std::cref(truth), sample);

  WeightVector result;
  result.w = cfg.initial_weights;
  result.history.push_back({0, model.mean_loss(result.w), result.w});

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const Weights before = result.w;
    for (std::size_t j = 0; j < kNumSubFeatures; ++j) {
      result.w[j] -= cfg.learning_rate * model.gradient(result.w, j);
    }
    const double loss = model.mean_loss(result.w);
    result.history.push_back({epoch, loss, result.w});

    const bool finite = std::all_of(result.w.begin(), result.w.end(), [](double x) { return std::isfinite(x); });
    if (!finite || !std::isfinite(loss) || loss > 1e12) {
      std::string msg = "training diverged at epoch " + std::to_string(epoch) + ", weights (";
      for (std::size_t j = 0; j < kNumSubFeatures; ++j) {
        msg += (j ? ", " : "") + std::to_string(result.w[j]);
      }
      throw TrainingError(msg + ")");
    }

    double rel = 0.0;
    for (std::size_t j = 0; j < kNumSubFeatures; ++j) {
      rel = std::max(rel, std::abs(result.w[j] - before[j]) / std::max(std::abs(before[j]), 1e-12));
    }
    if (rel < cfg.rel_delta_tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace kgembed
