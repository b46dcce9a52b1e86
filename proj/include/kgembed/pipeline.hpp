#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgembed/clustering.hpp"
#include "kgembed/error.hpp"
#include "kgembed/features.hpp"
#include "kgembed/graph.hpp"
#include "kgembed/ranking.hpp"
#include "kgembed/similarity.hpp"
#include "kgembed/training.hpp"

namespace kgembed {

// Every solver option exposed on the command line. Names follow the flag
// spellings; `to_json`/`from_json` give the sidecar representation.
struct EmbedConfig {
  std::size_t max_hops = 3;
  std::size_t max_forks_perhop = 4;
  std::size_t max_edges_perfork = 4;
  std::size_t max_num_clusters = 8;
  std::size_t num_probability_buckets = 10;
  double ranking_factor = 0.15;
  std::optional<std::size_t> num_samples;
  std::size_t max_epochs = 100;
  double beta = 0.05;
  double alpha = 0.5;
  double rel_delta_tol = 1e-3;
  std::uint64_t seed = 1;
  Weights initial_weights{1.0, 1.0, 1.0, 1.0};
  bool undirected = false;

  VectorLayout layout(std::size_t num_labels) const {
    VectorLayout l;
    l.max_hops = max_hops;
    l.max_forks_perhop = max_forks_perhop;
    l.max_edges_perfork = max_edges_perfork;
    l.num_labels = num_labels;
    l.max_num_clusters = max_num_clusters;
    l.num_probability_buckets = num_probability_buckets;
    return l;
  }

  RankConfig rank_config() const {
    RankConfig r;
    r.ranking_factor = ranking_factor;
    r.num_probability_buckets = num_probability_buckets;
    return r;
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.alpha = alpha;
    t.learning_rate = beta;
    t.max_epochs = max_epochs;
    t.rel_delta_tol = rel_delta_tol;
    t.num_samples = num_samples;
    t.rng_seed = seed;
    t.initial_weights = initial_weights;
    return t;
  }

  friend bool operator==(const EmbedConfig&, const EmbedConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EmbedConfig& c) {
  j = nlohmann::json{{"max_hops", c.max_hops},
                     {"max_forks_perhop", c.max_forks_perhop},
                     {"max_edges_perfork", c.max_edges_perfork},
                     {"max_num_clusters", c.max_num_clusters},
                     {"num_probability_buckets", c.num_probability_buckets},
                     {"ranking_factor", c.ranking_factor},
                     {"num_samples", c.num_samples ? nlohmann::json(*c.num_samples) : nlohmann::json(nullptr)},
                     {"max_epochs", c.max_epochs},
                     {"beta", c.beta},
                     {"alpha", c.alpha},
                     {"rel_delta_tol", c.rel_delta_tol},
                     {"seed", c.seed},
                     {"initial_weights", c.initial_weights},
                     {"undirected", c.undirected}};
}

inline void from_json(const nlohmann::json& j, EmbedConfig& c) {
  j.at("max_hops").get_to(c.max_hops);
  j.at("max_forks_perhop").get_to(c.max_forks_perhop);
  j.at("max_edges_perfork").get_to(c.max_edges_perfork);
  j.at("max_num_clusters").get_to(c.max_num_clusters);
  j.at("num_probability_buckets").get_to(c.num_probability_buckets);
  j.at("ranking_factor").get_to(c.ranking_factor);
  const auto& ns = j.at("num_samples");
  c.num_samples = ns.is_null() ? std::nullopt : std::optional<std::size_t>(ns.get<std::size_t>());
  j.at("max_epochs").get_to(c.max_epochs);
  j.at("beta").get_to(c.beta);
  j.at("alpha").get_to(c.alpha);
  j.at("rel_delta_tol").get_to(c.rel_delta_tol);
  j.at("seed").get_to(c.seed);
  j.at("initial_weights").get_to(c.initial_weights);
  j.at("undirected").get_to(c.undirected);
}

struct PipelineResult {
  ClusterAssignment clusters;
  ProbabilityVector probabilities;
  SubFeatureMatrix features;
  WeightVector weights;
  EmbeddingTable embeddings;
};

// load -> cluster -> rank -> features -> train -> embed
inline PipelineResult run_pipeline(const LoadedGraph& input, const EmbedConfig& cfg) {
  const VectorLayout layout = cfg.layout(input.labels.num_labels());
  layout.validate();
  auto clusters = rsb_partition(input.graph, cfg.max_num_clusters);
  auto probs = solve_transitional_probabilities(input.graph, cfg.rank_config());
  auto features = assemble_subfeatures(input.graph, input.labels, clusters, probs, layout);
  auto weights = train_weights(features, input.graph, input.labels, clusters, cfg.train_config());
  auto embeddings = embed_all(features, weights.w);
  return PipelineResult{std::move(clusters), std::move(probs), std::move(features), std::move(weights),
                        std::move(embeddings)};
}

inline nlohmann::json sidecar_json(const LoadedGraph& input, const EmbedConfig& cfg, const PipelineResult& result) {
  const VectorLayout& l = result.features.layout();
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : result.weights.history) {
    history.push_back({{"epoch", h.epoch}, {"mean_loss", h.mean_loss}, {"weights", h.w}});
  }
  return nlohmann::json{
      {"num_nodes", input.graph.num_nodes()},
      {"layout",
       {{"max_hops", l.max_hops},
        {"max_forks_perhop", l.max_forks_perhop},
        {"max_edges_perfork", l.max_edges_perfork},
        {"num_labels", l.num_labels},
        {"max_num_clusters", l.max_num_clusters},
        {"num_probability_buckets", l.num_probability_buckets},
        {"offsets", {l.pattern_offset(), l.label_offset(), l.cluster_offset(), l.probability_offset()}},
        {"total_size", l.total_size()}}},
      {"labels", input.labels.names()},
      {"num_clusters", result.clusters.num_clusters},
      {"weights", result.weights.w},
      {"converged", result.weights.converged},
      {"config", cfg},
      {"loss_history", history}};
}

// `epoch,mean_loss,w0,w1,w2,w3`
inline void write_history(std::ostream& out, const WeightVector& weights) {
  out << "epoch,mean_loss,w0,w1,w2,w3\n";
  for (const auto& h : weights.history) {
    out << h.epoch << ',' << format_real(h.mean_loss);
    for (double w : h.w) out << ',' << format_real(w);
    out << '\n';
  }
}

inline void write_clusters(std::ostream& out, const Graph& graph, const ClusterAssignment& clusters) {
  out << "node_id,cluster_index\n";
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) out << graph.node_id(i) << ',' << clusters.cluster_of[i] << '\n';
}

inline void write_probabilities(std::ostream& out, const Graph& graph, const ProbabilityVector& probs) {
  out << "node_id,probability\n";
  for (NodeIndex i = 0; i < graph.num_nodes(); ++i) out << graph.node_id(i) << ',' << format_real(probs.p[i]) << '\n';
}

// `src,dst,similarity`
inline void write_pair_similarities(std::ostream& out, const EmbeddingSet& set,
                                    const std::vector<std::pair<std::string, std::string>>& pairs) {
  out << "src,dst,similarity\n";
  for (const auto& [a, b] : pairs) out << a << ',' << b << ',' << format_real(set.similarity(a, b)) << '\n';
}

// `query,node_id,similarity`, best first
inline void write_top_k(std::ostream& out, const EmbeddingSet& set, const std::string& query, std::size_t k) {
  out << "query,node_id,similarity\n";
  for (const auto& [id, score] : set.top_k(query, k)) out << query << ',' << id << ',' << format_real(score) << '\n';
}

// Outputs are rendered to memory first, so a failed run writes no partial files.
inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << contents;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

struct EmbedPaths {
  std::filesystem::path embeddings;
  std::filesystem::path sidecar;
  std::filesystem::path history;
  std::filesystem::path pairs;

  static EmbedPaths derived_from(const std::filesystem::path& output) {
    return {output, output.string() + ".json", output.string() + ".history.csv", output.string() + ".pairs.csv"};
  }
};

inline PipelineResult cmd_embed(const LoadedGraph& input, const EmbedConfig& cfg, const EmbedPaths& paths,
                                const std::vector<std::pair<std::string, std::string>>& sample_points = {}) {
  auto result = run_pipeline(input, cfg);
  const EmbeddingSet set(input.graph.node_ids(), result.embeddings);

  std::ostringstream pairs_csv;
  if (!sample_points.empty()) write_pair_similarities(pairs_csv, set, sample_points);
  std::ostringstream emb_csv, hist_csv;
  write_embeddings(emb_csv, input.graph.node_ids(), result.embeddings);
  write_history(hist_csv, result.weights);

  write_file(paths.embeddings, emb_csv.str());
  write_file(paths.sidecar, sidecar_json(input, cfg, result).dump(2) + "\n");
  write_file(paths.history, hist_csv.str());
  if (!sample_points.empty()) write_file(paths.pairs, pairs_csv.str());
  return result;
}

}  // namespace kgembed
