// kgembed: node embeddings for labeled knowledge graphs.
//
//   kgembed embed      --edges e.csv [--nodes n.csv] --output emb.csv [options]
//   kgembed cluster    --edges e.csv [--nodes n.csv] --output clusters.csv
//   kgembed rank       --edges e.csv [--nodes n.csv] --output probs.csv
//   kgembed similarity --embeddings emb.csv (--pairs a:b ... | --query a --top_k k)

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgembed/pipeline.hpp"

namespace {

struct InputArgs {
  std::string nodes;
  std::string edges;
  bool undirected = false;

  kgembed::LoadedGraph load() const {
    std::optional<std::filesystem::path> nodes_path;
    if (!nodes.empty()) nodes_path = nodes;
    return kgembed::load_graph_files(nodes_path, edges, undirected);
  }
};

void add_input_options(CLI::App* cmd, InputArgs& in) {
  cmd->add_option("--edges", in.edges, "edges CSV (src,dst[,weight[,label]])")->required();
  cmd->add_option("--nodes", in.nodes, "nodes CSV (node_id,labels)");
  cmd->add_flag("--undirected", in.undirected, "materialize every edge in both directions");
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ad-hoc node embeddings for labeled knowledge graphs"};
  app.require_subcommand(1);

  InputArgs input;
  kgembed::EmbedConfig cfg;
  std::string output;
  std::string sidecar, history, pairs_output;
  std::vector<std::string> sample_points;
  std::size_t num_samples = 0;
  std::vector<double> initial_weights;

  auto* embed = app.add_subcommand("embed", "run the full pipeline and write embeddings");
  add_input_options(embed, input);
  embed->add_option("--output", output, "embedding CSV")->required();
  embed->add_option("--sidecar", sidecar, "JSON sidecar (default <output>.json)");
  embed->add_option("--history", history, "loss history CSV (default <output>.history.csv)");
  embed->add_option("--pairs_output", pairs_output, "pair similarity CSV (default <output>.pairs.csv)");
  embed->add_option("--max_hops", cfg.max_hops)->capture_default_str();
  embed->add_option("--max_forks_perhop", cfg.max_forks_perhop)->capture_default_str();
  embed->add_option("--max_edges_perfork", cfg.max_edges_perfork)->capture_default_str();
  embed->add_option("--max_num_clusters", cfg.max_num_clusters)->capture_default_str();
  embed->add_option("--num_probability_buckets", cfg.num_probability_buckets)->capture_default_str();
  embed->add_option("--ranking_factor", cfg.ranking_factor)->capture_default_str();
  embed->add_option("--num_samples", num_samples, "training sample size (default min(NV, 256))");
  embed->add_option("--max_epochs", cfg.max_epochs)->capture_default_str();
  embed->add_option("--beta", cfg.beta, "learning rate")->capture_default_str();
  embed->add_option("--alpha", cfg.alpha, "Jaccard share of the ground truth")->capture_default_str();
  embed->add_option("--rel_delta_tol", cfg.rel_delta_tol)->capture_default_str();
  embed->add_option("--seed", cfg.seed)->capture_default_str();
  embed->add_option("--initial_weights", initial_weights, "four initial weights")->expected(4);
  embed->add_option("--sample_points", sample_points, "node pairs a:b to report similarities for");

  auto* cluster = app.add_subcommand("cluster", "recursive spectral bisection cluster indices");
  InputArgs cluster_input;
  std::size_t cluster_count = 8;
  add_input_options(cluster, cluster_input);
  cluster->add_option("--output", output, "cluster CSV")->required();
  cluster->add_option("--max_num_clusters", cluster_count)->capture_default_str();

  auto* rank = app.add_subcommand("rank", "transitional probabilities per node");
  InputArgs rank_input;
  double ranking_factor = 0.15;
  add_input_options(rank, rank_input);
  rank->add_option("--output", output, "probability CSV")->required();
  rank->add_option("--ranking_factor", ranking_factor)->capture_default_str();

  auto* similarity = app.add_subcommand("similarity", "cosine similarity over an embedding CSV");
  std::string embeddings_path, query;
  std::vector<std::string> pairs;
  std::size_t top_k = 10;
  similarity->add_option("--embeddings", embeddings_path, "embedding CSV")->required();
  auto* pairs_opt = similarity->add_option("--pairs", pairs, "node pairs a:b");
  auto* query_opt = similarity->add_option("--query", query, "query node for top-k search");
  similarity->add_option("--top_k", top_k)->capture_default_str();
  similarity->add_option("--output", output, "similarity CSV (default stdout)");
  pairs_opt->excludes(query_opt);

  CLI11_PARSE(app, argc, argv);

  try {
    if (embed->parsed()) {
      cfg.undirected = input.undirected;
      if (num_samples != 0) cfg.num_samples = num_samples;
      if (!initial_weights.empty()) std::copy(initial_weights.begin(), initial_weights.end(), cfg.initial_weights.begin());
      std::vector<std::pair<std::string, std::string>> points;
      for (const auto& s : sample_points) points.push_back(kgembed::parse_pair(s));

      auto paths = kgembed::EmbedPaths::derived_from(output);
      if (!sidecar.empty()) paths.sidecar = sidecar;
      if (!history.empty()) paths.history = history;
      if (!pairs_output.empty()) paths.pairs = pairs_output;
      const auto graph = input.load();
      kgembed::cmd_embed(graph, cfg, paths, points);
    } else if (cluster->parsed()) {
      const auto graph = cluster_input.load();
      std::ostringstream out;
      kgembed::write_clusters(out, graph.graph, kgembed::rsb_partition(graph.graph, cluster_count));
      kgembed::write_file(output, out.str());
    } else if (rank->parsed()) {
      const auto graph = rank_input.load();
      kgembed::RankConfig rc;
      rc.ranking_factor = ranking_factor;
      std::ostringstream out;
      kgembed::write_probabilities(out, graph.graph, kgembed::solve_transitional_probabilities(graph.graph, rc));
      kgembed::write_file(output, out.str());
    } else if (similarity->parsed()) {
      std::ifstream in(embeddings_path);
      if (!in) throw kgembed::IoError("cannot open embeddings file '" + embeddings_path + "'");
      const auto set = kgembed::read_embeddings(in);
      std::ostringstream out;
      if (!query.empty()) {
        kgembed::write_top_k(out, set, query, top_k);
      } else if (!pairs.empty()) {
        std::vector<std::pair<std::string, std::string>> parsed;
        for (const auto& s : pairs) parsed.push_back(kgembed::parse_pair(s));
        kgembed::write_pair_similarities(out, set, parsed);
      } else {
        throw kgembed::ValidationError("similarity needs --pairs or --query");
      }
      if (output.empty()) {
        std::cout << out.str();
      } else {
        kgembed::write_file(output, out.str());
      }
    }
  } catch (const kgembed::Error& e) {
    print_error(e.kind(), e.what());
    return EXIT_FAILURE;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
