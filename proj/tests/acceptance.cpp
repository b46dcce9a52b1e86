// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kgembed/pipeline.hpp"
#include "test_util.hpp"

using namespace kgembed;
namespace kt = kgembed::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("kgembed_accept_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Graph> random_digraphs() {
  std::mt19937_64 rng(2024);
  std::vector<Graph> out;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<std::size_t> size(2, 20);
    std::uniform_real_distribution<double> density(0.05, 0.5);
    const std::size_t n = size(rng);
    out.push_back(kt::random_digraph(rng, n, density(rng)));
  }
  return out;
}

// Eight 6-cliques chained into a path; labels name the clique and its parity.
LoadedGraph path_of_clusters() {
  const std::size_t k = 8, m = 6;
  std::vector<kt::EdgeSpec> e;
  std::vector<std::vector<std::string>> labels(k * m);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t a = 0; a < m; ++a) {
      const auto u = static_cast<NodeIndex>(c * m + a);
      labels[u] = {"clique" + std::to_string(c), c % 2 ? "odd" : "even"};
      for (std::size_t b = a + 1; b < m; ++b) e.emplace_back(u, static_cast<NodeIndex>(c * m + b), 1.0);
    }
    if (c + 1 < k) e.emplace_back(static_cast<NodeIndex>(c * m + m - 1), static_cast<NodeIndex>((c + 1) * m), 1.0);
  }
  return {kt::make_graph(k * m, e, true), LabelRegistry(labels)};
}

// Five stars of ten nodes, no edges between stars.
LoadedGraph star_forest() {
  const std::size_t stars = 5, size = 10;
  std::vector<kt::EdgeSpec> e;
  std::vector<std::vector<std::string>> labels(stars * size);
  for (std::size_t s = 0; s < stars; ++s) {
    const auto center = static_cast<NodeIndex>(s * size);
    labels[center] = {"center", "star" + std::to_string(s)};
    for (std::size_t j = 1; j < size; ++j) {
      const auto leaf = static_cast<NodeIndex>(s * size + j);
      labels[leaf] = {"leaf", "star" + std::to_string(s)};
      e.emplace_back(center, leaf, 1.0);
    }
  }
  return {kt::make_graph(stars * size, e, true), LabelRegistry(labels)};
}

LoadedGraph random_labeled(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph g = kt::random_connected(rng, n, 3.0 / static_cast<double>(n));
  std::uniform_int_distribution<int> count(1, 3), pick(0, 7);
  std::vector<std::vector<std::string>> labels(n);
  for (auto& l : labels) {
    for (int c = count(rng); c > 0; --c) l.push_back("L" + std::to_string(pick(rng)));
  }
  return {std::move(g), LabelRegistry(labels)};
}

struct Gate {
  int failures = 0;

  void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %2d %-28s %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }

  // Runs a criterion, turning any exception into a failure line.
  void check(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
      auto [ok, detail] = body();
      report(id, name, ok, detail);
    } catch (const std::exception& ex) {
      report(id, name, false, std::string("exception: ") + ex.what());
    }
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

}  // namespace

int main() {
  Gate gate;
  const auto digraphs = random_digraphs();

  gate.check(1, "pagerank equivalence", [&] {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (const auto& g : digraphs) {
      RankConfig cfg;
      cfg.convergence_tol = 1e-13;
      const auto p = solve_transitional_probabilities(g, cfg);
      const auto oracle = kt::pagerank_oracle(g, 1.0 - cfg.ranking_factor);
      for (std::size_t i = 0; i < g.num_nodes(); ++i) worst = std::max(worst, std::abs(p.p[i] - oracle[i]));
    }
    const double t = seconds_since(t0);
    return std::pair{worst <= 1e-6 && t < 5.0, fmt2("max |diff| %.3g over 100 digraphs, %.2fs", worst, t)};
  });

  gate.check(2, "bucket placement", [&] {
    const auto b = probability_bucket(0.25, 10);
    return std::pair{b == 2, "bucket(0.25, 10) = " + std::to_string(b)};
  });

  gate.check(3, "probability conservation", [&] {
    std::vector<Graph> graphs = digraphs;
    graphs.push_back(kt::load_chess().graph);
    graphs.push_back(path_of_clusters().graph);
    graphs.push_back(star_forest().graph);
    graphs.push_back(random_labeled(200, 7).graph);
    for (std::size_t n : {1, 2, 5, 32}) graphs.push_back(kt::path_graph(n));
    double worst = 0.0;
    std::size_t sweeps = 0;
    for (const auto& g : graphs) {
      solve_transitional_probabilities(g, {}, [&](std::size_t, std::span<const double> p) {
        double s = 0.0;
        for (double x : p) s += x;
        worst = std::max(worst, std::abs(s - 1.0));
        ++sweeps;
      });
    }
    return std::pair{worst <= 1e-9 && sweeps > 0, fmt2("max |sum - 1| %.3g across %.0f sweeps", worst,
                                                       static_cast<double>(sweeps))};
  });

  gate.check(4, "rsb balance and spectra", [&] {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(99);
    bool balanced = true, contiguous = true, oracle_ok = true;
    double worst_res = 0.0, worst_lambda = 0.0;
    std::size_t splits = 0;

    std::vector<Graph> graphs;
    for (std::size_t n = 2; n <= 32; ++n) graphs.push_back(kt::path_graph(n));
    for (int t = 0; t < 40; ++t) {
      std::uniform_int_distribution<std::size_t> size(2, 32);
      graphs.push_back(kt::random_connected(rng, size(rng), 0.15));
    }
    graphs.push_back(kt::load_chess().graph);

    for (const auto& g : graphs) {
      std::vector<SplitRecord> trace;
      rsb_partition(g, 8, {}, &trace);
      for (const auto& s : trace) {
        if (!s.spectral) continue;
        ++splits;
        worst_res = std::max(worst_res, s.residual);
        if (s.left_size != (s.part_size + 1) / 2 || s.right_size != s.part_size / 2) balanced = false;
      }

      // Whole-graph Fiedler pair against the dense oracle, residual recomputed here.
      std::vector<NodeIndex> all(g.num_nodes());
      std::iota(all.begin(), all.end(), NodeIndex{0});
      const auto f = fiedler_vector(g, all);
      const auto L = kt::dense_laplacian(g);
      const auto dense = kt::jacobi_eigen(L);
      double rq = 0.0;
      std::vector<double> lv(g.num_nodes(), 0.0);
      for (std::size_t i = 0; i < lv.size(); ++i) {
        for (std::size_t j = 0; j < lv.size(); ++j) lv[i] += L[i][j] * f.vector[j];
        rq += f.vector[i] * lv[i];
      }
      double res = 0.0;
      for (std::size_t i = 0; i < lv.size(); ++i) res += (lv[i] - rq * f.vector[i]) * (lv[i] - rq * f.vector[i]);
      worst_res = std::max(worst_res, std::sqrt(res));
      worst_lambda = std::max(worst_lambda, std::abs(rq - dense.values[1]));
      if (std::abs(rq - dense.values[1]) > 1e-8) oracle_ok = false;
    }

    // Paths: every cluster is a run of consecutive nodes, and the first
    // split follows the sign pattern of the oracle's Fiedler vector.
    for (std::size_t n = 2; n <= 32; ++n) {
      const Graph g = kt::path_graph(n);
      const auto a = rsb_partition(g, 8);
      std::vector<int> first(a.num_clusters, -1), last(a.num_clusters, -1);
      std::vector<std::size_t> count(a.num_clusters, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto c = a.cluster_of[i];
        if (first[c] < 0) first[c] = static_cast<int>(i);
        last[c] = static_cast<int>(i);
        ++count[c];
      }
      for (std::size_t c = 0; c < a.num_clusters; ++c) {
        if (count[c] == 0 || static_cast<std::size_t>(last[c] - first[c] + 1) != count[c]) contiguous = false;
      }
      const auto dense = kt::jacobi_eigen(kt::dense_laplacian(g));
      const auto& v = dense.vectors[1];
      // Path Fiedler vectors are monotone, so the median split is a prefix/suffix.
      const bool inc = v.front() < v.back();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        if ((v[i + 1] - v[i] > 0) != inc && std::abs(v[i + 1] - v[i]) > 1e-12) oracle_ok = false;
      }
    }

    const double t = seconds_since(t0);
    const bool ok = balanced && contiguous && oracle_ok && worst_res <= 1e-8 && t < 5.0;
    std::string detail = std::to_string(splits) + " spectral splits, " + (balanced ? "balanced" : "UNBALANCED") +
                         ", paths " + (contiguous ? "contiguous" : "NOT contiguous") +
                         fmt(", max residual %.3g", worst_res) + fmt(", max |lambda2 - oracle| %.3g", worst_lambda) +
                         fmt(", %.2fs", t);
    return std::pair{ok, detail};
  });

  gate.check(5, "vector layout", [&] {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> small(1, 6), labels(1, 40), clusters(0, 4), buckets(1, 20);
    bool ok = true;
    for (int t = 0; t < 20; ++t) {
      VectorLayout l{small(rng), small(rng), small(rng), labels(rng), std::size_t{1} << clusters(rng), buckets(rng)};
      const std::size_t formula = l.max_hops * l.max_forks_perhop * l.max_edges_perfork + l.num_labels +
                                  l.max_num_clusters + l.num_probability_buckets;
      if (l.total_size() != formula || vector_size(l) != formula) ok = false;
      const std::size_t offs[] = {l.pattern_offset(), l.label_offset(), l.cluster_offset(), l.probability_offset(),
                                  l.total_size()};
      for (int r = 0; r < 4; ++r) {
        if (!(offs[r] < offs[r + 1])) ok = false;
      }
      // Each index belongs to exactly one block.
      std::vector<int> owner(l.total_size(), -1);
      for (std::size_t r = 0; r < kNumSubFeatures; ++r) {
        for (std::size_t i = l.block_begin(r); i < l.block_end(r); ++i) {
          if (owner[i] != -1) ok = false;
          owner[i] = static_cast<int>(r);
        }
      }
      for (int o : owner) {
        if (o < 0) ok = false;
      }
    }
    return std::pair{ok, std::string("20 randomized layouts")};
  });

  gate.check(6, "gradient vs finite differences", [&] {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      std::uniform_int_distribution<std::size_t> size(3, 12);
      const std::size_t n = size(rng);
      Graph g = kt::random_connected(rng, n, 0.3);
      std::uniform_int_distribution<int> pick(0, 4);
      std::vector<std::vector<std::string>> lab(n);
      for (auto& l : lab) l = {"L" + std::to_string(pick(rng)), "L" + std::to_string(pick(rng))};
      LabelRegistry labels(lab);
      VectorLayout layout{2, 2, 3, labels.num_labels(), 4, 5};
      const auto clusters = rsb_partition(g, 4);
      const auto probs = solve_transitional_probabilities(g);
      const auto sub = assemble_subfeatures(g, labels, clusters, probs, layout);
      const GroundTruth truth(g, labels, 0.5);
      SampleSet sample;
      for (NodeIndex i = 0; i < n; ++i) sample.nodes.push_back(i);
      const LossModel model(sub, std::cref(truth), sample);

      std::uniform_real_distribution<double> wd(0.2, 1.5);
      Weights w{wd(rng), wd(rng), wd(rng), wd(rng)};
      const double h = 1e-5;
      for (std::size_t j = 0; j < kNumSubFeatures; ++j) {
        Weights up = w, down = w;
        up[j] += h;
        down[j] -= h;
        const double fd = (model.mean_loss(up) - model.mean_loss(down)) / (2 * h);
        const double an = loss_gradient(sub, w, std::cref(truth), sample, j);
        const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(an - fd) / denom);
      }
    }
    const double t = seconds_since(t0);
    return std::pair{worst < 1e-5 && t < 10.0, fmt2("max relative error %.3g, %.2fs", worst, t)};
  });

  gate.check(7, "sgd behavior", [&] {
    const auto t0 = Clock::now();
    std::vector<std::pair<std::string, LoadedGraph>> cases;
    cases.emplace_back("chess", kt::load_chess());
    cases.emplace_back("path-of-clusters", path_of_clusters());
    cases.emplace_back("star-forest", star_forest());
    cases.emplace_back("random-labeled", random_labeled(200, 7));
    bool ok = true;
    std::string detail;
    for (const auto& [name, in] : cases) {
      const auto r = run_pipeline(in, EmbedConfig{});
      const auto& h = r.weights.history;
      const std::size_t epochs = h.size() - 1;
      const std::size_t q = std::max<std::size_t>(1, h.size() / 4);
      double head = 0.0, tail = 0.0;
      for (std::size_t i = 0; i < q; ++i) {
        head += h[i].mean_loss;
        tail += h[h.size() - 1 - i].mean_loss;
      }
      head /= static_cast<double>(q);
      tail /= static_cast<double>(q);
      const bool good = epochs <= 100 && h.back().mean_loss <= h.front().mean_loss && tail <= head;
      ok = ok && good;
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s%s: %zu epochs, loss %.4g -> %.4g", detail.empty() ? "" : "; ",
                    name.c_str(), epochs, h.front().mean_loss, h.back().mean_loss);
      detail += buf;
    }
    const double t = seconds_since(t0);
    return std::pair{ok && t < 30.0, detail + fmt("; %.2fs", t)};
  });

  gate.check(8, "ground-truth anchor", [&] {
    const auto in = kt::load_chess();
    const auto r = run_pipeline(in, EmbedConfig{});
    const EmbeddingSet set(in.graph.node_ids(), r.embeddings);
    const NodeIndex alex = in.graph.index_of("Alex"), tom = in.graph.index_of("Tom");
    const auto common = in.labels.common_labels(alex, tom);
    const double anchor = set.similarity("Alex", "Tom");
    double best_other = -2.0;
    std::string best_pair;
    std::size_t candidates = 0;
    for (NodeIndex i = 0; i < in.graph.num_nodes(); ++i) {
      for (NodeIndex k = i + 1; k < in.graph.num_nodes(); ++k) {
        if (in.labels.common_labels(i, k) != 0 || jaccard(in.graph, i, k) != 0.0) continue;
        ++candidates;
        const double s = cosine_similarity(r.embeddings.row(i), r.embeddings.row(k));
        if (s > best_other) {
          best_other = s;
          best_pair = in.graph.node_id(i) + ":" + in.graph.node_id(k);
        }
      }
    }
    const bool ok = common == 2 && candidates > 0 && anchor > best_other;
    return std::pair{ok, "common_labels(Alex,Tom)=" + std::to_string(common) + fmt(", sim(Alex,Tom)=%.6f", anchor) +
                             fmt(", best unrelated %.6f", best_other) + " (" + best_pair + ", " +
                             std::to_string(candidates) + " pairs)"};
  });

  gate.check(9, "determinism", [&] {
    const auto in = kt::load_chess();
    auto d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
    auto p1 = EmbedPaths::derived_from(d1 / "emb.csv"), p2 = EmbedPaths::derived_from(d2 / "emb.csv");
    EmbedConfig cfg;
    cfg.undirected = true;
    cmd_embed(in, cfg, p1);
    cmd_embed(in, cfg, p2);
    bool ok = slurp(p1.embeddings) == slurp(p2.embeddings) && slurp(p1.sidecar) == slurp(p2.sidecar) &&
              slurp(p1.history) == slurp(p2.history) && !slurp(p1.embeddings).empty();

    // Same again through two separate CLI processes.
    auto d3 = scratch_dir("det3"), d4 = scratch_dir("det4");
    const std::string base = std::string(KGEMBED_CLI) + " embed --undirected --nodes " +
                             kt::data_path("chess/nodes.csv") + " --edges " + kt::data_path("chess/edges.csv") +
                             " --output ";
    const int s3 = std::system((base + (d3 / "emb.csv").string()).c_str());
    const int s4 = std::system((base + (d4 / "emb.csv").string()).c_str());
    auto p3 = EmbedPaths::derived_from(d3 / "emb.csv"), p4 = EmbedPaths::derived_from(d4 / "emb.csv");
    const bool cli_ok = s3 == 0 && s4 == 0 && slurp(p3.embeddings) == slurp(p4.embeddings) &&
                        slurp(p3.sidecar) == slurp(p4.sidecar) && slurp(p3.history) == slurp(p4.history) &&
                        slurp(p3.embeddings) == slurp(p1.embeddings);
    return std::pair{ok && cli_ok, std::string("library and CLI runs byte-identical: ") +
                                       (ok ? "library yes" : "library NO") + ", " + (cli_ok ? "cli yes" : "cli NO")};
  });

  gate.check(10, "embedding normalization", [&] {
    std::vector<LoadedGraph> inputs;
    inputs.push_back(kt::load_chess());
    inputs.push_back(path_of_clusters());
    inputs.push_back(star_forest());
    inputs.push_back(random_labeled(200, 7));
    double worst_norm = 0.0, worst_cos = 0.0;
    std::size_t rows = 0;
    auto dir = scratch_dir("norm");
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto paths = EmbedPaths::derived_from(dir / ("emb" + std::to_string(t) + ".csv"));
      cmd_embed(inputs[t], {}, paths);
      std::ifstream f(paths.embeddings);
      const auto set = read_embeddings(f);
      for (std::size_t i = 0; i < set.size(); ++i) {
        double n2 = 0.0;
        for (double x : set.row(i)) n2 += x * x;
        if (n2 == 0.0) continue;
        ++rows;
        worst_norm = std::max(worst_norm, std::abs(std::sqrt(n2) - 1.0));
        for (std::size_t k = 0; k < set.size(); ++k) {
          double dot = 0.0;
          for (std::size_t d = 0; d < set.dim(); ++d) dot += set.row(i)[d] * set.row(k)[d];
          double m2 = 0.0;
          for (double x : set.row(k)) m2 += x * x;
          if (m2 == 0.0) continue;
          worst_cos = std::max(worst_cos, std::abs(cosine_similarity(set.row(i), set.row(k)) - dot));
        }
      }
    }
    return std::pair{rows > 0 && worst_norm <= 1e-9 && worst_cos <= 1e-9,
                     std::to_string(rows) + " rows" + fmt2(", max |norm - 1| %.3g, max |cos - dot| %.3g", worst_norm,
                                                           worst_cos)};
  });

  std::printf("%s: %d criteria failed\n", gate.failures ? "FAILED" : "ALL PASSED", gate.failures);
  return gate.failures ? EXIT_FAILURE : EXIT_SUCCESS;
}
