#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgembed/error.hpp"

namespace kgembed {

using NodeIndex = std::uint32_t;
using LabelIndex = std::uint32_t;

struct Edge {
  NodeIndex src = 0;
  NodeIndex dst = 0;
  double weight = 1.0;
  std::string label;  // provenance only, no solver reads it
};

struct Neighbor {
  NodeIndex node = 0;
  double weight = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Immutable directed multigraph with both adjacency directions in CSR form.
// Adjacency lists are sorted by neighbor index; parallel edges keep input order.
class Graph {
 public:
  Graph(std::vector<std::string> node_ids, std::vector<Edge> edges)
      : node_ids_(std::move(node_ids)), edges_(std::move(edges)) {
    const std::size_t n = node_ids_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!id_index_.emplace(node_ids_[i], static_cast<NodeIndex>(i)).second) {
        throw ValidationError("duplicate node id '" + node_ids_[i] + "'");
      }
    }
    for (const Edge& e : edges_) {
      if (e.src >= n || e.dst >= n) {
        throw ValidationError("edge references node index out of range");
      }
      if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
        throw ValidationError("edge weight must be finite and nonnegative");
      }
    }
    build_csr(/*outgoing=*/true, out_offsets_, out_);
    build_csr(/*outgoing=*/false, in_offsets_, in_);
    build_undirected();
  }

  std::size_t num_nodes() const noexcept { return node_ids_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }

  std::span<const Neighbor> out_adjacency(NodeIndex i) const {
    check(i);
    return {out_.data() + out_offsets_[i], out_.data() + out_offsets_[i + 1]};
  }

  // B(i): sources of edges entering i.
  std::span<const Neighbor> in_adjacency(NodeIndex i) const {
    check(i);
    return {in_.data() + in_offsets_[i], in_.data() + in_offsets_[i + 1]};
  }

  // Union of out- and in-neighbors, deduplicated, sorted, self excluded.
  std::span<const NodeIndex> neighbors_undirected(NodeIndex i) const {
    check(i);
    return {und_.data() + und_offsets_[i], und_.data() + und_offsets_[i + 1]};
  }

  double out_weight(NodeIndex i) const {
    double total = 0.0;
    for (const Neighbor& nb : out_adjacency(i)) total += nb.weight;
    return total;
  }

  const std::string& node_id(NodeIndex i) const {
    check(i);
    return node_ids_[i];
  }
  const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
  std::span<const Edge> edges() const noexcept { return edges_; }

  std::optional<NodeIndex> find(std::string_view id) const {
    auto it = id_index_.find(std::string(id));
    if (it == id_index_.end()) return std::nullopt;
    return it->second;
  }

  NodeIndex index_of(std::string_view id) const {
    if (auto idx = find(id)) return *idx;
    throw LookupError("unknown node id '" + std::string(id) + "'");
  }

 private:
  void check(NodeIndex i) const {
    if (i >= node_ids_.size()) {
      throw LookupError("node index " + std::to_string(i) + " out of range");
    }
  }

  void build_csr(bool outgoing, std::vector<std::size_t>& offsets,
                 std::vector<Neighbor>& adj) const {
    const std::size_t n = node_ids_.size();
    offsets.assign(n + 1, 0);
    for (const Edge& e : edges_) ++offsets[(outgoing ? e.src : e.dst) + 1];
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
    adj.resize(edges_.size());
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (const Edge& e : edges_) {
      const NodeIndex from = outgoing ? e.src : e.dst;
      const NodeIndex to = outgoing ? e.dst : e.src;
      adj[fill[from]++] = Neighbor{to, e.weight};
    }
    for (std::size_t i = 0; i < n; ++i) {
      std::stable_sort(adj.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                       adj.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]),
                       [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    }
  }

  void build_undirected() {
    const std::size_t n = node_ids_.size();
    und_offsets_.assign(n + 1, 0);
    std::vector<NodeIndex> scratch;
    for (std::size_t i = 0; i < n; ++i) {
      scratch.clear();
      for (std::size_t e = out_offsets_[i]; e < out_offsets_[i + 1]; ++e) scratch.push_back(out_[e].node);
      for (std::size_t e = in_offsets_[i]; e < in_offsets_[i + 1]; ++e) scratch.push_back(in_[e].node);
      std::sort(scratch.begin(), scratch.end());
      scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
      std::erase(scratch, static_cast<NodeIndex>(i));
      und_.insert(und_.end(), scratch.begin(), scratch.end());
      und_offsets_[i + 1] = und_.size();
    }
  }

  std::vector<std::string> node_ids_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, NodeIndex> id_index_;
  std::vector<std::size_t> out_offsets_, in_offsets_, und_offsets_;
  std::vector<Neighbor> out_, in_;
  std::vector<NodeIndex> und_;
};

// Dense label interning plus per-node sorted label sets.
class LabelRegistry {
 public:
  LabelRegistry() = default;

  // `per_node[i]` lists the label strings of node i; indices are assigned in
  // first-appearance order. Empty strings and repeats within a node are dropped.
  explicit LabelRegistry(const std::vector<std::vector<std::string>>& per_node) {
    node_labels_.resize(per_node.size());
    for (std::size_t i = 0; i < per_node.size(); ++i) {
      auto& set = node_labels_[i];
      for (const std::string& name : per_node[i]) {
        if (name.empty()) continue;
        auto [it, inserted] = index_.emplace(name, static_cast<LabelIndex>(names_.size()));
        if (inserted) names_.push_back(name);
        set.push_back(it->second);
      }
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
    }
  }

  // L: number of distinct labels attached to at least one node.
  std::size_t num_labels() const noexcept { return names_.size(); }
  std::size_t num_nodes() const noexcept { return node_labels_.size(); }

  const std::string& label(LabelIndex idx) const { return names_.at(idx); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  std::optional<LabelIndex> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const LabelIndex> labels_of(NodeIndex i) const {
    if (i >= node_labels_.size()) {
      throw LookupError("node index " + std::to_string(i) + " out of range");
    }
    return node_labels_[i];
  }

  // |labels(i) ∩ labels(k)|
  std::size_t common_labels(NodeIndex i, NodeIndex k) const {
    auto a = labels_of(i);
    auto b = labels_of(k);
    std::size_t count = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++count;
        ++ia;
        ++ib;
      }
    }
    return count;
  }

 private:
  std::unordered_map<std::string, LabelIndex> index_;
  std::vector<std::string> names_;
  std::vector<std::vector<LabelIndex>> node_labels_;
};

struct LoadedGraph {
  Graph graph;
  LabelRegistry labels;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view text, std::size_t line) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, "cannot parse number '" + std::string(text) + "'");
  }
  return value;
}

// Reads a headered CSV: returns (line number, fields) for every non-blank data
// row, optionally checking each row matches the header's column count.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

inline CsvTable read_csv(std::istream& in, bool check_columns = true) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, ',');
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (check_columns && fields.size() != table.header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(table.header.size()) +
                                    " columns, found " + std::to_string(fields.size()));
    }
    table.rows.emplace_back(line_no, std::move(fields));
  }
  return table;
}

}  // namespace detail

// Builds a Graph and LabelRegistry from a nodes CSV (`node_id,labels`, labels
// separated by '|') and an edges CSV (`src,dst[,weight[,label]]`). Node indices
// follow first appearance: node rows first, then ids seen only in edges.
inline LoadedGraph load_graph(std::istream* nodes, std::istream& edges, bool undirected) {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> labels;
  std::unordered_map<std::string, NodeIndex> index;

  const auto intern = [&](const std::string& id) {
    auto [it, inserted] = index.emplace(id, static_cast<NodeIndex>(ids.size()));
    if (inserted) {
      ids.push_back(id);
      labels.emplace_back();
    }
    return it->second;
  };

  if (nodes != nullptr) {
    auto table = detail::read_csv(*nodes);
    if (!table.header.empty()) {
      if (table.header[0] != "node_id" || table.header.size() > 2 ||
          (table.header.size() == 2 && table.header[1] != "labels")) {
        throw ParseError(1, "nodes header must be 'node_id,labels'");
      }
    }
    for (auto& [line, fields] : table.rows) {
      if (fields[0].empty()) throw ParseError(line, "empty node id");
      if (index.count(fields[0]) != 0) {
        throw ValidationError("line " + std::to_string(line) + ": duplicate node id '" + fields[0] + "'");
      }
      const NodeIndex idx = intern(fields[0]);
      if (fields.size() == 2 && !fields[1].empty()) {
        for (auto& name : detail::split(fields[1], '|')) labels[idx].push_back(std::move(name));
      }
    }
  }

  std::vector<Edge> edge_list;
  auto table = detail::read_csv(edges);
  int weight_col = -1;
  int label_col = -1;
  if (!table.header.empty()) {
    const auto& h = table.header;
    if (h.size() < 2 || h[0] != "src" || h[1] != "dst" || h.size() > 4) {
      throw ParseError(1, "edges header must be 'src,dst[,weight[,label]]'");
    }
    for (std::size_t c = 2; c < h.size(); ++c) {
      if (h[c] == "weight" && weight_col < 0) {
        weight_col = static_cast<int>(c);
      } else if (h[c] == "label" && label_col < 0) {
        label_col = static_cast<int>(c);
      } else {
        throw ParseError(1, "unexpected edges column '" + h[c] + "'");
      }
    }
  }
  for (auto& [line, fields] : table.rows) {
    if (fields[0].empty() || fields[1].empty()) throw ParseError(line, "empty node id in edge");
    Edge e;
    e.src = intern(fields[0]);
    e.dst = intern(fields[1]);
    if (weight_col >= 0 && !fields[static_cast<std::size_t>(weight_col)].empty()) {
      e.weight = detail::parse_double(fields[static_cast<std::size_t>(weight_col)], line);
    }
    if (!std::isfinite(e.weight)) {
      throw ValidationError("line " + std::to_string(line) + ": edge weight is not finite");
    }
    if (e.weight < 0.0) {
      throw ValidationError("line " + std::to_string(line) + ": negative edge weight");
    }
    if (label_col >= 0) e.label = fields[static_cast<std::size_t>(label_col)];
    const bool mirror = undirected && e.src != e.dst;
    Edge back{e.dst, e.src, e.weight, e.label};
    edge_list.push_back(std::move(e));
    if (mirror) edge_list.push_back(std::move(back));
  }

  if (ids.empty()) throw ValidationError("graph has no nodes");
  return LoadedGraph{Graph(std::move(ids), std::move(edge_list)), LabelRegistry(labels)};
}

inline LoadedGraph load_graph_files(const std::optional<std::filesystem::path>& nodes_path,
                                    const std::filesystem::path& edges_path, bool undirected) {
  std::ifstream edges(edges_path);
  if (!edges) throw IoError("cannot open edges file '" + edges_path.string() + "'");
  if (nodes_path) {
    std::ifstream nodes(*nodes_path);
    if (!nodes) throw IoError("cannot open nodes file '" + nodes_path->string() + "'");
    return load_graph(&nodes, edges, undirected);
  }
  return load_graph(nullptr, edges, undirected);
}

}  // namespace kgembed
