#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kgembed/error.hpp"
#include "kgembed/features.hpp"
#include "kgembed/graph.hpp"

namespace kgembed {

// Fixed 9-significant-digit rendering used by the CSV writers.
inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

// Shortest text that parses back to exactly `x`. Embedding values use this:
// 9 digits would leave emitted norms off by up to ~5e-10.
inline std::string format_exact(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("vector dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Embedding table keyed by external node id, as read back from CSV.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::vector<std::string> ids, std::size_t dim, std::vector<double> data)
      : ids_(std::move(ids)), dim_(dim), data_(std::move(data)) {
    if (data_.size() != ids_.size() * dim_) throw ValidationError("embedding data size mismatch");
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (!index_.emplace(ids_[i], i).second) throw ValidationError("duplicate node id '" + ids_[i] + "'");
    }
  }

  EmbeddingSet(const std::vector<std::string>& ids, const EmbeddingTable& table)
      : EmbeddingSet(ids, table.dim(), flatten(table)) {}

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw LookupError("unknown node id '" + id + "'");
    return it->second;
  }

  double similarity(const std::string& a, const std::string& b) const {
    return cosine_similarity(row(index_of(a)), row(index_of(b)));
  }

  // The k most similar nodes to `query` (self excluded), best first; equal
  // scores are ordered by node id.
  std::vector<std::pair<std::string, double>> top_k(const std::string& query, std::size_t k) const {
    const std::size_t q = index_of(query);
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) {
      if (i == q) continue;
      scored.emplace_back(ids_[i], cosine_similarity(row(q), row(i)));
    }
    const auto better = [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    };
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
    scored.resize(k);
    return scored;
  }

 private:
  static std::vector<double> flatten(const EmbeddingTable& table) {
    std::vector<double> out;
    out.reserve(table.num_nodes() * table.dim());
    for (std::size_t i = 0; i < table.num_nodes(); ++i) {
      auto r = table.row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return out;
  }

  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// `node_id,v0,...,v{D-1}`
inline void write_embeddings(std::ostream& out, const std::vector<std::string>& ids, const EmbeddingTable& table) {
  out << "node_id";
  for (std::size_t d = 0; d < table.dim(); ++d) out << ",v" << d;
  out << '\n';
  for (std::size_t i = 0; i < table.num_nodes(); ++i) {
    out << ids.at(i);
    for (double x : table.row(i)) out << ',' << format_exact(x);
    out << '\n';
  }
}

inline EmbeddingSet read_embeddings(std::istream& in) {
  auto table = detail::read_csv(in, /*check_columns=*/false);
  if (table.header.empty() || table.header[0] != "node_id") {
    throw ParseError(1, "embedding header must start with 'node_id'");
  }
  const std::size_t dim = table.header.size() - 1;
  for (std::size_t d = 0; d < dim; ++d) {
    if (table.header[d + 1] != "v" + std::to_string(d)) {
      throw ValidationError("embedding column " + std::to_string(d + 1) + " should be 'v" + std::to_string(d) + "'");
    }
  }
  std::vector<std::string> ids;
  std::vector<double> data;
  data.reserve(table.rows.size() * dim);
  for (auto& [line, fields] : table.rows) {
    if (fields.size() != dim + 1) {
      throw ValidationError("line " + std::to_string(line) + ": embedding has " + std::to_string(fields.size() - 1) +
                            " values, expected " + std::to_string(dim));
    }
    ids.push_back(fields[0]);
    for (std::size_t d = 0; d < dim; ++d) data.push_back(detail::parse_double(fields[d + 1], line));
  }
  return EmbeddingSet(std::move(ids), dim, std::move(data));
}

// "a:b" -> (a, b)
inline std::pair<std::string, std::string> parse_pair(const std::string& text) {
  const auto pos = text.find(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == text.size() || text.find(':', pos + 1) != std::string::npos) {
    throw ValidationError("node pair '" + text + "' must look like 'a:b'");
  }
  return {text.substr(0, pos), text.substr(pos + 1)};
}

}  // namespace kgembed
