#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "kgembed/error.hpp"
#include "kgembed/graph.hpp"

namespace kgembed {

struct EigenConfig {
  double residual_tol = 1e-8;
  std::size_t max_iterations = 10000;  // Laplacian matrix-vector products
};

struct FiedlerResult {
  std::vector<double> vector;  // unit length, orthogonal to ones, indexed like the part
  double eigenvalue = 0.0;
  double residual = 0.0;       // ||Lv - (v'Lv) v||
  std::size_t iterations = 0;
};

struct ClusterAssignment {
  std::vector<std::uint32_t> cluster_of;
  std::size_t num_clusters = 0;
};

// One bisection performed by rsb_partition; spectral splits carry the
// eigenpair quality of the Fiedler vector that drove them.
struct SplitRecord {
  std::size_t depth = 0;
  std::size_t part_size = 0;
  std::size_t left_size = 0;
  std::size_t right_size = 0;
  bool spectral = false;
  double eigenvalue = 0.0;
  double residual = 0.0;
};

// Unit-weight symmetric Laplacian of the subgraph induced by `part`, with
// self-loops and parallel edges collapsed.
class PartLaplacian {
 public:
  PartLaplacian(const Graph& graph, std::span<const NodeIndex> part) {
    std::vector<std::int64_t> local(graph.num_nodes(), -1);
    for (std::size_t j = 0; j < part.size(); ++j) local[part[j]] = static_cast<std::int64_t>(j);
    offsets_.assign(part.size() + 1, 0);
    for (std::size_t j = 0; j < part.size(); ++j) {
      for (NodeIndex nb : graph.neighbors_undirected(part[j])) {
        if (local[nb] >= 0) adj_.push_back(static_cast<std::size_t>(local[nb]));
      }
      offsets_[j + 1] = adj_.size();
    }
  }

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  std::size_t degree(std::size_t j) const { return offsets_[j + 1] - offsets_[j]; }
  std::span<const std::size_t> neighbors(std::size_t j) const {
    return {adj_.data() + offsets_[j], adj_.data() + offsets_[j + 1]};
  }

  std::size_t max_degree() const {
    std::size_t best = 0;
    for (std::size_t j = 0; j < size(); ++j) best = std::max(best, degree(j));
    return best;
  }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t j = 0; j < size(); ++j) {
      double acc = static_cast<double>(degree(j)) * x[j];
      for (std::size_t nb : neighbors(j)) acc -= x[nb];
      y[j] = acc;
    }
  }

  // Connected components as lists of local indices, each sorted, ordered by
  // their smallest member.
  std::vector<std::vector<std::size_t>> components() const {
    std::vector<std::vector<std::size_t>> out;
    std::vector<char> seen(size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < size(); ++s) {
      if (seen[s]) continue;
      auto& comp = out.emplace_back();
      seen[s] = 1;
      stack.push_back(s);
      while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        comp.push_back(u);
        for (std::size_t v : neighbors(u)) {
          if (!seen[v]) {
            seen[v] = 1;
            stack.push_back(v);
          }
        }
      }
      std::sort(comp.begin(), comp.end());
    }
    return out;
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> adj_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void remove_mean(std::span<double> x) {
  if (x.empty()) return;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  for (double& v : x) v -= mean;
}

inline bool normalize(std::span<double> x) {
  const double norm = std::sqrt(dot(x, x));
  if (!(norm > 0.0)) return false;
  for (double& v : x) v /= norm;
  return true;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Fiedler vector of a connected part by restarted Lanczos with full
// reorthogonalization, run on the complement of the all-ones vector. The
// Krylov basis is capped at `kMaxBasis`; parts no larger than that converge
// in a single cycle.
inline FiedlerResult fiedler_vector(const PartLaplacian& lap, const EigenConfig& cfg) {
  constexpr std::size_t kMaxBasis = 160;
  const std::size_t n = lap.size();
  if (!(cfg.residual_tol > 0.0)) throw ValidationError("residual_tol must be positive");
  if (n < 2) throw ValidationError("fiedler_vector needs at least two nodes");
  if (lap.components().size() != 1) throw ValidationError("fiedler_vector needs a connected part");

  const std::size_t basis_cap = std::min(n - 1, kMaxBasis);
  const double scale = 2.0 * static_cast<double>(lap.max_degree()) + 1.0;

  std::vector<double> start(n);
  for (std::size_t j = 0; j < n; ++j) {
    start[j] = static_cast<double>(detail::splitmix64(j) >> 11) * 0x1.0p-53 - 0.5;
  }

  FiedlerResult result;
  std::vector<std::vector<double>> basis;
  std::vector<double> w(n), lv(n);
  std::vector<double> alpha, beta;

  while (true) {
    detail::remove_mean(start);
    if (!detail::normalize(start)) {
      // Degenerate start; any vector orthogonal to ones works.
      for (std::size_t j = 0; j < n; ++j) start[j] = static_cast<double>(j);
      detail::remove_mean(start);
      detail::normalize(start);
    }
    basis.assign(1, start);
    alpha.clear();
    beta.clear();

    for (std::size_t j = 0; j < basis_cap; ++j) {
      lap.apply(basis[j], w);
      ++result.iterations;
      const double a = detail::dot(basis[j], w);
      alpha.push_back(a);
      // Two passes of Gram-Schmidt against ones and the full basis.
      for (int pass = 0; pass < 2; ++pass) {
        detail::remove_mean(w);
        for (const auto& q : basis) {
          const double c = detail::dot(q, w);
          for (std::size_t t = 0; t < n; ++t) w[t] -= c * q[t];
        }
      }
      const double b = std::sqrt(detail::dot(w, w));
      if (j + 1 == basis_cap || b <= 1e-13 * scale) break;
      beta.push_back(b);
      for (double& x : w) x /= b;
      basis.push_back(w);
    }

    const auto m = static_cast<Eigen::Index>(alpha.size());
    Eigen::VectorXd diag = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub = m > 1 ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(beta.data(), m - 1))
                                : Eigen::VectorXd(0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
    tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const Eigen::VectorXd y = tri.eigenvectors().col(0);

    std::vector<double> v(n, 0.0);
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto& q = basis[static_cast<std::size_t>(c)];
      for (std::size_t t = 0; t < n; ++t) v[t] += y(c) * q[t];
    }
    detail::remove_mean(v);
    detail::normalize(v);

    lap.apply(v, lv);
    const double rho = detail::dot(v, lv);
    double res2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double r = lv[t] - rho * v[t];
      res2 += r * r;
    }
    result.eigenvalue = rho;
    result.residual = std::sqrt(res2);
    result.vector = std::move(v);

    if (result.residual <= cfg.residual_tol) break;
    if (result.iterations >= cfg.max_iterations) {
      throw SolverError("Fiedler vector did not converge in " + std::to_string(cfg.max_iterations) +
                            " iterations",
                        result.residual);
    }
    start = result.vector;
  }

  // Sign convention: first component that is not numerically zero is positive.
  double peak = 0.0;
  for (double x : result.vector) peak = std::max(peak, std::abs(x));
  for (double x : result.vector) {
    if (std::abs(x) > 1e-9 * peak) {
      if (x < 0.0) {
        for (double& y : result.vector) y = -y;
      }
      break;
    }
  }
  return result;
}

inline FiedlerResult fiedler_vector(const Graph& graph, std::span<const NodeIndex> part,
                                    const EigenConfig& cfg = {}) {
  return fiedler_vector(PartLaplacian(graph, part), cfg);
}

namespace detail {

class RsbBuilder {
 public:
  RsbBuilder(const Graph& graph, const EigenConfig& cfg, std::vector<SplitRecord>* trace)
      : graph_(graph), cfg_(cfg), trace_(trace), assignment_{std::vector<std::uint32_t>(graph.num_nodes(), 0), 0} {}

  void run(std::vector<NodeIndex> part, std::size_t levels, std::size_t depth) {
    if (levels == 0 || part.size() < 2) {
      const auto id = static_cast<std::uint32_t>(assignment_.num_clusters++);
      for (NodeIndex v : part) assignment_.cluster_of[v] = id;
      return;
    }
    PartLaplacian lap(graph_, part);
    auto comps = lap.components();
    std::vector<NodeIndex> left, right;
    SplitRecord rec{depth, part.size(), 0, 0, false, 0.0, 0.0};

    if (comps.size() > 1) {
      std::stable_sort(comps.begin(), comps.end(),
                       [](const auto& a, const auto& b) { return a.size() > b.size(); });
      std::size_t left_total = 0, right_total = 0;
      for (const auto& comp : comps) {
        auto& side = left_total <= right_total ? left : right;
        (left_total <= right_total ? left_total : right_total) += comp.size();
        for (std::size_t j : comp) side.push_back(part[j]);
      }
    } else {
      const FiedlerResult f = fiedler_vector(lap, cfg_);
      rec.spectral = true;
      rec.eigenvalue = f.eigenvalue;
      rec.residual = f.residual;
      std::vector<std::size_t> order(part.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (f.vector[a] != f.vector[b]) return f.vector[a] < f.vector[b];
        return part[a] < part[b];
      });
      const std::size_t half = (part.size() + 1) / 2;
      for (std::size_t r = 0; r < order.size(); ++r) {
        (r < half ? left : right).push_back(part[order[r]]);
      }
    }
    std::sort(left.begin(), left.end());
    std::sort(right.begin(), right.end());
    rec.left_size = left.size();
    rec.right_size = right.size();
    if (trace_ != nullptr) trace_->push_back(rec);
    run(std::move(left), levels - 1, depth + 1);
    run(std::move(right), levels - 1, depth + 1);
  }

  ClusterAssignment take() { return std::move(assignment_); }

 private:
  const Graph& graph_;
  const EigenConfig& cfg_;
  std::vector<SplitRecord>* trace_;
  ClusterAssignment assignment_;
};

}  // namespace detail

// Recursive spectral bisection into at most `num_clusters` parts (a power of
// two). Each connected part is split at the median of its Fiedler ordering;
// disconnected parts are split by grouping whole components. Leaves are
// numbered in depth-first order, so indices stay dense even when small parts
// stop early.
inline ClusterAssignment rsb_partition(const Graph& graph, std::size_t num_clusters,
                                       const EigenConfig& cfg = {},
                                       std::vector<SplitRecord>* trace = nullptr) {
  if (num_clusters == 0 || !std::has_single_bit(num_clusters)) {
    throw ValidationError("num_clusters must be a power of two, got " + std::to_string(num_clusters));
  }
  const auto levels = static_cast<std::size_t>(std::countr_zero(num_clusters));
  std::vector<NodeIndex> all(graph.num_nodes());
  std::iota(all.begin(), all.end(), NodeIndex{0});
  detail::RsbBuilder builder(graph, cfg, trace);
  builder.run(std::move(all), levels, 0);
  return builder.take();
}

}  // namespace kgembed
