#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "kgembed/error.hpp"
#include "kgembed/graph.hpp"

namespace kgembed {

struct RankConfig {
  double ranking_factor = 0.15;  // r, the uniform teleport share
  double convergence_tol = 1e-9;
  std::size_t max_sweeps = 1000;
  std::size_t num_probability_buckets = 10;

  void validate() const {
    if (!(ranking_factor > 0.0 && ranking_factor < 1.0)) {
      throw ValidationError("ranking_factor must lie in (0, 1)");
    }
    if (!(convergence_tol > 0.0)) throw ValidationError("convergence_tol must be positive");
    if (num_probability_buckets < 1) throw ValidationError("num_probability_buckets must be >= 1");
  }
};

struct ProbabilityVector {
  std::vector<double> p;
  std::size_t sweeps = 0;
};

// Called after every sweep with the sweep number (1-based) and the new vector.
using SweepObserver = std::function<void(std::size_t, std::span<const double>)>;

// Steady state of p_i = (1-r) * sum_{j in B(i)} p_j w(j->i) / W_out(j) + r/NV,
// iterated synchronously from the uniform vector. Mass held by nodes without
// outgoing weight is spread uniformly so that the vector keeps summing to one.
inline ProbabilityVector solve_transitional_probabilities(const Graph& graph, const RankConfig& cfg = {},
                                                          const SweepObserver& observer = {}) {
  cfg.validate();
  const std::size_t n = graph.num_nodes();
  if (n == 0) throw ValidationError("graph has no nodes");
  const double nv = static_cast<double>(n);
  const double r = cfg.ranking_factor;

  std::vector<double> w_out(n);
  for (NodeIndex j = 0; j < n; ++j) w_out[j] = graph.out_weight(j);

  ProbabilityVector result;
  std::vector<double> p(n, 1.0 / nv), next(n);
  double delta = 0.0;
  for (std::size_t sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    double dangling = 0.0;
    for (NodeIndex j = 0; j < n; ++j) {
      if (!(w_out[j] > 0.0)) dangling += p[j];
    }
    const double base = (1.0 - r) * dangling / nv + r / nv;
    delta = 0.0;
    for (NodeIndex i = 0; i < n; ++i) {
      double flux = 0.0;
      for (const Neighbor& src : graph.in_adjacency(i)) {
        if (w_out[src.node] > 0.0) flux += p[src.node] * src.weight / w_out[src.node];
      }
      next[i] = (1.0 - r) * flux + base;
      delta = std::max(delta, std::abs(next[i] - p[i]));
    }
    p.swap(next);
    result.sweeps = sweep;
    if (observer) observer(sweep, p);
    if (delta < cfg.convergence_tol) {
      result.p = std::move(p);
      return result;
    }
  }
  throw SolverError("transitional probabilities did not converge in " + std::to_string(cfg.max_sweeps) +
                        " sweeps",
                    delta);
}

// Min-max scaling across all nodes; a constant vector scales to all zeros.
inline std::vector<double> min_max_scale(std::span<const double> p) {
  std::vector<double> out(p.size(), 0.0);
  if (p.empty()) return out;
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::clamp((p[i] - *lo) / range, 0.0, 1.0);
  return out;
}

inline std::size_t probability_bucket(double p_scaled, std::size_t num_buckets) {
  if (num_buckets < 1) throw ValidationError("num_buckets must be >= 1");
  if (!(p_scaled >= 0.0 && p_scaled <= 1.0)) {
    throw ValidationError("scaled probability must lie in [0, 1]");
  }
  const auto bucket = static_cast<std::size_t>(std::floor(p_scaled * static_cast<double>(num_buckets)));
  return std::min(bucket, num_buckets - 1);
}

}  // namespace kgembed
