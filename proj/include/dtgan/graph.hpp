#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtgan/data.hpp"
#include "dtgan/rng.hpp"

namespace dtgan {

// Observation window as a sequence of weighted graphs: node features are the
// relative displacements, adjacency carries the edge weights that modulate
// attention. Arrays are row-major [T_o x N x 2] and [T_o x N x N].
struct GraphSequence {
  int t_obs = 0;
  int n = 0;
  std::vector<double> node_feats;  // [T_o x N x 2]
  std::vector<double> adj;         // [T_o x N x N], zero diagonal

  double adj_at(int t, int i, int j) const {
    return adj[static_cast<std::size_t>((t * n + i) * n + j)];
  }
};

namespace graph_detail {

inline GraphSequence init_from_batch(const TrajectoryBatch& batch) {
  if (batch.n_peds() < 2) {
    throw std::invalid_argument(
        "build_graphs: need at least 2 pedestrians for interactions, got " +
        std::to_string(batch.n_peds()));
  }
  if (batch.obs_len < 1) {
    throw std::invalid_argument("build_graphs: batch has no observation window");
  }
  GraphSequence g;
  g.t_obs = batch.obs_len;
  g.n = batch.n_peds();
  const auto feat_count = static_cast<std::size_t>(g.t_obs * g.n * 2);
  g.node_feats.assign(batch.rel_disp.begin(),
                      batch.rel_disp.begin() + static_cast<long>(feat_count));
  g.adj.assign(static_cast<std::size_t>(g.t_obs * g.n * g.n), 0.0);
  return g;
}

}  // namespace graph_detail

// Edge weights drawn fresh from a seeded stream, independently per (t, i, j)
// off the diagonal, uniform on [0,1). This sampling is the model's noise
// source: every forward pass uses a new seed, and the same seed reproduces
// the same graphs bitwise.
inline GraphSequence build_graphs(const TrajectoryBatch& batch,
                                  std::uint64_t seed) {
  GraphSequence g = graph_detail::init_from_batch(batch);
  Rng rng(seed);
  for (int t = 0; t < g.t_obs; ++t)
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) {
        if (i == j) continue;
        g.adj[static_cast<std::size_t>((t * g.n + i) * g.n + j)] = rng.uniform();
      }
  return g;
}

enum class WeightScheme { ones, euclidean_reciprocal, arithmetic };

inline WeightScheme weight_scheme_from_string(const std::string& s) {
  if (s == "ones") return WeightScheme::ones;
  if (s == "euclidean_reciprocal") return WeightScheme::euclidean_reciprocal;
  if (s == "arithmetic") return WeightScheme::arithmetic;
  throw std::invalid_argument("unknown weight scheme '" + s + "'");
}

// Deterministic adjacency fills used by the weight-scheme comparison: all
// ones, reciprocal pairwise distance, or an arithmetic progression
// (0.1, 0.2, ...) over the off-diagonal entries of each frame.
inline GraphSequence build_fixed_weights(const TrajectoryBatch& batch,
                                         WeightScheme scheme) {
  GraphSequence g = graph_detail::init_from_batch(batch);
  for (int t = 0; t < g.t_obs; ++t) {
    int k = 0;
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) {
        if (i == j) continue;
        double w = 0.0;
        switch (scheme) {
          case WeightScheme::ones:
            w = 1.0;
            break;
          case WeightScheme::euclidean_reciprocal: {
            const double dx = batch.abs_at(t, i, 0) - batch.abs_at(t, j, 0);
            const double dy = batch.abs_at(t, i, 1) - batch.abs_at(t, j, 1);
            w = 1.0 / (std::sqrt(dx * dx + dy * dy) + 1e-8);
            break;
          }
          case WeightScheme::arithmetic:
            w = 0.1 + 0.1 * k;
            break;
        }
        g.adj[static_cast<std::size_t>((t * g.n + i) * g.n + j)] = w;
        ++k;
      }
  }
  return g;
}

}  // namespace dtgan
