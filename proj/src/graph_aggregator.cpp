#include "refol/graph_aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace refol {

ParticipantGraph build_participant_graph(const BoolMatrix& full_adjacency,
                                         std::span<const int> participants) {
  if (participants.empty()) {
    throw ValidationError("build_participant_graph: empty participant set");
  }
  ParticipantGraph g;
  g.participant_ids.assign(participants.begin(), participants.end());
  std::sort(g.participant_ids.begin(), g.participant_ids.end());
  for (std::size_t i = 0; i + 1 < g.participant_ids.size(); ++i) {
    if (g.participant_ids[i] == g.participant_ids[i + 1]) {
      throw ValidationError("build_participant_graph: duplicate participant index " +
                            std::to_string(g.participant_ids[i]));
    }
  }
  const int nt = g.participant_count();
  for (int id : g.participant_ids) {
    if (id < 0 || id >= full_adjacency.n) {
      throw ValidationError("build_participant_graph: participant index " + std::to_string(id) +
                            " outside [0, " + std::to_string(full_adjacency.n - 1) + "]");
    }
  }

  g.adjacency_aug = BoolMatrix(nt + 1);
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nt; ++j) {
      // Induced subgraph with self-loops forced true so indegrees stay
      // positive for the D^{-1/2} normalization.
      const bool edge = i == j || full_adjacency.at(g.participant_ids[i], g.participant_ids[j]);
      g.adjacency_aug.set(i, j, edge);
    }
  }
  // Every node points to the virtual participant; the virtual participant
  // points only to itself.
  for (int i = 0; i <= nt; ++i) g.adjacency_aug.set(i, nt, true);

  g.indegree_aug.assign(nt + 1, 0);
  for (int j = 0; j <= nt; ++j) {
    int deg = 0;
    for (int i = 0; i <= nt; ++i) deg += g.adjacency_aug.at(i, j) ? 1 : 0;
    g.indegree_aug[j] = deg;
  }
  return g;
}

std::vector<double> convolution_operator(const ParticipantGraph& graph) {
  const int n = graph.participant_count() + 1;
  std::vector<double> inv_sqrt(n);
  for (int i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(graph.indegree_aug[i]));
  std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (graph.adjacency_aug.at(i, j)) {
        m[static_cast<std::size_t>(i) * n + j] = inv_sqrt[i] * inv_sqrt[j];
      }
    }
  }
  return m;
}

AggregationWeights aggregation_weights_k(const ParticipantGraph& graph, int layers) {
  if (layers < 0) throw ValidationError("aggregation_weights_k: layers must be >= 0");
  const int n = graph.participant_count() + 1;
  AggregationWeights w;
  if (layers == 0) {
    w.weights.assign(n, 1.0 / n);
    return w;
  }

  const auto m = convolution_operator(graph);
  // Column N_t+1 of M^k, built as k-1 mat-vec products on M's last column.
  std::vector<double> col(n);
  for (int i = 0; i < n; ++i) col[i] = m[static_cast<std::size_t>(i) * n + (n - 1)];
  std::vector<double> next(n);
  for (int step = 1; step < layers; ++step) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      const double* row = m.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) acc += row[j] * col[j];
      next[i] = acc;
    }
    col.swap(next);
  }

  double sum = 0.0;
  for (double v : col) sum += v;
  w.weights.resize(n);
  for (int i = 0; i < n; ++i) w.weights[i] = col[i] / sum;
  return w;
}

AggregationWeights aggregation_weights(const ParticipantGraph& graph) {
  return aggregation_weights_k(graph, 2);
}

ModelParams aggregate(const ModelParams& global, const std::vector<ModelParams>& locals,
                      const AggregationWeights& weights) {
  if (weights.weights.size() != locals.size() + 1) {
    throw ValidationError("aggregate: weight count must equal participants + 1");
  }
  auto same_shape = [&global](const ModelParams& p) {
    return p.hidden_size == global.hidden_size &&
           p.forecast_horizon == global.forecast_horizon;
  };
  for (const auto& l : locals) {
    if (!same_shape(l)) throw ValidationError("aggregate: model shape mismatch");
  }

  ModelParams out = zeros_like(global);
  auto add_scaled = [](ModelParams& dst, const ModelParams& src, double w) {
    auto axpy = [w](std::vector<double>& d, const std::vector<double>& s) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += w * s[i];
    };
    axpy(dst.w_update, src.w_update);
    axpy(dst.w_reset, src.w_reset);
    axpy(dst.w_cand, src.w_cand);
    axpy(dst.u_update, src.u_update);
    axpy(dst.u_reset, src.u_reset);
    axpy(dst.u_cand, src.u_cand);
    axpy(dst.b_update, src.b_update);
    axpy(dst.b_reset, src.b_reset);
    axpy(dst.b_cand, src.b_cand);
    axpy(dst.v_out, src.v_out);
    axpy(dst.b_out, src.b_out);
  };
  // Ascending participant order first, the previous global model last.
  for (std::size_t i = 0; i < locals.size(); ++i) {
    add_scaled(out, locals[i], weights.weights[i]);
  }
  add_scaled(out, global, weights.weights.back());
  return out;
}

}  // namespace refol
