#pragma once

#include <span>
#include <vector>

#include "refol/common.hpp"
#include "refol/gru.hpp"
#include "refol/traffic_data.hpp"

namespace refol {

// Per-round induced subgraph over the participants plus the virtual
// participant (always the last index). Every node points to the virtual
// node; participant self-loops are forced so indegrees stay >= 1.
struct ParticipantGraph {
  std::vector<int> participant_ids;  // ascending client indices
  BoolMatrix adjacency_aug;          // (Nt+1) x (Nt+1)
  std::vector<int> indegree_aug;     // column sums, all >= 1

  int participant_count() const { return static_cast<int>(participant_ids.size()); }
};

// Normalized v_{i,Nt+1}; last entry is the weight of the previous global
// model. Entries are nonnegative and sum to 1.
struct AggregationWeights {
  std::vector<double> weights;
};

ParticipantGraph build_participant_graph(const BoolMatrix& full_adjacency,
                                         std::span<const int> participants);

// Dense M = D^{-1/2} A D^{-1/2}: entry (i,j) = 1/sqrt(d_i d_j) if a_{i,j},
// else 0. Row-major (Nt+1)^2. Parameter-free, no nonlinearity.
std::vector<double> convolution_operator(const ParticipantGraph& graph);

// Two-layer graph convolution: last column of M^2, normalized to sum 1.
// Computed as M * (last column of M) rather than a full matrix square.
AggregationWeights aggregation_weights(const ParticipantGraph& graph);

// layers = 0 gives uniform 1/(Nt+1) averaging over locals and the global
// model; layers >= 1 gives the normalized last column of M^layers.
AggregationWeights aggregation_weights_k(const ParticipantGraph& graph, int layers);

// Parameter-wise convex combination per the weights; locals are ordered as
// participant_ids and accumulated in ascending index order with the
// global-model term added last, so the result is bit-deterministic.
ModelParams aggregate(const ModelParams& global, const std::vector<ModelParams>& locals,
                      const AggregationWeights& weights);

}  // namespace refol
