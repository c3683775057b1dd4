// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_GRAPHAF_HPP
#define MOLGEN_GRAPHAF_HPP

#include <utility>
#include <vector>

#include "molgen/layers.hpp"

namespace molgen {

inline constexpr int kNodeClasses = kElementCount;      // 9 atom types
inline constexpr int kEdgeClasses = kBondTypeCount + 1;  // 3 bonds + no-edge
inline constexpr int kNoEdgeClass = kBondTypeCount;
inline constexpr float kLogSigmaClamp = 5.0f;
inline constexpr float kDequantScale = 0.9f;

// Autoregressive affine flow over node- and edge-type decisions, conditioned
// on the partial graph through the GNN. The node and edge MLPs are two
// fully-connected layers with tanh, emitting (mu, log sigma).
struct GraphAfModel {
  GnnModel gnn;
  Mlp node_mlp;  // [d] -> 2 * kNodeClasses
  Mlp edge_mlp;  // [3d] -> 2 * kEdgeClasses

  static GraphAfModel make(const GnnConfig& cfg, Rng& rng);
  std::vector<Parameter*> parameters();
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);
};

// x = mu + sigma .* z with sigma = exp(clamp(log sigma)); logdet = sum log sigma.
struct FlowForwardOut {
  Val x;
  Val logdet;
};
FlowForwardOut flow_forward(Tape& t, Val z, Val cond, Mlp& mlp, int k);

// z = (x - mu) / sigma; returns -logdet.
struct FlowInverseOut {
  Val z;
  Val neg_logdet;
};
FlowInverseOut flow_inverse(Tape& t, Val x, Val cond, Mlp& mlp, int k);

// Exact flow log-density of a continuous sample x under the conditioning
// embedding: log N(flow_inverse(x); 0, I) - logdet.
Val flow_log_prob(Tape& t, Mlp& mlp, Val cond, const Tensor& x, int k);

// Node embeddings and graph embedding of a (possibly empty) partial graph.
struct PartialEmbedding {
  Val node_emb;   // invalid when the graph is empty
  Val graph_emb;  // zeros for the empty graph
};
PartialEmbedding embed_partial(Tape& t, GnnModel& gnn, const GraphContext& ctx, bool train_bn);

// One recorded flow decision. For edge steps the deciding node is the last
// node of `state` and `edge_to` names the candidate neighbor.
struct GraphAfStep {
  MolecularGraph state{MolecularGraph::kDefaultMaxNodes};
  bool is_node = true;
  int edge_to = -1;
  Tensor x;  // [1, k] continuous sample
  int decision = 0;
  double logp = 0.0;
  bool penalty = false;
  double reward = 0.0;
};

struct GraphAfTrajectory {
  std::vector<GraphAfStep> steps;
  MolecularGraph final_graph{MolecularGraph::kDefaultMaxNodes};
  bool exhausted = false;
};

// Draws one decision: z ~ N(0,I), x = flow(z), argmax decode. Edge decisions
// that violate valence are redrawn up to `resample_budget` times, then
// no-edge is forced (the step keeps the sampled x and gets the penalty flag).
GraphAfStep sample_step(GraphAfModel& model, const MolecularGraph& partial, bool node_step,
                        int edge_to, int resample_budget, Rng& rng);

// Full generation episode: nodes are added until one fails to connect to the
// existing graph (the dangling node is dropped) or the size cap is reached.
GraphAfTrajectory graphaf_rollout(GraphAfModel& model, int max_size, int resample_budget,
                                  Rng& rng);

// Log-probability of a recorded step under the current parameters (used by
// PPO); eval-mode batch norm to match sampling.
Val graphaf_step_log_prob(Tape& t, GraphAfModel& model, const GraphAfStep& step, bool train_bn);

// Exact dequantized negative log-likelihood of a molecule, decomposed in BFS
// order; returns separate node and edge means.
struct GraphAfNll {
  Val nll_n;
  Val nll_e;
  int node_terms = 0;
  int edge_terms = 0;
};
GraphAfNll graphaf_nll(Tape& t, GraphAfModel& model, const MolecularGraph& mol, Rng& rng,
                       bool train_bn);

struct GraphAfPretrainStats {
  double nll_n = 0.0;
  double nll_e = 0.0;
};

GraphAfPretrainStats graphaf_pretrain_step(GraphAfModel& model,
                                           const std::vector<const MolecularGraph*>& batch,
                                           Adam& opt, Rng& rng);

}  // namespace molgen

#endif  // MOLGEN_GRAPHAF_HPP
