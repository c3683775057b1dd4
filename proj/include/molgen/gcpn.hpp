// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_GCPN_HPP
#define MOLGEN_GCPN_HPP

#include <functional>
#include <utility>
#include <vector>

#include "molgen/layers.hpp"

namespace molgen {

// Link-prediction action on an intermediate graph. `second` indexes the
// current graph's nodes first, then the scaffold fragments.
struct GcpnAction {
  bool stop = false;
  int first = -1;
  int second = -1;
  BondType bond = BondType::Single;
};

struct ScaffoldSet {
  std::vector<MolecularGraph> fragments;

  // The nine single-atom fragments, in element order.
  static ScaffoldSet single_atoms();
  // Index of the single-atom fragment with this element; throws if the set
  // holds anything else at that type.
  int single_atom_index(Element e) const;
};

ScaffoldSet load_scaffolds(const std::string& path);

struct GenerationState {
  MolecularGraph graph;
  int step = 0;
  bool done = false;
};

struct GcpnPolicy {
  GnnModel gnn;
  Mlp f_first;   // node embedding -> logit
  Mlp f_second;  // [candidate, first, graph] -> logit
  Mlp f_bond;    // [first, second] -> 3 logits
  Mlp f_stop;    // graph embedding -> logit
  Tensor seed_marginal;  // [1, 9] atom-type distribution for the seed atom

  static GcpnPolicy make(const GnnConfig& cfg, Rng& rng);
  std::vector<Parameter*> parameters();
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);
};

// Scaffold attachment-point embeddings. Scaffolds are always embedded with
// eval-mode batch norm so candidate identities survive single-node batches.
std::vector<Val> embed_scaffolds(Tape& t, GcpnPolicy& policy, const ScaffoldSet& scaffolds);

// Factored action distribution at one state, conditioned the way sampling
// proceeds: `second_probs` assumes `first`, `bond_probs` assumes both.
struct GcpnComponents {
  double stop_prob;
  std::vector<double> first_probs;
  std::vector<double> second_probs;
  std::vector<double> bond_probs;
};

GcpnComponents policy_distribution(GcpnPolicy& policy, const GenerationState& state,
                                   const ScaffoldSet& scaffolds, int first_choice = 0,
                                   int second_choice = 0);

// Log-probability of a fixed action, built on a tape for gradients, plus
// argmax-correctness bookkeeping for teacher forcing.
struct GcpnActionScore {
  Val logp;
  int heads = 0;    // component decisions contributing to logp
  int correct = 0;  // of those, argmax-correct
};

GcpnActionScore gcpn_action_log_prob(Tape& t, GcpnPolicy& policy, const GraphContext& state,
                                     const std::vector<Val>& scaffold_emb,
                                     const GcpnAction& action, bool train_bn);

// Draws one action from the policy. Returns the action and its log-prob.
std::pair<GcpnAction, double> gcpn_sample_action(GcpnPolicy& policy, const GenerationState& state,
                                                 const ScaffoldSet& scaffolds, Rng& rng);

struct StepOutcome {
  GenerationState next;
  GcpnAction action;   // the action finally applied (or last rejected draw)
  double logp = 0.0;
  bool terminal = false;
  bool exhausted = false;  // resample budget ran out
  int rejections = 0;
};

using ActionSampler = std::function<std::pair<GcpnAction, double>()>;

// Applies an action; invalid draws (valence violation, duplicate edge, size
// overflow) are redrawn up to `resample_budget` times, after which the
// episode terminates with the exhaustion flag set. Failures are in-band.
StepOutcome apply_action(const GenerationState& state, GcpnAction first_try, double first_logp,
                         const ActionSampler& redraw, int resample_budget,
                         const ScaffoldSet& scaffolds, int max_size);

struct GcpnStep {
  MolecularGraph state;  // graph before the action
  GcpnAction action;
  double logp = 0.0;
  bool penalty = false;  // at least one valence rejection happened here
  double reward = 0.0;   // filled by compute_rewards
};

struct GcpnTrajectory {
  std::vector<GcpnStep> steps;
  MolecularGraph final_graph{MolecularGraph::kDefaultMaxNodes};
  bool exhausted = false;
};

GcpnTrajectory gcpn_rollout(GcpnPolicy& policy, const ScaffoldSet& scaffolds, int max_size,
                            int resample_budget, Rng& rng);

// Teacher-forcing decomposition: BFS from node 0, neighbors in index order.
// Atom additions become scaffold attachments, remaining edges become
// link actions, and the sequence ends with stop.
struct GcpnDecomposition {
  std::vector<MolecularGraph> states;
  std::vector<GcpnAction> actions;
};

GcpnDecomposition decompose_bfs(const MolecularGraph& g, const ScaffoldSet& scaffolds);

struct PretrainStats {
  double nll_all = 0.0;
  double acc = 0.0;
};

// One teacher-forced Adam step over a batch of molecules.
PretrainStats gcpn_pretrain_step(GcpnPolicy& policy, const std::vector<const MolecularGraph*>& batch,
                                 const ScaffoldSet& scaffolds, Adam& opt);

}  // namespace molgen

#endif  // MOLGEN_GCPN_HPP
