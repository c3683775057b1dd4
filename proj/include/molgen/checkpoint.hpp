// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_CHECKPOINT_HPP
#define MOLGEN_CHECKPOINT_HPP

#include <optional>
#include <string>

#include "molgen/finetune.hpp"

namespace molgen {

enum class Framework { kGcpn, kGraphAf };

const char* framework_name(Framework f);
std::optional<Framework> framework_from_name(std::string_view name);

// Run-level configuration, echoed into every artifact.
struct RunConfig {
  Framework framework = Framework::kGcpn;
  LayerKind gnn = LayerKind::kRgcn;
  bool edge_features = true;  // GCPN default on; GraphAF default off (+e turns it on)
  int layers = 3;
  int hidden = 256;
  int heads = 3;
  std::uint64_t seed = 0;
  float pna_delta = 1.0f;
  int max_size = MolecularGraph::kDefaultMaxNodes;
  int resample_budget = 20;
  float pretrain_lr = 1e-3f;
  int pretrain_batch = 0;  // 0: framework default (128 GCPN, 32 GraphAF)
  RewardConfig reward;
  PpoConfig ppo;

  GnnConfig gnn_config() const;
  int effective_pretrain_batch() const;
  // Aligns hidden down to a multiple of `heads` for attention models.
  void normalize();
};

// Framework defaults for edge features: the original GCPN aggregates them,
// the original GraphAF does not.
bool default_edge_features(Framework f);

// Fine-tuning presets per (framework, gnn, task) with the published reward
// scale factors. Tasks: plogp, qed, sa, drd2, median1, median2.
struct TaskDefaults {
  int hidden = 256;
  float lr = 1e-5f;
  double reward_scale = 1.0;
};
std::optional<TaskDefaults> paper_task_defaults(Framework f, LayerKind gnn,
                                                const std::string& task);

// Either generator plus its configuration; what checkpoints serialize.
struct ModelBundle {
  RunConfig cfg;
  std::optional<GcpnPolicy> gcpn;
  std::optional<GraphAfModel> graphaf;

  static ModelBundle make(const RunConfig& cfg);
  std::vector<std::pair<std::string, Tensor*>> state();
  std::vector<Parameter*> parameters();
};

// Checkpoint format, versioned by the magic:
//   MGF1\n
//   <tensor name> <rows> <cols>\n   (one per tensor, fixed order)
//   \n
//   <payload: little-endian float32, manifest order>
//   [config]\n
//   <key> = <value>\n ...
// Save/load/save round-trips byte-identically.
void save_checkpoint(const std::string& path, ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

// Config block serialization (also reused by metric-log headers).
std::string config_echo(const RunConfig& cfg);
RunConfig parse_config_echo(const std::string& text);

}  // namespace molgen

#endif  // MOLGEN_CHECKPOINT_HPP
