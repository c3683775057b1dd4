// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_FINETUNE_HPP
#define MOLGEN_FINETUNE_HPP

#include <vector>

#include "molgen/gcpn.hpp"
#include "molgen/graphaf.hpp"
#include "molgen/scorers.hpp"

namespace molgen {

struct RewardConfig {
  double temperature = 1.0;  // t in scale * exp(score / t)
  double scale = 1.0;
  double gamma = 0.9;        // discount used to spread the final reward
  double step_penalty = 0.1; // charged to steps that hit valence rejections
};

struct PpoConfig {
  float clip = 0.2f;
  int epochs = 5;
  int batch = 32;
  int agent_interval = 3;  // update every this many batches (3 GCPN, 5 GraphAF)
  float lr = 1e-4f;
  int rollouts_per_epoch = 200;
  int max_size = MolecularGraph::kDefaultMaxNodes;
  int resample_budget = 20;
  int workers = 1;
};

// Per-step rewards for a terminated episode: the final reward
// R = scale * exp(score / temperature) (0 when the episode is invalid) is
// distributed as gamma^(T-t) * R, and every penalty-flagged step additionally
// receives -step_penalty. Computed in double precision.
std::vector<double> reward_schedule(int num_steps, const std::vector<char>& penalty_flags,
                                    bool valid, double score, const RewardConfig& cfg);

// Applies reward_schedule to a trajectory, scoring its final molecule.
// Scorer exceptions surface as ScorerFailure naming the molecule.
void compute_rewards(GcpnTrajectory& traj, const Scorer& scorer, const RewardConfig& cfg);
void compute_rewards(GraphAfTrajectory& traj, const Scorer& scorer, const RewardConfig& cfg);

struct PpoStats {
  double mean_ratio = 0.0;
  double clipped_fraction = 0.0;
  double objective = 0.0;
  int steps = 0;
};

// Clipped-surrogate ascent step: advantages are the per-step rewards minus
// the batch mean, normalized to unit variance; the objective is
// mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) with r = exp(logp_new - logp_old).
PpoStats ppo_update(GcpnPolicy& policy, const ScaffoldSet& scaffolds,
                    std::vector<GcpnTrajectory>& batch, const PpoConfig& cfg, Adam& opt);
PpoStats ppo_update(GraphAfModel& model, std::vector<GraphAfTrajectory>& batch,
                    const PpoConfig& cfg, Adam& opt);

struct EpochLog {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_score = 0.0;
  double max_score = 0.0;
  double validity_rate = 0.0;
  bool stopped_early = false;
};

// Rollout/update loop shared by both frameworks. Epoch 0 is an
// evaluation-only pass; epochs 1..cfg.epochs train. Stops early when an
// entire batch collapses to singleton molecules.
std::vector<EpochLog> finetune(GcpnPolicy& policy, const ScaffoldSet& scaffolds,
                               const Scorer& scorer, const RewardConfig& rcfg,
                               const PpoConfig& cfg, std::uint64_t seed);
std::vector<EpochLog> finetune(GraphAfModel& model, const Scorer& scorer,
                               const RewardConfig& rcfg, const PpoConfig& cfg,
                               std::uint64_t seed);

}  // namespace molgen

#endif  // MOLGEN_FINETUNE_HPP
