// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "molgen/smiles.hpp"

namespace molgen {

std::vector<double> reward_schedule(int num_steps, const std::vector<char>& penalty_flags,
                                    bool valid, double score, const RewardConfig& cfg) {
  std::vector<double> rewards(num_steps, 0.0);
  double final_reward = valid ? cfg.scale * std::exp(score / cfg.temperature) : 0.0;
  for (int t = 1; t <= num_steps; ++t) {
    rewards[t - 1] = std::pow(cfg.gamma, num_steps - t) * final_reward;
    if (penalty_flags[t - 1]) rewards[t - 1] -= cfg.step_penalty;
  }
  return rewards;
}

namespace {

double score_final(const Scorer& scorer, const MolecularGraph& mol) {
  try {
    return scorer(mol);
  } catch (const std::exception& e) {
    std::string ident;
    try {
      ident = write_smiles(mol);
    } catch (...) {
      ident = "<" + std::to_string(mol.num_atoms()) + " atoms>";
    }
    throw ScorerFailure("scorer '" + scorer.spec.name + "' failed on " + ident + ": " + e.what());
  }
}

template <typename Traj>
void assign_rewards(Traj& traj, const Scorer& scorer, const RewardConfig& cfg) {
  bool valid = !traj.exhausted && traj.final_graph.num_atoms() > 0;
  double score = valid ? score_final(scorer, traj.final_graph) : 0.0;
  std::vector<char> flags;
  flags.reserve(traj.steps.size());
  for (const auto& s : traj.steps) flags.push_back(s.penalty ? 1 : 0);
  auto rewards = reward_schedule(static_cast<int>(traj.steps.size()), flags, valid, score, cfg);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) traj.steps[i].reward = rewards[i];
}

// Normalized advantages across every step in the update batch.
std::vector<float> normalized_advantages(const std::vector<double>& rewards) {
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  double denom = std::max(std::sqrt(var), 1e-8);
  std::vector<float> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    adv[i] = static_cast<float>((rewards[i] - mean) / denom);
  return adv;
}

struct StepRef {
  int traj;
  int step;
};

template <typename RecomputeLogp>
PpoStats ppo_core(int total_steps, const std::vector<double>& rewards,
                  const std::vector<double>& old_logps, const PpoConfig& cfg,
                  std::span<Parameter* const> params, Adam& opt, RecomputeLogp&& recompute) {
  // recompute(tape, flat_index) must rebuild logp_new for that step.
  std::vector<float> adv = normalized_advantages(rewards);
  for (Parameter* p : params) p->zero_grad();
  PpoStats stats;
  stats.steps = total_steps;
  const float inv_n = 1.0f / static_cast<float>(total_steps);
  for (int i = 0; i < total_steps; ++i) {
    Tape t;
    Val logp_new = recompute(t, i);
    Val ratio = t.exp(t.add_scalar(logp_new, static_cast<float>(-old_logps[i])));
    Val unclipped = t.scale(ratio, adv[i]);
    Val clipped = t.scale(t.clamp(ratio, 1.0f - cfg.clip, 1.0f + cfg.clip), adv[i]);
    Val term = t.minimum(unclipped, clipped);
    // Ascent on the objective: minimize its negation, averaged over steps.
    Val loss = t.scale(term, -inv_n);
    t.backward(loss);
    double r = t.scalar(ratio);
    stats.mean_ratio += r / total_steps;
    if (r < 1.0 - cfg.clip || r > 1.0 + cfg.clip) stats.clipped_fraction += 1.0 / total_steps;
    stats.objective += t.scalar(term) / total_steps;
  }
  opt.step(params);
  return stats;
}

}  // namespace

void compute_rewards(GcpnTrajectory& traj, const Scorer& scorer, const RewardConfig& cfg) {
  assign_rewards(traj, scorer, cfg);
}

void compute_rewards(GraphAfTrajectory& traj, const Scorer& scorer, const RewardConfig& cfg) {
  assign_rewards(traj, scorer, cfg);
}

PpoStats ppo_update(GcpnPolicy& policy, const ScaffoldSet& scaffolds,
                    std::vector<GcpnTrajectory>& batch, const PpoConfig& cfg, Adam& opt) {
  std::vector<StepRef> refs;
  std::vector<double> rewards, old_logps;
  for (int ti = 0; ti < static_cast<int>(batch.size()); ++ti) {
    for (int si = 0; si < static_cast<int>(batch[ti].steps.size()); ++si) {
      refs.push_back({ti, si});
      rewards.push_back(batch[ti].steps[si].reward);
      old_logps.push_back(batch[ti].steps[si].logp);
    }
  }
  if (refs.empty()) return {};
  auto params = policy.parameters();
  return ppo_core(
      static_cast<int>(refs.size()), rewards, old_logps, cfg, params, opt, [&](Tape& t, int i) {
        const GcpnStep& step = batch[refs[i].traj].steps[refs[i].step];
        std::vector<Val> scaf = embed_scaffolds(t, policy, scaffolds);
        GraphContext ctx = policy.gnn.make_context(step.state);
        return gcpn_action_log_prob(t, policy, ctx, scaf, step.action, /*train_bn=*/false).logp;
      });
}

PpoStats ppo_update(GraphAfModel& model, std::vector<GraphAfTrajectory>& batch,
                    const PpoConfig& cfg, Adam& opt) {
  std::vector<StepRef> refs;
  std::vector<double> rewards, old_logps;
  for (int ti = 0; ti < static_cast<int>(batch.size()); ++ti) {
    for (int si = 0; si < static_cast<int>(batch[ti].steps.size()); ++si) {
      refs.push_back({ti, si});
      rewards.push_back(batch[ti].steps[si].reward);
      old_logps.push_back(batch[ti].steps[si].logp);
    }
  }
  if (refs.empty()) return {};
  auto params = model.parameters();
  return ppo_core(static_cast<int>(refs.size()), rewards, old_logps, cfg, params, opt,
                  [&](Tape& t, int i) {
                    const GraphAfStep& step = batch[refs[i].traj].steps[refs[i].step];
                    return graphaf_step_log_prob(t, model, step, /*train_bn=*/false);
                  });
}

namespace {

// Rollout collection with per-index RNG streams: results are identical
// regardless of worker count.
template <typename Traj, typename RolloutFn>
std::vector<Traj> collect_batch(int count, std::uint64_t seed, std::uint64_t base_index,
                                int workers, RolloutFn&& rollout) {
  std::vector<Traj> out(count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) {
      Rng rng = make_rng(seed).fork(base_index + i);
      out[i] = rollout(rng);
    }
    return out;
  }
  std::vector<std::thread> pool;
  std::size_t stride = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      std::size_t lo = w * stride;
      std::size_t hi = std::min<std::size_t>(lo + stride, count);
      for (std::size_t i = lo; i < hi; ++i) {
        Rng rng = make_rng(seed).fork(base_index + i);
        out[i] = rollout(rng);
      }
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

template <typename Traj, typename RolloutFn, typename UpdateFn>
std::vector<EpochLog> finetune_loop(const Scorer& scorer, const RewardConfig& rcfg,
                                    const PpoConfig& cfg, std::uint64_t seed, RolloutFn&& rollout,
                                    UpdateFn&& update) {
  std::vector<EpochLog> log;
  std::uint64_t rollout_counter = 0;
  bool stopped = false;
  for (int epoch = 0; epoch <= cfg.epochs && !stopped; ++epoch) {
    const bool train = epoch > 0;
    EpochLog row;
    row.epoch = epoch;
    int collected = 0;
    double sum_reward = 0.0, sum_score = 0.0, max_score = -1e300;
    int valid_count = 0;
    std::vector<Traj> pending;
    int pending_batches = 0;
    while (collected < cfg.rollouts_per_epoch && !stopped) {
      int want = std::min(cfg.batch, cfg.rollouts_per_epoch - collected);
      std::vector<Traj> batch =
          collect_batch<Traj>(want, seed, rollout_counter, cfg.workers, rollout);
      rollout_counter += want;
      collected += want;
      bool all_singletons = true;
      for (auto& traj : batch) {
        compute_rewards(traj, scorer, rcfg);
        double score = traj.final_graph.num_atoms() > 0 ? score_final(scorer, traj.final_graph)
                                                        : 0.0;
        sum_score += score;
        max_score = std::max(max_score, score);
        bool valid = !traj.exhausted && traj.final_graph.num_atoms() > 0;
        if (valid) ++valid_count;
        sum_reward +=
            valid ? rcfg.scale * std::exp(score / rcfg.temperature) : 0.0;
        if (traj.final_graph.num_atoms() > 1) all_singletons = false;
      }
      if (all_singletons) {
        row.stopped_early = true;
        stopped = true;
      }
      if (train && !stopped) {
        for (auto& traj : batch) pending.push_back(std::move(traj));
        ++pending_batches;
        if (pending_batches >= cfg.agent_interval) {
          update(pending);
          pending.clear();
          pending_batches = 0;
        }
      }
    }
    if (train && !pending.empty() && !stopped) {
      update(pending);  // flush the tail so epochs are self-contained
    }
    row.mean_reward = sum_reward / std::max(collected, 1);
    row.mean_score = sum_score / std::max(collected, 1);
    row.max_score = collected > 0 ? max_score : 0.0;
    row.validity_rate = static_cast<double>(valid_count) / std::max(collected, 1);
    log.push_back(row);
  }
  return log;
}

}  // namespace

std::vector<EpochLog> finetune(GcpnPolicy& policy, const ScaffoldSet& scaffolds,
                               const Scorer& scorer, const RewardConfig& rcfg,
                               const PpoConfig& cfg, std::uint64_t seed) {
  Adam opt(cfg.lr);
  return finetune_loop<GcpnTrajectory>(
      scorer, rcfg, cfg, seed,
      [&](Rng& rng) {
        return gcpn_rollout(policy, scaffolds, cfg.max_size, cfg.resample_budget, rng);
      },
      [&](std::vector<GcpnTrajectory>& batch) { ppo_update(policy, scaffolds, batch, cfg, opt); });
}

std::vector<EpochLog> finetune(GraphAfModel& model, const Scorer& scorer,
                               const RewardConfig& rcfg, const PpoConfig& cfg,
                               std::uint64_t seed) {
  Adam opt(cfg.lr);
  return finetune_loop<GraphAfTrajectory>(
      scorer, rcfg, cfg, seed,
      [&](Rng& rng) { return graphaf_rollout(model, cfg.max_size, cfg.resample_budget, rng); },
      [&](std::vector<GraphAfTrajectory>& batch) { ppo_update(model, batch, cfg, opt); });
}

}  // namespace molgen
