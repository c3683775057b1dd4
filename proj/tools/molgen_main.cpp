// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line workbench: corpus ingestion, pretraining, RL fine-tuning,
// generation, scoring, and the expressiveness tools.

#include <cstdio>

#include "CLI11.hpp"
#include "molgen/commands.hpp"

namespace {

using namespace molgen;

struct CommonModelFlags {
  std::string framework = "gcpn";
  std::string gnn = "rgcn";
  bool edge_on = false;
  bool edge_off = false;
  int layers = 3;
  int hidden = 256;
  int heads = 3;
  std::uint64_t seed = 0;
  int max_size = MolecularGraph::kDefaultMaxNodes;
  int resample = 20;
};

RunConfig build_run_config(const CommonModelFlags& f, bool agent_interval_given,
                           int agent_interval) {
  RunConfig cfg;
  auto fw = framework_from_name(f.framework);
  if (!fw) throw Error("--framework must be gcpn or graphaf");
  cfg.framework = *fw;
  auto kind = layer_kind_from_name(f.gnn);
  if (!kind) throw Error("--gnn must be one of gcn,rgcn,gin,gat,gatv2,pna,gsn,gearnet");
  cfg.gnn = *kind;
  cfg.edge_features = default_edge_features(cfg.framework);
  if (f.edge_on) cfg.edge_features = true;
  if (f.edge_off) cfg.edge_features = false;
  cfg.layers = f.layers;
  cfg.hidden = f.hidden;
  cfg.heads = f.heads;
  cfg.seed = f.seed;
  cfg.max_size = f.max_size;
  cfg.resample_budget = f.resample;
  cfg.ppo.agent_interval =
      agent_interval_given ? agent_interval : (cfg.framework == Framework::kGcpn ? 3 : 5);
  cfg.ppo.max_size = cfg.max_size;
  cfg.ppo.resample_budget = cfg.resample_budget;
  return cfg;
}

void add_model_flags(CLI::App* cmd, CommonModelFlags& f) {
  cmd->add_option("--framework", f.framework, "Generative framework: gcpn or graphaf")
      ->capture_default_str();
  cmd->add_option("--gnn", f.gnn, "GNN layer kind: gcn,rgcn,gin,gat,gatv2,pna,gsn,gearnet")
      ->capture_default_str();
  cmd->add_flag("--edge-features", f.edge_on, "Aggregate edge features in messages");
  cmd->add_flag("--no-edge-features", f.edge_off, "Disable edge-feature aggregation");
  cmd->add_option("--layers", f.layers, "Number of GNN layers")->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "Hidden width")->capture_default_str();
  cmd->add_option("--heads", f.heads, "Attention heads (gat/gatv2)")->capture_default_str();
  cmd->add_option("--seed", f.seed, "RNG seed")->capture_default_str();
  cmd->add_option("--max-size", f.max_size, "Maximum molecule size")->capture_default_str();
  cmd->add_option("--resample", f.resample, "Valence resampling budget")->capture_default_str();
}

std::pair<int, int> parse_cycles(const std::string& text) {
  auto dots = text.find("..");
  if (dots == std::string::npos) {
    int k = std::stoi(text);
    return {k, k};
  }
  return {std::stoi(text.substr(0, dots)), std::stoi(text.substr(dots + 2))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"molecular graph generation workbench"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key = value file");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Teacher-forced pretraining on a SMILES corpus");
  CommonModelFlags pre_flags;
  add_model_flags(pre, pre_flags);
  std::string pre_data, pre_out, pre_metrics, pre_task;
  int pre_epochs = 1, pre_batch = 0, pre_max_steps = 0, pre_agent_interval = 3;
  float pre_lr = 1e-3f;
  bool pre_strict = false;
  pre->add_option("--data", pre_data, "SMILES corpus path")->required();
  pre->add_option("--out", pre_out, "Output checkpoint path")->required();
  pre->add_option("--metrics", pre_metrics, "Metrics CSV path (default <out>.metrics.csv)");
  pre->add_option("--epochs", pre_epochs, "Training epochs")->capture_default_str();
  pre->add_option("--batch", pre_batch, "Batch size (default 128 gcpn / 32 graphaf)");
  pre->add_option("--lr", pre_lr, "Adam learning rate")->capture_default_str();
  pre->add_option("--max-steps", pre_max_steps, "Stop after this many optimization steps");
  pre->add_flag("--strict", pre_strict, "Abort on the first corpus parse error");
  auto* pre_ai = pre->add_option("--agent-interval", pre_agent_interval,
                                 "Batches between RL updates (echoed into the checkpoint)");
  pre->add_option("--paper-task", pre_task, "Apply the published (hidden, lr) preset for a task");

  // finetune
  auto* fin = app.add_subcommand("finetune", "PPO fine-tuning toward a scorer");
  FinetuneOptions fopt;
  std::string fin_ckpt, fin_out;
  double fin_temp = 0, fin_scale = 0, fin_gamma = 0, fin_penalty = 0;
  int fin_epochs = 0, fin_interval = 0, fin_rollouts = 0, fin_batch = 0, fin_workers = 0;
  float fin_lr = 0;
  std::uint64_t fin_seed = 0;
  fin->add_option("--ckpt", fin_ckpt, "Input checkpoint")->required();
  fin->add_option("--out", fin_out, "Output checkpoint")->required();
  fin->add_option("--scorer", fopt.scorer, "Scorer spec: name[:key=value,...]")->required();
  fin->add_option("--log", fopt.log_csv, "Metric log CSV (default <out>.log.csv)");
  auto* o_temp = fin->add_option("--temp", fin_temp, "Reward temperature");
  auto* o_scale = fin->add_option("--scale", fin_scale, "Reward scale factor");
  auto* o_gamma = fin->add_option("--gamma", fin_gamma, "Reward discount");
  auto* o_pen = fin->add_option("--step-penalty", fin_penalty, "Valence rejection penalty");
  auto* o_epochs = fin->add_option("--epochs", fin_epochs, "Fine-tuning epochs (default 5)");
  auto* o_int = fin->add_option("--agent-interval", fin_interval, "Batches between updates");
  auto* o_lr = fin->add_option("--lr", fin_lr, "PPO Adam learning rate");
  auto* o_roll = fin->add_option("--rollouts", fin_rollouts, "Rollouts per epoch");
  auto* o_batch = fin->add_option("--batch", fin_batch, "Rollout batch size");
  auto* o_workers = fin->add_option("--workers", fin_workers, "Parallel rollout workers");
  auto* o_seed = fin->add_option("--seed", fin_seed, "Override the checkpoint seed");
  fin->add_option("--scaffolds", fopt.scaffolds_path, "Scaffold SMILES file (gcpn)");
  fin->add_option("--paper-task", fopt.paper_task, "Apply the published preset for a task");

  // generate
  auto* gen = app.add_subcommand("generate", "Sample molecules from a checkpoint");
  GenerateOptions gopt;
  std::string gen_ckpt, gen_out;
  int gen_max_size = 0, gen_resample = -1, gen_workers = 0;
  std::uint64_t gen_seed = 0;
  gen->add_option("--ckpt", gen_ckpt, "Checkpoint path")->required();
  gen->add_option("--out", gen_out, "Output SMILES file")->required();
  gen->add_option("--count", gopt.count, "Number of molecules")->capture_default_str();
  auto* g_ms = gen->add_option("--max-size", gen_max_size, "Maximum molecule size");
  auto* g_rs = gen->add_option("--resample", gen_resample, "Valence resampling budget");
  auto* g_seed = gen->add_option("--seed", gen_seed, "Override the checkpoint seed");
  auto* g_work = gen->add_option("--workers", gen_workers, "Parallel workers");
  gen->add_option("--scaffolds", gopt.scaffolds_path, "Scaffold SMILES file (gcpn)");

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "Score a SMILES file and list the top molecules");
  EvaluateOptions eopt;
  eva->add_option("--in", eopt.input, "Input SMILES file")->required();
  eva->add_option("--scorer", eopt.scorer, "Scorer spec")->required();
  eva->add_option("--top", eopt.top, "Rows to report")->capture_default_str();
  eva->add_option("--csv", eopt.csv, "Also write rows to this CSV file");

  // wl
  auto* wl = app.add_subcommand("wl", "1-WL comparison of two molecules");
  WlOptions wopt;
  wl->add_option("--a", wopt.file_a, "First SMILES file")->required();
  wl->add_option("--b", wopt.file_b, "Second SMILES file")->required();
  wl->add_option("--iters", wopt.iters, "Maximum refinement rounds")->capture_default_str();
  wl->add_flag("--topology-only", wopt.topology_only, "Ignore atom types in the initial colors");

  // motifs
  auto* mot = app.add_subcommand("motifs", "Per-node cycle participation counts");
  MotifsOptions mopt;
  std::string cycles = "3..8";
  mot->add_option("--in", mopt.input, "Input SMILES file")->required();
  mot->add_option("--cycles", cycles, "Cycle size range, e.g. 3..8")->capture_default_str();
  mot->add_option("--csv", mopt.csv, "Write counts to this CSV file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*pre) {
      PretrainOptions opt;
      opt.cfg = build_run_config(pre_flags, pre_ai->count() > 0, pre_agent_interval);
      opt.cfg.pretrain_lr = pre_lr;
      opt.cfg.pretrain_batch = pre_batch;
      opt.data_path = pre_data;
      opt.epochs = pre_epochs;
      opt.max_steps = pre_max_steps;
      opt.strict = pre_strict;
      opt.out_checkpoint = pre_out;
      opt.metrics_csv = pre_metrics;
      opt.paper_task = pre_task;
      PretrainResult r = cmd_pretrain(opt);
      std::printf("pretrained %d steps; checkpoint %s; metrics %s\n", r.steps,
                  r.checkpoint_path.c_str(), r.metrics_path.c_str());
    } else if (*fin) {
      fopt.checkpoint = fin_ckpt;
      fopt.out_checkpoint = fin_out;
      if (o_temp->count()) fopt.temperature = fin_temp;
      if (o_scale->count()) fopt.scale = fin_scale;
      if (o_gamma->count()) fopt.gamma = fin_gamma;
      if (o_pen->count()) fopt.step_penalty = fin_penalty;
      if (o_epochs->count()) fopt.epochs = fin_epochs;
      if (o_int->count()) fopt.agent_interval = fin_interval;
      if (o_lr->count()) fopt.lr = fin_lr;
      if (o_roll->count()) fopt.rollouts_per_epoch = fin_rollouts;
      if (o_batch->count()) fopt.batch = fin_batch;
      if (o_workers->count()) fopt.workers = fin_workers;
      if (o_seed->count()) fopt.seed = fin_seed;
      FinetuneResult r = cmd_finetune(fopt);
      for (const EpochLog& row : r.log) {
        std::printf("epoch %d: mean_reward=%.4f mean_score=%.4f max_score=%.4f validity=%.3f%s\n",
                    row.epoch, row.mean_reward, row.mean_score, row.max_score, row.validity_rate,
                    row.stopped_early ? " (stopped early)" : "");
      }
      std::printf("checkpoint %s; log %s\n", r.checkpoint_path.c_str(), r.log_path.c_str());
    } else if (*gen) {
      gopt.checkpoint = gen_ckpt;
      gopt.out = gen_out;
      if (g_ms->count()) gopt.max_size = gen_max_size;
      if (g_rs->count()) gopt.resample_budget = gen_resample;
      if (g_seed->count()) gopt.seed = gen_seed;
      if (g_work->count()) gopt.workers = gen_workers;
      GenerateResult r = cmd_generate(gopt);
      std::printf("wrote %zu molecules to %s; validity=%.4f uniqueness=%.4f\n", r.smiles.size(),
                  r.out_path.c_str(), r.validity_rate, r.uniqueness_rate);
    } else if (*eva) {
      EvaluateResult r = cmd_evaluate(eopt);
      if (r.parsed == 0) {
        std::fprintf(stderr, "warning: no molecules parsed from '%s'\n", eopt.input.c_str());
      }
      for (const auto& [smiles, score] : r.rows) std::printf("%s\t%.6f\n", smiles.c_str(), score);
      if (r.skipped > 0) std::fprintf(stderr, "skipped %d unparsable lines\n", r.skipped);
    } else if (*wl) {
      WlCommandResult r = cmd_wl(wopt);
      std::fputs(r.report.c_str(), stdout);
    } else if (*mot) {
      auto [lo, hi] = parse_cycles(cycles);
      mopt.cycle_min = lo;
      mopt.cycle_max = hi;
      MotifsResult r = cmd_motifs(mopt);
      if (mopt.csv.empty()) std::fputs(r.csv_text.c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
