// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the CLI binary, exposed as library functions
// so they can be tested directly.

#ifndef MOLGEN_COMMANDS_HPP
#define MOLGEN_COMMANDS_HPP

#include <optional>
#include <string>
#include <vector>

#include "molgen/checkpoint.hpp"

namespace molgen {

struct PretrainOptions {
  std::string data_path;
  RunConfig cfg;
  int epochs = 1;
  int max_steps = 0;  // 0: no cap; otherwise stop after this many updates
  bool strict = false;
  std::string out_checkpoint;
  std::string metrics_csv;  // defaults to out_checkpoint + ".metrics.csv"
  std::string paper_task;   // optional preset applying (hidden, lr)
};

struct PretrainResult {
  int steps = 0;
  // NLL_all per step for GCPN; NLL_n + NLL_e per step for GraphAF.
  std::vector<double> nll_per_step;
  std::vector<double> acc_per_step;  // GCPN only
  std::string checkpoint_path;
  std::string metrics_path;
  // Motif features cached once per corpus molecule for GSN runs.
  std::vector<MotifFeatures> motif_cache;
};

PretrainResult cmd_pretrain(const PretrainOptions& opt);

struct FinetuneOptions {
  std::string checkpoint;
  std::string scorer;  // "name" or "name:key=value,..."
  std::string out_checkpoint;
  std::string log_csv;  // defaults to out_checkpoint + ".log.csv"
  std::string paper_task;
  std::string scaffolds_path;  // optional custom scaffold file (GCPN)
  std::optional<int> epochs;
  std::optional<double> temperature;
  std::optional<double> scale;
  std::optional<double> gamma;
  std::optional<double> step_penalty;
  std::optional<int> agent_interval;
  std::optional<float> lr;
  std::optional<int> rollouts_per_epoch;
  std::optional<int> batch;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

struct FinetuneResult {
  std::vector<EpochLog> log;
  std::string checkpoint_path;
  std::string log_path;
};

FinetuneResult cmd_finetune(const FinetuneOptions& opt);

struct GenerateOptions {
  std::string checkpoint;
  int count = 1000;
  std::optional<int> max_size;
  std::optional<int> resample_budget;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;  // SMILES file
  std::string scaffolds_path;
};

struct GenerateResult {
  std::vector<std::string> smiles;
  double validity_rate = 0.0;
  double uniqueness_rate = 0.0;
  std::string out_path;
};

GenerateResult cmd_generate(const GenerateOptions& opt);

struct EvaluateOptions {
  std::string input;
  std::string scorer;
  int top = 3;
  std::string csv;  // optional output file
};

struct EvaluateResult {
  std::vector<std::pair<std::string, double>> rows;  // sorted, truncated to top
  int parsed = 0;
  int skipped = 0;
};

EvaluateResult cmd_evaluate(const EvaluateOptions& opt);

struct WlOptions {
  std::string file_a;
  std::string file_b;
  int iters = 20;
  bool topology_only = false;
};

struct WlCommandResult {
  bool distinguished = false;
  std::string report;  // per-round histograms plus verdict
};

WlCommandResult cmd_wl(const WlOptions& opt);

struct MotifsOptions {
  std::string input;
  int cycle_min = 3;
  int cycle_max = 8;
  std::string csv;  // optional output file
};

struct MotifsResult {
  std::string csv_text;  // header + one row per (molecule, node)
  int molecules = 0;
};

MotifsResult cmd_motifs(const MotifsOptions& opt);

}  // namespace molgen

#endif  // MOLGEN_COMMANDS_HPP
