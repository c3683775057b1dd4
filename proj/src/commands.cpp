// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "molgen/smiles.hpp"

namespace molgen {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

std::string commented_config(const RunConfig& cfg) {
  std::istringstream in(config_echo(cfg));
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) out << "# " << line << "\n";
  return out.str();
}

// Atom-type marginal of a corpus, smoothed so every element stays reachable.
Tensor corpus_atom_marginal(const std::vector<MolecularGraph>& mols) {
  Tensor m(1, kElementCount);
  double total = 0.0;
  for (const auto& g : mols) {
    for (int i = 0; i < g.num_atoms(); ++i) {
      m.v[static_cast<int>(g.atom(i))] += 1.0f;
      total += 1.0;
    }
  }
  for (auto& v : m.v) v = static_cast<float>((v + 1.0) / (total + kElementCount));
  return m;
}

void apply_paper_task(RunConfig& cfg, const std::string& task, bool allow_hidden_change) {
  if (task.empty()) return;
  auto d = paper_task_defaults(cfg.framework, cfg.gnn, task);
  if (!d) {
    throw Error("no published preset for " + std::string(framework_name(cfg.framework)) + "/" +
                layer_kind_name(cfg.gnn) + " on task '" + task + "'");
  }
  if (allow_hidden_change) cfg.hidden = d->hidden;
  cfg.ppo.lr = d->lr;
  cfg.reward.scale = d->reward_scale;
}

}  // namespace

PretrainResult cmd_pretrain(const PretrainOptions& opt) {
  Corpus corpus = load_corpus(opt.data_path, opt.strict, MolecularGraph::kDefaultMaxNodes);
  if (corpus.molecules.empty()) throw IoError("corpus '" + opt.data_path + "' holds no molecules");

  RunConfig cfg = opt.cfg;
  apply_paper_task(cfg, opt.paper_task, /*allow_hidden_change=*/true);
  cfg.pna_delta = mean_log_degree(corpus.molecules);
  ModelBundle bundle = ModelBundle::make(cfg);
  if (bundle.gcpn) bundle.gcpn->seed_marginal = corpus_atom_marginal(corpus.molecules);

  PretrainResult result;
  if (bundle.cfg.gnn == LayerKind::kGsnV || bundle.cfg.gnn == LayerKind::kGsnE) {
    result.motif_cache.reserve(corpus.molecules.size());
    for (const auto& g : corpus.molecules) result.motif_cache.push_back(compute_motif_features(g));
  }

  Adam opt_state(cfg.pretrain_lr);
  Rng order_rng = make_rng(cfg.seed).fork(1);
  Rng dequant_rng = make_rng(cfg.seed).fork(2);
  ScaffoldSet scaffolds = ScaffoldSet::single_atoms();

  std::ostringstream csv;
  csv << commented_config(bundle.cfg);
  if (bundle.cfg.framework == Framework::kGcpn) {
    csv << "step,nll_all,acc\n";
  } else {
    csv << "step,nll_n,nll_e\n";
  }

  const int batch_size = cfg.effective_pretrain_batch();
  int step = 0;
  bool done = false;
  for (int epoch = 0; epoch < opt.epochs && !done; ++epoch) {
    std::vector<int> order(corpus.molecules.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[order_rng.uniform_int(i + 1)]);
    }
    for (std::size_t at = 0; at < order.size() && !done; at += batch_size) {
      std::vector<const MolecularGraph*> batch;
      for (std::size_t k = at; k < std::min(order.size(), at + batch_size); ++k) {
        batch.push_back(&corpus.molecules[order[k]]);
      }
      ++step;
      if (bundle.cfg.framework == Framework::kGcpn) {
        PretrainStats stats = gcpn_pretrain_step(*bundle.gcpn, batch, scaffolds, opt_state);
        csv << step << "," << fmt(stats.nll_all) << "," << fmt(stats.acc) << "\n";
        result.nll_per_step.push_back(stats.nll_all);
        result.acc_per_step.push_back(stats.acc);
      } else {
        GraphAfPretrainStats stats =
            graphaf_pretrain_step(*bundle.graphaf, batch, opt_state, dequant_rng);
        csv << step << "," << fmt(stats.nll_n) << "," << fmt(stats.nll_e) << "\n";
        result.nll_per_step.push_back(stats.nll_n + stats.nll_e);
      }
      if (opt.max_steps > 0 && step >= opt.max_steps) done = true;
    }
  }
  result.steps = step;
  result.checkpoint_path = opt.out_checkpoint;
  result.metrics_path = opt.metrics_csv.empty() ? opt.out_checkpoint + ".metrics.csv"
                                                : opt.metrics_csv;
  save_checkpoint(result.checkpoint_path, bundle);
  write_text(result.metrics_path, csv.str());
  return result;
}

FinetuneResult cmd_finetune(const FinetuneOptions& opt) {
  ModelBundle bundle = load_checkpoint(opt.checkpoint);
  apply_paper_task(bundle.cfg, opt.paper_task, /*allow_hidden_change=*/false);
  if (opt.epochs) bundle.cfg.ppo.epochs = *opt.epochs;
  if (opt.temperature) bundle.cfg.reward.temperature = *opt.temperature;
  if (opt.scale) bundle.cfg.reward.scale = *opt.scale;
  if (opt.gamma) bundle.cfg.reward.gamma = *opt.gamma;
  if (opt.step_penalty) bundle.cfg.reward.step_penalty = *opt.step_penalty;
  if (opt.agent_interval) bundle.cfg.ppo.agent_interval = *opt.agent_interval;
  if (opt.lr) bundle.cfg.ppo.lr = *opt.lr;
  if (opt.rollouts_per_epoch) bundle.cfg.ppo.rollouts_per_epoch = *opt.rollouts_per_epoch;
  if (opt.batch) bundle.cfg.ppo.batch = *opt.batch;
  if (opt.workers) bundle.cfg.ppo.workers = *opt.workers;
  if (opt.seed) bundle.cfg.seed = *opt.seed;
  bundle.cfg.ppo.max_size = bundle.cfg.max_size;
  bundle.cfg.ppo.resample_budget = bundle.cfg.resample_budget;

  Scorer scorer = parse_scorer_spec(opt.scorer);

  FinetuneResult result;
  result.checkpoint_path = opt.out_checkpoint;
  result.log_path = opt.log_csv.empty() ? opt.out_checkpoint + ".log.csv" : opt.log_csv;

  std::ostringstream csv;
  csv << commented_config(bundle.cfg);
  csv << "# scorer = " << scorer.spec.name << "\n";
  csv << "epoch,mean_reward,mean_score,max_score,validity_rate,stopped_early\n";

  if (bundle.cfg.ppo.epochs > 0) {
    if (bundle.cfg.framework == Framework::kGcpn) {
      ScaffoldSet scaffolds = opt.scaffolds_path.empty() ? ScaffoldSet::single_atoms()
                                                         : load_scaffolds(opt.scaffolds_path);
      result.log = finetune(*bundle.gcpn, scaffolds, scorer, bundle.cfg.reward, bundle.cfg.ppo,
                            bundle.cfg.seed);
    } else {
      result.log =
          finetune(*bundle.graphaf, scorer, bundle.cfg.reward, bundle.cfg.ppo, bundle.cfg.seed);
    }
  }
  for (const EpochLog& row : result.log) {
    csv << row.epoch << "," << fmt(row.mean_reward) << "," << fmt(row.mean_score) << ","
        << fmt(row.max_score) << "," << fmt(row.validity_rate) << ","
        << (row.stopped_early ? 1 : 0) << "\n";
  }
  save_checkpoint(result.checkpoint_path, bundle);
  write_text(result.log_path, csv.str());
  return result;
}

GenerateResult cmd_generate(const GenerateOptions& opt) {
  ModelBundle bundle = load_checkpoint(opt.checkpoint);
  if (opt.max_size) bundle.cfg.max_size = *opt.max_size;
  if (opt.resample_budget) bundle.cfg.resample_budget = *opt.resample_budget;
  if (opt.seed) bundle.cfg.seed = *opt.seed;
  int workers = opt.workers.value_or(1);

  ScaffoldSet scaffolds = opt.scaffolds_path.empty() ? ScaffoldSet::single_atoms()
                                                     : load_scaffolds(opt.scaffolds_path);

  GenerateResult result;
  result.smiles.resize(opt.count);
  std::vector<char> valid(opt.count, 0);
  auto generate_one = [&](int index) {
    Rng rng = make_rng(bundle.cfg.seed).fork(index);
    if (bundle.cfg.framework == Framework::kGcpn) {
      GcpnTrajectory traj = gcpn_rollout(*bundle.gcpn, scaffolds, bundle.cfg.max_size,
                                         bundle.cfg.resample_budget, rng);
      result.smiles[index] = write_smiles(traj.final_graph);
      valid[index] = traj.exhausted ? 0 : 1;
    } else {
      GraphAfTrajectory traj =
          graphaf_rollout(*bundle.graphaf, bundle.cfg.max_size, bundle.cfg.resample_budget, rng);
      result.smiles[index] = write_smiles(traj.final_graph);
      valid[index] = traj.exhausted ? 0 : 1;
    }
  };
  if (workers <= 1) {
    for (int i = 0; i < opt.count; ++i) generate_one(i);
  } else {
    std::vector<std::thread> pool;
    int stride = (opt.count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int i = w * stride; i < std::min(opt.count, (w + 1) * stride); ++i) generate_one(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  int valid_count = 0;
  std::set<std::string> unique;
  for (int i = 0; i < opt.count; ++i) {
    valid_count += valid[i];
    unique.insert(result.smiles[i]);
  }
  result.validity_rate = opt.count > 0 ? static_cast<double>(valid_count) / opt.count : 0.0;
  result.uniqueness_rate =
      opt.count > 0 ? static_cast<double>(unique.size()) / opt.count : 0.0;

  std::ostringstream out;
  for (const std::string& s : result.smiles) out << s << "\n";
  out << "# validity=" << fmt(result.validity_rate)
      << " uniqueness=" << fmt(result.uniqueness_rate) << "\n";
  if (!opt.out.empty()) {
    write_text(opt.out, out.str());
    result.out_path = opt.out;
  }
  return result;
}

EvaluateResult cmd_evaluate(const EvaluateOptions& opt) {
  Scorer scorer = parse_scorer_spec(opt.scorer);
  std::ifstream in(opt.input, std::ios::binary);
  if (!in) throw IoError("cannot open '" + opt.input + "'");
  EvaluateResult result;
  std::vector<std::pair<std::string, double>> scored;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    std::size_t b = line.find_last_not_of(" \t");
    std::string text = line.substr(a, b - a + 1);
    if (text[0] == '#') continue;
    try {
      MolecularGraph g = parse_smiles(text);
      scored.emplace_back(text, scorer(g));
      ++result.parsed;
    } catch (const Error&) {
      ++result.skipped;
    }
  }
  std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;  // ties break lexicographically
  });
  if (static_cast<int>(scored.size()) > opt.top) scored.resize(opt.top);
  result.rows = std::move(scored);
  if (!opt.csv.empty()) {
    std::ostringstream csv;
    csv << "smiles,score\n";
    for (const auto& [s, v] : result.rows) csv << s << "," << fmt(v) << "\n";
    write_text(opt.csv, csv.str());
  }
  return result;
}

namespace {

MolecularGraph first_molecule(const std::string& path) {
  Corpus c = load_corpus(path, /*strict=*/true);
  if (c.molecules.empty()) throw IoError("'" + path + "' holds no molecules");
  return c.molecules.front();
}

}  // namespace

WlCommandResult cmd_wl(const WlOptions& opt) {
  MolecularGraph a = first_molecule(opt.file_a);
  MolecularGraph b = first_molecule(opt.file_b);
  WlCompareDetail detail = wl_compare_detail(
      a, b, opt.iters, opt.topology_only ? WlInit::kTopologyOnly : WlInit::kAtomType);
  WlCommandResult result;
  result.distinguished = detail.result == WlResult::kDistinguished;
  std::ostringstream out;
  for (std::size_t r = 0; r < detail.rounds.size(); ++r) {
    auto fmt_hist = [](const std::map<int, int>& h) {
      std::ostringstream s;
      s << "{";
      bool first = true;
      for (const auto& [color, count] : h) {
        if (!first) s << ", ";
        s << color << ":" << count;
        first = false;
      }
      s << "}";
      return s.str();
    };
    out << "round " << r << ": a=" << fmt_hist(detail.rounds[r].hist_a)
        << " b=" << fmt_hist(detail.rounds[r].hist_b) << "\n";
  }
  out << (result.distinguished ? "distinguished" : "possibly_isomorphic") << "\n";
  result.report = out.str();
  return result;
}

MotifsResult cmd_motifs(const MotifsOptions& opt) {
  if (opt.cycle_min < 3 || opt.cycle_max > 8 || opt.cycle_min > opt.cycle_max) {
    throw Error("cycle sizes must satisfy 3 <= min <= max <= 8");
  }
  Corpus corpus = load_corpus(opt.input, /*strict=*/false);
  std::vector<int> sizes;
  for (int k = opt.cycle_min; k <= opt.cycle_max; ++k) sizes.push_back(k);
  std::ostringstream csv;
  csv << "mol,node";
  for (int k : sizes) csv << ",c" << k;
  csv << "\n";
  for (std::size_t m = 0; m < corpus.molecules.size(); ++m) {
    auto counts = count_vertex_substructures(corpus.molecules[m], sizes);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      csv << m << "," << i;
      for (int c : counts[i]) csv << "," << c;
      csv << "\n";
    }
  }
  MotifsResult result;
  result.csv_text = csv.str();
  result.molecules = static_cast<int>(corpus.molecules.size());
  if (!opt.csv.empty()) write_text(opt.csv, result.csv_text);
  return result;
}

}  // namespace molgen
