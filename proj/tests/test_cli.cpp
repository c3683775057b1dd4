// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "molgen/commands.hpp"
#include "molgen/smiles.hpp"

using namespace molgen;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

RunConfig tiny_run_config(Framework fw, std::uint64_t seed = 3) {
  RunConfig cfg;
  cfg.framework = fw;
  cfg.gnn = LayerKind::kRgcn;
  cfg.edge_features = default_edge_features(fw);
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.seed = seed;
  cfg.max_size = 12;
  cfg.pretrain_batch = 4;
  return cfg;
}

const char* kTinyCorpus = "# tiny corpus\nCC\nCCO\nCCC\nCC=O\nCCN\nC1CC1\nCCCl\nCC(C)C\n";

}  // namespace

TEST_CASE("checkpoint save/load/save is byte-identical") {
  TempFile a("ck_a.mgf"), b("ck_b.mgf");
  ModelBundle bundle = ModelBundle::make(tiny_run_config(Framework::kGcpn));
  save_checkpoint(a.path, bundle);
  ModelBundle loaded = load_checkpoint(a.path);
  save_checkpoint(b.path, loaded);
  CHECK(slurp(a.path) == slurp(b.path));
  CHECK(slurp(a.path).substr(0, 5) == "MGF1\n");
}

TEST_CASE("checkpoint shape mismatches are rejected") {
  TempFile a("ck_c.mgf");
  ModelBundle bundle = ModelBundle::make(tiny_run_config(Framework::kGcpn));
  save_checkpoint(a.path, bundle);
  std::string data = slurp(a.path);
  // Corrupt the hidden width in the config echo: the rebuilt model's tensors
  // will not match the manifest.
  auto at = data.find("hidden = 8");
  REQUIRE(at != std::string::npos);
  data.replace(at, 10, "hidden = 6");
  spit(a.path, data);
  CHECK_THROWS_AS(load_checkpoint(a.path), CheckpointMismatch);
}

TEST_CASE("paper task presets") {
  auto d = paper_task_defaults(Framework::kGcpn, LayerKind::kGearnet, "drd2");
  REQUIRE(d.has_value());
  CHECK(d->hidden == 256);
  CHECK(d->lr == doctest::Approx(1e-5f));
  CHECK(d->reward_scale == doctest::Approx(0.5));
  auto m1 = paper_task_defaults(Framework::kGraphAf, LayerKind::kRgcn, "median1");
  REQUIRE(m1.has_value());
  CHECK(m1->reward_scale == doctest::Approx(0.05));
  CHECK(!paper_task_defaults(Framework::kGcpn, LayerKind::kGcn, "drd2").has_value());
}

TEST_CASE("cmd_pretrain writes a checkpoint and one CSV row per step") {
  TempFile corpus("pre_corpus.smi"), ck("pre.mgf"), csv("pre.csv");
  spit(corpus.path, kTinyCorpus);
  PretrainOptions opt;
  opt.data_path = corpus.path;
  opt.cfg = tiny_run_config(Framework::kGcpn);
  opt.epochs = 1;
  opt.out_checkpoint = ck.path;
  opt.metrics_csv = csv.path;
  PretrainResult r = cmd_pretrain(opt);
  CHECK(r.steps == 2);  // 8 molecules / batch 4
  std::string metrics = slurp(csv.path);
  CHECK(metrics.find("step,nll_all,acc") != std::string::npos);
  CHECK(metrics.find("framework = gcpn") != std::string::npos);
  CHECK(metrics.find("seed = 3") != std::string::npos);
  int rows = 0;
  for (char c : metrics)
    if (c == '\n') ++rows;
  // config echo lines + header + 2 data rows
  CHECK(rows > 3);
  ModelBundle loaded = load_checkpoint(ck.path);
  CHECK(loaded.cfg.framework == Framework::kGcpn);
}

TEST_CASE("cmd_pretrain is byte-deterministic given a seed") {
  TempFile corpus("det_corpus.smi"), ck1("det1.mgf"), csv1("det1.csv"), ck2("det2.mgf"),
      csv2("det2.csv");
  spit(corpus.path, kTinyCorpus);
  for (auto fw : {Framework::kGcpn, Framework::kGraphAf}) {
    PretrainOptions opt;
    opt.data_path = corpus.path;
    opt.cfg = tiny_run_config(fw, 42);
    opt.epochs = 1;
    opt.out_checkpoint = ck1.path;
    opt.metrics_csv = csv1.path;
    cmd_pretrain(opt);
    opt.out_checkpoint = ck2.path;
    opt.metrics_csv = csv2.path;
    cmd_pretrain(opt);
    CHECK(slurp(ck1.path) == slurp(ck2.path));
    CHECK(slurp(csv1.path) == slurp(csv2.path));
  }
}

TEST_CASE("cmd_pretrain caches motif features for gsn runs") {
  TempFile corpus("gsn_corpus.smi"), ck("gsn.mgf"), csv("gsn.csv");
  spit(corpus.path, kTinyCorpus);
  PretrainOptions opt;
  opt.data_path = corpus.path;
  opt.cfg = tiny_run_config(Framework::kGcpn);
  opt.cfg.gnn = LayerKind::kGsnV;
  opt.max_steps = 1;
  opt.out_checkpoint = ck.path;
  opt.metrics_csv = csv.path;
  PretrainResult r = cmd_pretrain(opt);
  Corpus parsed = parse_corpus_text(kTinyCorpus);
  REQUIRE(r.motif_cache.size() == parsed.molecules.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(10, parsed.molecules.size()); ++i) {
    MotifFeatures fresh = compute_motif_features(parsed.molecules[i]);
    CHECK(fresh.vertex_counts == r.motif_cache[i].vertex_counts);
    CHECK(fresh.edge_counts == r.motif_cache[i].edge_counts);
  }
}

TEST_CASE("cmd_generate writes valid molecules deterministically") {
  TempFile corpus("gen_corpus.smi"), ck("gen.mgf"), csv("gen.csv"), out1("gen1.smi"),
      out2("gen2.smi");
  spit(corpus.path, kTinyCorpus);
  PretrainOptions popt;
  popt.data_path = corpus.path;
  popt.cfg = tiny_run_config(Framework::kGcpn, 7);
  popt.max_steps = 1;
  popt.out_checkpoint = ck.path;
  popt.metrics_csv = csv.path;
  cmd_pretrain(popt);

  GenerateOptions gopt;
  gopt.checkpoint = ck.path;
  gopt.count = 10;
  gopt.out = out1.path;
  GenerateResult r = cmd_generate(gopt);
  CHECK(r.smiles.size() == 10);
  int noncomment = 0;
  std::istringstream lines(slurp(out1.path));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line[0] != '#') {
      ++noncomment;
      MolecularGraph g = parse_smiles(line);
      CHECK(check_valence(g).empty());
      CHECK(g.num_atoms() <= 12);
    }
  }
  CHECK(noncomment == 10);
  gopt.out = out2.path;
  cmd_generate(gopt);
  CHECK(slurp(out1.path) == slurp(out2.path));

  // Worker count must not change the artifact.
  gopt.workers = 2;
  cmd_generate(gopt);
  CHECK(slurp(out1.path) == slurp(out2.path));
}

TEST_CASE("cmd_finetune with zero epochs copies the checkpoint") {
  TempFile corpus("ft_corpus.smi"), ck("ft.mgf"), csv("ft.csv"), out("ft_out.mgf"),
      log("ft_log.csv");
  spit(corpus.path, kTinyCorpus);
  PretrainOptions popt;
  popt.data_path = corpus.path;
  popt.cfg = tiny_run_config(Framework::kGcpn, 9);
  popt.max_steps = 1;
  popt.out_checkpoint = ck.path;
  popt.metrics_csv = csv.path;
  cmd_pretrain(popt);

  FinetuneOptions fopt;
  fopt.checkpoint = ck.path;
  fopt.out_checkpoint = out.path;
  fopt.log_csv = log.path;
  fopt.scorer = "carbon_chain";
  fopt.epochs = 0;
  FinetuneResult r = cmd_finetune(fopt);
  CHECK(slurp(ck.path) == slurp(out.path));
  CHECK(r.log.empty());
  std::string logged = slurp(log.path);
  CHECK(logged.find("epoch,mean_reward,mean_score,max_score,validity_rate,stopped_early") !=
        std::string::npos);
  CHECK(logged.find("# scorer = carbon_chain") != std::string::npos);
}

TEST_CASE("cmd_finetune trains and logs epochs") {
  TempFile corpus("ft2_corpus.smi"), ck("ft2.mgf"), csv("ft2.csv"), out("ft2_out.mgf"),
      log("ft2_log.csv");
  spit(corpus.path, kTinyCorpus);
  PretrainOptions popt;
  popt.data_path = corpus.path;
  popt.cfg = tiny_run_config(Framework::kGcpn, 11);
  popt.max_steps = 1;
  popt.out_checkpoint = ck.path;
  popt.metrics_csv = csv.path;
  cmd_pretrain(popt);

  FinetuneOptions fopt;
  fopt.checkpoint = ck.path;
  fopt.out_checkpoint = out.path;
  fopt.log_csv = log.path;
  fopt.scorer = "carbon_chain";
  fopt.epochs = 1;
  fopt.rollouts_per_epoch = 8;
  fopt.batch = 4;
  fopt.agent_interval = 1;
  fopt.lr = 1e-3f;
  FinetuneResult r = cmd_finetune(fopt);
  CHECK(r.log.size() >= 1);
  CHECK(slurp(ck.path) != slurp(out.path));  // parameters moved

  FinetuneOptions bad = fopt;
  bad.scorer = "nope";
  CHECK_THROWS_AS(cmd_finetune(bad), UnknownScorer);
}

TEST_CASE("cmd_evaluate ranks by score with lexicographic ties") {
  TempFile in("eval.smi"), csv("eval.csv");
  spit(in.path, "C\nCC\nCCC\n");
  EvaluateOptions opt;
  opt.input = in.path;
  opt.scorer = "plogp_surrogate";
  opt.top = 3;
  opt.csv = csv.path;
  EvaluateResult r = cmd_evaluate(opt);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].first == "CCC");
  CHECK(r.rows[0].second == doctest::Approx(1.1));
  CHECK(r.rows[1].first == "CC");
  CHECK(r.rows[1].second == doctest::Approx(0.75));
  CHECK(r.rows[2].first == "C");
  CHECK(r.rows[2].second == doctest::Approx(0.4));
  CHECK(slurp(csv.path).find("smiles,score") == 0);

  // top above the corpus size lists everything; empty input is not an error.
  opt.top = 10;
  opt.csv.clear();
  CHECK(cmd_evaluate(opt).rows.size() == 3);
  TempFile empty("eval_empty.smi");
  spit(empty.path, "# nothing here\n");
  opt.input = empty.path;
  EvaluateResult r2 = cmd_evaluate(opt);
  CHECK(r2.rows.empty());
  CHECK(r2.parsed == 0);

  // Constant scorer: scores tie, order is lexicographic.
  spit(in.path, "CC\nC\nCCC\n");
  opt.input = in.path;
  opt.scorer = "constant:c=1";
  EvaluateResult r3 = cmd_evaluate(opt);
  REQUIRE(r3.rows.size() == 3);
  CHECK(r3.rows[0].first == "C");
  CHECK(r3.rows[1].first == "CC");
  CHECK(r3.rows[2].first == "CCC");
}

TEST_CASE("cmd_wl distinguishes P3 from C3 but not relabelings") {
  TempFile a("wl_a.smi"), b("wl_b.smi"), c("wl_c.smi");
  spit(a.path, "CCC\n");
  spit(b.path, "C1CC1\n");
  spit(c.path, "C(C)C\n");  // a relabeled P3
  WlOptions opt;
  opt.file_a = a.path;
  opt.file_b = b.path;
  WlCommandResult r = cmd_wl(opt);
  CHECK(r.distinguished);
  CHECK(r.report.find("distinguished") != std::string::npos);
  CHECK(r.report.find("round 0") != std::string::npos);
  opt.file_b = c.path;
  WlCommandResult r2 = cmd_wl(opt);
  CHECK_FALSE(r2.distinguished);
  CHECK(r2.report.find("possibly_isomorphic") != std::string::npos);
}

TEST_CASE("cmd_motifs emits per-node cycle counts") {
  TempFile in("mot.smi"), csv("mot.csv");
  spit(in.path, "C1CC1\n");
  MotifsOptions opt;
  opt.input = in.path;
  opt.csv = csv.path;
  MotifsResult r = cmd_motifs(opt);
  CHECK(r.molecules == 1);
  std::string text = slurp(csv.path);
  CHECK(text.find("mol,node,c3,c4,c5,c6,c7,c8") == 0);
  CHECK(text.find("0,0,1,0,0,0,0,0") != std::string::npos);
  CHECK(text.find("0,2,1,0,0,0,0,0") != std::string::npos);
}

TEST_CASE("the built binary round-trips a pretrain/generate pipeline") {
#ifdef MOLGEN_CLI_PATH
  TempFile corpus("cli_corpus.smi"), ck("cli.mgf"), csv("cli.mgf.metrics.csv"),
      out("cli_out.smi");
  spit(corpus.path, kTinyCorpus);
  std::string base = MOLGEN_CLI_PATH;
  std::string cmd1 = base +
                     " pretrain --data cli_corpus.smi --out cli.mgf --framework gcpn --gnn rgcn"
                     " --layers 2 --hidden 8 --batch 4 --max-steps 1 --max-size 12 --seed 5"
                     " > /dev/null";
  REQUIRE(std::system(cmd1.c_str()) == 0);
  std::string cmd2 =
      base + " generate --ckpt cli.mgf --count 5 --out cli_out.smi --seed 1 > /dev/null";
  REQUIRE(std::system(cmd2.c_str()) == 0);
  Corpus gen = load_corpus(out.path);
  CHECK(gen.molecules.size() == 5);
  // Usage error: missing required --scorer.
  std::string cmd3 = base + " evaluate --in cli_out.smi 2> /dev/null";
  CHECK(std::system(cmd3.c_str()) != 0);
#endif
}
