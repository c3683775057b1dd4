// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace molgen {

const char* framework_name(Framework f) { return f == Framework::kGcpn ? "gcpn" : "graphaf"; }

std::optional<Framework> framework_from_name(std::string_view name) {
  if (name == "gcpn") return Framework::kGcpn;
  if (name == "graphaf") return Framework::kGraphAf;
  return std::nullopt;
}

bool default_edge_features(Framework f) { return f == Framework::kGcpn; }

GnnConfig RunConfig::gnn_config() const {
  GnnConfig g;
  g.kind = gnn;
  g.num_layers = layers;
  g.hidden = hidden;
  g.heads = heads;
  g.edge_features = edge_features;
  g.pna_delta = pna_delta;
  return g;
}

int RunConfig::effective_pretrain_batch() const {
  if (pretrain_batch > 0) return pretrain_batch;
  return framework == Framework::kGcpn ? 128 : 32;
}

void RunConfig::normalize() {
  if ((gnn == LayerKind::kGat || gnn == LayerKind::kGatv2) && hidden % heads != 0) {
    hidden -= hidden % heads;
    if (hidden <= 0) hidden = heads;
  }
}

namespace {

struct TaskRow {
  Framework fw;
  LayerKind gnn;
  const char* task;
  int hidden;
  float lr;
};

// Published fine-tuning grids (hidden width, learning rate) per framework,
// GNN and objective.
constexpr float k1e3 = 1e-3f, k1e4 = 1e-4f, k1e5 = 1e-5f, k1e6 = 1e-6f;
const TaskRow kTaskTable[] = {
    {Framework::kGcpn, LayerKind::kRgcn, "plogp", 256, k1e5},
    {Framework::kGcpn, LayerKind::kRgcn, "qed", 256, k1e5},
    {Framework::kGcpn, LayerKind::kRgcn, "sa", 128, k1e3},
    {Framework::kGcpn, LayerKind::kGin, "plogp", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGin, "qed", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGin, "sa", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGat, "plogp", 128, k1e4},
    {Framework::kGcpn, LayerKind::kGat, "qed", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGat, "sa", 64, k1e3},
    {Framework::kGcpn, LayerKind::kGatv2, "plogp", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGatv2, "qed", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGatv2, "sa", 256, k1e4},
    {Framework::kGcpn, LayerKind::kPna, "plogp", 256, k1e5},
    {Framework::kGcpn, LayerKind::kPna, "qed", 64, k1e3},
    {Framework::kGcpn, LayerKind::kPna, "sa", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGsnV, "plogp", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGsnV, "qed", 64, k1e3},
    {Framework::kGcpn, LayerKind::kGsnV, "sa", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGearnet, "plogp", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGearnet, "qed", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGearnet, "sa", 128, k1e3},
    {Framework::kGraphAf, LayerKind::kRgcn, "plogp", 64, k1e4},
    {Framework::kGraphAf, LayerKind::kRgcn, "qed", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kRgcn, "sa", 128, k1e4},
    {Framework::kGraphAf, LayerKind::kGearnet, "plogp", 64, k1e4},
    {Framework::kGraphAf, LayerKind::kGearnet, "qed", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGearnet, "sa", 128, k1e4},
    {Framework::kGcpn, LayerKind::kRgcn, "drd2", 256, k1e4},
    {Framework::kGcpn, LayerKind::kRgcn, "median1", 128, k1e4},
    {Framework::kGcpn, LayerKind::kRgcn, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGin, "drd2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGin, "median1", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGin, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGat, "drd2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGat, "median1", 64, k1e3},
    {Framework::kGcpn, LayerKind::kGat, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGatv2, "drd2", 128, k1e4},
    {Framework::kGcpn, LayerKind::kGatv2, "median1", 128, k1e3},
    {Framework::kGcpn, LayerKind::kGatv2, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kPna, "drd2", 64, k1e3},
    {Framework::kGcpn, LayerKind::kPna, "median1", 256, k1e4},
    {Framework::kGcpn, LayerKind::kPna, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGsnV, "drd2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGsnV, "median1", 64, k1e3},
    {Framework::kGcpn, LayerKind::kGsnV, "median2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGearnet, "drd2", 256, k1e5},
    {Framework::kGcpn, LayerKind::kGearnet, "median1", 256, k1e4},
    {Framework::kGcpn, LayerKind::kGearnet, "median2", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kRgcn, "drd2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kRgcn, "median1", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kRgcn, "median2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGin, "drd2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGin, "median1", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGin, "median2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGat, "drd2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGat, "median1", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kGat, "median2", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kGatv2, "drd2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGatv2, "median1", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGatv2, "median2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kPna, "drd2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kPna, "median1", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kPna, "median2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGsnV, "drd2", 256, k1e4},
    {Framework::kGraphAf, LayerKind::kGsnV, "median1", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGsnV, "median2", 256, k1e6},
    {Framework::kGraphAf, LayerKind::kGearnet, "drd2", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kGearnet, "median1", 256, k1e5},
    {Framework::kGraphAf, LayerKind::kGearnet, "median2", 256, k1e6},
};

double task_reward_scale(const std::string& task) {
  if (task == "drd2") return 0.5;
  if (task == "median1" || task == "median2") return 0.05;
  return 1.0;
}

}  // namespace

std::optional<TaskDefaults> paper_task_defaults(Framework f, LayerKind gnn,
                                                const std::string& task) {
  for (const TaskRow& row : kTaskTable) {
    if (row.fw == f && row.gnn == gnn && task == row.task) {
      TaskDefaults d;
      d.hidden = row.hidden;
      d.lr = row.lr;
      d.reward_scale = task_reward_scale(task);
      return d;
    }
  }
  return std::nullopt;
}

ModelBundle ModelBundle::make(const RunConfig& cfg_in) {
  ModelBundle b;
  b.cfg = cfg_in;
  b.cfg.normalize();
  Rng rng = make_rng(b.cfg.seed);
  if (b.cfg.framework == Framework::kGcpn) {
    b.gcpn = GcpnPolicy::make(b.cfg.gnn_config(), rng);
  } else {
    b.graphaf = GraphAfModel::make(b.cfg.gnn_config(), rng);
  }
  return b;
}

std::vector<std::pair<std::string, Tensor*>> ModelBundle::state() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (gcpn) gcpn->collect_state(out);
  if (graphaf) graphaf->collect_state(out);
  return out;
}

std::vector<Parameter*> ModelBundle::parameters() {
  if (gcpn) return gcpn->parameters();
  if (graphaf) return graphaf->parameters();
  return {};
}

namespace {

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_float(float v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream o;
  o << "[config]\n";
  o << "framework = " << framework_name(cfg.framework) << "\n";
  o << "gnn = " << layer_kind_name(cfg.gnn) << "\n";
  o << "edge_features = " << (cfg.edge_features ? 1 : 0) << "\n";
  o << "layers = " << cfg.layers << "\n";
  o << "hidden = " << cfg.hidden << "\n";
  o << "heads = " << cfg.heads << "\n";
  o << "seed = " << cfg.seed << "\n";
  o << "pna_delta = " << format_float(cfg.pna_delta) << "\n";
  o << "max_size = " << cfg.max_size << "\n";
  o << "resample_budget = " << cfg.resample_budget << "\n";
  o << "pretrain_lr = " << format_float(cfg.pretrain_lr) << "\n";
  o << "pretrain_batch = " << cfg.effective_pretrain_batch() << "\n";
  o << "temperature = " << format_float(cfg.reward.temperature) << "\n";
  o << "reward_scale = " << format_float(cfg.reward.scale) << "\n";
  o << "gamma = " << format_float(cfg.reward.gamma) << "\n";
  o << "step_penalty = " << format_float(cfg.reward.step_penalty) << "\n";
  o << "clip = " << format_float(cfg.ppo.clip) << "\n";
  o << "finetune_epochs = " << cfg.ppo.epochs << "\n";
  o << "finetune_batch = " << cfg.ppo.batch << "\n";
  o << "agent_interval = " << cfg.ppo.agent_interval << "\n";
  o << "finetune_lr = " << format_float(cfg.ppo.lr) << "\n";
  o << "rollouts_per_epoch = " << cfg.ppo.rollouts_per_epoch << "\n";
  return o.str();
}

RunConfig parse_config_echo(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "framework") {
      auto f = framework_from_name(value);
      if (!f) throw CheckpointMismatch("unknown framework '" + value + "'");
      cfg.framework = *f;
    } else if (key == "gnn") {
      auto k = layer_kind_from_name(value);
      if (!k) throw CheckpointMismatch("unknown gnn '" + value + "'");
      cfg.gnn = *k;
    } else if (key == "edge_features") {
      cfg.edge_features = value != "0";
    } else if (key == "layers") {
      cfg.layers = std::stoi(value);
    } else if (key == "hidden") {
      cfg.hidden = std::stoi(value);
    } else if (key == "heads") {
      cfg.heads = std::stoi(value);
    } else if (key == "seed") {
      cfg.seed = std::stoull(value);
    } else if (key == "pna_delta") {
      cfg.pna_delta = std::stof(value);
    } else if (key == "max_size") {
      cfg.max_size = std::stoi(value);
    } else if (key == "resample_budget") {
      cfg.resample_budget = std::stoi(value);
    } else if (key == "pretrain_lr") {
      cfg.pretrain_lr = std::stof(value);
    } else if (key == "pretrain_batch") {
      cfg.pretrain_batch = std::stoi(value);
    } else if (key == "temperature") {
      cfg.reward.temperature = std::stod(value);
    } else if (key == "reward_scale") {
      cfg.reward.scale = std::stod(value);
    } else if (key == "gamma") {
      cfg.reward.gamma = std::stod(value);
    } else if (key == "step_penalty") {
      cfg.reward.step_penalty = std::stod(value);
    } else if (key == "clip") {
      cfg.ppo.clip = std::stof(value);
    } else if (key == "finetune_epochs") {
      cfg.ppo.epochs = std::stoi(value);
    } else if (key == "finetune_batch") {
      cfg.ppo.batch = std::stoi(value);
    } else if (key == "agent_interval") {
      cfg.ppo.agent_interval = std::stoi(value);
    } else if (key == "finetune_lr") {
      cfg.ppo.lr = std::stof(value);
    } else if (key == "rollouts_per_epoch") {
      cfg.ppo.rollouts_per_epoch = std::stoi(value);
    }
  }
  return cfg;
}

void save_checkpoint(const std::string& path, ModelBundle& bundle) {
  auto state = bundle.state();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "MGF1\n";
  for (const auto& [name, tensor] : state) {
    out << name << " " << tensor->rows << " " << tensor->cols << "\n";
  }
  out << "\n";
  // Payload is raw little-endian float32 in manifest order.
  for (const auto& [name, tensor] : state) {
    out.write(reinterpret_cast<const char*>(tensor->v.data()),
              static_cast<std::streamsize>(tensor->v.size() * sizeof(float)));
  }
  out << config_echo(bundle.cfg);
  if (!out) throw IoError("failed while writing '" + path + "'");
}

ModelBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();

  std::size_t pos = data.find('\n');
  if (pos == std::string::npos || data.substr(0, pos) != "MGF1") {
    throw CheckpointMismatch("'" + path + "' is not an MGF1 checkpoint");
  }
  ++pos;
  struct Entry {
    std::string name;
    int rows, cols;
  };
  std::vector<Entry> manifest;
  while (pos < data.size()) {
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw CheckpointMismatch("truncated manifest");
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) break;  // blank line ends the manifest
    std::istringstream ls(line);
    Entry e;
    if (!(ls >> e.name >> e.rows >> e.cols)) throw CheckpointMismatch("bad manifest line: " + line);
    manifest.push_back(std::move(e));
  }
  std::size_t payload = 0;
  for (const Entry& e : manifest) payload += static_cast<std::size_t>(e.rows) * e.cols * 4;
  if (pos + payload > data.size()) throw CheckpointMismatch("payload shorter than manifest");
  std::size_t config_at = pos + payload;
  RunConfig cfg = parse_config_echo(data.substr(config_at));

  ModelBundle bundle = ModelBundle::make(cfg);
  auto state = bundle.state();
  if (state.size() != manifest.size()) {
    throw CheckpointMismatch("checkpoint holds " + std::to_string(manifest.size()) +
                             " tensors; this configuration expects " +
                             std::to_string(state.size()));
  }
  std::size_t off = pos;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const Entry& e = manifest[i];
    auto& [name, tensor] = state[i];
    if (e.name != name || e.rows != tensor->rows || e.cols != tensor->cols) {
      throw CheckpointMismatch("tensor mismatch at '" + e.name + "' (expected '" + name + "')");
    }
    std::memcpy(tensor->v.data(), data.data() + off,
                static_cast<std::size_t>(e.rows) * e.cols * 4);
    off += static_cast<std::size_t>(e.rows) * e.cols * 4;
  }
  return bundle;
}

}  // namespace molgen
