// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/graphaf.hpp"

#include <cmath>

namespace molgen {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2

// Column range [a, b) of a [1, m] row vector.
Val slice_row(Tape& t, Val row, int a, int b) {
  std::vector<int> idx;
  for (int i = a; i < b; ++i) idx.push_back(i);
  return t.transpose(t.index_select(t.transpose(row), idx));
}

}  // namespace

GraphAfModel GraphAfModel::make(const GnnConfig& cfg, Rng& rng) {
  GraphAfModel m;
  m.gnn = GnnModel::make(cfg, rng);
  int d = m.gnn.out_dim();
  m.node_mlp = Mlp::make("graphaf.node", {d, d, 2 * kNodeClasses}, Mlp::Act::kTanh, rng);
  m.edge_mlp = Mlp::make("graphaf.edge", {3 * d, d, 2 * kEdgeClasses}, Mlp::Act::kTanh, rng);
  return m;
}

std::vector<Parameter*> GraphAfModel::parameters() {
  std::vector<Parameter*> out;
  gnn.collect_params(out);
  node_mlp.collect(out);
  edge_mlp.collect(out);
  return out;
}

void GraphAfModel::collect_state(std::vector<std::pair<std::string, Tensor*>>& out) {
  gnn.collect_state(out);
  std::vector<Parameter*> heads;
  node_mlp.collect(heads);
  edge_mlp.collect(heads);
  for (Parameter* p : heads) out.emplace_back(p->name, &p->value);
}

FlowForwardOut flow_forward(Tape& t, Val z, Val cond, Mlp& mlp, int k) {
  Val out = mlp.forward(t, cond);  // [1, 2k]
  Val mu = slice_row(t, out, 0, k);
  Val ls = t.clamp(slice_row(t, out, k, 2 * k), -kLogSigmaClamp, kLogSigmaClamp);
  FlowForwardOut f;
  f.x = t.add(mu, t.mul(z, t.exp(ls)));
  f.logdet = t.sum(ls);
  return f;
}

FlowInverseOut flow_inverse(Tape& t, Val x, Val cond, Mlp& mlp, int k) {
  Val out = mlp.forward(t, cond);
  Val mu = slice_row(t, out, 0, k);
  Val ls = t.clamp(slice_row(t, out, k, 2 * k), -kLogSigmaClamp, kLogSigmaClamp);
  FlowInverseOut f;
  f.z = t.mul(t.sub(x, mu), t.exp(t.scale(ls, -1.0f)));
  f.neg_logdet = t.scale(t.sum(ls), -1.0f);
  return f;
}

Val flow_log_prob(Tape& t, Mlp& mlp, Val cond, const Tensor& x, int k) {
  FlowInverseOut inv = flow_inverse(t, t.constant(x), cond, mlp, k);
  Val zsq = t.sum(t.mul(inv.z, inv.z));
  Val log_normal = t.add_scalar(t.scale(zsq, -0.5f), static_cast<float>(-k * kHalfLog2Pi));
  return t.add(log_normal, inv.neg_logdet);
}

PartialEmbedding embed_partial(Tape& t, GnnModel& gnn, const GraphContext& ctx, bool train_bn) {
  PartialEmbedding out;
  if (ctx.graph.num_atoms() == 0) {
    out.graph_emb = t.constant(Tensor::zeros(1, gnn.out_dim()));
    return out;
  }
  GnnOutput o = message_pass(t, gnn, ctx, train_bn);
  out.node_emb = o.node_emb;
  out.graph_emb = o.graph_emb;
  return out;
}

namespace {

// mu / log-sigma from a conditioning row, values only.
struct MuSigma {
  std::vector<double> mu;
  std::vector<double> ls;
};

MuSigma eval_flow_params(GraphAfModel& model, const MolecularGraph& partial, bool node_step,
                         int edge_to) {
  Tape t(false);
  GraphContext ctx = model.gnn.make_context(partial);
  PartialEmbedding emb = embed_partial(t, model.gnn, ctx, /*train_bn=*/false);
  Val cond;
  int k;
  Mlp* mlp;
  if (node_step) {
    cond = emb.graph_emb;
    k = kNodeClasses;
    mlp = &model.node_mlp;
  } else {
    int i = partial.num_atoms() - 1;
    Val hi = t.index_select(emb.node_emb, {i});
    Val hj = t.index_select(emb.node_emb, {edge_to});
    cond = t.concat_cols(std::vector<Val>{emb.graph_emb, hi, hj});
    k = kEdgeClasses;
    mlp = &model.edge_mlp;
  }
  const Tensor& out = t.value(mlp->forward(t, cond));
  MuSigma ms;
  for (int c = 0; c < k; ++c) {
    ms.mu.push_back(out.v[c]);
    double raw = out.v[k + c];
    ms.ls.push_back(std::clamp(raw, -static_cast<double>(kLogSigmaClamp),
                               static_cast<double>(kLogSigmaClamp)));
  }
  return ms;
}

struct Draw {
  Tensor x;
  int decision;
  double logp;
};

Draw draw_from(const MuSigma& ms, Rng& rng) {
  const int k = static_cast<int>(ms.mu.size());
  Draw d;
  d.x = Tensor(1, k);
  double zsq = 0.0, logdet = 0.0;
  int best = 0;
  for (int c = 0; c < k; ++c) {
    double z = rng.normal();
    zsq += z * z;
    logdet += ms.ls[c];
    double x = ms.mu[c] + std::exp(ms.ls[c]) * z;
    d.x.v[c] = static_cast<float>(x);
    if (x > d.x.v[best]) best = c;
  }
  d.decision = best;
  d.logp = -0.5 * zsq - k * kHalfLog2Pi - logdet;
  return d;
}

}  // namespace

GraphAfStep sample_step(GraphAfModel& model, const MolecularGraph& partial, bool node_step,
                        int edge_to, int resample_budget, Rng& rng) {
  MuSigma ms = eval_flow_params(model, partial, node_step, edge_to);
  GraphAfStep step;
  step.state = partial;
  step.is_node = node_step;
  step.edge_to = node_step ? -1 : edge_to;
  Draw d = draw_from(ms, rng);
  if (!node_step) {
    int i = partial.num_atoms() - 1;
    auto valid = [&](int decision) {
      if (decision == kNoEdgeClass) return true;
      int order = decision + 1;
      return partial.can_accept(i, order) && partial.can_accept(edge_to, order) &&
             !partial.has_edge(i, edge_to);
    };
    int attempts = 0;
    while (!valid(d.decision) && attempts < resample_budget) {
      d = draw_from(ms, rng);
      ++attempts;
      step.penalty = true;
    }
    if (!valid(d.decision)) {
      d.decision = kNoEdgeClass;  // forced fallback keeps the sampled x
      step.penalty = true;
    }
  }
  step.x = std::move(d.x);
  step.decision = d.decision;
  step.logp = d.logp;
  return step;
}

GraphAfTrajectory graphaf_rollout(GraphAfModel& model, int max_size, int resample_budget,
                                  Rng& rng) {
  GraphAfTrajectory traj;
  MolecularGraph g(max_size);
  while (g.num_atoms() < max_size) {
    GraphAfStep node = sample_step(model, g, /*node_step=*/true, -1, resample_budget, rng);
    int decision = node.decision;
    traj.steps.push_back(std::move(node));
    g.add_atom(static_cast<Element>(decision));
    int i = g.num_atoms() - 1;
    bool connected = i == 0;
    for (int j = 0; j < i; ++j) {
      GraphAfStep e = sample_step(model, g, /*node_step=*/false, j, resample_budget, rng);
      int d = e.decision;
      traj.steps.push_back(std::move(e));
      if (d != kNoEdgeClass) {
        g.add_bond(i, j, static_cast<BondType>(d + 1));
        connected = true;
      }
    }
    if (!connected) {
      // The new node failed to attach; drop it and stop the episode.
      MolecularGraph trimmed(g.max_nodes());
      for (int a = 0; a + 1 < g.num_atoms(); ++a) trimmed.add_atom(g.atom(a));
      for (const Edge& ed : g.edges()) trimmed.add_bond(ed.i, ed.j, ed.type);
      g = std::move(trimmed);
      break;
    }
  }
  traj.final_graph = std::move(g);
  return traj;
}

Val graphaf_step_log_prob(Tape& t, GraphAfModel& model, const GraphAfStep& step, bool train_bn) {
  GraphContext ctx = model.gnn.make_context(step.state);
  PartialEmbedding emb = embed_partial(t, model.gnn, ctx, train_bn);
  if (step.is_node) {
    return flow_log_prob(t, model.node_mlp, emb.graph_emb, step.x, kNodeClasses);
  }
  int i = step.state.num_atoms() - 1;
  Val hi = t.index_select(emb.node_emb, {i});
  Val hj = t.index_select(emb.node_emb, {step.edge_to});
  Val cond = t.concat_cols(std::vector<Val>{emb.graph_emb, hi, hj});
  return flow_log_prob(t, model.edge_mlp, cond, step.x, kEdgeClasses);
}

GraphAfNll graphaf_nll(Tape& t, GraphAfModel& model, const MolecularGraph& mol, Rng& rng,
                       bool train_bn) {
  if (mol.num_atoms() > mol.max_nodes()) throw SizeLimit("molecule exceeds the size cap");
  std::vector<int> order = bfs_order(mol);
  const int n = static_cast<int>(order.size());
  std::vector<int> pos(mol.num_atoms(), -1);
  for (int i = 0; i < n; ++i) pos[order[i]] = i;

  auto dequantize = [&](int target, int k) {
    Tensor x(1, k);
    for (int c = 0; c < k; ++c) x.v[c] = (c == target ? 1.0f : 0.0f) + kDequantScale * rng.uniform();
    return x;
  };

  MolecularGraph partial(mol.max_nodes());
  Val nll_n_sum{}, nll_e_sum{};
  int node_terms = 0, edge_terms = 0;
  PartialEmbedding emb;
  bool emb_valid = false;
  for (int i = 0; i < n; ++i) {
    // Node decision, conditioned on the graph before this node.
    if (!emb_valid) {
      GraphContext ctx = model.gnn.make_context(partial);
      emb = embed_partial(t, model.gnn, ctx, train_bn);
      emb_valid = true;
    }
    Element target = mol.atom(order[i]);
    Val lp = flow_log_prob(t, model.node_mlp, emb.graph_emb,
                           dequantize(static_cast<int>(target), kNodeClasses), kNodeClasses);
    nll_n_sum = nll_n_sum.valid() ? t.add(nll_n_sum, lp) : lp;
    ++node_terms;
    partial.add_atom(target);
    emb_valid = false;
    for (int j = 0; j < i; ++j) {
      if (!emb_valid) {
        GraphContext ctx = model.gnn.make_context(partial);
        emb = embed_partial(t, model.gnn, ctx, train_bn);
        emb_valid = true;
      }
      auto bond = mol.bond_between(order[i], order[j]);
      int target_class = bond ? bond_index(*bond) : kNoEdgeClass;
      Val hi = t.index_select(emb.node_emb, {i});
      Val hj = t.index_select(emb.node_emb, {j});
      Val cond = t.concat_cols(std::vector<Val>{emb.graph_emb, hi, hj});
      Val lpe = flow_log_prob(t, model.edge_mlp, cond, dequantize(target_class, kEdgeClasses),
                              kEdgeClasses);
      nll_e_sum = nll_e_sum.valid() ? t.add(nll_e_sum, lpe) : lpe;
      ++edge_terms;
      if (bond) {
        partial.add_bond(i, j, *bond);
        emb_valid = false;  // the conditioning graph changed
      }
    }
  }
  GraphAfNll out;
  out.node_terms = node_terms;
  out.edge_terms = edge_terms;
  out.nll_n = t.scale(nll_n_sum, -1.0f / static_cast<float>(node_terms));
  out.nll_e = edge_terms > 0 ? t.scale(nll_e_sum, -1.0f / static_cast<float>(edge_terms))
                             : t.constant(Tensor::scalar(0.0f));
  return out;
}

GraphAfPretrainStats graphaf_pretrain_step(GraphAfModel& model,
                                           const std::vector<const MolecularGraph*>& batch,
                                           Adam& opt, Rng& rng) {
  Tape t;
  Val total_n{}, total_e{};
  for (const MolecularGraph* mol : batch) {
    GraphAfNll nll = graphaf_nll(t, model, *mol, rng, /*train_bn=*/true);
    total_n = total_n.valid() ? t.add(total_n, nll.nll_n) : nll.nll_n;
    total_e = total_e.valid() ? t.add(total_e, nll.nll_e) : nll.nll_e;
  }
  float inv = 1.0f / static_cast<float>(batch.size());
  Val loss = t.scale(t.add(total_n, total_e), inv);
  t.backward(loss);
  auto params = model.parameters();
  opt.step(params);
  GraphAfPretrainStats stats;
  stats.nll_n = t.scalar(total_n) * inv;
  stats.nll_e = t.scalar(total_e) * inv;
  return stats;
}

}  // namespace molgen
