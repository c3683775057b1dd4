// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/gcpn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

#include "molgen/smiles.hpp"

namespace molgen {

ScaffoldSet ScaffoldSet::single_atoms() {
  ScaffoldSet s;
  for (int e = 0; e < kElementCount; ++e) {
    MolecularGraph g(1);
    g.add_atom(static_cast<Element>(e));
    s.fragments.push_back(std::move(g));
  }
  return s;
}

int ScaffoldSet::single_atom_index(Element e) const {
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (fragments[i].num_atoms() == 1 && fragments[i].atom(0) == e) return static_cast<int>(i);
  }
  throw Error("scaffold set has no single-atom fragment for element " +
              std::string(symbol_of(e)));
}

ScaffoldSet load_scaffolds(const std::string& path) {
  Corpus c = load_corpus(path, /*strict=*/true);
  if (c.molecules.empty()) throw IoError("scaffold file '" + path + "' holds no fragments");
  ScaffoldSet s;
  s.fragments = std::move(c.molecules);
  return s;
}

GcpnPolicy GcpnPolicy::make(const GnnConfig& cfg, Rng& rng) {
  GcpnPolicy p;
  p.gnn = GnnModel::make(cfg, rng);
  int d = p.gnn.out_dim();
  p.f_first = Mlp::make("gcpn.first", {d, d, 1}, Mlp::Act::kRelu, rng);
  p.f_second = Mlp::make("gcpn.second", {3 * d, d, 1}, Mlp::Act::kRelu, rng);
  p.f_bond = Mlp::make("gcpn.bond", {2 * d, d, kBondTypeCount}, Mlp::Act::kRelu, rng);
  p.f_stop = Mlp::make("gcpn.stop", {d, d, 1}, Mlp::Act::kRelu, rng);
  p.seed_marginal = Tensor::full(1, kElementCount, 1.0f / kElementCount);
  return p;
}

std::vector<Parameter*> GcpnPolicy::parameters() {
  std::vector<Parameter*> out;
  gnn.collect_params(out);
  f_first.collect(out);
  f_second.collect(out);
  f_bond.collect(out);
  f_stop.collect(out);
  return out;
}

void GcpnPolicy::collect_state(std::vector<std::pair<std::string, Tensor*>>& out) {
  gnn.collect_state(out);
  std::vector<Parameter*> heads;
  f_first.collect(heads);
  f_second.collect(heads);
  f_bond.collect(heads);
  f_stop.collect(heads);
  for (Parameter* p : heads) out.emplace_back(p->name, &p->value);
  out.emplace_back("gcpn.seed_marginal", &seed_marginal);
}

std::vector<Val> embed_scaffolds(Tape& t, GcpnPolicy& policy, const ScaffoldSet& scaffolds) {
  std::vector<Val> out;
  out.reserve(scaffolds.fragments.size());
  for (const MolecularGraph& frag : scaffolds.fragments) {
    GraphContext ctx = policy.gnn.make_context(frag);
    GnnOutput o = message_pass(t, policy.gnn, ctx, /*train_bn=*/false);
    out.push_back(t.index_select(o.node_emb, {0}));  // attachment point is node 0
  }
  return out;
}

namespace {

std::vector<double> row_log_softmax(const Tensor& logits) {
  // logits [m,1] -> log probabilities, double precision.
  double mx = logits.v[0];
  for (float x : logits.v) mx = std::max(mx, static_cast<double>(x));
  double z = 0.0;
  for (float x : logits.v) z += std::exp(static_cast<double>(x) - mx);
  double lz = mx + std::log(z);
  std::vector<double> out(logits.v.size());
  for (std::size_t i = 0; i < logits.v.size(); ++i) out[i] = logits.v[i] - lz;
  return out;
}

int argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Everything the heads need at one state, on one tape.
struct StateEval {
  Val node_emb;   // [n, d]
  Val graph_emb;  // [1, d]
  Val first_logits;  // [n, 1]
  int n = 0;
};

StateEval eval_state(Tape& t, GcpnPolicy& policy, const GraphContext& ctx, bool train_bn) {
  StateEval ev;
  GnnOutput o = message_pass(t, policy.gnn, ctx, train_bn);
  ev.node_emb = o.node_emb;
  ev.graph_emb = o.graph_emb;
  ev.first_logits = policy.f_first.forward(t, o.node_emb);
  ev.n = ctx.graph.num_atoms();
  return ev;
}

Val second_logits_for(Tape& t, GcpnPolicy& policy, const StateEval& ev,
                      const std::vector<Val>& scaffold_emb, int first) {
  // Candidate rows: graph nodes then scaffold attachment points.
  Val first_emb = t.index_select(ev.node_emb, {first});
  std::vector<Val> cand_rows;
  cand_rows.push_back(ev.node_emb);
  for (Val s : scaffold_emb) cand_rows.push_back(s);
  Val cands = cand_rows.size() == 1 ? cand_rows[0] : [&] {
    Val acc = cand_rows[0];
    for (std::size_t i = 1; i < cand_rows.size(); ++i) acc = t.concat(0, acc, cand_rows[i]);
    return acc;
  }();
  int m = t.value(cands).rows;
  // Broadcast [first || graph] context onto every candidate row.
  Val ctx_row = t.concat(1, first_emb, ev.graph_emb);  // [1, 2d]
  Val ones = t.constant(Tensor::full(m, 1, 1.0f));
  Val ctx_rows = t.matmul(ones, ctx_row);  // [m, 2d]
  return policy.f_second.forward(t, t.concat(1, cands, ctx_rows));  // [m,1]
}

Val bond_logits_for(Tape& t, GcpnPolicy& policy, const StateEval& ev,
                    const std::vector<Val>& scaffold_emb, int first, int second) {
  Val first_emb = t.index_select(ev.node_emb, {first});
  Val second_emb = second < ev.n ? t.index_select(ev.node_emb, {second})
                                 : scaffold_emb[second - ev.n];
  return policy.f_bond.forward(t, t.concat(1, first_emb, second_emb));  // [1,3]
}

}  // namespace

GcpnComponents policy_distribution(GcpnPolicy& policy, const GenerationState& state,
                                   const ScaffoldSet& scaffolds, int first_choice,
                                   int second_choice) {
  if (state.graph.num_atoms() == 0) throw EmptyGraph("policy needs at least one seed atom");
  Tape t(false);
  GraphContext ctx = policy.gnn.make_context(state.graph);
  StateEval ev = eval_state(t, policy, ctx, /*train_bn=*/false);
  std::vector<Val> scaf = embed_scaffolds(t, policy, scaffolds);

  GcpnComponents c;
  float stop_logit = t.value(policy.f_stop.forward(t, ev.graph_emb)).v[0];
  c.stop_prob = 1.0 / (1.0 + std::exp(-static_cast<double>(stop_logit)));
  auto lf = row_log_softmax(t.value(ev.first_logits));
  for (double l : lf) c.first_probs.push_back(std::exp(l));
  auto ls = row_log_softmax(t.value(second_logits_for(t, policy, ev, scaf, first_choice)));
  for (double l : ls) c.second_probs.push_back(std::exp(l));
  // Bond logits come back as a [1,3] row; repack as a column for the helper.
  Tensor bl = t.value(bond_logits_for(t, policy, ev, scaf, first_choice, second_choice));
  Tensor blc(kBondTypeCount, 1);
  for (int i = 0; i < kBondTypeCount; ++i) blc.v[i] = bl.v[i];
  for (double l : row_log_softmax(blc)) c.bond_probs.push_back(std::exp(l));
  return c;
}

GcpnActionScore gcpn_action_log_prob(Tape& t, GcpnPolicy& policy, const GraphContext& state,
                                     const std::vector<Val>& scaffold_emb,
                                     const GcpnAction& action, bool train_bn) {
  StateEval ev = eval_state(t, policy, state, train_bn);
  GcpnActionScore score;
  Val stop_logit = policy.f_stop.forward(t, ev.graph_emb);  // [1,1]
  double stop_prob = 1.0 / (1.0 + std::exp(-static_cast<double>(t.value(stop_logit).v[0])));
  if (action.stop) {
    score.logp = t.log_sigmoid(stop_logit);
    score.heads = 1;
    score.correct = stop_prob >= 0.5 ? 1 : 0;
    return score;
  }
  Val not_stop = t.log_sigmoid(t.scale(stop_logit, -1.0f));
  Val lf = t.log_softmax(ev.first_logits, 0);  // [n,1]
  Val lp_first = t.pick(lf, action.first, 0);
  Val sl = second_logits_for(t, policy, ev, scaffold_emb, action.first);
  Val ls = t.log_softmax(sl, 0);
  Val lp_second = t.pick(ls, action.second, 0);
  Val bl = bond_logits_for(t, policy, ev, scaffold_emb, action.first, action.second);
  Val lb = t.log_softmax(bl, 1);  // [1,3]
  Val lp_bond = t.pick(lb, 0, bond_index(action.bond));
  score.logp = t.add(t.add(not_stop, lp_first), t.add(lp_second, lp_bond));
  score.heads = 4;
  score.correct += stop_prob < 0.5 ? 1 : 0;
  auto lfv = row_log_softmax(t.value(ev.first_logits));
  score.correct += argmax(lfv) == action.first ? 1 : 0;
  auto lsv = row_log_softmax(t.value(sl));
  score.correct += argmax(lsv) == action.second ? 1 : 0;
  const Tensor& blv = t.value(bl);
  int best_bond = 0;
  for (int i = 1; i < kBondTypeCount; ++i)
    if (blv.v[i] > blv.v[best_bond]) best_bond = i;
  score.correct += best_bond == bond_index(action.bond) ? 1 : 0;
  return score;
}

std::pair<GcpnAction, double> gcpn_sample_action(GcpnPolicy& policy, const GenerationState& state,
                                                 const ScaffoldSet& scaffolds, Rng& rng) {
  if (state.graph.num_atoms() == 0) throw EmptyGraph("policy needs at least one seed atom");
  Tape t(false);
  GraphContext ctx = policy.gnn.make_context(state.graph);
  StateEval ev = eval_state(t, policy, ctx, /*train_bn=*/false);
  std::vector<Val> scaf = embed_scaffolds(t, policy, scaffolds);

  float stop_logit = t.value(policy.f_stop.forward(t, ev.graph_emb)).v[0];
  double p_stop = 1.0 / (1.0 + std::exp(-static_cast<double>(stop_logit)));
  GcpnAction a;
  if (rng.uniform() < p_stop) {
    a.stop = true;
    return {a, std::log(std::max(p_stop, 1e-30))};
  }
  double logp = std::log(std::max(1.0 - p_stop, 1e-30));
  auto lf = row_log_softmax(t.value(ev.first_logits));
  std::vector<float> pf(lf.size());
  for (std::size_t i = 0; i < lf.size(); ++i) pf[i] = static_cast<float>(std::exp(lf[i]));
  a.first = rng.categorical(pf);
  logp += lf[a.first];

  auto ls = row_log_softmax(t.value(second_logits_for(t, policy, ev, scaf, a.first)));
  std::vector<float> ps(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) ps[i] = static_cast<float>(std::exp(ls[i]));
  a.second = rng.categorical(ps);
  logp += ls[a.second];

  Tensor bl = t.value(bond_logits_for(t, policy, ev, scaf, a.first, a.second));
  Tensor blc(kBondTypeCount, 1);
  for (int i = 0; i < kBondTypeCount; ++i) blc.v[i] = bl.v[i];
  auto lb = row_log_softmax(blc);
  std::vector<float> pb(lb.size());
  for (std::size_t i = 0; i < lb.size(); ++i) pb[i] = static_cast<float>(std::exp(lb[i]));
  int b = rng.categorical(pb);
  a.bond = static_cast<BondType>(b + 1);
  logp += lb[b];
  return {a, logp};
}

namespace {

bool action_applies(const MolecularGraph& g, const GcpnAction& a, const ScaffoldSet& scaffolds,
                    int max_size, MolecularGraph* out) {
  const int n = g.num_atoms();
  if (a.first < 0 || a.first >= n) return false;
  const int order = bond_order(a.bond);
  if (a.second >= 0 && a.second < n) {
    if (a.second == a.first) return false;
    if (g.has_edge(a.first, a.second)) return false;
    if (!g.can_accept(a.first, order) || !g.can_accept(a.second, order)) return false;
    *out = g;
    out->add_bond(a.first, a.second, a.bond);
    return true;
  }
  int scaffold = a.second - n;
  if (scaffold < 0 || scaffold >= static_cast<int>(scaffolds.fragments.size())) return false;
  const MolecularGraph& frag = scaffolds.fragments[scaffold];
  if (n + frag.num_atoms() > max_size) return false;
  if (!g.can_accept(a.first, order)) return false;
  if (frag.valence_used(0) + order > max_valence(frag.atom(0))) return false;
  *out = g;
  int base = out->append_fragment(frag);
  out->add_bond(a.first, base, a.bond);
  return true;
}

}  // namespace

StepOutcome apply_action(const GenerationState& state, GcpnAction first_try, double first_logp,
                         const ActionSampler& redraw, int resample_budget,
                         const ScaffoldSet& scaffolds, int max_size) {
  StepOutcome out;
  out.next = state;
  GcpnAction a = first_try;
  double logp = first_logp;
  for (int attempt = 0;; ++attempt) {
    if (a.stop) {
      out.next.done = true;
      out.next.step = state.step + 1;
      out.action = a;
      out.logp = logp;
      out.terminal = true;
      return out;
    }
    MolecularGraph applied(state.graph.max_nodes());
    if (action_applies(state.graph, a, scaffolds, max_size, &applied)) {
      out.next.graph = std::move(applied);
      out.next.step = state.step + 1;
      out.action = a;
      out.logp = logp;
      out.terminal = out.next.graph.num_atoms() >= max_size;
      return out;
    }
    ++out.rejections;
    if (attempt >= resample_budget) {
      out.action = a;
      out.logp = logp;
      out.terminal = true;
      out.exhausted = true;
      out.next.done = true;
      return out;
    }
    std::tie(a, logp) = redraw();
  }
}

GcpnTrajectory gcpn_rollout(GcpnPolicy& policy, const ScaffoldSet& scaffolds, int max_size,
                            int resample_budget, Rng& rng) {
  GcpnTrajectory traj;
  GenerationState state;
  state.graph = MolecularGraph(max_size);
  std::span<const float> marginal(policy.seed_marginal.v.data(), kElementCount);
  state.graph.add_atom(static_cast<Element>(rng.categorical(marginal)));

  while (!state.done && state.graph.num_atoms() < max_size) {
    auto [action, logp] = gcpn_sample_action(policy, state, scaffolds, rng);
    auto redraw = [&]() { return gcpn_sample_action(policy, state, scaffolds, rng); };
    StepOutcome outcome =
        apply_action(state, action, logp, redraw, resample_budget, scaffolds, max_size);
    GcpnStep step;
    step.state = state.graph;
    step.action = outcome.action;
    step.logp = outcome.logp;
    step.penalty = outcome.rejections > 0;
    traj.steps.push_back(std::move(step));
    traj.exhausted = outcome.exhausted;
    state = outcome.next;
    if (outcome.terminal) break;
  }
  traj.final_graph = state.graph;
  return traj;
}

GcpnDecomposition decompose_bfs(const MolecularGraph& g, const ScaffoldSet& scaffolds) {
  GcpnDecomposition out;
  if (g.num_atoms() == 0) throw EmptyGraph("cannot decompose an empty molecule");
  std::vector<int> pos(g.num_atoms(), -1);
  MolecularGraph partial(g.max_nodes());
  pos[0] = partial.add_atom(g.atom(0));
  std::set<std::pair<int, int>> edge_done;
  std::deque<int> queue{0};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (const auto& [w, bond] : g.neighbors(u)) {
      std::pair<int, int> key{std::min(u, w), std::max(u, w)};
      if (pos[w] < 0) {
        GcpnAction a;
        a.first = pos[u];
        a.second = partial.num_atoms() + scaffolds.single_atom_index(g.atom(w));
        a.bond = bond;
        out.states.push_back(partial);
        out.actions.push_back(a);
        pos[w] = partial.add_atom(g.atom(w));
        partial.add_bond(pos[u], pos[w], bond);
        edge_done.insert(key);
        queue.push_back(w);
      } else if (!edge_done.count(key)) {
        GcpnAction a;
        a.first = pos[u];
        a.second = pos[w];
        a.bond = bond;
        out.states.push_back(partial);
        out.actions.push_back(a);
        partial.add_bond(pos[u], pos[w], bond);
        edge_done.insert(key);
      }
    }
  }
  GcpnAction stop;
  stop.stop = true;
  out.states.push_back(partial);
  out.actions.push_back(stop);
  return out;
}

PretrainStats gcpn_pretrain_step(GcpnPolicy& policy, const std::vector<const MolecularGraph*>& batch,
                                 const ScaffoldSet& scaffolds, Adam& opt) {
  Tape t;
  std::vector<Val> scaf = embed_scaffolds(t, policy, scaffolds);
  Val total{};
  long heads = 0, correct = 0;
  for (const MolecularGraph* mol : batch) {
    GcpnDecomposition dec = decompose_bfs(*mol, scaffolds);
    for (std::size_t s = 0; s < dec.actions.size(); ++s) {
      GraphContext ctx = policy.gnn.make_context(dec.states[s]);
      GcpnActionScore sc =
          gcpn_action_log_prob(t, policy, ctx, scaf, dec.actions[s], /*train_bn=*/true);
      total = total.valid() ? t.add(total, sc.logp) : sc.logp;
      heads += sc.heads;
      correct += sc.correct;
    }
  }
  Val loss = t.scale(total, -1.0f / static_cast<float>(heads));
  t.backward(loss);
  auto params = policy.parameters();
  opt.step(params);
  PretrainStats stats;
  stats.nll_all = t.scalar(loss);
  stats.acc = static_cast<double>(correct) / static_cast<double>(heads);
  return stats;
}

}  // namespace molgen
