// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/layers.hpp"

#include <algorithm>
#include <cmath>

namespace molgen {

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kGcn: return "gcn";
    case LayerKind::kRgcn: return "rgcn";
    case LayerKind::kGin: return "gin";
    case LayerKind::kGat: return "gat";
    case LayerKind::kGatv2: return "gatv2";
    case LayerKind::kPna: return "pna";
    case LayerKind::kGsnV: return "gsn";
    case LayerKind::kGsnE: return "gsn_e";
    case LayerKind::kGearnet: return "gearnet";
  }
  return "?";
}

std::optional<LayerKind> layer_kind_from_name(std::string_view name) {
  if (name == "gcn") return LayerKind::kGcn;
  if (name == "rgcn") return LayerKind::kRgcn;
  if (name == "gin") return LayerKind::kGin;
  if (name == "gat") return LayerKind::kGat;
  if (name == "gatv2") return LayerKind::kGatv2;
  if (name == "pna") return LayerKind::kPna;
  if (name == "gsn" || name == "gsn_v") return LayerKind::kGsnV;
  if (name == "gsn_e") return LayerKind::kGsnE;
  if (name == "gearnet") return LayerKind::kGearnet;
  return std::nullopt;
}

Mlp Mlp::make(const std::string& name, const std::vector<int>& dims, Act act, Rng& rng) {
  Mlp m;
  m.act = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    m.w.push_back(xavier_param(name + ".w" + std::to_string(l), dims[l], dims[l + 1], rng));
    m.b.push_back(Parameter(name + ".b" + std::to_string(l), Tensor::zeros(1, dims[l + 1])));
  }
  return m;
}

Val Mlp::forward(Tape& t, Val x) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    x = t.add(t.matmul(x, t.param(w[l])), t.param(b[l]));
    if (l + 1 < w.size()) {
      if (act == Act::kRelu) x = t.relu(x);
      if (act == Act::kTanh) x = t.tanh(x);
    }
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (std::size_t l = 0; l < w.size(); ++l) {
    out.push_back(&w[l]);
    out.push_back(&b[l]);
  }
}

EdgeRelationalGraph build_edge_relational_graph(const MolecularGraph& g) {
  EdgeRelationalGraph erg;
  // Meta-node 2e is (i->j), 2e+1 is (j->i).
  std::vector<std::vector<std::pair<int, int>>> out_of(g.num_atoms());  // node -> (meta id, dst)
  for (int e = 0; e < g.num_bonds(); ++e) {
    const Edge& ed = g.edges()[e];
    erg.meta_nodes.push_back({ed.i, ed.j, ed.type});
    erg.meta_nodes.push_back({ed.j, ed.i, ed.type});
    out_of[ed.i].push_back({2 * e, ed.j});
    out_of[ed.j].push_back({2 * e + 1, ed.i});
  }
  for (std::size_t a = 0; a < erg.meta_nodes.size(); ++a) {
    const auto& mn = erg.meta_nodes[a];
    int r1 = bond_index(mn.type);
    for (const auto& [b, k] : out_of[mn.dst]) {
      if (k == mn.src) continue;  // never link an edge to its own reverse
      int r2 = bond_index(erg.meta_nodes[b].type);
      erg.meta_edges.push_back({static_cast<int>(a), b, kBondTypeCount * r1 + r2});
    }
  }
  return erg;
}

DirectedEdges build_directed_edges(const MolecularGraph& g) {
  DirectedEdges de;
  de.in_edges.resize(g.num_atoms());
  for (int e = 0; e < g.num_bonds(); ++e) {
    const Edge& ed = g.edges()[e];
    de.src.push_back(ed.i);
    de.dst.push_back(ed.j);
    de.rel.push_back(bond_index(ed.type));
    de.in_edges[ed.j].push_back(2 * e);
    de.src.push_back(ed.j);
    de.dst.push_back(ed.i);
    de.rel.push_back(bond_index(ed.type));
    de.in_edges[ed.i].push_back(2 * e + 1);
  }
  return de;
}

Tensor atom_features(const MolecularGraph& g) {
  Tensor h(g.num_atoms(), kElementCount);
  for (int i = 0; i < g.num_atoms(); ++i) h.at(i, static_cast<int>(g.atom(i))) = 1.0f;
  return h;
}

Tensor bond_features_directed(const MolecularGraph& g) {
  Tensor e(2 * g.num_bonds(), kBondTypeCount);
  for (int k = 0; k < g.num_bonds(); ++k) {
    int rel = bond_index(g.edges()[k].type);
    e.at(2 * k, rel) = 1.0f;
    e.at(2 * k + 1, rel) = 1.0f;
  }
  return e;
}

void GnnLayer::collect(std::vector<Parameter*>& out) {
  switch (kind) {
    case LayerKind::kGcn:
      out.push_back(&w);
      break;
    case LayerKind::kRgcn:
      for (auto& p : rel_w) out.push_back(&p);
      out.push_back(&w);
      break;
    case LayerKind::kGin:
      out.push_back(&gin_eps);
      mlp1.collect(out);
      break;
    case LayerKind::kGat:
      for (auto& p : head_w) out.push_back(&p);
      for (auto& p : head_a) out.push_back(&p);
      break;
    case LayerKind::kGatv2:
      for (auto& p : head_w) out.push_back(&p);
      for (auto& p : head_att_w) out.push_back(&p);
      for (auto& p : head_a) out.push_back(&p);
      break;
    case LayerKind::kPna:
    case LayerKind::kGsnV:
    case LayerKind::kGsnE:
      mlp1.collect(out);
      mlp2.collect(out);
      break;
    case LayerKind::kGearnet:
      for (auto& p : rel_w) out.push_back(&p);
      node_bn.collect(out);
      if (edge_dim > 0) {
        out.push_back(&fc_w);
        for (auto& p : edge_rel_w) out.push_back(&p);
        edge_bn.collect(out);
      }
      break;
  }
}

GnnLayer make_layer(const std::string& name, LayerKind kind, int in_dim, int out_dim, int heads,
                    int motif_dim, int edge_dim, float pna_delta, Rng& rng) {
  GnnLayer l;
  l.kind = kind;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  l.heads = heads;
  l.motif_dim = motif_dim;
  l.edge_dim = edge_dim;
  l.pna_delta = pna_delta;
  const int msg_in = in_dim + edge_dim;
  switch (kind) {
    case LayerKind::kGcn:
      l.w = xavier_param(name + ".w", msg_in, out_dim, rng);
      break;
    case LayerKind::kRgcn:
      for (int r = 0; r < kBondTypeCount; ++r)
        l.rel_w.push_back(xavier_param(name + ".w_r" + std::to_string(r), msg_in, out_dim, rng));
      l.w = xavier_param(name + ".w0", in_dim, out_dim, rng);
      break;
    case LayerKind::kGin:
      l.gin_eps = Parameter(name + ".eps", Tensor::zeros(1, 1));
      l.mlp1 = Mlp::make(name + ".mlp", {msg_in, out_dim, out_dim}, Mlp::Act::kRelu, rng);
      break;
    case LayerKind::kGat:
    case LayerKind::kGatv2: {
      if (out_dim % heads != 0) throw ShapeMismatch("attention heads must divide out_dim");
      int dh = out_dim / heads;
      for (int k = 0; k < heads; ++k) {
        l.head_w.push_back(xavier_param(name + ".w_h" + std::to_string(k), msg_in, dh, rng));
        if (kind == LayerKind::kGat) {
          l.head_a.push_back(xavier_param(name + ".a_h" + std::to_string(k), 2 * dh, 1, rng));
        } else {
          l.head_att_w.push_back(
              xavier_param(name + ".watt_h" + std::to_string(k), in_dim + msg_in, dh, rng));
          l.head_a.push_back(xavier_param(name + ".a_h" + std::to_string(k), dh, 1, rng));
        }
      }
      break;
    }
    case LayerKind::kPna:
      l.mlp1 = Mlp::make(name + ".psi", {in_dim + msg_in, out_dim}, Mlp::Act::kRelu, rng);
      l.mlp2 = Mlp::make(name + ".phi", {in_dim + 12 * out_dim, out_dim}, Mlp::Act::kRelu, rng);
      break;
    case LayerKind::kGsnV:
      l.mlp1 = Mlp::make(name + ".psi", {in_dim + msg_in + 2 * motif_dim, out_dim},
                         Mlp::Act::kRelu, rng);
      l.mlp2 = Mlp::make(name + ".phi", {in_dim + out_dim, out_dim}, Mlp::Act::kRelu, rng);
      break;
    case LayerKind::kGsnE:
      l.mlp1 =
          Mlp::make(name + ".psi", {in_dim + msg_in + motif_dim, out_dim}, Mlp::Act::kRelu, rng);
      l.mlp2 = Mlp::make(name + ".phi", {in_dim + out_dim, out_dim}, Mlp::Act::kRelu, rng);
      break;
    case LayerKind::kGearnet:
      for (int r = 0; r < kBondTypeCount; ++r)
        l.rel_w.push_back(xavier_param(name + ".w_r" + std::to_string(r), in_dim, out_dim, rng));
      l.node_bn = BatchNorm(name + ".bn", out_dim);
      if (edge_dim > 0) {
        l.fc_w = xavier_param(name + ".fc", edge_dim, in_dim, rng);
        for (int r = 0; r < kMetaRelationCount; ++r)
          l.edge_rel_w.push_back(
              xavier_param(name + ".we_r" + std::to_string(r), edge_dim, edge_dim, rng));
        l.edge_bn = BatchNorm(name + ".ebn", edge_dim);
      }
      break;
  }
  return l;
}

GnnModel GnnModel::make(const GnnConfig& cfg, Rng& rng) {
  GnnModel m;
  m.cfg = cfg;
  m.edge_proj_w = xavier_param("gnn.edge_proj.w", kBondTypeCount, cfg.hidden, rng);
  m.edge_proj_b = Parameter("gnn.edge_proj.b", Tensor::zeros(1, cfg.hidden));
  int ed = cfg.edge_features ? cfg.hidden : 0;
  for (int l = 0; l < cfg.num_layers; ++l) {
    int in = l == 0 ? kElementCount : cfg.hidden;
    std::string name = "gnn.l" + std::to_string(l);
    m.layers.push_back(make_layer(name, cfg.kind, in, cfg.hidden, cfg.heads, cfg.motif_dim,
                                  cfg.kind == LayerKind::kGearnet ? (cfg.edge_features ? cfg.hidden : 0)
                                                                  : ed,
                                  cfg.pna_delta, rng));
    m.post_bn.push_back(BatchNorm(name + ".post_bn", cfg.hidden));
  }
  return m;
}

void GnnModel::collect_params(std::vector<Parameter*>& out) {
  if (cfg.edge_features) {
    out.push_back(&edge_proj_w);
    out.push_back(&edge_proj_b);
  }
  for (auto& l : layers) l.collect(out);
  for (auto& bn : post_bn) bn.collect(out);
}

std::vector<Parameter*> GnnModel::parameters() {
  std::vector<Parameter*> out;
  collect_params(out);
  return out;
}

void GnnModel::collect_state(std::vector<std::pair<std::string, Tensor*>>& out) {
  std::vector<Parameter*> params;
  collect_params(params);
  for (Parameter* p : params) out.emplace_back(p->name, &p->value);
  for (auto& l : layers) {
    if (l.kind == LayerKind::kGearnet) {
      out.emplace_back(l.node_bn.gamma.name + ".rm", &l.node_bn.running_mean);
      out.emplace_back(l.node_bn.gamma.name + ".rv", &l.node_bn.running_var);
      if (l.edge_dim > 0) {
        out.emplace_back(l.edge_bn.gamma.name + ".rm", &l.edge_bn.running_mean);
        out.emplace_back(l.edge_bn.gamma.name + ".rv", &l.edge_bn.running_var);
      }
    }
  }
  for (auto& bn : post_bn) {
    out.emplace_back(bn.gamma.name + ".rm", &bn.running_mean);
    out.emplace_back(bn.gamma.name + ".rv", &bn.running_var);
  }
}

GraphContext GnnModel::make_context(MolecularGraph g) const {
  GraphContext ctx(std::move(g));
  if (cfg.kind == LayerKind::kGsnV || cfg.kind == LayerKind::kGsnE) {
    ctx.motifs = compute_motif_features(ctx.graph);
  }
  if (cfg.kind == LayerKind::kGearnet && cfg.edge_features) {
    ctx.erg = build_edge_relational_graph(ctx.graph);
  }
  return ctx;
}

Val project_edge_features(Tape& t, GnnModel& model, const MolecularGraph& g) {
  if (!model.cfg.edge_features) throw ShapeMismatch("edge features are disabled for this model");
  Val e_onehot = t.constant(bond_features_directed(g));
  return t.add(t.matmul(e_onehot, t.param(model.edge_proj_w)), t.param(model.edge_proj_b));
}

namespace {

// h rows gathered for edge sources, with projected edge features appended
// when the layer consumes them (zero columns appended for self terms).
Val edge_message_inputs(Tape& t, const GnnLayer& layer, const DirectedEdges& de, Val h, Val pe,
                        const std::vector<int>& ids) {
  std::vector<int> srcs;
  srcs.reserve(ids.size());
  for (int e : ids) srcs.push_back(de.src[e]);
  Val hs = t.index_select(h, srcs);
  if (layer.edge_dim == 0) return hs;
  Val pes = t.index_select(pe, ids);
  return t.concat(1, hs, pes);
}

Val zero_pad_cols(Tape& t, Val x, int extra) {
  if (extra == 0) return x;
  const Tensor& v = t.value(x);
  return t.concat(1, x, t.constant(Tensor::zeros(v.rows, extra)));
}

std::vector<int> all_edge_ids(const DirectedEdges& de) {
  std::vector<int> ids(de.count());
  for (int i = 0; i < de.count(); ++i) ids[i] = i;
  return ids;
}

std::vector<int> edge_ids_with_rel(const DirectedEdges& de, int rel) {
  std::vector<int> ids;
  for (int i = 0; i < de.count(); ++i)
    if (de.rel[i] == rel) ids.push_back(i);
  return ids;
}

Val forward_gcn(Tape& t, GnnLayer& layer, const DirectedEdges& de, Val h, Val pe, int n) {
  // Self-loops are part of the normalized adjacency: deg~ = deg + 1.
  Val w = t.param(layer.w);
  std::vector<int> dst;
  Val msgs;
  if (de.count() > 0) {
    auto ids = all_edge_ids(de);
    Val x = edge_message_inputs(t, layer, de, h, pe, ids);
    Tensor coef(de.count(), 1);
    for (int e = 0; e < de.count(); ++e) {
      double di = de.in_edges[de.dst[e]].size() + 1.0;
      double dj = de.in_edges[de.src[e]].size() + 1.0;
      coef.v[e] = static_cast<float>(1.0 / std::sqrt(di * dj));
    }
    Val scaled = t.mul(x, t.constant(std::move(coef)));
    msgs = scaled;
    dst = de.dst;
  }
  // Self terms.
  Tensor self_coef(n, 1);
  for (int i = 0; i < n; ++i)
    self_coef.v[i] = static_cast<float>(1.0 / (de.in_edges[i].size() + 1.0));
  Val self = t.mul(zero_pad_cols(t, h, layer.edge_dim), t.constant(std::move(self_coef)));
  Val x_all = msgs.valid() ? t.concat(0, msgs, self) : self;
  std::vector<int> dst_all = dst;
  for (int i = 0; i < n; ++i) dst_all.push_back(i);
  Val m = t.matmul(x_all, w);
  return t.scatter_add(m, dst_all, n);
}

Val forward_rgcn(Tape& t, GnnLayer& layer, const DirectedEdges& de, Val h, Val pe, int n) {
  Val out = t.matmul(h, t.param(layer.w));  // W0 self term
  for (int r = 0; r < kBondTypeCount; ++r) {
    auto ids = edge_ids_with_rel(de, r);
    if (ids.empty()) continue;  // relations with no neighbors contribute nothing
    Val x = edge_message_inputs(t, layer, de, h, pe, ids);
    // c_{i,r} = 1 / |N_i^r|
    std::vector<int> count(n, 0);
    for (int e : ids) ++count[de.dst[e]];
    Tensor coef(static_cast<int>(ids.size()), 1);
    for (std::size_t k = 0; k < ids.size(); ++k)
      coef.v[k] = 1.0f / static_cast<float>(count[de.dst[ids[k]]]);
    Val m = t.matmul(t.mul(x, t.constant(std::move(coef))), t.param(layer.rel_w[r]));
    std::vector<int> dsts;
    for (int e : ids) dsts.push_back(de.dst[e]);
    out = t.add(out, t.scatter_add(m, dsts, n));
  }
  return out;
}

Val forward_gin(Tape& t, GnnLayer& layer, const DirectedEdges& de, Val h, Val pe, int n) {
  Val self = zero_pad_cols(t, h, layer.edge_dim);
  Val one_plus_eps = t.add_scalar(t.param(layer.gin_eps), 1.0f);
  Val acc = t.mul(self, one_plus_eps);
  if (de.count() > 0) {
    auto ids = all_edge_ids(de);
    Val x = edge_message_inputs(t, layer, de, h, pe, ids);
    acc = t.add(acc, t.scatter_add(x, de.dst, n));
  }
  return layer.mlp1.forward(t, acc);
}

Val forward_attention(Tape& t, GnnLayer& layer, const DirectedEdges& de, Val h, Val pe, int n) {
  const int dh = layer.out_dim / layer.heads;
  std::vector<Val> head_out;
  auto ids = all_edge_ids(de);
  for (int k = 0; k < layer.heads; ++k) {
    if (de.count() == 0) {
      head_out.push_back(t.constant(Tensor::zeros(n, dh)));
      continue;
    }
    Val wk = t.param(layer.head_w[k]);
    Val msg = t.matmul(edge_message_inputs(t, layer, de, h, pe, ids), wk);  // [2E, dh]
    Val scores;
    if (layer.kind == LayerKind::kGat) {
      // LeakyReLU(a^T [W h_i || W m_j]), a split into its two halves.
      Val z_self = t.matmul(zero_pad_cols(t, h, layer.edge_dim), wk);  // [n, dh]
      Val a_leaf = t.param(layer.head_a[k]);
      std::vector<int> dst_half(dh), src_half(dh);
      for (int i = 0; i < dh; ++i) {
        dst_half[i] = i;
        src_half[i] = dh + i;
      }
      Val a_dst = t.index_select(a_leaf, dst_half);  // [dh,1]
      Val a_src = t.index_select(a_leaf, src_half);
      Val u = t.matmul(z_self, a_dst);  // [n,1]
      Val v = t.matmul(msg, a_src);     // [2E,1]
      scores = t.leaky_relu(t.add(t.index_select(u, de.dst), v), layer.leaky_slope);
    } else {
      // a^T LeakyReLU(W [h_i || m_j])
      Val hd = t.index_select(h, de.dst);
      Val x = edge_message_inputs(t, layer, de, h, pe, ids);
      Val q = t.leaky_relu(t.matmul(t.concat(1, hd, x), t.param(layer.head_att_w[k])),
                           layer.leaky_slope);
      scores = t.matmul(q, t.param(layer.head_a[k]));  // [2E,1]
    }
    // Per-destination softmax, assembled back into a [2E,1] coefficient vector.
    Val alpha{};
    for (int i = 0; i < n; ++i) {
      const auto& in = de.in_edges[i];
      if (in.empty()) continue;
      Val s_i = t.index_select(scores, in);
      Val a_i = t.softmax(s_i, 0);
      Val part = t.scatter_add(a_i, in, de.count());
      alpha = alpha.valid() ? t.add(alpha, part) : part;
    }
    Val weighted = t.mul(msg, alpha);
    head_out.push_back(t.scatter_add(weighted, de.dst, n));
  }
  return t.concat_cols(head_out);
}

Val forward_pna(Tape& t, GnnLayer& layer, const DirectedEdges& de, Val h, Val pe, int n) {
  const int dm = layer.out_dim;
  Val msgs;
  if (de.count() > 0) {
    auto ids = all_edge_ids(de);
    Val hd = t.index_select(h, de.dst);
    Val x = t.concat(1, hd, edge_message_inputs(t, layer, de, h, pe, ids));
    msgs = t.relu(layer.mlp1.forward(t, x));  // [2E, dm]
  }
  std::vector<Val> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto& in = de.in_edges[i];
    int d = static_cast<int>(in.size());
    if (d == 0) {
      rows.push_back(t.constant(Tensor::zeros(1, 12 * dm)));
      continue;
    }
    Val mi = t.index_select(msgs, in);  // [d, dm]
    Val mean_v = t.mean(mi, 0);
    Val max_v = t.max(mi, 0);
    Val min_v = t.scale(t.max(t.scale(mi, -1.0f), 0), -1.0f);
    Val diff = t.sub(mi, mean_v);
    Val std_v = t.sqrt(t.mean(t.mul(diff, diff), 0));  // population std
    Val base = t.concat_cols(std::vector<Val>{mean_v, max_v, min_v, std_v});  // [1, 4dm]
    float logd = std::log(static_cast<float>(d) + 1.0f);
    float amp = logd / layer.pna_delta;
    float att = layer.pna_delta / logd;
    rows.push_back(t.concat_cols(std::vector<Val>{base, t.scale(base, amp), t.scale(base, att)}));
  }
  Val agg = rows[0];
  for (int i = 1; i < n; ++i) agg = t.concat(0, agg, rows[i]);
  return layer.mlp2.forward(t, t.concat(1, h, agg));
}

Val forward_gsn(Tape& t, GnnLayer& layer, const GraphContext& ctx, const DirectedEdges& de, Val h,
                Val pe, int n) {
  if (!ctx.motifs.has_value()) {
    throw MissingMotifFeatures("GSN layer requires precomputed motif counts");
  }
  const MotifFeatures& mf = *ctx.motifs;
  const int md = layer.motif_dim;
  Val agg;
  if (de.count() > 0) {
    auto ids = all_edge_ids(de);
    Val hd = t.index_select(h, de.dst);
    Val hs_pe = edge_message_inputs(t, layer, de, h, pe, ids);
    Val structural;
    if (layer.kind == LayerKind::kGsnV) {
      Tensor xv(n, md);
      for (int i = 0; i < n; ++i)
        for (int m = 0; m < md; ++m) xv.at(i, m) = static_cast<float>(mf.vertex_counts[i][m]);
      Val xv_val = t.constant(std::move(xv));
      structural = t.concat(1, t.index_select(xv_val, de.dst), t.index_select(xv_val, de.src));
    } else {
      Tensor xe(de.count(), md);
      for (int e = 0; e < de.count(); ++e)
        for (int m = 0; m < md; ++m)
          xe.at(e, m) = static_cast<float>(mf.edge_counts[e / 2][m]);
      structural = t.constant(std::move(xe));
    }
    // psi(h_i, h_j, x..., e_ij): node features first, then structural counts.
    Val x = t.concat(1, t.concat(1, hd, hs_pe), structural);
    Val m = t.relu(layer.mlp1.forward(t, x));
    agg = t.scatter_add(m, de.dst, n);
  } else {
    agg = t.constant(Tensor::zeros(n, layer.out_dim));
  }
  return layer.mlp2.forward(t, t.concat(1, h, agg));
}

Val forward_gearnet(Tape& t, GnnLayer& layer, const GraphContext& ctx, const DirectedEdges& de,
                    Val h, Val* edge_embed, bool train_bn, int n) {
  Val conv;
  bool use_edges = layer.edge_dim > 0;
  if (use_edges && de.count() > 0 && !(edge_embed && edge_embed->valid())) {
    throw MissingEdgeGraph("GearNet edge pass requires edge embeddings");
  }
  for (int r = 0; r < kBondTypeCount; ++r) {
    auto ids = edge_ids_with_rel(de, r);
    if (ids.empty()) continue;
    std::vector<int> srcs, dsts;
    for (int e : ids) {
      srcs.push_back(de.src[e]);
      dsts.push_back(de.dst[e]);
    }
    Val inner = t.index_select(h, srcs);
    if (use_edges) {
      // h_j + FC(e_{j->i}): the message edge is the one pointing at i.
      Val e_sel = t.index_select(*edge_embed, ids);
      inner = t.add(inner, t.matmul(e_sel, t.param(layer.fc_w)));
    }
    Val summed = t.scatter_add(inner, dsts, n);
    Val m = t.matmul(summed, t.param(layer.rel_w[r]));
    conv = conv.valid() ? t.add(conv, m) : m;
  }
  if (!conv.valid()) conv = t.constant(Tensor::zeros(n, layer.out_dim));
  Val out = t.relu(t.batch_norm(conv, layer.node_bn, train_bn));
  if (layer.in_dim == layer.out_dim) out = t.add(out, h);  // residual
  if (use_edges && de.count() > 0 && edge_embed) {
    if (!ctx.erg.has_value()) throw MissingEdgeGraph("GearNet edge pass requires the edge graph");
    *edge_embed = gearnet_edge_message(t, layer, *ctx.erg, *edge_embed, train_bn);
  }
  return out;
}

}  // namespace

Val gearnet_edge_message(Tape& t, GnnLayer& layer, const EdgeRelationalGraph& erg, Val edge_embed,
                         bool train_bn) {
  const int m = static_cast<int>(erg.meta_nodes.size());
  const Tensor& ev = t.value(edge_embed);
  if (ev.rows != m) throw ShapeMismatch("edge embeddings misaligned with the edge graph");
  Val conv;
  for (int rel = 0; rel < kMetaRelationCount; ++rel) {
    std::vector<int> from, to;
    for (const auto& me : erg.meta_edges) {
      if (me.rel == rel) {
        from.push_back(me.from);
        to.push_back(me.to);
      }
    }
    if (from.empty()) continue;
    Val gathered = t.index_select(edge_embed, from);
    Val summed = t.scatter_add(gathered, to, m);
    Val w = t.matmul(summed, t.param(layer.edge_rel_w[rel]));
    conv = conv.valid() ? t.add(conv, w) : w;
  }
  if (!conv.valid()) conv = t.constant(Tensor::zeros(m, layer.edge_dim));
  return t.relu(t.batch_norm(conv, layer.edge_bn, train_bn));
}

Val layer_forward(Tape& t, GnnLayer& layer, const GraphContext& ctx, const DirectedEdges& de,
                  Val h, Val pe, Val* edge_embed, bool train_bn) {
  const int n = ctx.graph.num_atoms();
  if (layer.edge_dim > 0 && layer.kind != LayerKind::kGearnet && de.count() > 0 && !pe.valid()) {
    throw ShapeMismatch("layer expects projected edge features");
  }
  switch (layer.kind) {
    case LayerKind::kGcn: return forward_gcn(t, layer, de, h, pe, n);
    case LayerKind::kRgcn: return forward_rgcn(t, layer, de, h, pe, n);
    case LayerKind::kGin: return forward_gin(t, layer, de, h, pe, n);
    case LayerKind::kGat:
    case LayerKind::kGatv2: return forward_attention(t, layer, de, h, pe, n);
    case LayerKind::kPna: return forward_pna(t, layer, de, h, pe, n);
    case LayerKind::kGsnV:
    case LayerKind::kGsnE: return forward_gsn(t, layer, ctx, de, h, pe, n);
    case LayerKind::kGearnet: return forward_gearnet(t, layer, ctx, de, h, edge_embed, train_bn, n);
  }
  throw Error("unreachable layer kind");
}

GnnOutput message_pass(Tape& t, GnnModel& model, const GraphContext& ctx, bool train_bn) {
  const MolecularGraph& g = ctx.graph;
  DirectedEdges de = build_directed_edges(g);
  Val h = t.constant(atom_features(g));
  Val pe{};
  Val edge_embed{};
  if (model.cfg.edge_features && de.count() > 0) {
    Val proj = project_edge_features(t, model, g);
    if (model.cfg.kind == LayerKind::kGearnet) {
      edge_embed = proj;
    } else {
      pe = proj;
    }
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = layer_forward(t, model.layers[l], ctx, de, h, pe, &edge_embed, train_bn);
    h = t.relu(t.batch_norm(h, model.post_bn[l], train_bn));
  }
  GnnOutput out;
  out.node_emb = h;
  out.graph_emb = t.sum(h, 0);
  return out;
}

std::vector<double> attention_coeffs(LayerKind variant, const Tensor& h_i, const Tensor& neighbors,
                                     const Tensor& a, const Tensor& w, float leaky_slope) {
  if (neighbors.rows == 0) throw EmptyNeighborhood("attention over an empty neighborhood");
  const int k = neighbors.rows;
  auto leaky = [&](double x) { return x > 0 ? x : leaky_slope * x; };
  std::vector<double> scores(k, 0.0);
  if (variant == LayerKind::kGat) {
    const int dh = w.cols;
    if (a.rows != 2 * dh) throw ShapeMismatch("gat attention vector must have 2*head_dim rows");
    std::vector<double> zi(dh, 0.0);
    for (int c = 0; c < dh; ++c)
      for (int r = 0; r < w.rows && r < h_i.cols; ++r) zi[c] += h_i.v[r] * w.at(r, c);
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int c = 0; c < dh; ++c) {
        double zj = 0.0;
        for (int r = 0; r < w.rows; ++r) zj += neighbors.at(j, r) * w.at(r, c);
        s += a.v[c] * zi[c] + a.v[dh + c] * zj;
      }
      scores[j] = leaky(s);
    }
  } else if (variant == LayerKind::kGatv2) {
    const int dh = w.cols;
    if (a.rows != dh) throw ShapeMismatch("gatv2 attention vector must have head_dim rows");
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int c = 0; c < dh; ++c) {
        double q = 0.0;
        for (int r = 0; r < h_i.cols; ++r) q += h_i.v[r] * w.at(r, c);
        for (int r = 0; r < neighbors.cols; ++r) q += neighbors.at(j, r) * w.at(h_i.cols + r, c);
        s += a.v[c] * leaky(q);
      }
      scores[j] = s;
    }
  } else {
    throw Error("attention_coeffs: variant must be gat or gatv2");
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : scores) s /= z;
  return scores;
}

std::vector<double> pna_aggregate(const std::vector<std::vector<double>>& messages, int degree,
                                  double delta) {
  const std::size_t dm = messages.empty() ? 0 : messages[0].size();
  std::vector<double> out(12 * dm, 0.0);
  if (degree == 0 || messages.empty()) return out;
  std::vector<double> mean(dm, 0.0), mx(dm), mn(dm), sd(dm, 0.0);
  for (std::size_t c = 0; c < dm; ++c) {
    mx[c] = messages[0][c];
    mn[c] = messages[0][c];
  }
  for (const auto& m : messages)
    for (std::size_t c = 0; c < dm; ++c) {
      mean[c] += m[c];
      mx[c] = std::max(mx[c], m[c]);
      mn[c] = std::min(mn[c], m[c]);
    }
  for (std::size_t c = 0; c < dm; ++c) mean[c] /= static_cast<double>(messages.size());
  for (const auto& m : messages)
    for (std::size_t c = 0; c < dm; ++c) sd[c] += (m[c] - mean[c]) * (m[c] - mean[c]);
  for (std::size_t c = 0; c < dm; ++c) sd[c] = std::sqrt(sd[c] / static_cast<double>(messages.size()));
  double logd = std::log(static_cast<double>(degree) + 1.0);
  double scalers[3] = {1.0, logd / delta, delta / logd};
  for (int s = 0; s < 3; ++s)
    for (std::size_t c = 0; c < dm; ++c) {
      out[s * 4 * dm + 0 * dm + c] = scalers[s] * mean[c];
      out[s * 4 * dm + 1 * dm + c] = scalers[s] * mx[c];
      out[s * 4 * dm + 2 * dm + c] = scalers[s] * mn[c];
      out[s * 4 * dm + 3 * dm + c] = scalers[s] * sd[c];
    }
  return out;
}

float mean_log_degree(const std::vector<MolecularGraph>& corpus) {
  double total = 0.0;
  long nodes = 0;
  for (const auto& g : corpus) {
    for (int i = 0; i < g.num_atoms(); ++i) total += std::log(g.degree(i) + 1.0);
    nodes += g.num_atoms();
  }
  if (nodes == 0 || total <= 0.0) return 1.0f;
  return static_cast<float>(total / nodes);
}

}  // namespace molgen
