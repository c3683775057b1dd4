// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_LAYERS_HPP
#define MOLGEN_LAYERS_HPP

#include <optional>
#include <string>
#include <vector>

#include "molgen/expressiveness.hpp"
#include "molgen/graph.hpp"
#include "molgen/tape.hpp"

namespace molgen {

enum class LayerKind { kGcn, kRgcn, kGin, kGat, kGatv2, kPna, kGsnV, kGsnE, kGearnet };

const char* layer_kind_name(LayerKind k);
std::optional<LayerKind> layer_kind_from_name(std::string_view name);

// Small dense MLP; `act` is applied between layers, never after the last.
struct Mlp {
  enum class Act { kNone, kRelu, kTanh };
  std::vector<Parameter> w;
  std::vector<Parameter> b;
  Act act = Act::kRelu;

  static Mlp make(const std::string& name, const std::vector<int>& dims, Act act, Rng& rng);
  Val forward(Tape& t, Val x);
  void collect(std::vector<Parameter*>& out);
};

// Relational graph over the 2|E| directed edges of a molecular graph.
// A meta-edge links (i,j,r1) -> (j,k,r2) when k != i; its relation label is
// the bond-type pair 3*(r1-1) + (r2-1).
struct EdgeRelationalGraph {
  struct MetaNode {
    int src, dst;
    BondType type;
  };
  struct MetaEdge {
    int from, to;  // meta-node indices
    int rel;       // 0..8
  };
  std::vector<MetaNode> meta_nodes;  // order: edge e of g gives 2e=(i->j), 2e+1=(j->i)
  std::vector<MetaEdge> meta_edges;
};

inline constexpr int kMetaRelationCount = kBondTypeCount * kBondTypeCount;

EdgeRelationalGraph build_edge_relational_graph(const MolecularGraph& g);

// Directed-edge view used by every layer: edge e of g appears as 2e=(i->j)
// and 2e+1=(j->i); in_edges[i] lists directed edges ending at i.
struct DirectedEdges {
  std::vector<int> src, dst;
  std::vector<int> rel;  // 0-based bond index
  std::vector<std::vector<int>> in_edges;
  int count() const { return static_cast<int>(src.size()); }
};

DirectedEdges build_directed_edges(const MolecularGraph& g);

Tensor atom_features(const MolecularGraph& g);                     // [n, 9] one-hot
Tensor bond_features_directed(const MolecularGraph& g);            // [2E, 3] one-hot

// One layer of the zoo. Which members are populated depends on `kind`.
struct GnnLayer {
  LayerKind kind = LayerKind::kRgcn;
  int in_dim = 0;
  int out_dim = 0;
  int heads = 1;
  int motif_dim = 0;
  int edge_dim = 0;  // width of projected edge features entering messages (0 = off)
  float pna_delta = 1.0f;
  float leaky_slope = 0.2f;

  Parameter w;                        // gcn W / rgcn W0
  std::vector<Parameter> rel_w;       // rgcn & gearnet per-relation kernels
  Parameter gin_eps;                  // [1,1]
  Mlp mlp1;                           // gin MLP / pna psi / gsn psi
  Mlp mlp2;                           // pna phi / gsn phi
  std::vector<Parameter> head_w;      // gat/gatv2 per-head message transform
  std::vector<Parameter> head_a;      // gat: [2 dh,1]; gatv2: [dh,1]
  std::vector<Parameter> head_att_w;  // gatv2 per-head attention transform
  BatchNorm node_bn;                  // gearnet, inside the layer equation
  Parameter fc_w;                     // gearnet edge-to-node transform
  std::vector<Parameter> edge_rel_w;  // gearnet edge pass, one per meta relation
  BatchNorm edge_bn;                  // gearnet edge pass

  void collect(std::vector<Parameter*>& out);
};

GnnLayer make_layer(const std::string& name, LayerKind kind, int in_dim, int out_dim, int heads,
                    int motif_dim, int edge_dim, float pna_delta, Rng& rng);

struct GnnConfig {
  LayerKind kind = LayerKind::kRgcn;
  int num_layers = 3;
  int hidden = 256;
  int heads = 3;
  bool edge_features = true;
  int motif_dim = 6;
  float pna_delta = 1.0f;
};

// Everything a forward pass needs to know about one graph. Motif features are
// required for GSN layers, the edge-relational graph for GearNet edge passes.
struct GraphContext {
  MolecularGraph graph;
  std::optional<MotifFeatures> motifs;
  std::optional<EdgeRelationalGraph> erg;

  explicit GraphContext(MolecularGraph g) : graph(std::move(g)) {}
};

struct GnnModel {
  GnnConfig cfg;
  Parameter edge_proj_w;  // [3, hidden]
  Parameter edge_proj_b;  // [1, hidden]
  std::vector<GnnLayer> layers;
  std::vector<BatchNorm> post_bn;  // batch norm applied after every layer

  static GnnModel make(const GnnConfig& cfg, Rng& rng);
  int out_dim() const { return cfg.num_layers > 0 ? cfg.hidden : kElementCount; }
  void collect_params(std::vector<Parameter*>& out);
  std::vector<Parameter*> parameters();
  // Named value tensors (parameter values plus batch-norm running stats), in
  // the fixed order used by checkpoints.
  void collect_state(std::vector<std::pair<std::string, Tensor*>>& out);

  // Builds the context this model requires for `g` (motifs / edge graph).
  GraphContext make_context(MolecularGraph g) const;
};

// Projected edge embeddings for each directed edge: one-hot(bond) * W + b.
Val project_edge_features(Tape& t, GnnModel& model, const MolecularGraph& g);

// One layer application (the layer equation only; the model-level batch norm
// and ReLU are applied by message_pass). For GearNet, `edge_embed` carries
// the evolving edge embeddings in and out.
Val layer_forward(Tape& t, GnnLayer& layer, const GraphContext& ctx, const DirectedEdges& de,
                  Val h, Val pe, Val* edge_embed, bool train_bn);

// GearNet edge message passing over the edge-relational graph.
Val gearnet_edge_message(Tape& t, GnnLayer& layer, const EdgeRelationalGraph& erg, Val edge_embed,
                         bool train_bn);

struct GnnOutput {
  Val node_emb;   // [n, out_dim]
  Val graph_emb;  // [1, out_dim], summation readout
};

GnnOutput message_pass(Tape& t, GnnModel& model, const GraphContext& ctx, bool train_bn);

// Standalone attention coefficients for one node (forward only, float64
// arithmetic). `neighbors` rows are the already-concatenated message inputs.
// Throws EmptyNeighborhood when `neighbors` has no rows.
std::vector<double> attention_coeffs(LayerKind variant, const Tensor& h_i, const Tensor& neighbors,
                                     const Tensor& a, const Tensor& w, float leaky_slope = 0.2f);

// Standalone PNA aggregate (forward only): [mean,max,min,std] scaled by
// [1, log(d+1)/delta, delta/log(d+1)], concatenated. d = 0 gives all zeros.
std::vector<double> pna_aggregate(const std::vector<std::vector<double>>& messages, int degree,
                                  double delta);

// delta for PNA scalers: mean over all nodes of log(degree + 1).
float mean_log_degree(const std::vector<MolecularGraph>& corpus);

}  // namespace molgen

#endif  // MOLGEN_LAYERS_HPP
