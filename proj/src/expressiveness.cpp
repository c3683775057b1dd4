// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/expressiveness.hpp"

#include <algorithm>
#include <map>

namespace molgen {

namespace {

using Signature = std::pair<int, std::vector<int>>;

std::vector<int> initial_colors(const MolecularGraph& g, WlInit init) {
  std::vector<int> colors(g.num_atoms(), 0);
  if (init == WlInit::kAtomType) {
    for (int i = 0; i < g.num_atoms(); ++i) colors[i] = static_cast<int>(g.atom(i));
  }
  return colors;
}

// Canonicalizes raw colors to ids assigned in first-seen order (across the
// concatenation of the graphs handed in).
void canonicalize(std::vector<std::vector<int>*> graphs) {
  std::map<int, int> table;
  for (auto* colors : graphs) {
    for (int& c : *colors) {
      auto [it, fresh] = table.emplace(c, static_cast<int>(table.size()));
      c = it->second;
    }
  }
}

std::vector<int> refine_once(const MolecularGraph& g, const std::vector<int>& colors,
                             std::map<Signature, int>& table) {
  std::vector<int> next(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) {
    std::vector<int> nbr;
    nbr.reserve(g.degree(i));
    for (const auto& [j, t] : g.neighbors(i)) nbr.push_back(colors[j]);
    std::sort(nbr.begin(), nbr.end());
    Signature sig{colors[i], std::move(nbr)};
    auto [it, fresh] = table.emplace(std::move(sig), static_cast<int>(table.size()));
    next[i] = it->second;
  }
  return next;
}

std::map<int, int> histogram_of(const std::vector<int>& colors) {
  std::map<int, int> h;
  for (int c : colors) ++h[c];
  return h;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  // Partitions are equal iff the color->color mapping is consistent both ways.
  std::map<int, int> fwd, bwd;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [f, insf] = fwd.emplace(a[i], b[i]);
    if (f->second != b[i]) return false;
    auto [r, insr] = bwd.emplace(b[i], a[i]);
    if (r->second != a[i]) return false;
  }
  return true;
}

}  // namespace

ColorHistogram wl_refine(const MolecularGraph& g, int max_iters, WlInit init) {
  std::vector<int> colors = initial_colors(g, init);
  canonicalize({&colors});
  int round = 0;
  for (int it = 1; it <= max_iters; ++it) {
    std::map<Signature, int> table;
    std::vector<int> next = refine_once(g, colors, table);
    canonicalize({&next});
    if (same_partition(colors, next)) break;
    colors = std::move(next);
    round = it;
  }
  ColorHistogram out;
  out.counts = histogram_of(colors);
  out.round = round;
  return out;
}

WlResult wl_compare(const MolecularGraph& a, const MolecularGraph& b, int max_iters, WlInit init) {
  return wl_compare_detail(a, b, max_iters, init).result;
}

WlCompareDetail wl_compare_detail(const MolecularGraph& a, const MolecularGraph& b, int max_iters,
                                  WlInit init) {
  WlCompareDetail out;
  std::vector<int> ca = initial_colors(a, init);
  std::vector<int> cb = initial_colors(b, init);
  canonicalize({&ca, &cb});
  out.rounds.push_back({histogram_of(ca), histogram_of(cb)});
  if (out.rounds.back().hist_a != out.rounds.back().hist_b) {
    out.result = WlResult::kDistinguished;
    return out;
  }
  for (int it = 1; it <= max_iters; ++it) {
    std::map<Signature, int> table;
    std::vector<int> na = refine_once(a, ca, table);
    std::vector<int> nb = refine_once(b, cb, table);
    canonicalize({&na, &nb});
    out.rounds.push_back({histogram_of(na), histogram_of(nb)});
    if (out.rounds.back().hist_a != out.rounds.back().hist_b) {
      out.result = WlResult::kDistinguished;
      return out;
    }
    bool stable = same_partition(ca, na) && same_partition(cb, nb);
    ca = std::move(na);
    cb = std::move(nb);
    if (stable) break;
  }
  out.result = WlResult::kPossiblyIsomorphic;
  return out;
}

std::vector<std::vector<int>> count_vertex_substructures(const MolecularGraph& g,
                                                         const std::vector<int>& cycle_sizes) {
  std::vector<std::vector<int>> counts(g.num_atoms(),
                                       std::vector<int>(cycle_sizes.size(), 0));
  for (std::size_t m = 0; m < cycle_sizes.size(); ++m) {
    auto matches = subgraph_matches(g, PatternGraph::cycle(cycle_sizes[m]));
    for (const SubgraphMatch& match : matches) {
      for (int node : match.nodes) ++counts[node][m];
    }
  }
  return counts;
}

std::vector<std::vector<int>> count_edge_substructures(const MolecularGraph& g,
                                                       const std::vector<int>& cycle_sizes) {
  // Edge order follows g.edges().
  std::map<std::pair<int, int>, int> edge_index;
  for (int e = 0; e < g.num_bonds(); ++e) {
    const Edge& ed = g.edges()[e];
    edge_index[{ed.i, ed.j}] = e;
  }
  std::vector<std::vector<int>> counts(g.num_bonds(), std::vector<int>(cycle_sizes.size(), 0));
  for (std::size_t m = 0; m < cycle_sizes.size(); ++m) {
    auto matches = subgraph_matches(g, PatternGraph::cycle(cycle_sizes[m]));
    for (const SubgraphMatch& match : matches) {
      for (const auto& e : match.edges) {
        auto it = edge_index.find(e);
        if (it != edge_index.end()) ++counts[it->second][m];
      }
    }
  }
  return counts;
}

MotifFeatures compute_motif_features(const MolecularGraph& g, const std::vector<int>& cycle_sizes) {
  MotifFeatures f;
  f.cycle_sizes = cycle_sizes;
  f.vertex_counts = count_vertex_substructures(g, cycle_sizes);
  f.edge_counts = count_edge_substructures(g, cycle_sizes);
  return f;
}

}  // namespace molgen
