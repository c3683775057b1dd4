// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_EXPRESSIVENESS_HPP
#define MOLGEN_EXPRESSIVENESS_HPP

#include <map>
#include <vector>

#include "molgen/graph.hpp"

namespace molgen {

// Multiset of node colors after refinement. Color ids are canonical: assigned
// in first-seen order over nodes in index order.
struct ColorHistogram {
  std::map<int, int> counts;  // color id -> node count
  int round = 0;              // iteration at which refinement stabilized
};

enum class WlInit {
  kAtomType,      // initial color = atom type (attributed graphs)
  kTopologyOnly,  // all nodes start with one color
};

// 1-WL color refinement: each round recolors a node by an injective canonical
// relabeling of (own color, sorted multiset of neighbor colors). Stops at a
// stable partition or after max_iters rounds.
ColorHistogram wl_refine(const MolecularGraph& g, int max_iters,
                         WlInit init = WlInit::kAtomType);

enum class WlResult { kDistinguished, kPossiblyIsomorphic };

// Joint refinement of two graphs with a shared color table; distinguished iff
// the histograms differ at some round.
WlResult wl_compare(const MolecularGraph& a, const MolecularGraph& b, int max_iters,
                    WlInit init = WlInit::kAtomType);

// Same comparison, keeping the per-round histograms for reporting.
struct WlRound {
  std::map<int, int> hist_a;
  std::map<int, int> hist_b;
};
struct WlCompareDetail {
  WlResult result = WlResult::kPossiblyIsomorphic;
  std::vector<WlRound> rounds;  // round 0 = initial coloring
};
WlCompareDetail wl_compare_detail(const MolecularGraph& a, const MolecularGraph& b, int max_iters,
                                  WlInit init = WlInit::kAtomType);

// Per-node / per-edge counts of distinct k-cycles, one column per motif size.
struct MotifFeatures {
  std::vector<int> cycle_sizes;
  std::vector<std::vector<int>> vertex_counts;          // [node][motif]
  std::vector<std::vector<int>> edge_counts;            // [edge][motif], edge order = g.edges()
};

inline const std::vector<int>& default_cycle_motifs() {
  static const std::vector<int> kSizes = {3, 4, 5, 6, 7, 8};
  return kSizes;
}

std::vector<std::vector<int>> count_vertex_substructures(const MolecularGraph& g,
                                                         const std::vector<int>& cycle_sizes);
std::vector<std::vector<int>> count_edge_substructures(const MolecularGraph& g,
                                                       const std::vector<int>& cycle_sizes);
MotifFeatures compute_motif_features(const MolecularGraph& g,
                                     const std::vector<int>& cycle_sizes = default_cycle_motifs());

}  // namespace molgen

#endif  // MOLGEN_EXPRESSIVENESS_HPP
