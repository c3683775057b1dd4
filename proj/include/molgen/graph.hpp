// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_GRAPH_HPP
#define MOLGEN_GRAPH_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molgen/errors.hpp"

namespace molgen {

// Heavy-atom organic subset. Order is the feature/one-hot order everywhere.
enum class Element : std::uint8_t { C, N, O, F, P, S, Cl, Br, I };

inline constexpr int kElementCount = 9;
inline constexpr std::array<std::string_view, kElementCount> kElementSymbols = {
    "C", "N", "O", "F", "P", "S", "Cl", "Br", "I"};
inline constexpr std::array<int, kElementCount> kMaxValence = {4, 3, 2, 1, 5, 6, 1, 1, 1};

inline std::string_view symbol_of(Element e) { return kElementSymbols[static_cast<int>(e)]; }
inline int max_valence(Element e) { return kMaxValence[static_cast<int>(e)]; }
std::optional<Element> element_from_symbol(std::string_view s);

// Kekulized bond orders.
enum class BondType : std::uint8_t { Single = 1, Double = 2, Triple = 3 };

inline constexpr int kBondTypeCount = 3;
inline int bond_order(BondType b) { return static_cast<int>(b); }
// 0-based relation index used for one-hot features and per-relation weights.
inline int bond_index(BondType b) { return static_cast<int>(b) - 1; }

struct Edge {
  int i;  // i < j always
  int j;
  BondType type;
};

struct ValenceViolation {
  int node;
  int total_order;
  int max_allowed;
};

// Undirected relational molecular graph with typed nodes and at most one
// typed edge per node pair. No self-loops. Structure is append-only; treat
// values as immutable once shared across threads.
class MolecularGraph {
 public:
  explicit MolecularGraph(int max_nodes = kDefaultMaxNodes) : max_nodes_(max_nodes) {}

  static constexpr int kDefaultMaxNodes = 48;

  int add_atom(Element e);
  void add_bond(int i, int j, BondType type);

  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  int num_bonds() const { return static_cast<int>(edges_.size()); }
  Element atom(int i) const { return atoms_[i]; }
  const std::vector<Edge>& edges() const { return edges_; }
  int max_nodes() const { return max_nodes_; }

  bool has_edge(int i, int j) const;
  std::optional<BondType> bond_between(int i, int j) const;
  // Neighbor list of node i, ascending by neighbor index.
  const std::vector<std::pair<int, BondType>>& neighbors(int i) const { return adj_[i]; }

  int degree(int i) const { return static_cast<int>(adj_[i].size()); }
  // Sum of bond orders incident to node i.
  int valence_used(int i) const;
  bool can_accept(int i, int extra_order) const {
    return valence_used(i) + extra_order <= max_valence(atoms_[i]);
  }

  bool connected() const;

  // Appends a copy of `fragment`, returning the index its node 0 received.
  int append_fragment(const MolecularGraph& fragment);

 private:
  int max_nodes_;
  std::vector<Element> atoms_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<int, BondType>>> adj_;
};

// Diagonal of the degree matrix.
std::vector<int> degree_matrix(const MolecularGraph& g);

// Nodes whose incident bond orders exceed their element's capacity. An empty
// result means chemically valid (implicit hydrogens fill the remainder).
std::vector<ValenceViolation> check_valence(const MolecularGraph& g);

// Exact test for an adjacency-, atom- and bond-preserving bijection.
// Backtracking search; throws SizeLimit above `kIsomorphismNodeLimit` nodes.
inline constexpr int kIsomorphismNodeLimit = 12;
bool is_isomorphic(const MolecularGraph& a, const MolecularGraph& b);

// Topology-only pattern graph for substructure search.
struct PatternGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;

  static PatternGraph cycle(int k);
  static PatternGraph path(int k);
};

// A matched subgraph, canonicalized: sorted node list plus sorted edge list.
struct SubgraphMatch {
  std::vector<int> nodes;
  std::vector<std::pair<int, int>> edges;

  bool operator==(const SubgraphMatch&) const = default;
  bool operator<(const SubgraphMatch& o) const {
    if (nodes != o.nodes) return nodes < o.nodes;
    return edges < o.edges;
  }
};

// Every subgraph of g isomorphic to `pattern`, ignoring atom and bond types.
// Automorphic relabelings of the same subgraph are counted once. The pattern
// is limited to 8 nodes.
std::vector<SubgraphMatch> subgraph_matches(const MolecularGraph& g, const PatternGraph& pattern);

// Number of adjacency-, atom- and bond-preserving bijections of g onto
// itself. Throws SizeLimit above 10 nodes.
int count_automorphisms(const MolecularGraph& g);

// Relabeled copy: node perm[i] of the result is node i of g.
MolecularGraph relabel(const MolecularGraph& g, const std::vector<int>& perm);

// Breadth-first node order from node 0, neighbors in index order. Requires a
// connected graph (throws DisconnectedGraph otherwise).
std::vector<int> bfs_order(const MolecularGraph& g);

}  // namespace molgen

#endif  // MOLGEN_GRAPH_HPP
