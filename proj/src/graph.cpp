// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/graph.hpp"

#include <algorithm>
#include <set>

namespace molgen {

std::optional<Element> element_from_symbol(std::string_view s) {
  for (int i = 0; i < kElementCount; ++i) {
    if (kElementSymbols[i] == s) return static_cast<Element>(i);
  }
  return std::nullopt;
}

int MolecularGraph::add_atom(Element e) {
  if (num_atoms() >= max_nodes_) {
    throw SizeLimit("graph exceeds maximum of " + std::to_string(max_nodes_) + " nodes");
  }
  atoms_.push_back(e);
  adj_.emplace_back();
  return num_atoms() - 1;
}

void MolecularGraph::add_bond(int i, int j, BondType type) {
  if (i == j) throw Error("self-loops are not allowed");
  if (i < 0 || j < 0 || i >= num_atoms() || j >= num_atoms()) throw Error("bond endpoint out of range");
  if (has_edge(i, j)) throw Error("duplicate bond");
  Edge e{std::min(i, j), std::max(i, j), type};
  edges_.push_back(e);
  auto insert_sorted = [](std::vector<std::pair<int, BondType>>& lst, int nb, BondType t) {
    auto it = std::lower_bound(lst.begin(), lst.end(), nb,
                               [](const auto& p, int v) { return p.first < v; });
    lst.insert(it, {nb, t});
  };
  insert_sorted(adj_[i], j, type);
  insert_sorted(adj_[j], i, type);
}

bool MolecularGraph::has_edge(int i, int j) const { return bond_between(i, j).has_value(); }

std::optional<BondType> MolecularGraph::bond_between(int i, int j) const {
  for (const auto& [nb, t] : adj_[i]) {
    if (nb == j) return t;
  }
  return std::nullopt;
}

int MolecularGraph::valence_used(int i) const {
  int total = 0;
  for (const auto& [nb, t] : adj_[i]) total += bond_order(t);
  return total;
}

bool MolecularGraph::connected() const {
  if (num_atoms() <= 1) return true;
  std::vector<char> seen(num_atoms(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int visited = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (const auto& [v, t] : adj_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  return visited == num_atoms();
}

int MolecularGraph::append_fragment(const MolecularGraph& fragment) {
  int base = num_atoms();
  if (base + fragment.num_atoms() > max_nodes_) {
    throw SizeLimit("appending fragment exceeds maximum node count");
  }
  for (int i = 0; i < fragment.num_atoms(); ++i) add_atom(fragment.atom(i));
  for (const Edge& e : fragment.edges()) add_bond(base + e.i, base + e.j, e.type);
  return base;
}

std::vector<int> degree_matrix(const MolecularGraph& g) {
  std::vector<int> diag(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) diag[i] = g.degree(i);
  return diag;
}

std::vector<ValenceViolation> check_valence(const MolecularGraph& g) {
  std::vector<ValenceViolation> out;
  for (int i = 0; i < g.num_atoms(); ++i) {
    int used = g.valence_used(i);
    int cap = max_valence(g.atom(i));
    if (used > cap) out.push_back({i, used, cap});
  }
  return out;
}

namespace {

// Backtracking isomorphism search between typed graphs. `count_all` controls
// whether the search stops at the first full mapping or counts every one.
struct IsoSearch {
  const MolecularGraph& a;
  const MolecularGraph& b;
  std::vector<int> map;      // a-node -> b-node or -1
  std::vector<char> used_b;
  long count = 0;
  bool count_all;

  IsoSearch(const MolecularGraph& a_, const MolecularGraph& b_, bool count_all_)
      : a(a_), b(b_), map(a_.num_atoms(), -1), used_b(b_.num_atoms(), 0), count_all(count_all_) {}

  bool feasible(int u, int v) const {
    if (a.atom(u) != b.atom(v)) return false;
    if (a.degree(u) != b.degree(v)) return false;
    // Edges between u and already-mapped nodes must exist identically in b.
    for (int w = 0; w < a.num_atoms(); ++w) {
      if (map[w] < 0) continue;
      auto ab = a.bond_between(u, w);
      auto bb = b.bond_between(v, map[w]);
      if (ab.has_value() != bb.has_value()) return false;
      if (ab && *ab != *bb) return false;
    }
    return true;
  }

  bool run(int u) {
    if (u == a.num_atoms()) {
      ++count;
      return !count_all;
    }
    for (int v = 0; v < b.num_atoms(); ++v) {
      if (used_b[v] || !feasible(u, v)) continue;
      map[u] = v;
      used_b[v] = 1;
      if (run(u + 1)) return true;
      map[u] = -1;
      used_b[v] = 0;
    }
    return false;
  }
};

}  // namespace

bool is_isomorphic(const MolecularGraph& a, const MolecularGraph& b) {
  if (a.num_atoms() > kIsomorphismNodeLimit || b.num_atoms() > kIsomorphismNodeLimit) {
    throw SizeLimit("exact isomorphism search is limited to " +
                    std::to_string(kIsomorphismNodeLimit) + " nodes");
  }
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds()) return false;
  auto signature = [](const MolecularGraph& g) {
    std::vector<std::pair<int, int>> sig;  // (atom, degree)
    for (int i = 0; i < g.num_atoms(); ++i)
      sig.emplace_back(static_cast<int>(g.atom(i)), g.degree(i));
    std::sort(sig.begin(), sig.end());
    return sig;
  };
  if (signature(a) != signature(b)) return false;
  IsoSearch s(a, b, false);
  s.run(0);
  return s.count > 0;
}

PatternGraph PatternGraph::cycle(int k) {
  PatternGraph p;
  p.n = k;
  for (int i = 0; i + 1 < k; ++i) p.edges.emplace_back(i, i + 1);
  if (k > 2) p.edges.emplace_back(k - 1, 0);
  return p;
}

PatternGraph PatternGraph::path(int k) {
  PatternGraph p;
  p.n = k;
  for (int i = 0; i + 1 < k; ++i) p.edges.emplace_back(i, i + 1);
  return p;
}

namespace {

struct PatternSearch {
  const MolecularGraph& g;
  const PatternGraph& pat;
  std::vector<std::vector<int>> pat_adj;
  std::vector<int> pat_degree;
  std::vector<int> map;  // pattern node -> g node
  std::vector<char> used;
  std::set<SubgraphMatch>* out;

  PatternSearch(const MolecularGraph& g_, const PatternGraph& p_, std::set<SubgraphMatch>* out_)
      : g(g_), pat(p_), pat_adj(p_.n), pat_degree(p_.n, 0), map(p_.n, -1),
        used(g_.num_atoms(), 0), out(out_) {
    for (auto [u, v] : pat.edges) {
      pat_adj[u].push_back(v);
      pat_adj[v].push_back(u);
      ++pat_degree[u];
      ++pat_degree[v];
    }
  }

  void emit() {
    SubgraphMatch m;
    m.nodes = map;
    std::sort(m.nodes.begin(), m.nodes.end());
    for (auto [u, v] : pat.edges) {
      int a = map[u], b = map[v];
      m.edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(m.edges.begin(), m.edges.end());
    out->insert(std::move(m));
  }

  bool feasible(int pu, int gv) const {
    if (g.degree(gv) < pat_degree[pu]) return false;
    for (int pw : pat_adj[pu]) {
      if (map[pw] >= 0 && !g.has_edge(gv, map[pw])) return false;
    }
    return true;
  }

  void run(int pu) {
    if (pu == pat.n) {
      emit();
      return;
    }
    // Restrict candidates to neighbors of an already-mapped pattern neighbor
    // when one exists; the first node scans every graph node.
    int anchor = -1;
    for (int pw : pat_adj[pu]) {
      if (map[pw] >= 0) {
        anchor = map[pw];
        break;
      }
    }
    if (anchor >= 0) {
      for (const auto& [gv, t] : g.neighbors(anchor)) {
        if (used[gv] || !feasible(pu, gv)) continue;
        map[pu] = gv;
        used[gv] = 1;
        run(pu + 1);
        map[pu] = -1;
        used[gv] = 0;
      }
    } else {
      for (int gv = 0; gv < g.num_atoms(); ++gv) {
        if (used[gv] || !feasible(pu, gv)) continue;
        map[pu] = gv;
        used[gv] = 1;
        run(pu + 1);
        map[pu] = -1;
        used[gv] = 0;
      }
    }
  }
};

}  // namespace

std::vector<SubgraphMatch> subgraph_matches(const MolecularGraph& g, const PatternGraph& pattern) {
  if (pattern.n > 8) throw SizeLimit("pattern graphs are limited to 8 nodes");
  std::set<SubgraphMatch> dedup;
  if (pattern.n > 0 && pattern.n <= g.num_atoms()) {
    PatternSearch s(g, pattern, &dedup);
    s.run(0);
  }
  return {dedup.begin(), dedup.end()};
}

int count_automorphisms(const MolecularGraph& g) {
  if (g.num_atoms() > 10) throw SizeLimit("automorphism counting is limited to 10 nodes");
  IsoSearch s(g, g, true);
  s.run(0);
  return static_cast<int>(s.count);
}

std::vector<int> bfs_order(const MolecularGraph& g) {
  std::vector<int> order;
  if (g.num_atoms() == 0) return order;
  std::vector<char> seen(g.num_atoms(), 0);
  std::vector<int> queue{0};
  seen[0] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    int u = queue[head];
    order.push_back(u);
    for (const auto& [v, t] : g.neighbors(u)) {
      if (!seen[v]) {
        seen[v] = 1;
        queue.push_back(v);
      }
    }
  }
  if (static_cast<int>(order.size()) != g.num_atoms()) {
    throw DisconnectedGraph("breadth-first order requires a connected graph");
  }
  return order;
}

MolecularGraph relabel(const MolecularGraph& g, const std::vector<int>& perm) {
  MolecularGraph out(g.max_nodes());
  std::vector<Element> atoms(g.num_atoms(), Element::C);
  for (int i = 0; i < g.num_atoms(); ++i) atoms[perm[i]] = g.atom(i);
  for (Element e : atoms) out.add_atom(e);
  for (const Edge& e : g.edges()) out.add_bond(perm[e.i], perm[e.j], e.type);
  return out;
}

}  // namespace molgen
