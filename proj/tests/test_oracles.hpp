// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force oracles and small graph builders shared by the unit and
// acceptance suites. Everything here is intentionally independent of the
// library's search/pruning code paths: plain subset and permutation
// enumeration only.

#ifndef MOLGEN_TESTS_TEST_ORACLES_HPP
#define MOLGEN_TESTS_TEST_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "molgen/graph.hpp"
#include "molgen/tape.hpp"

namespace molgen_test {

// Finite-difference gradient check that honors grad_check's differentiability
// precondition: a component whose central-difference window straddles a ReLU
// or clamp kink (detected by a blown-up curvature estimate) is excluded.
// Everything else must match the tape gradient.
struct FilteredGradCheck {
  double max_err = 0.0;
  int checked = 0;
  int skipped = 0;
};

inline FilteredGradCheck grad_check_param_filtered(
    const std::function<molgen::Val(molgen::Tape&)>& f, molgen::Parameter& p, float eps) {
  using molgen::Tape;
  p.zero_grad();
  Tape t;
  molgen::Val y = f(t);
  t.backward(y);
  molgen::Tensor gad = p.grad;
  double f0;
  {
    Tape t0(false);
    f0 = t0.scalar(f(t0));
  }
  FilteredGradCheck out;
  for (std::size_t i = 0; i < p.value.v.size(); ++i) {
    float orig = p.value.v[i];
    p.value.v[i] = orig + eps;
    Tape tp(false);
    double fp = tp.scalar(f(tp));
    p.value.v[i] = orig - eps;
    Tape tm(false);
    double fm = tm.scalar(f(tm));
    p.value.v[i] = orig;
    double diff = fp - fm;
    double curvature = std::abs(fp - 2.0 * f0 + fm);
    if (curvature > 0.25 * std::abs(diff) + 1e-6) {
      ++out.skipped;  // kink inside the window; the FD estimate is invalid here
      continue;
    }
    double gfd = diff / (2.0 * static_cast<double>(eps));
    double err = std::abs(static_cast<double>(gad.v[i]) - gfd) / std::max(1.0, std::abs(gfd));
    out.max_err = std::max(out.max_err, err);
    ++out.checked;
  }
  return out;
}

// All-carbon single-bond graph from an edge list.
inline molgen::MolecularGraph carbon_graph(int n, const std::vector<std::pair<int, int>>& edges) {
  molgen::MolecularGraph g(std::max(n, 48));
  for (int i = 0; i < n; ++i) g.add_atom(molgen::Element::C);
  for (auto [a, b] : edges) g.add_bond(a, b, molgen::BondType::Single);
  return g;
}

inline molgen::MolecularGraph cycle_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  if (n > 2) e.push_back({n - 1, 0});
  return carbon_graph(n, e);
}

inline molgen::MolecularGraph path_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return carbon_graph(n, e);
}

inline molgen::MolecularGraph complete_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.push_back({i, j});
  return carbon_graph(n, e);
}

// C6 and 2xC3: the classic 1-WL-equivalent pair (uniform attributes).
inline molgen::MolecularGraph two_triangles() {
  return carbon_graph(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}});
}

// Enumerates every injective map pattern->graph by scanning all node subsets
// and all their permutations, keeps maps whose pattern edges all exist, and
// dedups by (node set, edge set). Exponential; fine for <= 8 nodes.
inline std::set<std::pair<std::vector<int>, std::vector<std::pair<int, int>>>>
brute_force_matches(const molgen::MolecularGraph& g, const molgen::PatternGraph& pat) {
  std::set<std::pair<std::vector<int>, std::vector<std::pair<int, int>>>> found;
  const int n = g.num_atoms();
  if (pat.n > n) return found;
  std::vector<int> subset(pat.n);
  std::vector<char> pick(n, 0);
  std::fill(pick.begin(), pick.begin() + pat.n, 1);
  std::sort(pick.begin(), pick.end());  // lexicographically smallest mask
  do {
    int k = 0;
    for (int i = 0; i < n; ++i)
      if (pick[i]) subset[k++] = i;
    std::vector<int> perm = subset;
    std::sort(perm.begin(), perm.end());
    do {
      bool ok = true;
      for (auto [u, v] : pat.edges) {
        if (!g.has_edge(perm[u], perm[v])) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      std::vector<int> nodes = perm;
      std::sort(nodes.begin(), nodes.end());
      std::vector<std::pair<int, int>> edges;
      for (auto [u, v] : pat.edges) {
        int a = perm[u], b = perm[v];
        edges.emplace_back(std::min(a, b), std::max(a, b));
      }
      std::sort(edges.begin(), edges.end());
      found.insert({nodes, edges});
    } while (std::next_permutation(perm.begin(), perm.end()));
  } while (std::next_permutation(pick.begin(), pick.end()));
  return found;
}

// Per-node cycle participation counts straight from the brute-force matches.
inline std::vector<std::vector<int>> brute_force_vertex_counts(
    const molgen::MolecularGraph& g, const std::vector<int>& cycle_sizes) {
  std::vector<std::vector<int>> counts(g.num_atoms(), std::vector<int>(cycle_sizes.size(), 0));
  for (std::size_t m = 0; m < cycle_sizes.size(); ++m) {
    auto found = brute_force_matches(g, molgen::PatternGraph::cycle(cycle_sizes[m]));
    for (const auto& [nodes, edges] : found) {
      for (int v : nodes) ++counts[v][m];
    }
  }
  return counts;
}

inline std::vector<std::vector<int>> brute_force_edge_counts(const molgen::MolecularGraph& g,
                                                             const std::vector<int>& cycle_sizes) {
  std::vector<std::vector<int>> counts(g.num_bonds(), std::vector<int>(cycle_sizes.size(), 0));
  for (std::size_t m = 0; m < cycle_sizes.size(); ++m) {
    auto found = brute_force_matches(g, molgen::PatternGraph::cycle(cycle_sizes[m]));
    for (const auto& [nodes, edges] : found) {
      for (auto e : edges) {
        for (int idx = 0; idx < g.num_bonds(); ++idx) {
          if (g.edges()[idx].i == e.first && g.edges()[idx].j == e.second) ++counts[idx][m];
        }
      }
    }
  }
  return counts;
}

}  // namespace molgen_test

#endif  // MOLGEN_TESTS_TEST_ORACLES_HPP
