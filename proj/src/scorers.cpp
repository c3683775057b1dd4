// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/scorers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>

#include "molgen/smiles.hpp"

namespace molgen {

namespace {

// splitmix64 finalizer; fixed so fingerprints are stable across platforms.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t h, std::uint64_t v) { return mix64(h ^ mix64(v)); }

}  // namespace

int Fingerprint::popcount() const {
  int n = 0;
  for (std::uint64_t w : words) n += std::popcount(w);
  return n;
}

Fingerprint morgan_fingerprint(const MolecularGraph& g, int radius, int nbits) {
  Fingerprint fp;
  fp.nbits = nbits;
  fp.radius = radius;
  fp.words.assign((nbits + 63) / 64, 0);
  auto set_id = [&](std::uint64_t id) {
    int bit = static_cast<int>(mix64(id) % static_cast<std::uint64_t>(nbits));
    fp.words[bit >> 6] |= 1ull << (bit & 63);
  };
  // Initial identifiers from (element, degree, total bond order).
  std::vector<std::uint64_t> ids(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) {
    std::uint64_t h = combine(0x243F6A8885A308D3ull, static_cast<std::uint64_t>(g.atom(i)));
    h = combine(h, static_cast<std::uint64_t>(g.degree(i)));
    h = combine(h, static_cast<std::uint64_t>(g.valence_used(i)));
    ids[i] = h;
    set_id(h);
  }
  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next(g.num_atoms());
    for (int i = 0; i < g.num_atoms(); ++i) {
      std::vector<std::pair<std::uint64_t, std::uint64_t>> nbr;
      for (const auto& [j, t] : g.neighbors(i)) {
        nbr.emplace_back(static_cast<std::uint64_t>(bond_order(t)), ids[j]);
      }
      std::sort(nbr.begin(), nbr.end());
      std::uint64_t h = combine(0x13198A2E03707344ull, ids[i]);
      for (const auto& [b, id] : nbr) h = combine(combine(h, b), id);
      next[i] = h;
      set_id(h);
    }
    ids = std::move(next);
  }
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits != b.nbits) throw LengthMismatch("fingerprint lengths differ");
  long inter = 0, uni = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) {
    inter += std::popcount(a.words[w] & b.words[w]);
    uni += std::popcount(a.words[w] | b.words[w]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

int largest_ring_size(const MolecularGraph& g) {
  int best = 0;
  for (const Edge& e : g.edges()) {
    // Shortest path i..j avoiding this edge, via BFS.
    std::vector<int> dist(g.num_atoms(), -1);
    std::deque<int> q{e.i};
    dist[e.i] = 0;
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (const auto& [v, t] : g.neighbors(u)) {
        if ((u == e.i && v == e.j) || (u == e.j && v == e.i)) continue;
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push_back(v);
        }
      }
    }
    if (dist[e.j] > 0) best = std::max(best, dist[e.j] + 1);
  }
  return best;
}

namespace {

void chain_dfs(const MolecularGraph& g, int u, std::vector<char>& on_path, int len, int& best) {
  best = std::max(best, len);
  on_path[u] = 1;
  for (const auto& [v, t] : g.neighbors(u)) {
    if (!on_path[v] && g.atom(v) == Element::C) chain_dfs(g, v, on_path, len + 1, best);
  }
  on_path[u] = 0;
}

}  // namespace

int longest_carbon_chain(const MolecularGraph& g) {
  int best = 0;
  std::vector<char> on_path(g.num_atoms(), 0);
  for (int i = 0; i < g.num_atoms(); ++i) {
    if (g.atom(i) == Element::C) chain_dfs(g, i, on_path, 1, best);
  }
  return best;
}

double plogp_surrogate(const MolecularGraph& g) {
  static constexpr double kContribution[kElementCount] = {0.4, -0.2, -0.3, 0.1, 0.0,
                                                          0.2, 0.5,  0.6,  0.7};
  double score = 0.0;
  for (int i = 0; i < g.num_atoms(); ++i) score += kContribution[static_cast<int>(g.atom(i))];
  score -= 0.5 * std::max(0, largest_ring_size(g) - 6);
  score -= 0.05 * g.num_bonds();
  return score;
}

double median_similarity(const MolecularGraph& g, const MolecularGraph& target_a,
                         const MolecularGraph& target_b, int radius, int nbits) {
  Fingerprint f = morgan_fingerprint(g, radius, nbits);
  return 0.5 * (tanimoto(f, morgan_fingerprint(target_a, radius, nbits)) +
                tanimoto(f, morgan_fingerprint(target_b, radius, nbits)));
}

std::vector<std::string> builtin_scorer_names() {
  return {"plogp_surrogate", "median", "carbon_chain", "ring_count", "constant"};
}

namespace {

double param_or(const std::map<std::string, std::string>& params, const std::string& key,
                double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  return std::stod(it->second);
}

std::string param_or(const std::map<std::string, std::string>& params, const std::string& key,
                     const std::string& fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

}  // namespace

Scorer make_scorer(const std::string& name, const std::map<std::string, std::string>& params) {
  Scorer s;
  s.spec.name = name;
  s.spec.params = params;
  if (name == "plogp_surrogate") {
    s.spec.range_lo = -std::numeric_limits<double>::infinity();
    s.spec.range_hi = std::numeric_limits<double>::infinity();
    s.fn = [](const MolecularGraph& g) { return plogp_surrogate(g); };
  } else if (name == "median") {
    std::string sa = param_or(params, "a", std::string("CC(=O)OC"));
    std::string sb = param_or(params, "b", std::string("CCO"));
    MolecularGraph ta = parse_smiles(sa);
    MolecularGraph tb = parse_smiles(sb);
    s.fn = [ta, tb](const MolecularGraph& g) { return median_similarity(g, ta, tb); };
  } else if (name == "carbon_chain") {
    double denom = param_or(params, "max_size", 48.0);
    s.fn = [denom](const MolecularGraph& g) {
      return std::min(1.0, longest_carbon_chain(g) / denom);
    };
  } else if (name == "ring_count") {
    // Cyclomatic number, normalized by 8 and clipped to [0, 1].
    s.fn = [](const MolecularGraph& g) {
      std::vector<int> comp(g.num_atoms(), -1);
      int ncomp = 0;
      for (int i = 0; i < g.num_atoms(); ++i) {
        if (comp[i] >= 0) continue;
        std::vector<int> stack{i};
        comp[i] = ncomp;
        while (!stack.empty()) {
          int u = stack.back();
          stack.pop_back();
          for (const auto& [v, t] : g.neighbors(u)) {
            if (comp[v] < 0) {
              comp[v] = ncomp;
              stack.push_back(v);
            }
          }
        }
        ++ncomp;
      }
      int mu = g.num_bonds() - g.num_atoms() + ncomp;
      return std::min(1.0, std::max(0, mu) / 8.0);
    };
  } else if (name == "constant") {
    double c = param_or(params, "c", 1.0);
    s.spec.range_lo = c;
    s.spec.range_hi = c;
    s.fn = [c](const MolecularGraph&) { return c; };
  } else {
    std::string names;
    for (const auto& n : builtin_scorer_names()) names += (names.empty() ? "" : ", ") + n;
    throw UnknownScorer("unknown scorer '" + name + "'; built-ins: " + names);
  }
  return s;
}

Scorer parse_scorer_spec(const std::string& text) {
  std::string name = text;
  std::map<std::string, std::string> params;
  auto colon = text.find(':');
  if (colon != std::string::npos) {
    name = text.substr(0, colon);
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      auto comma = rest.find(',', pos);
      std::string kv =
          rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw UnknownScorer("bad scorer parameter '" + kv + "'");
      params[kv.substr(0, eq)] = kv.substr(eq + 1);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return make_scorer(name, params);
}

}  // namespace molgen
