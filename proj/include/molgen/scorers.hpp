// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_SCORERS_HPP
#define MOLGEN_SCORERS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "molgen/graph.hpp"

namespace molgen {

// ECFP-style hashed fingerprint. Isomorphic graphs give identical bitsets.
struct Fingerprint {
  int nbits = 1024;
  int radius = 2;
  std::vector<std::uint64_t> words;

  bool test(int bit) const { return (words[bit >> 6] >> (bit & 63)) & 1u; }
  int popcount() const;
};

Fingerprint morgan_fingerprint(const MolecularGraph& g, int radius = 2, int nbits = 1024);

// |a & b| / |a | b|; 1.0 when both sets are empty. Throws LengthMismatch.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

// Largest ring size: max over edges of the shortest cycle through that edge
// (0 for acyclic graphs).
int largest_ring_size(const MolecularGraph& g);

// Node count of the longest simple path through carbon atoms only.
int longest_carbon_chain(const MolecularGraph& g);

// Documented surrogate, not chemistry ground truth: per-element contributions
// (C +0.4, N -0.2, O -0.3, F +0.1, P 0.0, S +0.2, Cl +0.5, Br +0.6, I +0.7)
// minus 0.5*max(0, largest_ring - 6) minus 0.05*|edges|. Appending a carbon
// always raises it by 0.35.
double plogp_surrogate(const MolecularGraph& g);

double median_similarity(const MolecularGraph& g, const MolecularGraph& target_a,
                         const MolecularGraph& target_b, int radius = 2, int nbits = 1024);

struct ScorerSpec {
  std::string name;
  double range_lo = 0.0;
  double range_hi = 1.0;
  std::map<std::string, std::string> params;
};

struct Scorer {
  ScorerSpec spec;
  std::function<double(const MolecularGraph&)> fn;

  double operator()(const MolecularGraph& g) const { return fn(g); }
};

// Built-ins: plogp_surrogate, median(a,b), carbon_chain, ring_count,
// constant(c). Unknown names throw UnknownScorer listing what exists.
Scorer make_scorer(const std::string& name,
                   const std::map<std::string, std::string>& params = {});

// CLI syntax: "name" or "name:key=value,key=value".
Scorer parse_scorer_spec(const std::string& text);

std::vector<std::string> builtin_scorer_names();

}  // namespace molgen

#endif  // MOLGEN_SCORERS_HPP
