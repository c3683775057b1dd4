// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_SMILES_HPP
#define MOLGEN_SMILES_HPP

#include <string>
#include <string_view>
#include <vector>

#include "molgen/graph.hpp"

namespace molgen {

// Parses the kekulized subset: the nine supported elements, implicit or
// explicit single bonds plus '=' and '#', parenthesized branches, and ring
// closures (single digit or %nn). Aromatic atoms, charges, isotopes and
// stereo markers are errors, not silently dropped. The result always passes
// check_valence.
MolecularGraph parse_smiles(std::string_view text, int max_nodes = MolecularGraph::kDefaultMaxNodes);

// Deterministic writer: depth-first from node 0, neighbors in index order.
// parse_smiles(write_smiles(g)) is isomorphic to g. Throws DisconnectedGraph.
std::string write_smiles(const MolecularGraph& g);

struct CorpusReportEntry {
  int line;  // 1-based
  std::string error;
};

struct Corpus {
  std::vector<MolecularGraph> molecules;
  std::vector<CorpusReportEntry> report;
};

// One molecule per non-empty, non-'#' line. Invalid lines are skipped and
// reported; in strict mode the first parse error aborts the load.
Corpus load_corpus(const std::string& path, bool strict = false,
                   int max_nodes = MolecularGraph::kDefaultMaxNodes);

// Same semantics over an in-memory string (used by tests and corpus text).
Corpus parse_corpus_text(std::string_view text, bool strict = false,
                         int max_nodes = MolecularGraph::kDefaultMaxNodes);

}  // namespace molgen

#endif  // MOLGEN_SMILES_HPP
