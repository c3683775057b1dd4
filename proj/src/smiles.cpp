// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#include "molgen/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace molgen {

namespace {

struct RingSlot {
  int atom;
  std::size_t offset;        // where the digit appeared, for errors
  int bond = 0;              // 0 = unspecified, else bond order
};

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

MolecularGraph parse_smiles(std::string_view text, int max_nodes) {
  // Trim surrounding whitespace but keep offsets relative to the original.
  std::size_t begin = 0, end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  if (begin == end) throw SmilesError(SmilesErrorKind::kEmptyInput, 0, "empty SMILES input");

  MolecularGraph g(max_nodes);
  std::vector<std::size_t> atom_offset;
  std::vector<std::pair<int, std::size_t>> branch_stack;  // (atom, '(' offset)
  std::map<int, RingSlot> open_rings;
  int prev_atom = -1;
  int pending_bond = 0;  // 0 = implicit single
  std::size_t pending_bond_offset = 0;

  auto add_parsed_bond = [&](int a, int b, int order, std::size_t offset) {
    if (a == b) {
      throw SmilesError(SmilesErrorKind::kUnclosedRing, offset, "ring closure to the same atom");
    }
    if (g.has_edge(a, b)) {
      throw SmilesError(SmilesErrorKind::kUnclosedRing, offset, "duplicate bond via ring closure");
    }
    g.add_bond(a, b, static_cast<BondType>(order == 0 ? 1 : order));
  };

  auto handle_ring_digit = [&](int number, std::size_t offset) {
    if (prev_atom < 0) {
      throw SmilesError(SmilesErrorKind::kUnclosedRing, offset, "ring closure before any atom");
    }
    auto it = open_rings.find(number);
    if (it == open_rings.end()) {
      open_rings[number] = RingSlot{prev_atom, offset, pending_bond};
    } else {
      RingSlot slot = it->second;
      open_rings.erase(it);
      int order = 0;
      if (slot.bond != 0 && pending_bond != 0 && slot.bond != pending_bond) {
        throw SmilesError(SmilesErrorKind::kUnclosedRing, offset,
                          "ring closure bond symbols disagree");
      }
      order = slot.bond != 0 ? slot.bond : pending_bond;
      add_parsed_bond(slot.atom, prev_atom, order, offset);
    }
    pending_bond = 0;
  };

  std::size_t i = begin;
  while (i < end) {
    char c = text[i];
    if (is_upper(c)) {
      std::string sym(1, c);
      if (i + 1 < end && is_lower(text[i + 1])) {
        std::string two = sym + text[i + 1];
        if (element_from_symbol(two)) sym = two;
      }
      auto el = element_from_symbol(sym);
      if (!el) {
        throw SmilesError(SmilesErrorKind::kUnknownElement, i, "unknown element '" + sym + "'");
      }
      int atom = g.add_atom(*el);
      atom_offset.push_back(i);
      if (prev_atom >= 0) {
        add_parsed_bond(prev_atom, atom, pending_bond, i);
      } else if (pending_bond != 0) {
        throw SmilesError(SmilesErrorKind::kUnknownElement, pending_bond_offset,
                          "bond symbol before any atom");
      }
      prev_atom = atom;
      pending_bond = 0;
      i += sym.size();
    } else if (c == '-' || c == '=' || c == '#') {
      if (pending_bond != 0) {
        throw SmilesError(SmilesErrorKind::kUnknownElement, i, "consecutive bond symbols");
      }
      pending_bond = c == '-' ? 1 : (c == '=' ? 2 : 3);
      pending_bond_offset = i;
      ++i;
    } else if (c == '(') {
      if (prev_atom < 0) {
        throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, i, "branch before any atom");
      }
      if (pending_bond != 0) {
        throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, i, "bond symbol before '('");
      }
      branch_stack.emplace_back(prev_atom, i);
      ++i;
    } else if (c == ')') {
      if (branch_stack.empty()) {
        throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, i, "')' without matching '('");
      }
      if (pending_bond != 0) {
        throw SmilesError(SmilesErrorKind::kUnknownElement, pending_bond_offset,
                          "dangling bond symbol before ')'");
      }
      prev_atom = branch_stack.back().first;
      branch_stack.pop_back();
      ++i;
    } else if (is_digit(c)) {
      handle_ring_digit(c - '0', i);
      ++i;
    } else if (c == '%') {
      if (i + 2 >= end || !is_digit(text[i + 1]) || !is_digit(text[i + 2])) {
        throw SmilesError(SmilesErrorKind::kUnclosedRing, i, "'%' must be followed by two digits");
      }
      handle_ring_digit((text[i + 1] - '0') * 10 + (text[i + 2] - '0'), i);
      i += 3;
    } else if (is_lower(c)) {
      throw SmilesError(SmilesErrorKind::kUnknownElement, i,
                        std::string("aromatic atom '") + c + "' not supported (input must be kekulized)");
    } else {
      throw SmilesError(SmilesErrorKind::kUnknownElement, i,
                        std::string("unsupported character '") + c + "'");
    }
  }

  if (pending_bond != 0) {
    throw SmilesError(SmilesErrorKind::kUnknownElement, pending_bond_offset,
                      "input ends with a dangling bond symbol");
  }
  if (!branch_stack.empty()) {
    throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, branch_stack.back().second,
                      "'(' is never closed");
  }
  if (!open_rings.empty()) {
    const RingSlot& slot = open_rings.begin()->second;
    throw SmilesError(SmilesErrorKind::kUnclosedRing, slot.offset,
                      "ring closure digit is never closed");
  }
  if (g.num_atoms() == 0) {
    throw SmilesError(SmilesErrorKind::kEmptyInput, begin, "no atoms in input");
  }

  auto violations = check_valence(g);
  if (!violations.empty()) {
    const ValenceViolation& v = violations.front();
    throw SmilesError(SmilesErrorKind::kValenceViolation, atom_offset[v.node],
                      std::string(symbol_of(g.atom(v.node))) + " has bond order " +
                          std::to_string(v.total_order) + " > " + std::to_string(v.max_allowed));
  }
  return g;
}

namespace {

const char* bond_symbol(BondType t) {
  switch (t) {
    case BondType::Single: return "";
    case BondType::Double: return "=";
    case BondType::Triple: return "#";
  }
  return "";
}

std::string ring_digit_token(int d, BondType t) {
  std::string s = bond_symbol(t);
  if (d < 10) {
    s += static_cast<char>('0' + d);
  } else {
    s += '%';
    s += static_cast<char>('0' + d / 10);
    s += static_cast<char>('0' + d % 10);
  }
  return s;
}

struct Writer {
  const MolecularGraph& g;
  std::vector<char> visited;
  // Ring-closure digits to print right after each atom, in assignment order.
  std::vector<std::vector<std::pair<int, BondType>>> ring_marks;
  std::vector<std::vector<std::pair<int, BondType>>> tree_children;
  int next_digit = 1;

  explicit Writer(const MolecularGraph& g_)
      : g(g_), visited(g_.num_atoms(), 0), ring_marks(g_.num_atoms()),
        tree_children(g_.num_atoms()) {}

  // First pass: classify edges into tree and ring edges in DFS order.
  void classify(int u, int parent) {
    visited[u] = 1;
    for (const auto& [v, t] : g.neighbors(u)) {
      if (v == parent) continue;
      if (!visited[v]) {
        tree_children[u].emplace_back(v, t);
        classify(v, u);
      } else {
        // Back edge; record once (the deeper endpoint sees it first).
        bool already = false;
        for (int w : ring_partner_[u])
          if (w == v) already = true;
        if (!already) {
          int digit = next_digit++;
          ring_marks[u].emplace_back(digit, t);
          ring_marks[v].emplace_back(digit, t);
          ring_partner_[u].push_back(v);
          ring_partner_[v].push_back(u);
        }
      }
    }
  }

  void emit(int u, std::string& out) {
    out += symbol_of(g.atom(u));
    for (const auto& [digit, t] : ring_marks[u]) out += ring_digit_token(digit, t);
    const auto& kids = tree_children[u];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      bool last = k + 1 == kids.size();
      if (!last) out += '(';
      out += bond_symbol(kids[k].second);
      emit(kids[k].first, out);
      if (!last) out += ')';
    }
  }

  std::vector<std::vector<int>> ring_partner_ = std::vector<std::vector<int>>(g.num_atoms());
};

}  // namespace

std::string write_smiles(const MolecularGraph& g) {
  if (g.num_atoms() == 0) throw DisconnectedGraph("cannot write an empty graph");
  if (!g.connected()) throw DisconnectedGraph("graph has more than one component");
  Writer w(g);
  w.classify(0, -1);
  std::string out;
  w.emit(0, out);
  return out;
}

Corpus parse_corpus_text(std::string_view text, bool strict, int max_nodes) {
  Corpus corpus;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = nl == std::string_view::npos ? text.substr(pos)
                                                         : text.substr(pos, nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    std::size_t a = line.find_first_not_of(" \t");
    if (a == std::string_view::npos) continue;
    std::size_t b = line.find_last_not_of(" \t");
    line = line.substr(a, b - a + 1);
    if (line.front() == '#') continue;
    try {
      corpus.molecules.push_back(parse_smiles(line, max_nodes));
    } catch (const Error& e) {
      if (strict) {
        throw IoError("line " + std::to_string(line_no) + ": " + e.what());
      }
      corpus.report.push_back({line_no, e.what()});
    }
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, bool strict, int max_nodes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus_text(ss.str(), strict, max_nodes);
}

}  // namespace molgen
