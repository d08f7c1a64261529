#pragma once

// Replacement systems: a base graph plus one replacement rule per color.
// Edges expand into their color's replacement graph; the expanding condition
// guarantees that limit spaces exist and that reductions terminate.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strandlab/graph.hpp"

namespace strandlab {

struct ReplacementRule {
  Color color;
  ColoredGraph graph;
  Symbol initial;   // iota
  Symbol terminal;  // tau
  // Permutation of graph.edges(); drives the order of forest / strand
  // branches under expansion.
  std::vector<ColoredEdge> edge_order;
};

struct ReplacementSystem {
  ColoredGraph base;
  std::vector<ColoredEdge> base_edge_order;
  std::map<Color, ReplacementRule> rules;
  // Colors whose rule admits an automorphism exchanging iota and tau; filled
  // by detect_undirected_colors.  The chosen swap automorphism is stored per
  // color.
  std::map<Color, GraphIsomorphism> undirected_swaps;

  const ReplacementRule& rule(const Color& c) const { return rules.at(c); }
  bool is_undirected(const Color& c) const {
    return undirected_swaps.count(c) > 0;
  }
};

struct ExpandingReport {
  struct Violation {
    std::string where;   // "base" or "rule <color>"
    std::string clause;  // which of the three clauses failed
  };
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Verifies the expanding condition: (a) no isolated vertices in the base or
// any rule graph, (b) no rule edge joins iota and tau, (c) every rule graph
// has at least 3 vertices and at least 2 edges.
ExpandingReport check_expanding(const ReplacementSystem& rs);

// Structural validation (rules present for all colors, iota/tau distinct and
// present, edge orders are permutations, graphs valid).
ValidationReport validate_system(const ReplacementSystem& rs);

// A deterministic supply of fresh symbols, scoped to an operation.
class FreshSupply {
 public:
  explicit FreshSupply(std::string prefix = "f") : prefix_(std::move(prefix)) {}
  Symbol next() { return prefix_ + std::to_string(counter_++); }

 private:
  std::string prefix_;
  long counter_ = 0;
};

// Replaces edge e of g by a fresh-renamed copy of its color's replacement
// graph, identifying iota with e.from and tau with e.to.  Parallel indices
// are re-normalized.
ColoredGraph expand_edge(const ColoredGraph& g, const ColoredEdge& e,
                         const ReplacementSystem& rs, FreshSupply& fresh);

// Detects undirected colors (rule admits an iota<->tau color-preserving
// automorphism) and stores the canonically first swap automorphism on the
// returned copy of the system.
std::map<Color, GraphIsomorphism> detect_undirected_colors(
    const ReplacementSystem& rs);

// Applies detect_undirected_colors and marks the base graph's undirected
// colors accordingly.  Call once after constructing a system by hand or from
// a file.
ReplacementSystem finalize_system(ReplacementSystem rs);

// Replacement-system file:
// {"colors":[...],"base":<graph>,"base_edge_order":[...],
//  "rules":{color:{"graph":<graph>,"iota":v,"tau":w,"edge_order":[...]}}}.
std::string system_to_json(const ReplacementSystem& rs);
ReplacementSystem system_from_json(const std::string& text);

}  // namespace strandlab
