#pragma once

// Types shared between the graph-rewriting module and the closed-diagram
// module: user-supplied completion rules (extra reductions with a verified
// derivation and a conjugator template).

#include <string>
#include <vector>

#include "strandlab/strand.hpp"

namespace strandlab {

// One step of a completion rule's derivation: either expand an edge by its
// color's replacement graph or apply an ordinary reduction.
struct DerivationStep {
  enum class Kind { Expand, Reduce };
  Kind kind = Kind::Expand;
  int edge = -1;                 // Expand: index into the current edge list
  Color color;                   // Reduce: rule color
  bool glued = false;            // Reduce: iota=tau-glued variant
  std::vector<int> image_edges;  // Reduce: edge indices forming the image
};

// An extra graph reduction lhs -> rhs together with the derivation that
// proves it stays inside the equivalence generated by the basic moves, and
// the strand-diagram conjugator applied per winding when the rule fires as a
// closed-diagram reduction.  The template's sources carry the rhs edges (in
// rhs edge order) and its sinks the lhs edges (in lhs edge order).
struct CompletionRule {
  std::string name;
  ColoredGraph lhs;
  std::vector<Symbol> boundary;  // lhs vertices that survive into rhs
  ColoredGraph rhs;
  std::vector<DerivationStep> derivation;
  // Empty when the rule carries no template (then it cannot be used as a
  // closed-diagram reduction, only as a graph rewrite).
  std::vector<StrandDiagram> conjugator_template;
};

}  // namespace strandlab
