#pragma once

// Strand diagrams: acyclic diagrams of colored, labeled strands between
// ordered sources and sinks, with splits (one strand fans out into a rule
// family) and merges (a rule family fans in).  They compose by gluing sinks
// to sources and reduce to a unique normal form; reduced diagrams cut back
// into forest pair diagrams.  Diagrams whose splits and merges all
// instantiate the replacement rules, with consistent labels, represent
// rearrangements (and, between different graphs, groupoid elements).

#include <map>
#include <random>
#include <string>
#include <vector>

#include "strandlab/forest.hpp"

namespace strandlab {

enum class NodeKind { Source, Sink, Split, Merge };

// `ins` and `outs` hold strand indices in rotation order (left to right).
struct StrandNode {
  NodeKind kind = NodeKind::Source;
  std::vector<int> ins;
  std::vector<int> outs;
};

struct Strand {
  int from = -1;
  int to = -1;
  Color color;
  BranchLabel label;
};

struct StrandDiagram {
  std::vector<StrandNode> nodes;
  std::vector<Strand> strands;
  std::vector<int> sources;  // node indices, boundary order
  std::vector<int> sinks;
};

// One straight strand per base edge.
StrandDiagram identity_diagram(const ReplacementSystem& rs);

// Domain forest on top (sources at its roots, splits at its internal
// branches), inverted range forest below, leaves glued by label matching.
// Both forests are orientation-normalized first so every split and merge
// instantiates its rule plainly.
StrandDiagram from_forest_pair(const ForestPairDiagram& p,
                               const ReplacementSystem& rs);

// Structural validation: index ranges, node arities (sources emit one strand,
// sinks absorb one, splits have one in and >= 2 out, merges dually), rotation
// lists consistent with strand endpoints, boundary lists exact, acyclicity.
ValidationReport validate_strand(const StrandDiagram& sd);

// Structural validation plus the three branching conditions: (1) every split
// and merge instantiates its color's rule up to renaming; (2) at every strand
// from a merge into a split the merge's in-labels equal the split's
// out-labels position by position; (3) a symbol generated by two different
// splits (or two different merges) forces their branching strands to carry
// equal labels.
ValidationReport validate_r_branching(const StrandDiagram& sd,
                                      const ReplacementSystem& rs);

// True when neither reduction applies.
bool is_reduced(const StrandDiagram& sd);

// Applies reductions until none remain: a split feeding its mirror merge
// collapses to one strand; a merge feeding a split collapses to the family of
// parallel strands.  Deterministic (first redex in strand order) unless a
// generator is supplied, in which case the redex is chosen at random; the
// normal form is the same either way.
StrandDiagram reduce(const StrandDiagram& sd, const ReplacementSystem& rs,
                     std::mt19937* shuffle = nullptr);

// Reverses every strand: sources <-> sinks, splits <-> merges.
StrandDiagram invert(const StrandDiagram& sd);

// Glues g's sinks to f's sources (g acts first), renaming f so that labels
// agree across the boundary and, where a split of f continues a family that a
// merge of g contracted, reusing the merge's symbols.  Inputs are reduced
// first and the result is reduced.  Throws std::invalid_argument when the
// boundaries do not match up to renaming.
StrandDiagram compose(const StrandDiagram& f, const StrandDiagram& g,
                      const ReplacementSystem& rs);

// Composition record: the renaming applied to f's symbols (vertex symbols
// only; parallel indices are renamed per class) so that labels agree across
// the glued boundary.  Symbols of the result that are not in the image came
// from g unchanged or were generated fresh.
struct ComposeTrace {
  std::map<Symbol, Symbol> renaming;
};
StrandDiagram compose(const StrandDiagram& f, const StrandDiagram& g,
                      const ReplacementSystem& rs, ComposeTrace* trace);

// Severs, on every source-to-sink path, the unique strand with only splits
// above and only merges below; returns the top forest as domain and the
// mirrored bottom forest as range (their base graphs may differ).  Throws
// std::invalid_argument when sd is not reduced.
ForestPairDiagram cut(const StrandDiagram& sd, const ReplacementSystem& rs);

// Factorization into elementary diagrams: splits (top to bottom), then the
// permutation diagram linking the cut strands, then merges (top to bottom).
// Composing splits first, then the permutation, then the merges gives back
// the diagram.
struct MPSFactorization {
  std::vector<StrandDiagram> merges;
  StrandDiagram permutation;
  std::vector<StrandDiagram> splits;
};
MPSFactorization mps_factorize(const StrandDiagram& sd,
                               const ReplacementSystem& rs);

// Canonical renaming-invariant encoding: a breadth-first traversal from the
// ordered sources following rotation order fixes the node and strand order,
// so equality of diagrams (up to renaming) is byte equality.
std::string strand_encoding(const StrandDiagram& sd,
                            const ReplacementSystem& rs);

// Diagram file (debug/interchange):
// {"nodes":[{"kind":...,"ins":[...],"outs":[...]}],
//  "strands":[{"from":i,"to":j,"color":c,"label":[v,w,z]}],
//  "sources":[...],"sinks":[...]}
std::string diagram_to_json(const StrandDiagram& sd);
StrandDiagram diagram_from_json(const std::string& text);

// Graphviz export: splits and merges as branch points, strand labels as edge
// annotations.
std::string diagram_to_dot(const StrandDiagram& sd);

}  // namespace strandlab
