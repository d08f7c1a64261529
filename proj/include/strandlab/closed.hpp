#pragma once

// Closed strand diagrams: a strand diagram whose sinks are glued back onto
// its sources.  Internally a closed diagram is stored cut open at its base
// line: base point i is the pair (source i, sink i) of the underlying open
// diagram, so every closed-diagram operation is a local rewrite of a plain
// StrandDiagram and all open-diagram machinery (validation, reduction,
// composition, encodings) applies unchanged.  Transformations of the closed
// diagram (shifts of the base line, permutations of base points, reductions)
// each record a conjugator: a small strand diagram h with
//   open(after) == reduce(h^-1 * open(before) * h)
// up to renaming, which is how conjugators of rearrangements are assembled.

#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "strandlab/rewrite_types.hpp"
#include "strandlab/strand.hpp"

namespace strandlab {

struct ClosedDiagram {
  // Cut-open form; source i and sink i are the two sides of base point i.
  StrandDiagram open;
  int base_points() const { return (int)open.sources.size(); }
};

// Glues sink i onto source i.  Requires a consistent renaming taking the
// labels of the strands entering the sinks to the labels of the strands
// leaving the sources, position by position (undirected labels may bind with
// their endpoints swapped); throws std::invalid_argument otherwise.
ClosedDiagram close_diagram(const StrandDiagram& sd,
                            const ReplacementSystem& rs);

// The cut-open diagram (inverse of close_diagram).
const StrandDiagram& open_diagram(const ClosedDiagram& cd);

// Structural validation of the open form plus existence of the closure
// renaming and acyclicity through the base line (every directed cycle of the
// closed diagram crosses a base point).
ValidationReport validate_closed(const ClosedDiagram& cd,
                                 const ReplacementSystem& rs);

// The closure renaming: symbol on a strand entering a sink -> symbol on the
// strand leaving the matching source.  Empty optional when none exists.
std::optional<std::map<Symbol, Symbol>> closure_binding(
    const StrandDiagram& sd, const ReplacementSystem& rs);

// Canonical renaming-invariant encoding (byte equality == equality up to
// renaming, including the base-line order).
std::string closed_encoding(const ClosedDiagram& cd,
                            const ReplacementSystem& rs);

// ---------------------------------------------------------------------------
// The base-line-erased graph: vertices are the splits and merges, arcs are
// the maximal strand chains between them (each chain crosses some number of
// base points).  Chains that close up without meeting any split or merge are
// kept as free loops.
struct ErasedArc {
  int from = -1;           // erased vertex id, -1 for a free loop
  int to = -1;
  int from_slot = -1;      // position in from's outs / to's ins
  int to_slot = -1;
  Color color;
  std::vector<int> crossings;  // base-point indices along the chain, in order
  std::vector<int> segments;   // open-diagram strand ids along the chain
};
struct ErasedGraph {
  int vertex_count = 0;             // erased vertex ids are 0..vertex_count-1
  std::vector<int> vertex_node;     // erased vertex -> open-diagram node id
  std::vector<int> node_vertex;     // open node id -> erased vertex (-1)
  std::vector<ErasedArc> arcs;
};
ErasedGraph erase_base_line(const ClosedDiagram& cd);

// Crossing counts per erased arc (the base line read as a cochain of the
// erased graph).
struct BaseCochain {
  std::vector<int> counts;  // indexed like ErasedGraph::arcs
};
BaseCochain baseline_cochain(const ErasedGraph& g);
BaseCochain baseline_cochain(const ClosedDiagram& cd);

// Whether c1 - c2 is a vertex coboundary of g (+1 on outgoing arcs, -1 on
// incoming, per vertex, with integer coefficients).  Free loops admit no
// coboundary change, so their counts must agree exactly.
bool cohomologous(const BaseCochain& c1, const BaseCochain& c2,
                  const ErasedGraph& g);

// ---------------------------------------------------------------------------
// Transformation steps and conjugators.
enum class StepKind {
  ShiftExpand,
  ShiftReduce,
  Permute,
  Red1,
  Red2,
  Red3,
  Red3Extra,
};

struct TransformationStep {
  StepKind kind = StepKind::Permute;
  std::string site;         // human-readable description of where it applied
  StrandDiagram conjugator; // h with open(after) == open(before)^h
  bool trivial = false;     // h is an identity diagram (Type 1/2 reductions)
  // Surgery bookkeeping for replaying step sequences: node renumbering of the
  // open diagram (old id -> new id, -1 when deleted) and, for shifts, the new
  // id of the re-created split/merge.
  std::vector<int> node_map;
  int moved_node = -1;
};

// Verifies open(after) == reduce(h^-1 * open(before) * h) up to renaming for
// the accumulated conjugator of the steps (h = steps[0] * steps[1] * ... in
// stacking order).  Returns the accumulated conjugator on success.
std::optional<StrandDiagram> replay_steps(
    const StrandDiagram& before, const std::vector<TransformationStep>& steps,
    const StrandDiagram& after, const ReplacementSystem& rs);

// Folds the conjugators of a step sequence into one diagram (later steps
// stack above earlier ones).  Empty sequence -> identity over `boundary`.
StrandDiagram fold_conjugators(const std::vector<TransformationStep>& steps,
                               const StrandDiagram& before,
                               const ReplacementSystem& rs);

enum class ShiftDirection { Expanding, Reducing };

// Moves the base line across the split or merge `node` of cd.open.
//  - Expanding past a split: the split's top strand must leave a source
//    directly; the split moves below the base line and its bottom strands
//    each acquire a base point (fresh symbols on the re-instantiated family).
//  - Reducing past a split: every bottom strand of the split must enter a
//    sink directly; the family's base points collapse to one on the top
//    strand.  (Base points need not sit at consecutive positions: the step's
//    conjugator absorbs the implied permutation.)
//  - Past a merge: the vertical mirror of the above.
// Throws std::invalid_argument when not applicable at `node`.
std::pair<ClosedDiagram, TransformationStep> shift(const ClosedDiagram& cd,
                                                   int node,
                                                   ShiftDirection dir,
                                                   const ReplacementSystem& rs);

// Reorders the base points: new base point i is old base point perm[i].
std::pair<ClosedDiagram, TransformationStep> permute(
    const ClosedDiagram& cd, const std::vector<int>& perm,
    const ReplacementSystem& rs);

// ---------------------------------------------------------------------------
// Type 3 reductions: families of looping strands (strand cycles met by no
// split or merge) matching a replacement rule, replaced by a single looping
// strand per winding.
struct Type3Redex {
  Color color;
  bool glued = false;  // matched the iota=tau-glued variant of the rule
  bool extra = false;  // matched a completion rule instead of a basic rule
  int extra_index = -1;
  int winding = 1;
  // blocks[r][j] = base-point index whose outgoing strand carries rule-edge
  // slot j of winding copy r.
  std::vector<std::vector<int>> blocks;
  // Substitution per winding copy (rule vertex -> symbol).
  std::vector<std::map<Symbol, Symbol>> substitutions;
  std::vector<Symbol> deleted;  // symbols erased by the reduction
};
std::vector<Type3Redex> find_type3(const ClosedDiagram& cd,
                                   const ReplacementSystem& rs,
                                   const std::vector<CompletionRule>& extras =
                                       {});
std::pair<ClosedDiagram, TransformationStep> apply_type3(
    const ClosedDiagram& cd, const Type3Redex& r, const ReplacementSystem& rs,
    const std::vector<CompletionRule>& extras = {});

// Reduces the closure: Type 1 and Type 2 reductions wherever the base line
// can be shifted/permuted out of the way (found on the erased graph, with
// the unlocking similarity steps synthesized and recorded), then Type 3
// (including completion rules).  The trace replays via replay_steps.
// A generator randomizes the schedule; the reduced form is schedule
// independent when the rules are reduction confluent.
std::pair<ClosedDiagram, std::vector<TransformationStep>> reduce_closed(
    const ClosedDiagram& cd, const ReplacementSystem& rs,
    const std::vector<CompletionRule>& extras = {},
    std::mt19937* shuffle = nullptr);

bool is_reduced_closed(const ClosedDiagram& cd, const ReplacementSystem& rs,
                       const std::vector<CompletionRule>& extras = {});

// ---------------------------------------------------------------------------
// Stable and vanishing symbols of the bi-infinite periodic strip obtained by
// stacking copies of a reduced diagram.
struct SymbolDynamics {
  // One-period map: symbol of the diagram -> symbol it is identified with in
  // the copy one period up; undefined (absent) where the stacking introduces
  // a fresh symbol instead.
  std::map<Symbol, Symbol> mu;
  std::set<Symbol> stable;     // symbols on mu-cycles
  std::set<Symbol> vanishing;  // the rest
  // Connected components of the closure, each with its cycle permutation of
  // stable symbols and that permutation's order.
  std::vector<std::set<Symbol>> components;
  std::vector<std::map<Symbol, Symbol>> component_permutation;
  std::vector<int> component_order;
};
SymbolDynamics symbol_dynamics(const StrandDiagram& sd,
                               const ReplacementSystem& rs);

// Relabels sd one period along: stable symbols through the cycle
// permutations raised to power[i] per component, vanishing symbols fresh.
StrandDiagram apply_period(const StrandDiagram& sd, const SymbolDynamics& dyn,
                           const std::vector<int>& powers,
                           const ReplacementSystem& rs);

// ---------------------------------------------------------------------------
// Similarity of reduced closed diagrams.
struct SimilarityWitness {
  // Steps transforming cd2 into a diagram equal to cd1 up to renaming:
  // open(cd1) == open(cd2)^(fold of steps) up to renaming.
  std::vector<TransformationStep> steps;
  std::vector<int> configuration;  // chosen power per closure component
};
std::optional<SimilarityWitness> similar(const ClosedDiagram& cd1,
                                         const ClosedDiagram& cd2,
                                         const ReplacementSystem& rs);

// ---------------------------------------------------------------------------
// Serialization and export.
std::string closed_to_json(const ClosedDiagram& cd);
ClosedDiagram closed_from_json(const std::string& text,
                               const ReplacementSystem& rs);
// DOT export with the base line drawn as a dashed annotation.
std::string closed_to_dot(const ClosedDiagram& cd);
// Trace file for audit/replay.
std::string trace_to_json(const std::vector<TransformationStep>& steps);

}  // namespace strandlab
