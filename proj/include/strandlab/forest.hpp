#pragma once

// Labeled forest expansions and forest pair diagrams: the user-facing
// encoding of rearrangements.  A forest has one root branch per base-graph
// edge; expanding a leaf attaches a labeled copy of its color's replacement
// tree.  A forest pair diagram is a (domain, range) pair of forests whose
// leaf labels match; the leaf bijection is implicit in the labels (the range
// is always stored renamed so that matching leaves carry equal labels).

#include <optional>
#include <string>
#include <vector>

#include "strandlab/replacement.hpp"

namespace strandlab {

// Branch label (v, w, z): origin, terminus and parallel index.  The index is
// itself a renameable symbol; it only has meaning relative to the class of
// parallel branches with the same endpoints and color.
struct BranchLabel {
  Symbol v;
  Symbol w;
  Symbol z;
  friend bool operator==(const BranchLabel&, const BranchLabel&) = default;
  friend auto operator<=>(const BranchLabel&, const BranchLabel&) = default;
};

// Endpoint order normalized for undirected colors (smaller symbol first).
BranchLabel normalized_label(const BranchLabel& l, const Color& c,
                             const ReplacementSystem& rs);

struct Branch {
  Color color;
  BranchLabel label;
  std::vector<Branch> children;  // empty means leaf; ordered by rule edges
  bool is_leaf() const { return children.empty(); }
};

// Stable path address of a branch: root index followed by child indices.
using BranchPath = std::vector<int>;

struct Forest {
  std::vector<Branch> roots;

  const Branch* find(const BranchPath& p) const;
  Branch* find(const BranchPath& p);
  // All leaf paths in left-to-right order.
  std::vector<BranchPath> leaves() const;
  // All internal (expanded) branch paths in preorder; replaying them as
  // expansions on the base forest reproduces the forest shape.
  std::vector<BranchPath> internal_paths() const;
};

struct ForestPairDiagram {
  Forest domain;
  Forest range;
};

// One root+branch per base edge, in base_edge_order, labeled by the edge's
// endpoints and parallel index.
Forest base_forest(const ReplacementSystem& rs);

// Expands the leaf at `path` by its color's replacement tree; interior
// vertices of the tree get fresh symbols.
Forest expand_branch(const Forest& f, const BranchPath& path,
                     const ReplacementSystem& rs, FreshSupply& fresh);

// Reads the leaf labels into a colored graph.
ColoredGraph leaf_graph(const Forest& f, const ReplacementSystem& rs);

// Checks that every internal branch's children instantiate its rule template
// consistently and that leaf labels are pairwise distinct.
ValidationReport validate_forest(const Forest& f, const ReplacementSystem& rs);

// Builds a pair diagram; throws std::invalid_argument listing unmatched
// labels when the leaf-label multisets differ.
ForestPairDiagram make_pair(const Forest& domain, const Forest& range,
                            const ReplacementSystem& rs);

// Expands a domain leaf and its equally-labeled range partner with shared
// fresh symbols.
ForestPairDiagram expand_pair(const ForestPairDiagram& p,
                              const BranchPath& domain_leaf,
                              const ReplacementSystem& rs, FreshSupply& fresh);

// Collapses unexpanded image families until none remain; the result is the
// unique reduced forest pair diagram.
ForestPairDiagram reduce_pair(const ForestPairDiagram& p,
                              const ReplacementSystem& rs);

// A labeled item in a fixed traversal; `tag` carries structural data that is
// not subject to renaming.
struct LabeledItem {
  Color color;
  BranchLabel label;
  std::string tag;
};

// Renaming-invariant canonicalization of a label sequence: symbols renamed by
// first appearance, parallel indices renumbered per class, endpoint order of
// undirected labels resolved to the lexicographically least encoding.
std::string canonical_label_sequence(const std::vector<LabeledItem>& items,
                                     const ReplacementSystem& rs);

// Checks that `bottoms` instantiates color c's rule with iota -> top.v and
// tau -> top.w (or the swapped seed when c is undirected); on success returns
// the substitution rule-vertex -> symbol.  Parallel indices of the bottoms
// only need to be distinct within each substituted parallel class.
struct RuleInstantiation {
  std::map<Symbol, Symbol> substitution;
  bool flipped = false;  // matched via the iota/tau swap seed
};
std::optional<RuleInstantiation> match_rule_family(
    const Color& c, const BranchLabel& top,
    const std::vector<std::pair<Color, BranchLabel>>& bottoms,
    const ReplacementSystem& rs);

// Slot permutation induced by an undirected color's swap automorphism: the
// template edge at rule.edge_order position i corresponds to position out[i]
// under the swap.
std::vector<int> swap_slot_permutation(const ReplacementRule& rule,
                                       const GraphIsomorphism& swap);

// Normalizes the endpoint order of every stored label and reorders every
// family that instantiates its rule through the undirected swap automorphism,
// so that all families use the plain orientation.  The leaf set and the
// encoded rearrangement are unchanged.  Expansions produce plainly-oriented
// families already; this is for hand-built forests.
Forest normalize_orientation(Forest f, const ReplacementSystem& rs);

// Deterministic renaming-invariant encoding (for equality up to renaming of
// symbols).
std::string forest_encoding(const Forest& f, const ReplacementSystem& rs);
std::string pair_encoding(const ForestPairDiagram& p,
                          const ReplacementSystem& rs);

// Element file:
// {"system":<name or inline>,"domain":[paths],"range":[paths],
//  "leaf_map":[[i,j],...] }  (paths are arrays of integers; leaf_map is
// optional and defaults to the in-order pairing).
// The loader rebuilds both forests, applies the leaf pairing, renames the
// range per the label convention and validates the result.
std::string element_to_json(const ForestPairDiagram& p,
                            const ReplacementSystem& rs,
                            const std::string& system_name = "");
ForestPairDiagram element_from_json(const std::string& text,
                                    const ReplacementSystem& rs);
// Extracts the "system" field (inline object serialized back to text, or a
// name) so callers can resolve the system before loading the element.
std::optional<std::string> element_system_field(const std::string& text,
                                                bool* is_inline);

}  // namespace strandlab
