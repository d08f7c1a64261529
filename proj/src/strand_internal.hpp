#pragma once

// Construction and traversal helpers shared by the strand and closed-diagram
// translation units.  Not part of the public API.

#include <map>
#include <tuple>
#include <vector>

#include "strandlab/strand.hpp"

namespace strandlab::detail {

int add_node(StrandDiagram& sd, NodeKind k);

// Creates a strand hanging off `from` (appended to its rotation order); the
// destination is attached later.
int add_strand(StrandDiagram& sd, int from, const Color& c,
               const BranchLabel& l);

void attach_to(StrandDiagram& sd, int strand, int node);

NodeKind kind_of(const StrandDiagram& sd, int strand_end);

// Drops marked nodes/strands and renumbers everything else, preserving
// rotation and boundary orders.  Optionally reports the renumbering maps
// (old index -> new index, -1 for dropped).
StrandDiagram repack(const StrandDiagram& sd, const std::vector<char>& dn,
                     const std::vector<char>& ds,
                     std::vector<int>* nmap_out = nullptr,
                     std::vector<int>* smap_out = nullptr);

std::vector<std::pair<Color, BranchLabel>> labels_of(
    const StrandDiagram& sd, const std::vector<int>& strand_ids);

// Deterministic node order: breadth-first from the ordered sources, following
// rotation order.  Returns strand visit order; node ids via node_order.
std::vector<int> traversal_order(const StrandDiagram& sd,
                                 std::vector<int>* node_order_out);

// Binds f-boundary labels to g-boundary labels position by position,
// backtracking over the endpoint order of undirected labels.  rho must end up
// injective (the boundary renaming is a graph isomorphism).
bool bind_boundary(const std::vector<const Strand*>& fs,
                   const std::vector<const Strand*>& gs,
                   const ReplacementSystem& rs, size_t i,
                   std::map<Symbol, Symbol> rho,
                   std::map<Symbol, Symbol> rho_inv,
                   std::map<std::tuple<Symbol, Symbol, Color, Symbol>, Symbol>
                       rho_z,
                   std::map<Symbol, Symbol>* out,
                   std::map<std::tuple<Symbol, Symbol, Color, Symbol>,
                            Symbol>* out_z);

// Elementary diagram: straight strands for every boundary position except
// `pos`, which carries a single split (splitting ? top at pos, outs below) or
// merge (ins above, bottom at pos).
StrandDiagram elementary(const std::vector<std::pair<Color, BranchLabel>>& thin,
                         int pos,
                         const std::vector<std::pair<Color, BranchLabel>>& fat,
                         bool splitting);

}  // namespace strandlab::detail
