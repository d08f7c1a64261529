#pragma once

// Finite colored directed multigraphs with parallel-edge indices, canonical
// forms and isomorphism enumeration.  These graphs serve as base graphs,
// replacement graphs, leaf graphs and rewrite-system objects throughout the
// library.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace strandlab {

// A symbol is an opaque identifier: a vertex name or a parallel-edge index
// name.  Symbols are compared by name; renaming maps are bijections.
using Symbol = std::string;
using Color = std::string;

struct ColoredEdge {
  Symbol from;
  Symbol to;
  Color color;
  int index = 1;  // discriminates parallel edges with equal (from,to,color)

  friend bool operator==(const ColoredEdge&, const ColoredEdge&) = default;
  friend auto operator<=>(const ColoredEdge&, const ColoredEdge&) = default;
};

struct ValidationIssue {
  std::string what;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

class ColoredGraph {
 public:
  ColoredGraph() = default;

  // Vertices in insertion order (duplicates ignored).
  const std::vector<Symbol>& vertices() const { return vertices_; }
  // Edges in insertion order.  For undirected colors the endpoints are stored
  // in canonical (lexicographically sorted) order.
  const std::vector<ColoredEdge>& edges() const { return edges_; }
  const std::set<Color>& undirected_colors() const { return undirected_; }

  void add_vertex(const Symbol& v);
  // Adds an edge; endpoints are added as vertices if missing.  If index <= 0
  // the next free index of the (from,to,color) class is assigned.
  ColoredEdge add_edge(Symbol from, Symbol to, Color color, int index = 0);
  void set_undirected(const Color& c, bool undirected = true);

  bool has_vertex(const Symbol& v) const;
  // Number of edges incident to v (loops count twice).
  int degree(const Symbol& v) const;
  // Edges touching v.
  std::vector<ColoredEdge> incident(const Symbol& v) const;

  // Applies the canonical endpoint order of undirected colors to (from,to).
  std::pair<Symbol, Symbol> oriented(const ColoredEdge& e) const;

  // Structural equality: same vertex set, same edge multiset (undirected
  // colors compared up to endpoint swap), same undirected-color set.
  friend bool operator==(const ColoredGraph& a, const ColoredGraph& b);

  // Total order for use in sets; consistent with operator==.
  friend bool operator<(const ColoredGraph& a, const ColoredGraph& b);

 private:
  std::vector<Symbol> vertices_;
  std::vector<ColoredEdge> edges_;
  std::set<Color> undirected_;
  std::set<Symbol> vertex_set_;

  std::vector<ColoredEdge> normalized_sorted_edges() const;
};

// Checks structural sanity: dangling endpoints, duplicate
// (from,to,color,index) keys, index gaps, and (unless allowed) isolated
// vertices.
ValidationReport validate_graph(const ColoredGraph& g,
                                bool allow_isolated = false);

struct CanonicalForm {
  ColoredGraph graph;
  // Vertex renaming applied: original name -> canonical name.
  std::map<Symbol, Symbol> renaming;
  // Deterministic textual encoding of `graph`; equal encodings iff equal
  // canonical graphs.
  std::string encoding;
};

// Deterministic relabeling such that two graphs are isomorphic iff their
// canonical forms are identical.  Uses iterated signature refinement with
// backtracking on ties (graphs here are tiny).
CanonicalForm canonical_form(const ColoredGraph& g);

struct GraphIsomorphism {
  // Vertex bijection g1 -> g2.
  std::map<Symbol, Symbol> vertex_map;
  // Edge bijection as indices into g1.edges() -> g2.edges().
  std::vector<int> edge_map;
};

// Enumerates all color-preserving isomorphisms g1 -> g2 (vertex bijections
// together with compatible parallel-edge matchings).  Undirected colors are
// matched up to endpoint swap.  Empty iff the graphs are not isomorphic.
std::vector<GraphIsomorphism> isomorphisms(const ColoredGraph& g1,
                                           const ColoredGraph& g2);

// JSON (de)serialization with the schema
// {"vertices":[...],"edges":[{"from","to","color","index"}],
//  "undirected_colors":[...]}.
std::string graph_to_json(const ColoredGraph& g);
ColoredGraph graph_from_json(const std::string& text);

// Internal helper shared with other modules: graph_from_json on an already
// parsed object.  Declared here to keep the JSON dependency out of headers.
class ColoredGraphJsonAccess;

}  // namespace strandlab
