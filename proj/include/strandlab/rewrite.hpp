#pragma once

// Graph reductions: the inverses of edge expansions.  A redex is an embedded
// copy of a replacement graph (or of its variant with initial and terminal
// vertex glued) whose interior touches nothing outside the copy; applying it
// collapses the copy back to a single edge (or loop).  Completion rules are
// user-supplied extra reductions with a verified derivation.  Since every
// reduction strictly decreases the edge count the rewrite relation
// terminates, so confluence follows from joinability of all overlaps of two
// redexes (Newman's lemma); check_confluence enumerates those overlaps.

#include <string>
#include <vector>

#include "strandlab/replacement.hpp"
#include "strandlab/rewrite_types.hpp"

namespace strandlab {

// An occurrence of a reduction pattern in a host graph.
struct Redex {
  Color color;          // rule color (basic rules) or lhs color tag (extras)
  bool glued = false;   // matched the iota=tau-glued variant of the rule
  int extra_index = -1; // >= 0: index into the extras list, color unused
  // Pattern vertex -> host vertex.  For basic rules the pattern is the
  // rule graph (with tau replaced by iota when glued); for extras it is the
  // completion rule's lhs.
  std::map<Symbol, Symbol> embedding;
  // Host edge indices in pattern edge order.
  std::vector<int> edge_ids;
};

// All redexes of g: every embedding of every rule graph and glued variant
// satisfying the interior-closure condition (interior vertices touch no host
// edge outside the image), plus completion-rule matches.
std::vector<Redex> find_redexes(const ColoredGraph& g,
                                const ReplacementSystem& rs,
                                const std::vector<CompletionRule>& extras = {});

// Replaces the image of r by a single c-colored edge from the image of iota
// to the image of tau (a loop when glued); for extras, by the rule's rhs.
// Throws std::invalid_argument when r is stale in g.
ColoredGraph apply_redex(const ColoredGraph& g, const Redex& r,
                         const ReplacementSystem& rs,
                         const std::vector<CompletionRule>& extras = {});

// Exhaustive closure of apply_redex; the redex-free graphs reached, as
// canonical forms (deduplicated, sorted by encoding).  Terminates because
// every step drops the edge count.
std::vector<ColoredGraph> normal_forms(
    const ColoredGraph& g, const ReplacementSystem& rs,
    const std::vector<CompletionRule>& extras = {});

struct ConfluenceReport {
  enum class Verdict { Confluent, NotConfluent, Unknown };
  Verdict verdict = Verdict::Unknown;
  // NotConfluent: an overlap graph with >= 2 normal forms, and those forms.
  ColoredGraph counterexample;
  std::vector<ColoredGraph> witness_normal_forms;
  int overlaps_checked = 0;
  std::string note;
};

// Joins every overlap of two reduction patterns (gluings of two pattern
// copies sharing at least one edge, extended by one layer of dangling
// context edges so the interior-closure condition is exercised).  All
// overlaps confluent => Confluent (rewriting terminates, so local confluence
// suffices); any overlap with two distinct normal forms => NotConfluent with
// that witness; more than `overlap_cap` overlaps => Unknown.
ConfluenceReport check_confluence(const ReplacementSystem& rs,
                                  const std::vector<CompletionRule>& extras =
                                      {},
                                  int overlap_cap = 100000);

// Replays extra.derivation from lhs and confirms it lands on rhs (up to an
// isomorphism fixing the boundary vertices), that the edge count strictly
// drops, and that the conjugator template (when present) is a valid
// branching fragment whose boundary strand labels carry the rhs edges on top
// and the lhs edges on the bottom, in edge order.
ValidationReport verify_completion(const ReplacementSystem& rs,
                                   const CompletionRule& extra);

// Completion-rule file:
// {"name":...,"lhs":<graph>,"boundary":[...],"rhs":<graph>,
//  "derivation":[{"kind":"expand","edge":i} |
//                {"kind":"reduce","color":c,"glued":b,"edges":[...]}],
//  "conjugator":[<diagram>...]}.
std::string completion_to_json(const CompletionRule& extra);
CompletionRule completion_from_json(const std::string& text);

// Structured text rendering of a report, witness graphs inline.
std::string report_to_text(const ConfluenceReport& report);

}  // namespace strandlab
