#pragma once

// Built-in replacement systems: the Thompson family, the fractal
// rearrangement systems (Basilica, Rabbit, Vicsek, Bubble Bath, Airplane),
// the Houghton groups, the Q-groups, and a generic subshift constructor.
// Each entry records whether its reductions are expected to be confluent
// outright, only after its bundled completion rules, or not at all.

#include <map>
#include <string>
#include <vector>

#include "strandlab/replacement.hpp"
#include "strandlab/rewrite_types.hpp"

namespace strandlab {

enum class ExpectedConfluence { Confluent, NeedsCompletion, NotSupported };

struct CatalogSystem {
  std::string name;  // resolved name including parameters
  ReplacementSystem system;
  std::vector<CompletionRule> completions;
  ExpectedConfluence expected = ExpectedConfluence::Confluent;
};

struct CatalogEntry {
  std::string name;
  std::string parameters;  // human-readable schema, empty when none
};

std::vector<CatalogEntry> list_builtins();

// Constructs a built-in system.  Parameters (all integral) by name:
//   thompson_v: n >= 2 (arity), r >= 1 (base edges); defaults 2, 1
//   rabbit:     k >= 1 (loops); default 1 (the Basilica)
//   vicsek:     d >= 3 (degree of the crossing); default 4
//   houghton:   n >= 1 (rays); default 2
// Throws std::invalid_argument on unknown names or invalid parameters.
CatalogSystem builtin(const std::string& name,
                      const std::map<std::string, int>& params = {});

// Topological-full-group system of a subshift of finite type: one color per
// state; the rule of state c holds one edge per transition (c, d), colored
// d, as disjoint edges anchored at the rule's boundary; the base graph holds
// one disjoint edge per state.  Confluence is left to the checker.
CatalogSystem subshift_system(
    const std::vector<std::pair<std::string, std::string>>& transitions);

}  // namespace strandlab
