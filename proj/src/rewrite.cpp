#include "strandlab/rewrite.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "strandlab/strand.hpp"

namespace strandlab {
namespace {

using nlohmann::json;

// A reduction pattern: the graph to embed, which of its vertices are
// interior (may touch no host edge outside the image), and what to replace
// the image by.
struct Pattern {
  ColoredGraph graph;
  std::set<Symbol> interior;
  Color color;
  bool glued = false;
  int extra_index = -1;
};

Pattern basic_pattern(const ReplacementRule& rule, bool glued) {
  Pattern p;
  p.color = rule.color;
  p.glued = glued;
  for (const Symbol& v : rule.graph.vertices()) {
    Symbol u = (glued && v == rule.terminal) ? rule.initial : v;
    p.graph.add_vertex(u);
    if (v != rule.initial && v != rule.terminal) p.interior.insert(v);
  }
  for (const ColoredEdge& e : rule.graph.edges()) {
    Symbol f = (glued && e.from == rule.terminal) ? rule.initial : e.from;
    Symbol t = (glued && e.to == rule.terminal) ? rule.initial : e.to;
    p.graph.add_edge(f, t, e.color);
  }
  return p;
}

Pattern extra_pattern(const CompletionRule& extra, int index) {
  Pattern p;
  p.graph = extra.lhs;
  p.extra_index = index;
  std::set<Symbol> boundary(extra.boundary.begin(), extra.boundary.end());
  for (const Symbol& v : extra.lhs.vertices())
    if (!boundary.count(v)) p.interior.insert(v);
  return p;
}

std::vector<Pattern> all_patterns(const ReplacementSystem& rs,
                                  const std::vector<CompletionRule>& extras) {
  std::vector<Pattern> out;
  for (const auto& [c, rule] : rs.rules) {
    out.push_back(basic_pattern(rule, false));
    out.push_back(basic_pattern(rule, true));
  }
  for (int i = 0; i < (int)extras.size(); ++i)
    out.push_back(extra_pattern(extras[i], i));
  return out;
}

// Backtracking embedding search of a pattern into a host graph: injective on
// vertices and edges, color preserving, undirected colors matched up to
// endpoint swap, then the interior-closure condition.
void match_pattern(const ColoredGraph& g, const ReplacementSystem& rs,
                   const Pattern& p, std::vector<Redex>& out) {
  const auto& pedges = p.graph.edges();
  const auto& hedges = g.edges();
  std::map<Symbol, Symbol> vmap;
  std::map<Symbol, Symbol> vmap_inv;
  std::vector<int> chosen(pedges.size(), -1);
  std::vector<bool> used(hedges.size(), false);

  auto bind = [&](const Symbol& a, const Symbol& b,
                  std::vector<Symbol>& bound) -> bool {
    auto it = vmap.find(a);
    if (it != vmap.end()) return it->second == b;
    auto jt = vmap_inv.find(b);
    if (jt != vmap_inv.end()) return false;
    vmap[a] = b;
    vmap_inv[b] = a;
    bound.push_back(a);
    return true;
  };
  auto unbind = [&](const std::vector<Symbol>& bound) {
    for (const Symbol& a : bound) {
      vmap_inv.erase(vmap[a]);
      vmap.erase(a);
    }
  };

  std::function<void(size_t)> rec = [&](size_t i) {
    if (i == pedges.size()) {
      // Interior closure: every host edge incident to the image of an
      // interior vertex is one of the matched edges.
      std::set<int> matched(chosen.begin(), chosen.end());
      for (const Symbol& v : p.interior) {
        const Symbol& hv = vmap.at(v);
        for (int e = 0; e < (int)hedges.size(); ++e) {
          if ((hedges[e].from == hv || hedges[e].to == hv) &&
              !matched.count(e))
            return;
        }
      }
      Redex r;
      r.color = p.color;
      r.glued = p.glued;
      r.extra_index = p.extra_index;
      r.embedding = vmap;
      r.edge_ids = chosen;
      out.push_back(r);
      return;
    }
    const ColoredEdge& pe = pedges[i];
    bool swap_ok = rs.is_undirected(pe.color);
    for (int e = 0; e < (int)hedges.size(); ++e) {
      if (used[e] || hedges[e].color != pe.color) continue;
      for (int o = 0; o < (swap_ok ? 2 : 1); ++o) {
        Symbol hf = o == 0 ? hedges[e].from : hedges[e].to;
        Symbol ht = o == 0 ? hedges[e].to : hedges[e].from;
        if (o == 1 && hf == ht) continue;  // loop: both orientations equal
        std::vector<Symbol> bound;
        if (bind(pe.from, hf, bound) && bind(pe.to, ht, bound)) {
          used[e] = true;
          chosen[i] = e;
          rec(i + 1);
          used[e] = false;
          chosen[i] = -1;
        }
        unbind(bound);
      }
    }
  };
  rec(0);
}

std::string redex_key(const Redex& r, const ReplacementSystem& rs,
                      const std::vector<CompletionRule>& extras) {
  std::vector<int> ids = r.edge_ids;
  std::sort(ids.begin(), ids.end());
  std::ostringstream os;
  os << r.color << '|' << r.glued << '|' << r.extra_index << '|';
  for (int e : ids) os << e << ',';
  os << '|';
  // The boundary images pin the replacement; interior images are
  // interchangeable across pattern automorphisms.
  if (r.extra_index >= 0) {
    for (const Symbol& b : extras[r.extra_index].boundary)
      os << r.embedding.at(b) << ',';
  } else {
    const ReplacementRule& rule = rs.rule(r.color);
    Symbol a = r.embedding.at(rule.initial);
    if (r.glued) {
      os << a << ',';
    } else {
      Symbol b = r.embedding.at(rule.terminal);
      // Undirected colors: both orientations of the match rewrite alike.
      if (rs.is_undirected(r.color) && b < a) std::swap(a, b);
      os << a << ',' << b << ',';
    }
  }
  return os.str();
}

Symbol fresh_vertex(const ColoredGraph& g, const std::string& prefix,
                    long& counter) {
  for (;;) {
    Symbol s = prefix + std::to_string(counter++);
    if (!g.has_vertex(s)) return s;
  }
}

}  // namespace

std::vector<Redex> find_redexes(const ColoredGraph& g,
                                const ReplacementSystem& rs,
                                const std::vector<CompletionRule>& extras) {
  std::vector<Redex> raw;
  for (const Pattern& p : all_patterns(rs, extras)) match_pattern(g, rs, p, raw);
  std::vector<Redex> out;
  std::set<std::string> seen;
  for (Redex& r : raw)
    if (seen.insert(redex_key(r, rs, extras)).second) out.push_back(std::move(r));
  return out;
}

ColoredGraph apply_redex(const ColoredGraph& g, const Redex& r,
                         const ReplacementSystem& rs,
                         const std::vector<CompletionRule>& extras) {
  // Staleness check: the redex must be found again verbatim.
  std::string key = redex_key(r, rs, extras);
  bool live = false;
  for (const Redex& cand : find_redexes(g, rs, extras))
    if (redex_key(cand, rs, extras) == key) {
      live = true;
      break;
    }
  if (!live) throw std::invalid_argument("apply_redex: stale redex");

  std::set<int> matched(r.edge_ids.begin(), r.edge_ids.end());
  std::set<Symbol> deleted;
  if (r.extra_index >= 0) {
    std::set<Symbol> boundary(extras[r.extra_index].boundary.begin(),
                              extras[r.extra_index].boundary.end());
    for (const auto& [pv, hv] : r.embedding)
      if (!boundary.count(pv)) deleted.insert(hv);
  } else {
    const ReplacementRule& rule = rs.rule(r.color);
    for (const auto& [pv, hv] : r.embedding)
      if (pv != rule.initial && pv != rule.terminal) deleted.insert(hv);
  }

  ColoredGraph out;
  for (const Color& c : g.undirected_colors()) out.set_undirected(c);
  for (const Symbol& v : g.vertices())
    if (!deleted.count(v)) out.add_vertex(v);
  for (int e = 0; e < (int)g.edges().size(); ++e)
    if (!matched.count(e)) {
      const ColoredEdge& he = g.edges()[e];
      out.add_edge(he.from, he.to, he.color);
    }

  if (r.extra_index >= 0) {
    const CompletionRule& extra = extras[r.extra_index];
    std::set<Symbol> boundary(extra.boundary.begin(), extra.boundary.end());
    std::map<Symbol, Symbol> rmap;  // rhs vertex -> host vertex
    for (const Symbol& b : extra.boundary) rmap[b] = r.embedding.at(b);
    long counter = 0;
    for (const Symbol& v : extra.rhs.vertices())
      if (!rmap.count(v)) rmap[v] = fresh_vertex(out, "n", counter);
    for (const ColoredEdge& e : extra.rhs.edges())
      out.add_edge(rmap.at(e.from), rmap.at(e.to), e.color);
  } else {
    const ReplacementRule& rule = rs.rule(r.color);
    Symbol f = r.embedding.at(rule.initial);
    Symbol t = r.glued ? f : r.embedding.at(rule.terminal);
    out.add_edge(f, t, r.color);
  }
  return out;
}

std::vector<ColoredGraph> normal_forms(const ColoredGraph& g,
                                       const ReplacementSystem& rs,
                                       const std::vector<CompletionRule>&
                                           extras) {
  std::map<std::string, ColoredGraph> forms;
  std::set<std::string> visited;
  std::deque<ColoredGraph> work;
  work.push_back(g);
  visited.insert(canonical_form(g).encoding);
  while (!work.empty()) {
    ColoredGraph cur = std::move(work.front());
    work.pop_front();
    std::vector<Redex> rdx = find_redexes(cur, rs, extras);
    if (rdx.empty()) {
      CanonicalForm cf = canonical_form(cur);
      forms.emplace(cf.encoding, cf.graph);
      continue;
    }
    for (const Redex& r : rdx) {
      ColoredGraph next = apply_redex(cur, r, rs, extras);
      if (visited.insert(canonical_form(next).encoding).second)
        work.push_back(std::move(next));
    }
  }
  std::vector<ColoredGraph> out;
  for (auto& [enc, gr] : forms) out.push_back(std::move(gr));
  return out;
}

namespace {

// Gluings of two pattern copies sharing at least one edge.  Vertices of the
// copies are kept apart except where shared edges identify them; gluings
// that would merge two vertices of the same copy are skipped (they do not
// arise from two redexes in a common host).
struct Overlap {
  ColoredGraph graph;
};

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

void enumerate_overlaps(const Pattern& p1, const Pattern& p2,
                        const ReplacementSystem& rs,
                        std::map<std::string, ColoredGraph>& out) {
  const auto& e1 = p1.graph.edges();
  const auto& e2 = p2.graph.edges();
  const auto& v1 = p1.graph.vertices();
  const auto& v2 = p2.graph.vertices();
  std::map<Symbol, int> id1, id2;
  for (int i = 0; i < (int)v1.size(); ++i) id1[v1[i]] = i;
  for (int i = 0; i < (int)v2.size(); ++i) id2[v2[i]] = i + (int)v1.size();
  int n = (int)(v1.size() + v2.size());

  // match[i] = -1 (unshared) or index into e2, with an orientation flag.
  std::vector<int> match(e1.size(), -1);
  std::vector<bool> flip(e1.size(), false);
  std::vector<bool> used(e2.size(), false);

  auto emit = [&]() {
    UnionFind uf(n);
    for (int i = 0; i < (int)e1.size(); ++i) {
      if (match[i] < 0) continue;
      const ColoredEdge& a = e1[i];
      const ColoredEdge& b = e2[match[i]];
      Symbol bf = flip[i] ? b.to : b.from;
      Symbol bt = flip[i] ? b.from : b.to;
      uf.unite(id1[a.from], id2[bf]);
      uf.unite(id1[a.to], id2[bt]);
    }
    // Reject gluings identifying two vertices of one copy.
    std::map<int, int> owner;  // class -> copy-tagged vertex (-1 = conflict)
    for (int i = 0; i < n; ++i) {
      int c = uf.find(i);
      int copy = i < (int)v1.size() ? 0 : 1;
      auto it = owner.find(c * 2 + copy);
      if (it != owner.end() && it->second != -1 && it->second != i) return;
      owner[c * 2 + copy] = i;
    }
    // Class representative names.
    std::vector<Symbol> name(n);
    for (int i = 0; i < n; ++i) {
      Symbol base = i < (int)v1.size()
                        ? "a:" + v1[i]
                        : "b:" + v2[i - (int)v1.size()];
      int c = uf.find(i);
      if (name[c].empty() || base < name[c]) name[c] = base;
    }
    ColoredGraph g;
    for (const auto& [c, rule] : rs.rules)
      if (rs.is_undirected(c)) g.set_undirected(c);
    for (int i = 0; i < n; ++i) g.add_vertex(name[uf.find(i)]);
    for (int i = 0; i < (int)e1.size(); ++i)
      g.add_edge(name[uf.find(id1[e1[i].from])], name[uf.find(id1[e1[i].to])],
                 e1[i].color);
    for (int j = 0; j < (int)e2.size(); ++j)
      if (!used[j])
        g.add_edge(name[uf.find(id2[e2[j].from])],
                   name[uf.find(id2[e2[j].to])], e2[j].color);
    out.emplace(canonical_form(g).encoding, g);
  };

  std::function<void(size_t, int)> rec = [&](size_t i, int shared) {
    if (i == e1.size()) {
      if (shared > 0) emit();
      return;
    }
    rec(i + 1, shared);  // leave e1[i] unshared
    for (int j = 0; j < (int)e2.size(); ++j) {
      if (used[j] || e2[j].color != e1[i].color) continue;
      int orientations = rs.is_undirected(e1[i].color) ? 2 : 1;
      for (int o = 0; o < orientations; ++o) {
        used[j] = true;
        match[i] = j;
        flip[i] = o == 1;
        rec(i + 1, shared + 1);
        used[j] = false;
        match[i] = -1;
        flip[i] = false;
      }
    }
  };
  rec(0, 0);
}

// The bare overlap plus every variant with a single dangling context edge:
// the interior-closure condition reacts to extra incident edges, so each
// one-edge extension probes a distinct way a host can break a redex.  The
// context edge carries a reserved color so it can block a redex whose
// interior it touches but can never be consumed as pattern material itself
// (a divergence consuming context is a different overlap, enumerated in its
// own right).
std::vector<ColoredGraph> context_extensions(const ColoredGraph& g,
                                             const ReplacementSystem&) {
  std::vector<ColoredGraph> out;
  out.push_back(g);
  int k = 0;
  for (const Symbol& v : g.vertices()) {
    ColoredGraph h = g;
    Symbol fresh = "ctx" + std::to_string(k++);
    h.add_edge(v, fresh, "#context");
    out.push_back(std::move(h));
  }
  return out;
}

// --- Realizable vertex types -----------------------------------------------
//
// Overlap joinability only has to hold on graphs that can actually occur as
// base graphs of diagrams over the system, i.e. graphs reachable from the
// base graph by expansions and reductions.  We track, per vertex, the set of
// incident half-edge kinds (color + direction; undirected colors collapse
// both ends), and compute the reachable support sets by a fixpoint: seeds
// are the base-graph and rule-graph vertices, and each expansion or
// reduction rewrites the halves of the boundary vertex it touches.  A
// candidate overlap whose vertex supports fit under no reachable set cannot
// embed in any reachable graph and is skipped.  The abstraction ignores
// multiplicities, so it over-approximates reachability and never filters a
// realizable witness.

using HalfSet = std::set<std::string>;

std::string half(const ReplacementSystem& rs, const Color& c, bool out) {
  if (c == "#context") return "";
  if (rs.is_undirected(c)) return c + "~";
  return c + (out ? "+" : "-");
}

HalfSet vertex_support(const ColoredGraph& g, const Symbol& v,
                       const ReplacementSystem& rs) {
  HalfSet s;
  for (const ColoredEdge& e : g.edges()) {
    if (e.from == v) {
      std::string h = half(rs, e.color, true);
      if (!h.empty()) s.insert(h);
    }
    if (e.to == v) {
      std::string h = half(rs, e.color, false);
      if (!h.empty()) s.insert(h);
    }
  }
  return s;
}

std::set<HalfSet> reachable_supports(const ReplacementSystem& rs,
                                     const std::vector<CompletionRule>& extras) {
  std::set<HalfSet> reach;
  auto seed_graph = [&](const ColoredGraph& g) {
    for (const Symbol& v : g.vertices()) reach.insert(vertex_support(g, v, rs));
  };
  seed_graph(rs.base);
  for (const auto& [c, rule] : rs.rules) seed_graph(rule.graph);
  for (const CompletionRule& ex : extras) {
    seed_graph(ex.lhs);
    seed_graph(ex.rhs);
  }

  // (trigger halves, replacement halves) pairs: a vertex whose support
  // contains the trigger may gain the replacement, optionally shedding the
  // trigger (other incident edges of the same kinds may remain).
  std::vector<std::pair<HalfSet, HalfSet>> moves;
  for (const auto& [c, rule] : rs.rules) {
    HalfSet iota = vertex_support(rule.graph, rule.initial, rs);
    HalfSet tau = vertex_support(rule.graph, rule.terminal, rs);
    HalfSet eout = {half(rs, c, true)}, ein = {half(rs, c, false)};
    moves.push_back({eout, iota});  // expand an edge at its tail
    moves.push_back({ein, tau});    // expand an edge at its head
    moves.push_back({iota, eout});  // reduce a plain copy, iota end
    moves.push_back({tau, ein});    // reduce a plain copy, tau end
    HalfSet both = iota, loop = eout;  // reduce a glued copy
    both.insert(tau.begin(), tau.end());
    loop.insert(ein.begin(), ein.end());
    moves.push_back({both, loop});
  }
  for (const CompletionRule& ex : extras)
    for (const Symbol& b : ex.boundary)
      moves.push_back({vertex_support(ex.lhs, b, rs),
                       vertex_support(ex.rhs, b, rs)});

  // Fixpoint; bail out (returning "everything reachable") if the lattice is
  // too large to close, which only weakens the filter.
  std::deque<HalfSet> work(reach.begin(), reach.end());
  while (!work.empty()) {
    if (reach.size() > 4096) return {};
    HalfSet s = work.front();
    work.pop_front();
    for (const auto& [trigger, repl] : moves) {
      if (!std::includes(s.begin(), s.end(), trigger.begin(), trigger.end()))
        continue;
      HalfSet grown = s;
      grown.insert(repl.begin(), repl.end());
      HalfSet swapped = s;
      for (const std::string& h : trigger) swapped.erase(h);
      swapped.insert(repl.begin(), repl.end());
      if (reach.insert(grown).second) work.push_back(grown);
      if (reach.insert(swapped).second) work.push_back(swapped);
    }
  }
  return reach;
}

// Injective subgraph embedding, matching colors and direction (either
// orientation for undirected colors).
bool embeds_into(const ColoredGraph& sub, const ColoredGraph& host,
                 const ReplacementSystem& rs) {
  const auto& se = sub.edges();
  const auto& he = host.edges();
  if (se.size() > he.size()) return false;
  std::map<Symbol, Symbol> vmap, inv;
  std::vector<bool> used(he.size(), false);
  std::function<bool(size_t)> rec = [&](size_t i) -> bool {
    if (i == se.size()) return true;
    const ColoredEdge& a = se[i];
    for (size_t j = 0; j < he.size(); ++j) {
      if (used[j] || he[j].color != a.color) continue;
      int orients =
          rs.is_undirected(a.color) && he[j].from != he[j].to ? 2 : 1;
      for (int o = 0; o < orients; ++o) {
        Symbol hf = o ? he[j].to : he[j].from;
        Symbol ht = o ? he[j].from : he[j].to;
        std::vector<std::pair<Symbol, Symbol>> bound;
        auto bind = [&](const Symbol& x, const Symbol& y) {
          auto it = vmap.find(x);
          if (it != vmap.end()) return it->second == y;
          if (inv.count(y)) return false;
          vmap[x] = y;
          inv[y] = x;
          bound.push_back({x, y});
          return true;
        };
        if (bind(a.from, hf) && bind(a.to, ht)) {
          used[j] = true;
          if (rec(i + 1)) return true;
          used[j] = false;
        }
        for (auto& [x, y] : bound) {
          vmap.erase(x);
          inv.erase(y);
        }
      }
    }
    return false;
  };
  return rec(0);
}

// Graphs reachable from the base graph by expansions and reductions, up to
// isomorphism, capped by edge count and census size.  The overlap universe:
// a join obligation only arises on graphs a diagram over this system can
// actually present, and every such graph lies in this closure.
std::vector<ColoredGraph> reachable_graphs(
    const ReplacementSystem& rs, const std::vector<CompletionRule>& extras,
    size_t max_edges, size_t max_count, bool* capped) {
  *capped = false;
  std::vector<ColoredGraph> out;
  std::set<std::string> seen;
  std::deque<ColoredGraph> work;
  FreshSupply fresh("rx");
  auto push = [&](const ColoredGraph& g) {
    if (g.edges().size() > max_edges) return;
    if (!seen.insert(canonical_form(g).encoding).second) return;
    out.push_back(g);
    work.push_back(g);
  };
  push(rs.base);
  while (!work.empty()) {
    if (out.size() > max_count) {
      *capped = true;
      return out;
    }
    ColoredGraph g = work.front();
    work.pop_front();
    for (const ColoredEdge& e : g.edges()) push(expand_edge(g, e, rs, fresh));
    for (const Redex& r : find_redexes(g, rs, extras))
      push(apply_redex(g, r, rs, extras));
  }
  return out;
}

// Empty `reach` means the fixpoint was abandoned: accept everything.
bool supports_realizable(const ColoredGraph& g, const ReplacementSystem& rs,
                         const std::set<HalfSet>& reach) {
  if (reach.empty()) return true;
  for (const Symbol& v : g.vertices()) {
    HalfSet s = vertex_support(g, v, rs);
    bool ok = false;
    for (const HalfSet& r : reach)
      if (std::includes(r.begin(), r.end(), s.begin(), s.end())) {
        ok = true;
        break;
      }
    if (!ok) return false;
  }
  return true;
}

}  // namespace

ConfluenceReport check_confluence(const ReplacementSystem& rs,
                                  const std::vector<CompletionRule>& extras,
                                  int overlap_cap) {
  ConfluenceReport rep;
  std::vector<Pattern> pats = all_patterns(rs, extras);
  std::map<std::string, ColoredGraph> overlaps;
  for (size_t i = 0; i < pats.size(); ++i)
    for (size_t j = i; j < pats.size(); ++j)
      enumerate_overlaps(pats[i], pats[j], rs, overlaps);

  std::set<HalfSet> reach = reachable_supports(rs, extras);
  size_t kmax = 0, rmax = 0;
  for (const auto& [enc, g] : overlaps)
    kmax = std::max(kmax, g.edges().size());
  for (const auto& [c, rule] : rs.rules)
    rmax = std::max(rmax, rule.graph.edges().size());
  bool capped = false;
  std::vector<ColoredGraph> hosts =
      reachable_graphs(rs, extras, kmax + rmax, 20000, &capped);
  if (capped) {
    rep.verdict = ConfluenceReport::Verdict::Unknown;
    rep.note = "reachable-graph enumeration exceeded cap";
    return rep;
  }
  std::sort(hosts.begin(), hosts.end(),
            [](const ColoredGraph& a, const ColoredGraph& b) {
              return a.edges().size() < b.edges().size();
            });
  auto realizable = [&](const ColoredGraph& g) {
    if (!supports_realizable(g, rs, reach)) return false;
    for (const ColoredGraph& h : hosts)
      if (embeds_into(g, h, rs)) return true;
    return false;
  };
  std::set<std::string> seen;
  std::vector<ColoredGraph> candidates;
  for (const auto& [enc, g] : overlaps) {
    if (!realizable(g)) continue;
    for (ColoredGraph& ext : context_extensions(g, rs))
      if (seen.insert(canonical_form(ext).encoding).second)
        candidates.push_back(std::move(ext));
  }

  if ((int)candidates.size() > overlap_cap) {
    rep.verdict = ConfluenceReport::Verdict::Unknown;
    rep.overlaps_checked = (int)candidates.size();
    rep.note = "overlap enumeration exceeded cap";
    return rep;
  }
  for (const ColoredGraph& g : candidates) {
    ++rep.overlaps_checked;
    std::vector<ColoredGraph> nfs = normal_forms(g, rs, extras);
    if (nfs.size() >= 2) {
      rep.verdict = ConfluenceReport::Verdict::NotConfluent;
      rep.counterexample = g;
      rep.witness_normal_forms = nfs;
      rep.note = "overlap with multiple normal forms";
      return rep;
    }
  }
  rep.verdict = ConfluenceReport::Verdict::Confluent;
  rep.note = "all overlaps joinable";
  return rep;
}

ValidationReport verify_completion(const ReplacementSystem& rs,
                                   const CompletionRule& extra) {
  ValidationReport rep;
  auto fail = [&](const std::string& what) { rep.issues.push_back({what}); };

  for (const Symbol& b : extra.boundary) {
    if (!extra.lhs.has_vertex(b)) fail("boundary vertex missing from lhs: " + b);
    if (!extra.rhs.has_vertex(b)) fail("boundary vertex missing from rhs: " + b);
  }
  if (extra.rhs.edges().size() >= extra.lhs.edges().size())
    fail("rhs does not have strictly fewer edges than lhs");
  if (!rep.ok()) return rep;

  // Replay the derivation from lhs.
  ColoredGraph cur = extra.lhs;
  FreshSupply fresh("cx");
  for (const DerivationStep& step : extra.derivation) {
    if (step.kind == DerivationStep::Kind::Expand) {
      if (step.edge < 0 || step.edge >= (int)cur.edges().size()) {
        fail("derivation expand step: edge index out of range");
        return rep;
      }
      cur = expand_edge(cur, cur.edges()[step.edge], rs, fresh);
    } else {
      std::vector<int> want = step.image_edges;
      std::sort(want.begin(), want.end());
      bool applied = false;
      for (const Redex& r : find_redexes(cur, rs)) {
        if (r.color != step.color || r.glued != step.glued) continue;
        std::vector<int> ids = r.edge_ids;
        std::sort(ids.begin(), ids.end());
        if (ids != want) continue;
        cur = apply_redex(cur, r, rs);
        applied = true;
        break;
      }
      if (!applied) {
        fail("derivation reduce step does not match any redex");
        return rep;
      }
    }
  }

  // The replay must land on rhs via an isomorphism fixing the boundary.
  bool matched = false;
  for (const GraphIsomorphism& iso : isomorphisms(cur, extra.rhs)) {
    bool fixes = true;
    for (const Symbol& b : extra.boundary) {
      auto it = iso.vertex_map.find(b);
      if (it == iso.vertex_map.end() || it->second != b) {
        fixes = false;
        break;
      }
    }
    if (fixes) {
      matched = true;
      break;
    }
  }
  if (!matched) fail("derivation does not transform lhs into rhs");

  // Conjugator template: valid branching fragment, rhs edges across the top
  // and lhs edges across the bottom, in edge order.
  for (const StrandDiagram& t : extra.conjugator_template) {
    ValidationReport v = validate_r_branching(t, rs);
    for (const ValidationIssue& is : v.issues)
      fail("conjugator template: " + is.what);
    auto check_side = [&](const std::vector<int>& bnodes, bool top,
                          const ColoredGraph& side, const char* name) {
      if (bnodes.size() != side.edges().size()) {
        fail(std::string("conjugator template: boundary size differs from ") +
             name + " edge count");
        return;
      }
      for (size_t i = 0; i < bnodes.size(); ++i) {
        const StrandNode& nd = t.nodes[bnodes[i]];
        int sid = top ? nd.outs[0] : nd.ins[0];
        const Strand& s = t.strands[sid];
        const ColoredEdge& e = side.edges()[i];
        bool ok = s.color == e.color;
        if (ok) {
          if (rs.is_undirected(e.color))
            ok = (s.label.v == e.from && s.label.w == e.to) ||
                 (s.label.v == e.to && s.label.w == e.from);
          else
            ok = s.label.v == e.from && s.label.w == e.to;
        }
        if (!ok)
          fail(std::string("conjugator template: boundary strand ") +
               std::to_string(i) + " does not carry the " + name + " edge");
      }
    };
    check_side(t.sources, true, extra.rhs, "rhs");
    check_side(t.sinks, false, extra.lhs, "lhs");
  }
  return rep;
}

std::string completion_to_json(const CompletionRule& extra) {
  json j;
  j["name"] = extra.name;
  j["lhs"] = json::parse(graph_to_json(extra.lhs));
  j["boundary"] = extra.boundary;
  j["rhs"] = json::parse(graph_to_json(extra.rhs));
  j["derivation"] = json::array();
  for (const DerivationStep& s : extra.derivation) {
    json js;
    if (s.kind == DerivationStep::Kind::Expand) {
      js["kind"] = "expand";
      js["edge"] = s.edge;
    } else {
      js["kind"] = "reduce";
      js["color"] = s.color;
      js["glued"] = s.glued;
      js["edges"] = s.image_edges;
    }
    j["derivation"].push_back(js);
  }
  j["conjugator"] = json::array();
  for (const StrandDiagram& t : extra.conjugator_template)
    j["conjugator"].push_back(json::parse(diagram_to_json(t)));
  return j.dump(2);
}

CompletionRule completion_from_json(const std::string& text) {
  json j = json::parse(text);
  CompletionRule extra;
  extra.name = j.value("name", "");
  extra.lhs = graph_from_json(j.at("lhs").dump());
  extra.boundary = j.at("boundary").get<std::vector<Symbol>>();
  extra.rhs = graph_from_json(j.at("rhs").dump());
  for (const json& js : j.at("derivation")) {
    DerivationStep s;
    if (js.at("kind") == "expand") {
      s.kind = DerivationStep::Kind::Expand;
      s.edge = js.at("edge").get<int>();
    } else {
      s.kind = DerivationStep::Kind::Reduce;
      s.color = js.at("color").get<std::string>();
      s.glued = js.value("glued", false);
      s.image_edges = js.at("edges").get<std::vector<int>>();
    }
    extra.derivation.push_back(std::move(s));
  }
  for (const json& jt : j.value("conjugator", json::array()))
    extra.conjugator_template.push_back(diagram_from_json(jt.dump()));
  return extra;
}

std::string report_to_text(const ConfluenceReport& report) {
  std::ostringstream os;
  switch (report.verdict) {
    case ConfluenceReport::Verdict::Confluent:
      os << "confluent";
      break;
    case ConfluenceReport::Verdict::NotConfluent:
      os << "not confluent";
      break;
    case ConfluenceReport::Verdict::Unknown:
      os << "unknown";
      break;
  }
  os << " (" << report.overlaps_checked << " overlaps checked)";
  if (!report.note.empty()) os << ": " << report.note;
  os << "\n";
  if (report.verdict == ConfluenceReport::Verdict::NotConfluent) {
    os << "counterexample:\n" << graph_to_json(report.counterexample) << "\n";
    os << "normal forms:\n";
    for (const ColoredGraph& g : report.witness_normal_forms)
      os << graph_to_json(g) << "\n";
  }
  return os.str();
}

}  // namespace strandlab
