#include "strandlab/graph.hpp"

#include <algorithm>
#include <cassert>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace strandlab {

void ColoredGraph::add_vertex(const Symbol& v) {
  if (vertex_set_.insert(v).second) vertices_.push_back(v);
}

ColoredEdge ColoredGraph::add_edge(Symbol from, Symbol to, Color color,
                                   int index) {
  add_vertex(from);
  add_vertex(to);
  if (undirected_.count(color) && to < from) std::swap(from, to);
  if (index <= 0) {
    index = 1;
    for (const auto& e : edges_)
      if (e.from == from && e.to == to && e.color == color)
        index = std::max(index, e.index + 1);
  }
  ColoredEdge e{from, to, color, index};
  edges_.push_back(e);
  return e;
}

void ColoredGraph::set_undirected(const Color& c, bool undirected) {
  if (undirected) {
    undirected_.insert(c);
    for (auto& e : edges_)
      if (e.color == c && e.to < e.from) std::swap(e.from, e.to);
  } else {
    undirected_.erase(c);
  }
}

bool ColoredGraph::has_vertex(const Symbol& v) const {
  return vertex_set_.count(v) > 0;
}

int ColoredGraph::degree(const Symbol& v) const {
  int d = 0;
  for (const auto& e : edges_) {
    if (e.from == v) ++d;
    if (e.to == v) ++d;
  }
  return d;
}

std::vector<ColoredEdge> ColoredGraph::incident(const Symbol& v) const {
  std::vector<ColoredEdge> out;
  for (const auto& e : edges_)
    if (e.from == v || e.to == v) out.push_back(e);
  return out;
}

std::pair<Symbol, Symbol> ColoredGraph::oriented(const ColoredEdge& e) const {
  if (undirected_.count(e.color) && e.to < e.from) return {e.to, e.from};
  return {e.from, e.to};
}

std::vector<ColoredEdge> ColoredGraph::normalized_sorted_edges() const {
  std::vector<ColoredEdge> es = edges_;
  for (auto& e : es)
    if (undirected_.count(e.color) && e.to < e.from) std::swap(e.from, e.to);
  std::sort(es.begin(), es.end());
  return es;
}

bool operator==(const ColoredGraph& a, const ColoredGraph& b) {
  if (a.vertex_set_ != b.vertex_set_) return false;
  if (a.undirected_ != b.undirected_) return false;
  return a.normalized_sorted_edges() == b.normalized_sorted_edges();
}

bool operator<(const ColoredGraph& a, const ColoredGraph& b) {
  if (a.vertex_set_ != b.vertex_set_) return a.vertex_set_ < b.vertex_set_;
  if (a.undirected_ != b.undirected_) return a.undirected_ < b.undirected_;
  return a.normalized_sorted_edges() < b.normalized_sorted_edges();
}

ValidationReport validate_graph(const ColoredGraph& g, bool allow_isolated) {
  ValidationReport report;
  std::set<std::tuple<Symbol, Symbol, Color, int>> keys;
  std::map<std::tuple<Symbol, Symbol, Color>, std::set<int>> classes;
  for (const auto& e : g.edges()) {
    if (!g.has_vertex(e.from) || !g.has_vertex(e.to))
      report.issues.push_back({"dangling endpoint on edge " + e.from + "->" +
                               e.to + " (" + e.color + ")"});
    auto [f, t] = g.oriented(e);
    if (!keys.insert({f, t, e.color, e.index}).second)
      report.issues.push_back({"duplicate edge key " + f + "->" + t + " (" +
                               e.color + "," + std::to_string(e.index) + ")"});
    classes[{f, t, e.color}].insert(e.index);
  }
  for (const auto& [key, idxs] : classes) {
    int expect = 1;
    for (int i : idxs) {
      if (i != expect) {
        report.issues.push_back({"index gap in parallel class " +
                                 std::get<0>(key) + "->" + std::get<1>(key) +
                                 " (" + std::get<2>(key) + ")"});
        break;
      }
      ++expect;
    }
  }
  if (!allow_isolated) {
    for (const auto& v : g.vertices())
      if (g.degree(v) == 0)
        report.issues.push_back({"isolated vertex " + v});
  }
  return report;
}

namespace {

// Signature-refinement partitioning shared by canonical_form and
// isomorphisms.  Returns a class id per vertex; ids are ordered by the
// (isomorphism-invariant) class signatures so that they are comparable
// between different graphs.
struct Refiner {
  const ColoredGraph& g;
  std::vector<Symbol> verts;
  std::map<Symbol, int> pos;

  explicit Refiner(const ColoredGraph& graph) : g(graph), verts(g.vertices()) {
    for (int i = 0; i < (int)verts.size(); ++i) pos[verts[i]] = i;
  }

  // Fixed-width class ids so that string order equals numeric order; without
  // this the refinement relabeling can permute ids forever ("10" < "2").
  static std::string pad(int n) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06d", n);
    return buf;
  }

  // One incident-edge token: color, direction role, neighbor class.
  static std::string token(const Color& c, int role, int nbr_class) {
    return c + "|" + std::to_string(role) + "|" + pad(nbr_class);
  }

  // Refines `cls` (vertex position -> class id) once; returns new ids ordered
  // by signature.  `sig_out`, if given, receives the signature per vertex.
  std::vector<int> refine_step(const std::vector<int>& cls,
                               std::vector<std::string>* sig_out) const {
    std::vector<std::string> sigs(verts.size());
    for (int i = 0; i < (int)verts.size(); ++i) {
      std::vector<std::string> toks;
      for (const auto& e : g.edges()) {
        bool und = g.undirected_colors().count(e.color) > 0;
        if (e.from == verts[i])
          toks.push_back(token(e.color, und ? 2 : 0, cls[pos.at(e.to)]));
        if (e.to == verts[i])
          toks.push_back(token(e.color, und ? 2 : 1, cls[pos.at(e.from)]));
      }
      std::sort(toks.begin(), toks.end());
      std::string s = pad(cls[i]) + "#";
      for (const auto& t : toks) s += t + ";";
      sigs[i] = s;
    }
    std::vector<std::string> uniq = sigs;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<int> out(verts.size());
    for (int i = 0; i < (int)verts.size(); ++i)
      out[i] = (int)(std::lower_bound(uniq.begin(), uniq.end(), sigs[i]) -
                     uniq.begin());
    if (sig_out) *sig_out = sigs;
    return out;
  }

  std::vector<int> refine(std::vector<int> cls) const {
    for (;;) {
      auto next = refine_step(cls, nullptr);
      if (next == cls) return cls;
      cls = std::move(next);
    }
  }

  std::vector<int> initial() const {
    return refine(std::vector<int>(verts.size(), 0));
  }
};

// Encodes the graph under a total vertex order (vertex -> rank).  Parallel
// indices are renumbered 1..k per class in order of original index.
std::string encode_under(const ColoredGraph& g,
                         const std::map<Symbol, int>& rank) {
  struct Row {
    int from, to;
    Color color;
    int orig_index;
  };
  std::vector<Row> rows;
  for (const auto& e : g.edges()) {
    int f = rank.at(e.from), t = rank.at(e.to);
    if (g.undirected_colors().count(e.color) && t < f) std::swap(f, t);
    rows.push_back({f, t, e.color, e.index});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.from, a.to, a.color, a.orig_index) <
           std::tie(b.from, b.to, b.color, b.orig_index);
  });
  std::ostringstream os;
  os << g.vertices().size() << "|";
  std::map<std::tuple<int, int, Color>, int> next_index;
  for (const auto& r : rows) {
    int idx = ++next_index[{r.from, r.to, r.color}];
    os << r.from << ">" << r.to << ":" << r.color << ":" << idx << ";";
  }
  for (const auto& c : g.undirected_colors()) os << "u" << c << ";";
  return os.str();
}

}  // namespace

CanonicalForm canonical_form(const ColoredGraph& g) {
  Refiner ref(g);
  const auto& verts = ref.verts;
  if (verts.empty()) {
    CanonicalForm cf;
    cf.graph.set_undirected("", false);  // no-op; empty graph
    for (const auto& c : g.undirected_colors()) cf.graph.set_undirected(c);
    cf.encoding = encode_under(g, {});
    return cf;
  }

  std::optional<std::string> best;
  std::map<Symbol, int> best_rank;

  // Individualization-refinement search over discrete partitions; keeps the
  // lexicographically least encoding.
  std::function<void(const std::vector<int>&)> search =
      [&](const std::vector<int>& cls) {
        // Find the first non-singleton class (smallest class id).
        std::map<int, std::vector<int>> by_class;
        for (int i = 0; i < (int)verts.size(); ++i)
          by_class[cls[i]].push_back(i);
        int split_class = -1;
        for (const auto& [cid, members] : by_class)
          if (members.size() > 1) {
            split_class = cid;
            break;
          }
        if (split_class < 0) {
          // Discrete: class ids give a total order.
          std::map<Symbol, int> rank;
          for (int i = 0; i < (int)verts.size(); ++i) rank[verts[i]] = cls[i];
          std::string enc = encode_under(g, rank);
          if (!best || enc < *best) {
            best = enc;
            best_rank = rank;
          }
          return;
        }
        for (int i : by_class[split_class]) {
          // Individualize vertex i: give it a class just below its peers.
          std::vector<int> next(cls.size());
          for (int j = 0; j < (int)cls.size(); ++j)
            next[j] = cls[j] * 2 + (j == i ? 0 : 1);
          search(ref.refine(next));
        }
      };
  search(ref.initial());

  CanonicalForm cf;
  std::vector<Symbol> order(verts.size());
  for (const auto& [v, r] : best_rank) order[r] = v;
  for (int r = 0; r < (int)order.size(); ++r) {
    cf.renaming[order[r]] = "v" + std::to_string(r);
    cf.graph.add_vertex("v" + std::to_string(r));
  }
  for (const auto& c : g.undirected_colors()) cf.graph.set_undirected(c);
  // Insert edges in canonical order with renumbered indices.
  struct Row {
    int from, to;
    Color color;
    int orig_index;
  };
  std::vector<Row> rows;
  for (const auto& e : g.edges()) {
    int f = best_rank[e.from], t = best_rank[e.to];
    if (g.undirected_colors().count(e.color) && t < f) std::swap(f, t);
    rows.push_back({f, t, e.color, e.index});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.from, a.to, a.color, a.orig_index) <
           std::tie(b.from, b.to, b.color, b.orig_index);
  });
  for (const auto& r : rows)
    cf.graph.add_edge("v" + std::to_string(r.from), "v" + std::to_string(r.to),
                      r.color);
  cf.encoding = *best;
  return cf;
}

std::vector<GraphIsomorphism> isomorphisms(const ColoredGraph& g1,
                                           const ColoredGraph& g2) {
  std::vector<GraphIsomorphism> out;
  if (g1.vertices().size() != g2.vertices().size()) return out;
  if (g1.edges().size() != g2.edges().size()) return out;
  if (g1.undirected_colors() != g2.undirected_colors()) return out;

  Refiner r1(g1), r2(g2);
  std::vector<std::string> sig1, sig2;
  auto c1 = r1.initial();
  auto c2 = r2.initial();
  // Iterate to a stable signature string per vertex for pruning.
  r1.refine_step(c1, &sig1);
  r2.refine_step(c2, &sig2);
  {
    auto s1 = sig1, s2 = sig2;
    std::sort(s1.begin(), s1.end());
    std::sort(s2.begin(), s2.end());
    if (s1 != s2) return out;
  }

  const auto& v1 = r1.verts;
  const auto& v2 = r2.verts;
  std::vector<int> assign(v1.size(), -1);  // v1 pos -> v2 pos
  std::vector<bool> used(v2.size(), false);

  // Checks the edge structure for a complete vertex map and enumerates all
  // compatible parallel-edge matchings.
  auto emit_edge_maps = [&]() {
    std::map<Symbol, Symbol> vmap;
    for (int i = 0; i < (int)v1.size(); ++i) vmap[v1[i]] = v2[assign[i]];
    // Group edges by mapped class; match classes by size.
    using Key = std::tuple<Symbol, Symbol, Color>;
    std::map<Key, std::vector<int>> cls1, cls2;
    for (int i = 0; i < (int)g1.edges().size(); ++i) {
      const auto& e = g1.edges()[i];
      Symbol f = vmap[e.from], t = vmap[e.to];
      if (g2.undirected_colors().count(e.color) && t < f) std::swap(f, t);
      cls1[{f, t, e.color}].push_back(i);
    }
    for (int i = 0; i < (int)g2.edges().size(); ++i) {
      const auto& e = g2.edges()[i];
      auto [f, t] = g2.oriented(e);
      cls2[{f, t, e.color}].push_back(i);
    }
    if (cls1.size() != cls2.size()) return;
    for (const auto& [k, v] : cls1) {
      auto it = cls2.find(k);
      if (it == cls2.end() || it->second.size() != v.size()) return;
    }
    // Enumerate the product of per-class permutations.
    std::vector<std::pair<std::vector<int>, std::vector<int>>> classes;
    for (const auto& [k, v] : cls1) classes.push_back({v, cls2.at(k)});
    std::vector<int> edge_map(g1.edges().size(), -1);
    std::function<void(int)> go = [&](int ci) {
      if (ci == (int)classes.size()) {
        GraphIsomorphism iso;
        iso.vertex_map = vmap;
        iso.edge_map = edge_map;
        out.push_back(std::move(iso));
        return;
      }
      auto& [a, b] = classes[ci];
      std::vector<int> perm(b);
      std::sort(perm.begin(), perm.end());
      do {
        for (int i = 0; i < (int)a.size(); ++i) edge_map[a[i]] = perm[i];
        go(ci + 1);
      } while (std::next_permutation(perm.begin(), perm.end()));
    };
    go(0);
  };

  std::function<void(int)> place = [&](int i) {
    if (i == (int)v1.size()) {
      emit_edge_maps();
      return;
    }
    for (int j = 0; j < (int)v2.size(); ++j) {
      if (used[j] || sig1[i] != sig2[j]) continue;
      // Partial consistency: every edge between assigned vertices must map to
      // an edge class of equal size.
      assign[i] = j;
      used[j] = true;
      bool ok = true;
      for (const auto& e : g1.edges()) {
        auto pf = r1.pos.at(e.from), pt = r1.pos.at(e.to);
        if (assign[pf] < 0 || assign[pt] < 0) continue;
        Symbol f = v2[assign[pf]], t = v2[assign[pt]];
        if (g2.undirected_colors().count(e.color) && t < f) std::swap(f, t);
        int want = 0, have = 0;
        auto [of, ot] = g1.oriented(e);
        for (const auto& e1 : g1.edges()) {
          auto [a, b] = g1.oriented(e1);
          if (a == of && b == ot && e1.color == e.color) ++want;
        }
        for (const auto& e2 : g2.edges()) {
          auto [a, b] = g2.oriented(e2);
          if (a == f && b == t && e2.color == e.color) ++have;
        }
        if (want != have) {
          ok = false;
          break;
        }
      }
      if (ok) place(i + 1);
      assign[i] = -1;
      used[j] = false;
    }
  };
  place(0);
  return out;
}

std::string graph_to_json(const ColoredGraph& g) {
  nlohmann::json j;
  j["vertices"] = g.vertices();
  j["edges"] = nlohmann::json::array();
  for (const auto& e : g.edges()) {
    j["edges"].push_back({{"from", e.from},
                          {"to", e.to},
                          {"color", e.color},
                          {"index", e.index}});
  }
  j["undirected_colors"] = g.undirected_colors();
  return j.dump(2);
}

ColoredGraph graph_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ColoredGraph g;
  for (const auto& c : j.value("undirected_colors", std::vector<Color>{}))
    g.set_undirected(c);
  for (const auto& v : j.at("vertices")) g.add_vertex(v.get<Symbol>());
  for (const auto& e : j.at("edges"))
    g.add_edge(e.at("from").get<Symbol>(), e.at("to").get<Symbol>(),
               e.at("color").get<Color>(), e.value("index", 0));
  return g;
}

}  // namespace strandlab
