#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "strandlab/graph.hpp"

using namespace strandlab;

namespace {

ColoredGraph airplane_base() {
  ColoredGraph g;
  g.set_undirected("blue");
  g.add_edge("c", "b", "red");
  g.add_edge("b", "a", "blue");
  g.add_edge("b", "c", "red");
  g.add_edge("c", "d", "blue");
  return g;
}

ColoredGraph basilica_base() {
  ColoredGraph g;
  g.add_edge("l", "r", "black");
  g.add_edge("r", "l", "black");
  g.add_edge("l", "l", "black");
  g.add_edge("r", "r", "black");
  return g;
}

// Independent oracle: exhaustive vertex-bijection isomorphism test.
bool brute_force_isomorphic(const ColoredGraph& a, const ColoredGraph& b) {
  if (a.vertices().size() != b.vertices().size()) return false;
  if (a.edges().size() != b.edges().size()) return false;
  if (a.undirected_colors() != b.undirected_colors()) return false;
  std::vector<Symbol> va = a.vertices(), vb = b.vertices();
  std::sort(vb.begin(), vb.end());
  do {
    std::map<Symbol, Symbol> m;
    for (size_t i = 0; i < va.size(); ++i) m[va[i]] = vb[i];
    // Compare edge multisets (class sizes) under the map.
    std::multiset<std::tuple<Symbol, Symbol, Color>> ea, eb;
    for (const auto& e : a.edges()) {
      Symbol f = m[e.from], t = m[e.to];
      if (a.undirected_colors().count(e.color) && t < f) std::swap(f, t);
      ea.insert({f, t, e.color});
    }
    for (const auto& e : b.edges()) {
      auto [f, t] = b.oriented(e);
      eb.insert({f, t, e.color});
    }
    if (ea == eb) return true;
  } while (std::next_permutation(vb.begin(), vb.end()));
  return false;
}

ColoredGraph random_graph(std::mt19937& rng) {
  ColoredGraph g;
  std::uniform_int_distribution<int> nv(1, 5), ne(0, 5), col(0, 1);
  int n = nv(rng);
  std::vector<Symbol> vs;
  for (int i = 0; i < n; ++i) {
    vs.push_back("n" + std::to_string(i));
    g.add_vertex(vs.back());
  }
  int m = ne(rng);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int i = 0; i < m; ++i)
    g.add_edge(vs[pick(rng)], vs[pick(rng)], col(rng) ? "red" : "blue");
  return g;
}

ColoredGraph renamed(const ColoredGraph& g, std::mt19937& rng) {
  std::vector<Symbol> vs = g.vertices();
  std::vector<Symbol> target = vs;
  std::shuffle(target.begin(), target.end(), rng);
  std::map<Symbol, Symbol> m;
  for (size_t i = 0; i < vs.size(); ++i) m[vs[i]] = "r_" + target[i];
  ColoredGraph out;
  for (const auto& c : g.undirected_colors()) out.set_undirected(c);
  for (const auto& v : g.vertices()) out.add_vertex(m[v]);
  for (const auto& e : g.edges()) out.add_edge(m[e.from], m[e.to], e.color);
  return out;
}

}  // namespace

TEST_CASE("validate_graph basics") {
  CHECK(validate_graph(airplane_base()).ok());
  ColoredGraph empty;
  CHECK(validate_graph(empty).ok());
  CHECK(empty.vertices().empty());

  ColoredGraph gap;
  gap.add_edge("a", "b", "blue", 2);
  CHECK_FALSE(validate_graph(gap).ok());

  ColoredGraph iso;
  iso.add_vertex("lonely");
  CHECK_FALSE(validate_graph(iso).ok());
  CHECK(validate_graph(iso, /*allow_isolated=*/true).ok());

  ColoredGraph dup;
  dup.add_edge("a", "b", "blue", 1);
  dup.add_edge("a", "b", "blue", 1);
  CHECK_FALSE(validate_graph(dup).ok());
}

TEST_CASE("canonical_form renaming invariance and idempotence") {
  std::mt19937 rng(7);
  auto b = basilica_base();
  auto cf = canonical_form(b);
  for (int i = 0; i < 10; ++i) {
    auto r = renamed(b, rng);
    CHECK(canonical_form(r).encoding == cf.encoding);
  }
  // Idempotence.
  CHECK(canonical_form(cf.graph).encoding == cf.encoding);
  CHECK(canonical_form(canonical_form(cf.graph).graph).graph == cf.graph);
}

TEST_CASE("canonical_form distinguishes non-isomorphic graphs") {
  ColoredGraph a, b;
  a.add_edge("x", "y", "red");
  a.add_edge("y", "z", "red");
  b.add_edge("x", "y", "red");
  b.add_edge("x", "z", "red");
  CHECK(canonical_form(a).encoding != canonical_form(b).encoding);
}

TEST_CASE("airplane base is automorphic under mirror") {
  auto g = airplane_base();
  // Mirror: swap the two wings (a<->d) and the bigon vertices (b<->c).
  ColoredGraph m;
  m.set_undirected("blue");
  m.add_edge("b", "c", "red");
  m.add_edge("c", "d", "blue");
  m.add_edge("c", "b", "red");
  m.add_edge("b", "a", "blue");
  CHECK(brute_force_isomorphic(g, m));  // oracle
  CHECK(canonical_form(g).encoding == canonical_form(m).encoding);
}

TEST_CASE("isomorphisms counts") {
  ColoredGraph loop;
  loop.add_edge("v", "v", "red");
  CHECK(isomorphisms(loop, loop).size() == 1);

  ColoredGraph blue_loop;
  blue_loop.add_edge("v", "v", "blue");
  CHECK(isomorphisms(loop, blue_loop).empty());

  // Vicsek base: center with 4 outgoing spokes; automorphisms permute the
  // spokes freely.
  ColoredGraph vic;
  vic.add_edge("o", "e", "black");
  vic.add_edge("o", "w", "black");
  vic.add_edge("o", "n", "black");
  vic.add_edge("o", "s", "black");
  CHECK(isomorphisms(vic, vic).size() == 24);
}

TEST_CASE("isomorphisms enumerate parallel-edge matchings") {
  ColoredGraph par;
  par.add_edge("a", "b", "red");
  par.add_edge("a", "b", "red");
  // Identity on vertices x 2 index matchings.
  CHECK(isomorphisms(par, par).size() == 2);
}

TEST_CASE("canonical equality agrees with brute-force isomorphism") {
  std::mt19937 rng(20260826);
  std::vector<ColoredGraph> pool;
  for (int i = 0; i < 60; ++i) pool.push_back(random_graph(rng));
  // Renamed copies must collide; random pairs must agree with the oracle.
  for (const auto& g : pool) {
    auto r = renamed(g, rng);
    CHECK(canonical_form(g).encoding == canonical_form(r).encoding);
  }
  std::uniform_int_distribution<int> pick(0, (int)pool.size() - 1);
  for (int i = 0; i < 200; ++i) {
    const auto& a = pool[pick(rng)];
    const auto& b = pool[pick(rng)];
    bool canon_eq = canonical_form(a).encoding == canonical_form(b).encoding;
    bool brute = brute_force_isomorphic(a, b);
    CHECK(canon_eq == brute);
    CHECK((isomorphisms(a, b).size() > 0) == brute);
  }
}

TEST_CASE("json round trip") {
  auto g = airplane_base();
  auto back = graph_from_json(graph_to_json(g));
  CHECK(back == g);
  CHECK(canonical_form(back).encoding == canonical_form(g).encoding);
}
