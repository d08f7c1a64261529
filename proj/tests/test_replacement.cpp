#include "doctest.h"

#include <random>

#include "strandlab/replacement.hpp"

using namespace strandlab;

namespace {

// Hand-built systems used before the catalog module exists; the catalog tests
// cross-check their own builders against check_expanding and friends.

ReplacementSystem thompson_f_system() {
  ReplacementSystem rs;
  rs.base.add_edge("l", "r", "black");
  rs.base_edge_order = rs.base.edges();
  ReplacementRule rule;
  rule.color = "black";
  rule.graph.add_edge("i", "m", "black");
  rule.graph.add_edge("m", "t", "black");
  rule.initial = "i";
  rule.terminal = "t";
  rule.edge_order = rule.graph.edges();
  rs.rules["black"] = rule;
  return finalize_system(rs);
}

ReplacementSystem airplane_system() {
  ReplacementSystem rs;
  rs.base.add_edge("c", "b", "red");
  rs.base.add_edge("b", "a", "blue");
  rs.base.add_edge("b", "c", "red");
  rs.base.add_edge("c", "d", "blue");
  rs.base_edge_order = rs.base.edges();

  ReplacementRule red;
  red.color = "red";
  red.graph.add_edge("i", "x", "red");
  red.graph.add_edge("x", "y", "blue");
  red.graph.add_edge("x", "t", "red");
  red.initial = "i";
  red.terminal = "t";
  red.edge_order = red.graph.edges();
  rs.rules["red"] = red;

  ReplacementRule blue;
  blue.color = "blue";
  blue.graph.add_edge("x", "i", "blue");
  blue.graph.add_edge("x", "y", "red");
  blue.graph.add_edge("y", "t", "blue");
  blue.graph.add_edge("y", "x", "red");
  blue.initial = "i";
  blue.terminal = "t";
  blue.edge_order = blue.graph.edges();
  rs.rules["blue"] = blue;
  return finalize_system(rs);
}

ReplacementSystem basilica_system() {
  ReplacementSystem rs;
  rs.base.add_edge("l", "r", "black");
  rs.base.add_edge("r", "l", "black");
  rs.base.add_edge("l", "l", "black");
  rs.base.add_edge("r", "r", "black");
  rs.base_edge_order = rs.base.edges();
  ReplacementRule rule;
  rule.color = "black";
  rule.graph.add_edge("i", "m", "black");
  rule.graph.add_edge("m", "t", "black");
  rule.graph.add_edge("m", "m", "black");
  rule.initial = "i";
  rule.terminal = "t";
  rule.edge_order = rule.graph.edges();
  rs.rules["black"] = rule;
  return finalize_system(rs);
}

}  // namespace

TEST_CASE("check_expanding accepts F and airplane") {
  CHECK(validate_system(thompson_f_system()).ok());
  CHECK(check_expanding(thompson_f_system()).ok());
  CHECK(validate_system(airplane_system()).ok());
  CHECK(check_expanding(airplane_system()).ok());
}

TEST_CASE("check_expanding rejects a single-edge rule") {
  ReplacementSystem rs;
  rs.base.add_edge("l", "r", "black");
  rs.base_edge_order = rs.base.edges();
  ReplacementRule rule;
  rule.color = "black";
  rule.graph.add_edge("i", "t", "black");
  rule.initial = "i";
  rule.terminal = "t";
  rule.edge_order = rule.graph.edges();
  rs.rules["black"] = rule;
  auto report = check_expanding(rs);
  CHECK_FALSE(report.ok());
  // Fails both the iota-tau clause and the size clause.
  CHECK(report.violations.size() >= 2);
}

TEST_CASE("expand_edge on the airplane top red edge") {
  auto rs = airplane_system();
  // The top edge T = (c,b,red).
  ColoredEdge t{"c", "b", "red", 1};
  FreshSupply fresh("n");
  auto g = expand_edge(rs.base, t, rs, fresh);
  CHECK(g.edges().size() == 6);
  CHECK(validate_graph(g).ok());

  // Expected graph transcribed by hand: T is replaced by a red path c->m->b
  // with a blue edge hanging off m.
  ColoredGraph expect;
  expect.set_undirected("blue");
  expect.add_edge("b", "a", "blue");
  expect.add_edge("b", "c", "red");
  expect.add_edge("c", "d", "blue");
  expect.add_edge("c", "m", "red");
  expect.add_edge("m", "u", "blue");
  expect.add_edge("m", "b", "red");
  CHECK(canonical_form(g).encoding == canonical_form(expect).encoding);
}

TEST_CASE("expand_edge is invariant under the fresh supply") {
  auto rs = airplane_system();
  ColoredEdge t{"c", "b", "red", 1};
  FreshSupply f1("p"), f2("q");
  auto a = expand_edge(rs.base, t, rs, f1);
  auto b = expand_edge(rs.base, t, rs, f2);
  CHECK(canonical_form(a).encoding == canonical_form(b).encoding);
}

TEST_CASE("expand F base edge twice gives a 3-edge path") {
  auto rs = thompson_f_system();
  FreshSupply fresh("m");
  auto g1 = expand_edge(rs.base, rs.base.edges()[0], rs, fresh);
  // Expand the leftmost child (the edge out of "l").
  ColoredEdge leftmost;
  for (const auto& e : g1.edges())
    if (e.from == "l") leftmost = e;
  auto g2 = expand_edge(g1, leftmost, rs, fresh);
  ColoredGraph expect;
  expect.add_edge("a", "b", "black");
  expect.add_edge("b", "c", "black");
  expect.add_edge("c", "d", "black");
  CHECK(canonical_form(g2).encoding == canonical_form(expect).encoding);
}

TEST_CASE("expand_edge commutes with renaming") {
  auto rs = basilica_system();
  std::mt19937 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    // Random expansion sequence on the base graph vs the same sequence on a
    // renamed copy.
    FreshSupply fa("a"), fb("b");
    ColoredGraph g = rs.base;
    std::map<Symbol, Symbol> ren{{"l", "L_"}, {"r", "R_"}};
    ColoredGraph h;
    for (const auto& e : g.edges())
      h.add_edge(ren[e.from], ren[e.to], e.color, e.index);
    for (int step = 0; step < 4; ++step) {
      std::uniform_int_distribution<int> pick(0, (int)g.edges().size() - 1);
      int k = pick(rng);
      ColoredEdge eg = g.edges()[k];
      // The renamed graph has the same edge list order by construction.
      ColoredEdge eh = h.edges()[k];
      g = expand_edge(g, eg, rs, fa);
      auto keep = h.edges()[k];
      h = expand_edge(h, eh, rs, fb);
      (void)keep;
      REQUIRE(canonical_form(g).encoding == canonical_form(h).encoding);
    }
  }
}

TEST_CASE("undirected color detection") {
  auto air = airplane_system();
  CHECK(air.is_undirected("blue"));
  CHECK_FALSE(air.is_undirected("red"));
  // The chosen swap automorphism exchanges iota and tau.
  const auto& swap = air.undirected_swaps.at("blue");
  CHECK(swap.vertex_map.at("i") == "t");
  CHECK(swap.vertex_map.at("t") == "i");

  CHECK_FALSE(thompson_f_system().is_undirected("black"));
  CHECK_FALSE(basilica_system().is_undirected("black"));
}

TEST_CASE("expansion grows the edge count") {
  auto rs = basilica_system();
  FreshSupply fresh;
  auto g = expand_edge(rs.base, rs.base.edges()[2], rs, fresh);
  CHECK(g.edges().size() == rs.base.edges().size() + 2);
}

TEST_CASE("system json round trip") {
  for (const auto& rs :
       {thompson_f_system(), airplane_system(), basilica_system()}) {
    auto back = system_from_json(system_to_json(rs));
    CHECK(back.base == rs.base);
    CHECK(back.base_edge_order == rs.base_edge_order);
    CHECK(back.rules.size() == rs.rules.size());
    for (const auto& [c, rule] : rs.rules) {
      CHECK(back.rules.at(c).graph == rule.graph);
      CHECK(back.rules.at(c).edge_order == rule.edge_order);
      CHECK(back.rules.at(c).initial == rule.initial);
      CHECK(back.rules.at(c).terminal == rule.terminal);
    }
    CHECK(back.undirected_swaps.size() == rs.undirected_swaps.size());
  }
}
