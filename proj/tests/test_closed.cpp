#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "strandlab/closed.hpp"

using namespace strandlab;

namespace {

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

// Interval-style system: one directed color, an edge splits in two.
ReplacementSystem interval_rule(ColoredGraph base) {
  ReplacementSystem rs;
  rs.base = std::move(base);
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

ReplacementSystem f_system() {
  ColoredGraph base;
  base.add_edge("p", "q", "black");
  return interval_rule(std::move(base));
}

// Base matching the boundary of the worked stable/vanishing element.
ReplacementSystem f4_system() {
  ColoredGraph base;
  base.add_edge("a", "b", "black");
  base.add_edge("c", "d", "black");
  base.add_edge("e", "x0", "black");
  base.add_edge("x0", "f", "black");
  return interval_rule(std::move(base));
}

Branch leaf(const Color& c, Symbol v, Symbol w, Symbol z = "1") {
  return Branch{c, {std::move(v), std::move(w), std::move(z)}, {}};
}

// The worked periodic element: swaps the first two strands and carries a
// split/merge pair across the last two.
StrandDiagram z_element(const ReplacementSystem& rs) {
  Forest dom;
  dom.roots = {leaf("black", "a", "b"), leaf("black", "c", "d"),
               leaf("black", "e", "x0"), leaf("black", "x0", "f")};
  dom.roots[2].children = {leaf("black", "e", "x1"),
                           leaf("black", "x1", "x0")};
  Forest ran;
  ran.roots = {leaf("black", "c", "d"), leaf("black", "a", "b"),
               leaf("black", "e", "x1"), leaf("black", "x1", "f")};
  ran.roots[3].children = {leaf("black", "x1", "x0"),
                           leaf("black", "x0", "f")};
  return from_forest_pair(make_pair(dom, ran, rs), rs);
}

struct Build {
  StrandDiagram sd;
  int node(NodeKind k) {
    sd.nodes.push_back({k, {}, {}});
    return (int)sd.nodes.size() - 1;
  }
  int src() {
    int n = node(NodeKind::Source);
    sd.sources.push_back(n);
    return n;
  }
  int snk() {
    int n = node(NodeKind::Sink);
    sd.sinks.push_back(n);
    return n;
  }
  int strand(int a, int b, const Color& c, const BranchLabel& l) {
    sd.strands.push_back({a, b, c, l});
    int s = (int)sd.strands.size() - 1;
    sd.nodes[a].outs.push_back(s);
    sd.nodes[b].ins.push_back(s);
    return s;
  }
};

int find_node(const StrandDiagram& sd, NodeKind k) {
  for (int n = 0; n < (int)sd.nodes.size(); ++n)
    if (sd.nodes[n].kind == k) return n;
  return -1;
}

// Two parallel through-strands forming a single loop that instantiates the
// rule: one type 3 redex of winding 1.
ClosedDiagram double_loop(const ReplacementSystem& rs) {
  Build b;
  int s0 = b.src(), s1 = b.src();
  int k0 = b.snk(), k1 = b.snk();
  b.strand(s0, k0, "black", {"u", "v", "0"});
  b.strand(s1, k1, "black", {"v", "w", "1"});
  return close_diagram(b.sd, rs);
}

// A merge whose image through the base line feeds a split: reduces by the
// fused type 2 surgery, then a winding 2 type 3.
ClosedDiagram fused_example(const ReplacementSystem& rs) {
  Build b;
  int s0 = b.src(), s1 = b.src(), s2 = b.src();
  int k0 = b.snk(), k1 = b.snk(), k2 = b.snk();
  int sp = b.node(NodeKind::Split), m = b.node(NodeKind::Merge);
  b.strand(s0, sp, "black", {"e", "x0", "0"});
  b.strand(sp, k1, "black", {"e", "x1", "0"});
  b.strand(sp, k2, "black", {"x1", "x0", "1"});
  b.strand(s1, m, "black", {"p", "q", "0"});
  b.strand(s2, m, "black", {"q", "r", "1"});
  b.strand(m, k0, "black", {"p", "r", "0"});
  return close_diagram(b.sd, rs);
}

// Both a shiftable type 1 site and a one-crossing type 2 arc are present;
// either schedule must reach the same two-crossing free loop.
ClosedDiagram braided_example(const ReplacementSystem& rs) {
  Build b;
  int s0 = b.src(), s1 = b.src(), s2 = b.src();
  int k0 = b.snk(), k1 = b.snk(), k2 = b.snk();
  int sp = b.node(NodeKind::Split), m = b.node(NodeKind::Merge);
  b.strand(s0, sp, "black", {"e", "x0", "0"});
  b.strand(sp, k1, "black", {"e", "x1", "0"});
  b.strand(sp, k2, "black", {"x1", "x0", "1"});
  b.strand(s1, m, "black", {"e2", "x12", "0"});
  b.strand(s2, m, "black", {"x12", "x02", "1"});
  b.strand(m, k0, "black", {"e2", "x02", "0"});
  return close_diagram(b.sd, rs);
}

// Basilica analogue of the braided example: the split's three-strand family
// crosses the base line into a merge, and the merge's image feeds the split.
ClosedDiagram basilica_braided(const ReplacementSystem& rs) {
  Build b;
  for (int i = 0; i < 4; ++i) b.src();
  for (int i = 0; i < 4; ++i) b.snk();
  int sp = b.node(NodeKind::Split), m = b.node(NodeKind::Merge);
  b.strand(b.sd.sources[0], sp, "black", {"l", "r", "0"});
  b.strand(sp, b.sd.sinks[1], "black", {"l", "m", "0"});
  b.strand(sp, b.sd.sinks[2], "black", {"m", "r", "1"});
  b.strand(sp, b.sd.sinks[3], "black", {"m", "m", "2"});
  b.strand(b.sd.sources[1], m, "black", {"l2", "m2", "0"});
  b.strand(b.sd.sources[2], m, "black", {"m2", "r2", "1"});
  b.strand(b.sd.sources[3], m, "black", {"m2", "m2", "2"});
  b.strand(m, b.sd.sinks[0], "black", {"l2", "r2", "0"});
  return close_diagram(b.sd, rs);
}

ClosedDiagram loop_crossing(const ReplacementSystem& rs, int times) {
  Build b;
  for (int i = 0; i < times; ++i) {
    b.src();
    b.snk();
  }
  // One strand per base point, each advancing one position.
  for (int i = 0; i < times; ++i)
    b.strand(b.sd.sources[i], b.sd.sinks[(i + 1) % times], "black",
             {"v" + std::to_string(i), "v" + std::to_string((i + 1) % times),
              "0"});
  return close_diagram(b.sd, rs);
}

}  // namespace

TEST_CASE("identity diagrams close, validate and round-trip through json") {
  for (const auto& rs : {airplane_system(), basilica_system()}) {
    auto id = identity_diagram(rs);
    auto cd = close_diagram(id, rs);
    CHECK(cd.base_points() == (int)id.sources.size());
    CHECK(validate_closed(cd, rs).ok());
    CHECK(strand_encoding(open_diagram(cd), rs) == strand_encoding(id, rs));
    auto back = closed_from_json(closed_to_json(cd), rs);
    CHECK(closed_encoding(back, rs) == closed_encoding(cd, rs));
    CHECK(closed_to_dot(cd).find("dashed") != std::string::npos);
  }
}

TEST_CASE("closing requires matching boundaries") {
  auto rs = f_system();
  Build b;
  int s0 = b.src(), k0 = b.snk(), k1 = b.snk();
  int s1 = b.src();
  int sp = b.node(NodeKind::Split);
  b.strand(s0, sp, "black", {"p", "q", "0"});
  b.strand(sp, k0, "black", {"p", "m", "0"});
  b.strand(sp, k1, "black", {"m", "q", "1"});
  b.strand(s1, b.snk(), "black", {"r", "s", "0"});
  // 2 sources vs 3 sinks: no positional binding exists.
  CHECK_THROWS_AS(close_diagram(b.sd, rs), std::invalid_argument);
}

TEST_CASE("stable and vanishing symbols of the worked periodic element") {
  auto rs = f4_system();
  auto z = z_element(rs);
  REQUIRE(validate_r_branching(z, rs).ok());
  auto dyn = symbol_dynamics(z, rs);
  CHECK(dyn.stable == std::set<Symbol>{"a", "b", "c", "d", "e", "f"});
  CHECK(dyn.vanishing == std::set<Symbol>{"x0", "x1"});
  CHECK(dyn.mu.at("a") == "c");
  CHECK(dyn.mu.at("c") == "a");
  CHECK(dyn.mu.at("b") == "d");
  CHECK(dyn.mu.at("d") == "b");
  CHECK(dyn.mu.at("e") == "e");
  CHECK(dyn.mu.at("f") == "f");
  // The swapped pair of strands and the split/merge chain share no symbols,
  // so the closure falls into two components: (a c)(b d) of order 2 on one,
  // e and f fixed on the other.
  REQUIRE(dyn.components.size() == 2);
  for (size_t c = 0; c < dyn.components.size(); ++c)
    CHECK(dyn.component_order[c] == (dyn.components[c].count("a") ? 2 : 1));
  // Applying a period relabels bijectively, so encodings never change.
  for (int p : {0, 1}) {
    auto moved = apply_period(z, dyn, {p, p}, rs);
    CHECK(strand_encoding(moved, rs) == strand_encoding(z, rs));
  }
  CHECK_THROWS_AS(apply_period(z, dyn, {0}, rs), std::invalid_argument);
}

TEST_CASE("shifts move the base line and replay as conjugations") {
  auto rs = f4_system();
  auto cd = close_diagram(z_element(rs), rs);
  REQUIRE(validate_closed(cd, rs).ok());
  CHECK(is_reduced_closed(cd, rs));
  int sp = find_node(cd.open, NodeKind::Split);
  int m = find_node(cd.open, NodeKind::Merge);

  SUBCASE("expanding past the split and back") {
    auto [cd2, step] = shift(cd, sp, ShiftDirection::Expanding, rs);
    CHECK(cd2.base_points() == 5);
    CHECK(validate_closed(cd2, rs).ok());
    CHECK(replay_steps(cd.open, {step}, cd2.open, rs).has_value());
    auto [cd3, step2] = shift(cd2, step.moved_node, ShiftDirection::Reducing,
                              rs);
    CHECK(cd3.base_points() == 4);
    CHECK(closed_encoding(cd3, rs) == closed_encoding(cd, rs));
    CHECK(replay_steps(cd.open, {step, step2}, cd3.open, rs).has_value());
  }
  SUBCASE("expanding past the merge and back") {
    auto [cd2, step] = shift(cd, m, ShiftDirection::Expanding, rs);
    CHECK(cd2.base_points() == 5);
    CHECK(validate_closed(cd2, rs).ok());
    CHECK(replay_steps(cd.open, {step}, cd2.open, rs).has_value());
    auto [cd3, step2] = shift(cd2, step.moved_node, ShiftDirection::Reducing,
                              rs);
    CHECK(closed_encoding(cd3, rs) == closed_encoding(cd, rs));
    CHECK(replay_steps(cd.open, {step, step2}, cd3.open, rs).has_value());
  }
  SUBCASE("inapplicable shifts are rejected") {
    // The merge is fed by the split, not by sources: cannot reduce past it.
    CHECK_THROWS_AS(shift(cd, m, ShiftDirection::Reducing, rs),
                    std::invalid_argument);
    CHECK_THROWS_AS(shift(cd, cd.open.sources[0], ShiftDirection::Expanding,
                          rs),
                    std::invalid_argument);
  }
}

TEST_CASE("permuting base points replays as a conjugation") {
  auto rs = f4_system();
  auto cd = close_diagram(z_element(rs), rs);
  std::vector<int> perm{1, 0, 2, 3};
  auto [cd2, step] = permute(cd, perm, rs);
  CHECK(validate_closed(cd2, rs).ok());
  CHECK(replay_steps(cd.open, {step}, cd2.open, rs).has_value());
  auto [cd3, step2] = permute(cd2, perm, rs);
  CHECK(closed_encoding(cd3, rs) == closed_encoding(cd, rs));
  CHECK(replay_steps(cd.open, {step, step2}, cd3.open, rs).has_value());
}

TEST_CASE("the erased graph of the worked element") {
  auto rs = f4_system();
  auto cd = close_diagram(z_element(rs), rs);
  auto g = erase_base_line(cd);
  CHECK(g.vertex_count == 2);
  REQUIRE(g.arcs.size() == 4);
  int self = 0, between = 0, loops = 0;
  for (const auto& a : g.arcs) {
    if (a.from < 0) {
      ++loops;
      CHECK(a.crossings.size() == 2);
    } else if (a.from == a.to) {
      ++self;
      CHECK(a.crossings.size() == 1);
    } else {
      ++between;
      CHECK(a.crossings.empty());
    }
  }
  CHECK(self == 2);
  CHECK(between == 1);
  CHECK(loops == 1);
}

TEST_CASE("free loops crossing the base line differently are distinguished") {
  auto rs = f_system();
  auto one = loop_crossing(rs, 1);
  auto two = loop_crossing(rs, 2);
  auto g1 = erase_base_line(one), g2 = erase_base_line(two);
  CHECK(g1.arcs.size() == 1);
  CHECK(g2.arcs.size() == 1);
  CHECK_FALSE(cohomologous(baseline_cochain(g1), BaseCochain{{2}}, g1));
  CHECK(cohomologous(baseline_cochain(g1), BaseCochain{{1}}, g1));
  CHECK_FALSE(similar(one, two, rs).has_value());
  CHECK(similar(one, one, rs).has_value());
}

TEST_CASE("random shifts change the cochain by one vertex coboundary") {
  std::mt19937 rng(411);
  int performed = 0;
  auto f4 = f4_system();
  auto f = f_system();
  auto bas = basilica_system();
  std::vector<std::pair<ReplacementSystem, ClosedDiagram>> seeds{
      {f4, close_diagram(z_element(f4), f4)},
      {f, braided_example(f)},
      {bas, basilica_braided(bas)}};
  for (const auto& [rs, seed] : seeds) {
    ClosedDiagram cd = seed;
    for (int hop = 0; hop < 20; ++hop) {
      auto g = erase_base_line(cd);
      // Collect candidate (node, direction) pairs in random order.
      std::vector<std::pair<int, ShiftDirection>> cands;
      for (int n = 0; n < (int)cd.open.nodes.size(); ++n) {
        NodeKind k = cd.open.nodes[n].kind;
        if (k != NodeKind::Split && k != NodeKind::Merge) continue;
        cands.push_back({n, ShiftDirection::Expanding});
        cands.push_back({n, ShiftDirection::Reducing});
      }
      std::shuffle(cands.begin(), cands.end(), rng);
      bool done = false;
      for (auto [node, dir] : cands) {
        ClosedDiagram next;
        TransformationStep step;
        try {
          std::tie(next, step) = shift(cd, node, dir, rs);
        } catch (const std::exception&) {
          continue;
        }
        ++performed;
        REQUIRE(validate_closed(next, rs).ok());
        REQUIRE(replay_steps(cd.open, {step}, next.open, rs).has_value());
        // Per-arc crossing change must equal the coboundary at the node.
        auto g2 = erase_base_line(next);
        NodeKind k = cd.open.nodes[node].kind;
        bool plus = (k == NodeKind::Split) == (dir ==
                                               ShiftDirection::Expanding);
        int ve = g.node_vertex[node];
        std::multiset<std::pair<Color, int>> lb, la;
        for (const auto& a : g.arcs)
          if (a.from < 0) lb.insert({a.color, (int)a.crossings.size()});
        for (const auto& a : g2.arcs)
          if (a.from < 0) la.insert({a.color, (int)a.crossings.size()});
        CHECK(lb == la);
        for (const auto& a : g.arcs) {
          if (a.from < 0) continue;
          int nu = g.vertex_node[a.from];
          int nu2 = nu == node ? step.moved_node : step.node_map[nu];
          REQUIRE(nu2 >= 0);
          int v2 = g2.node_vertex[nu2];
          int found = -1;
          for (int b = 0; b < (int)g2.arcs.size(); ++b)
            if (g2.arcs[b].from == v2 &&
                g2.arcs[b].from_slot == a.from_slot) {
              found = b;
              break;
            }
          REQUIRE(found >= 0);
          int delta = (int)g2.arcs[found].crossings.size() -
                      (int)a.crossings.size();
          int expect = (a.from == ve ? 1 : 0) - (a.to == ve ? 1 : 0);
          CHECK(delta == (plus ? expect : -expect));
        }
        cd = std::move(next);
        done = true;
        break;
      }
      if (!done) break;
    }
  }
  CHECK(performed >= 40);
}

TEST_CASE("a looping rule family collapses by a type 3 reduction") {
  auto rs = f_system();
  auto cd = double_loop(rs);
  REQUIRE(validate_closed(cd, rs).ok());
  auto redexes = find_type3(cd, rs);
  REQUIRE(redexes.size() == 1);
  CHECK(redexes[0].winding == 1);
  CHECK_FALSE(redexes[0].glued);
  CHECK(redexes[0].deleted == std::vector<Symbol>{"v"});
  auto [red, trace] = reduce_closed(cd, rs);
  CHECK(red.base_points() == 1);
  CHECK(is_reduced_closed(red, rs));
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].kind == StepKind::Red3);
  CHECK(replay_steps(cd.open, trace, red.open, rs).has_value());
}

TEST_CASE("fused type 2 reduction across the base line, then winding 2") {
  auto rs = f_system();
  auto cd = fused_example(rs);
  REQUIRE(validate_closed(cd, rs).ok());
  CHECK_FALSE(is_reduced_closed(cd, rs));
  auto [red, trace] = reduce_closed(cd, rs);
  CHECK(red.base_points() == 2);
  CHECK(is_reduced_closed(red, rs));
  CHECK(replay_steps(cd.open, trace, red.open, rs).has_value());
  bool saw2 = false, saw3 = false;
  for (const auto& st : trace) {
    saw2 = saw2 || st.kind == StepKind::Red2;
    saw3 = saw3 || st.kind == StepKind::Red3;
  }
  CHECK(saw2);
  CHECK(saw3);
}

TEST_CASE("closed reduction is schedule independent") {
  auto rs = f_system();
  for (auto make : {fused_example, braided_example}) {
    auto cd = make(rs);
    auto [base_red, base_trace] = reduce_closed(cd, rs);
    CHECK(replay_steps(cd.open, base_trace, base_red.open, rs).has_value());
    for (unsigned seed = 1; seed <= 10; ++seed) {
      std::mt19937 rng(seed);
      auto [red, trace] = reduce_closed(cd, rs, {}, &rng);
      CHECK(closed_encoding(red, rs) == closed_encoding(base_red, rs));
      CHECK(replay_steps(cd.open, trace, red.open, rs).has_value());
    }
  }
}

TEST_CASE("shifted and permuted closures are similar, with verified witness") {
  auto rs = f4_system();
  auto cd = close_diagram(z_element(rs), rs);
  int sp = find_node(cd.open, NodeKind::Split);
  auto [shifted, _] = shift(cd, sp, ShiftDirection::Expanding, rs);
  auto [permuted, _p] = permute(cd, {3, 2, 0, 1}, rs);

  for (const auto& other : {shifted, permuted}) {
    auto w = similar(cd, other, rs);
    REQUIRE(w.has_value());
    ClosedDiagram target = cd;
    CHECK(replay_steps(other.open, w->steps, cd.open, rs).has_value());
    auto back = similar(other, cd, rs);
    REQUIRE(back.has_value());
    CHECK(replay_steps(cd.open, back->steps, other.open, rs).has_value());
  }
}

TEST_CASE("dissimilar closures are rejected") {
  auto rs = f_system();
  auto cd = fused_example(rs);
  auto [red, trace] = reduce_closed(cd, rs);
  // Different erased graphs: a split/merge pair vs a bare loop.
  CHECK_FALSE(similar(cd, red, rs).has_value());
  // Same shape, different winding loops.
  CHECK_FALSE(similar(loop_crossing(rs, 1), loop_crossing(rs, 3), rs)
                  .has_value());
}
