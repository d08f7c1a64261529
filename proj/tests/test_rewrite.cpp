#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "strandlab/rewrite.hpp"

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

// A blue edge carrying a red bigon loop collapses to a plain blue edge; the
// derivation expands the loop and reduces the resulting four-edge graph by
// the blue rule.
CompletionRule airplane_completion() {
  CompletionRule extra;
  extra.name = "collapse-bigon-loop";
  extra.lhs.add_edge("v", "x", "blue");
  extra.lhs.add_edge("x", "x", "red");
  extra.boundary = {"v"};
  extra.rhs.add_edge("v", "w", "blue");

  DerivationStep expand;
  expand.kind = DerivationStep::Kind::Expand;
  expand.edge = 1;
  extra.derivation.push_back(expand);
  DerivationStep red;
  red.kind = DerivationStep::Kind::Reduce;
  red.color = "blue";
  red.glued = false;
  red.image_edges = {0, 1, 2, 3};
  extra.derivation.push_back(red);

  StrandDiagram t;
  t.nodes.resize(5);
  t.nodes[0] = {NodeKind::Source, {}, {0}};
  t.nodes[1] = {NodeKind::Split, {0}, {1, 2, 3, 4}};
  t.nodes[2] = {NodeKind::Merge, {2, 3, 4}, {5}};
  t.nodes[3] = {NodeKind::Sink, {1}, {}};
  t.nodes[4] = {NodeKind::Sink, {5}, {}};
  t.strands = {
      {0, 1, "blue", {"v", "w", "1"}}, {1, 3, "blue", {"v", "x", "1"}},
      {1, 2, "red", {"x", "e", "1"}},  {1, 2, "blue", {"e", "w", "1"}},
      {1, 2, "red", {"e", "x", "1"}},  {2, 4, "red", {"x", "x", "1"}},
  };
  t.sources = {0};
  t.sinks = {3, 4};
  extra.conjugator_template = {t};
  return extra;
}

// Two directed colors whose rules are the mixed four-edge paths; their
// reductions are not confluent, and the obvious extra rule joining the two
// three-edge normal forms of the critical path does not fix that.
ReplacementSystem bad_system() {
  ReplacementSystem rs;
  rs.base.add_edge("u", "u", "red");
  rs.base.add_edge("u", "u", "blue");
  rs.base_edge_order = rs.base.edges();
  ReplacementRule red;
  red.color = "red";
  red.graph.add_edge("i", "p", "red");
  red.graph.add_edge("p", "q", "blue");
  red.graph.add_edge("q", "s", "blue");
  red.graph.add_edge("s", "t", "red");
  red.initial = "i";
  red.terminal = "t";
  red.edge_order = red.graph.edges();
  rs.rules["red"] = red;
  ReplacementRule blue;
  blue.color = "blue";
  blue.graph.add_edge("i", "p", "blue");
  blue.graph.add_edge("p", "q", "red");
  blue.graph.add_edge("q", "s", "red");
  blue.graph.add_edge("s", "t", "blue");
  blue.initial = "i";
  blue.terminal = "t";
  blue.edge_order = blue.graph.edges();
  rs.rules["blue"] = blue;
  return finalize_system(rs);
}

CompletionRule bad_naive_extra() {
  CompletionRule extra;
  extra.name = "naive-rrb-to-rbb";
  extra.lhs.add_edge("i", "p", "red");
  extra.lhs.add_edge("p", "q", "red");
  extra.lhs.add_edge("q", "t", "blue");
  extra.boundary = {"i", "t"};
  extra.rhs.add_edge("i", "p", "red");
  extra.rhs.add_edge("p", "q", "blue");
  extra.rhs.add_edge("q", "t", "blue");
  return extra;
}

int nf_edge_count(const ColoredGraph& g) { return (int)g.edges().size(); }

}  // namespace

TEST_CASE("airplane base graph carries exactly the three known redexes") {
  auto rs = airplane_system();
  auto rdx = find_redexes(rs.base, rs);
  REQUIRE(rdx.size() == 3);

  int blue_whole = 0, red_glued = 0;
  for (const auto& r : rdx) {
    if (r.color == "blue" && !r.glued) {
      ++blue_whole;
      CHECK(r.edge_ids.size() == 4);
    } else if (r.color == "red" && r.glued) {
      ++red_glued;
      CHECK(r.edge_ids.size() == 3);
      // Both wings use the two red edges plus one blue edge.
      std::set<int> ids(r.edge_ids.begin(), r.edge_ids.end());
      CHECK(ids.count(0));
      CHECK(ids.count(2));
    } else {
      FAIL("unexpected redex");
    }
  }
  CHECK(blue_whole == 1);
  CHECK(red_glued == 2);
}

TEST_CASE("single edge admits no redex") {
  auto rs = airplane_system();
  ColoredGraph g;
  g.add_edge("u", "v", "blue");
  CHECK(find_redexes(g, rs).empty());
  ColoredGraph loop;
  loop.add_edge("u", "u", "red");
  CHECK(find_redexes(loop, rs).empty());
}

TEST_CASE("applying redexes drops edge counts and reaches both normal forms") {
  auto rs = airplane_system();
  auto rdx = find_redexes(rs.base, rs);
  for (const auto& r : rdx) {
    ColoredGraph g = apply_redex(rs.base, r, rs);
    CHECK((int)g.edges().size() < (int)rs.base.edges().size());
    if (r.color == "blue") {
      REQUIRE(g.edges().size() == 1);
      CHECK(g.edges()[0].color == "blue");
    }
  }
  auto nfs = normal_forms(rs.base, rs);
  REQUIRE(nfs.size() == 2);
  std::vector<int> sizes;
  for (const auto& g : nfs) sizes.push_back(nf_edge_count(g));
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<int>{1, 2});
}

TEST_CASE("the completion rule joins the airplane normal forms") {
  auto rs = airplane_system();
  std::vector<CompletionRule> extras = {airplane_completion()};
  auto nfs = normal_forms(rs.base, rs, extras);
  REQUIRE(nfs.size() == 1);
  CHECK(nf_edge_count(nfs[0]) == 1);
  CHECK(nfs[0].edges()[0].color == "blue");
}

TEST_CASE("stale redexes are rejected") {
  auto rs = airplane_system();
  auto rdx = find_redexes(rs.base, rs);
  REQUIRE(rdx.size() == 3);
  ColoredGraph g = apply_redex(rs.base, rdx[0], rs);
  CHECK_THROWS_AS(apply_redex(g, rdx[1], rs), std::invalid_argument);
}

TEST_CASE("basilica reductions are confluent") {
  auto rs = basilica_system();
  auto rep = check_confluence(rs);
  CHECK(rep.verdict == ConfluenceReport::Verdict::Confluent);
  CHECK(rep.overlaps_checked > 0);
}

TEST_CASE("confluent verdicts predict unique normal forms of expansions") {
  auto rs = basilica_system();
  REQUIRE(check_confluence(rs).verdict == ConfluenceReport::Verdict::Confluent);
  auto base_nfs = normal_forms(rs.base, rs);
  REQUIRE(base_nfs.size() == 1);
  std::string want = canonical_form(base_nfs[0]).encoding;

  std::mt19937 rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    ColoredGraph g = rs.base;
    FreshSupply fresh("e" + std::to_string(trial) + "_");
    int steps = 1 + (int)(rng() % 4);
    for (int s = 0; s < steps; ++s) {
      const auto& es = g.edges();
      g = expand_edge(g, es[rng() % es.size()], rs, fresh);
    }
    auto nfs = normal_forms(g, rs);
    REQUIRE(nfs.size() == 1);
    CHECK(canonical_form(nfs[0]).encoding == want);
  }
}

TEST_CASE("airplane reductions are not confluent and the witness is the known pair") {
  auto rs = airplane_system();
  auto rep = check_confluence(rs);
  REQUIRE(rep.verdict == ConfluenceReport::Verdict::NotConfluent);
  REQUIRE(rep.witness_normal_forms.size() >= 2);
  std::vector<int> sizes;
  for (const auto& g : rep.witness_normal_forms) sizes.push_back(nf_edge_count(g));
  std::sort(sizes.begin(), sizes.end());
  CHECK(sizes == std::vector<int>{1, 2});
  // The witness itself reaches both normal forms.
  CHECK(normal_forms(rep.counterexample, rs).size() >= 2);
  CHECK(report_to_text(rep).find("not confluent") != std::string::npos);
}

TEST_CASE("the verified completion makes the airplane confluent") {
  auto rs = airplane_system();
  std::vector<CompletionRule> extras = {airplane_completion()};
  REQUIRE(verify_completion(rs, extras[0]).ok());
  auto rep = check_confluence(rs, extras);
  CHECK(rep.verdict == ConfluenceReport::Verdict::Confluent);
}

TEST_CASE("the two-path system stays non-confluent even with its naive extra") {
  auto rs = bad_system();
  auto bare = check_confluence(rs);
  CHECK(bare.verdict == ConfluenceReport::Verdict::NotConfluent);
  auto rep = check_confluence(rs, {bad_naive_extra()});
  CHECK(rep.verdict == ConfluenceReport::Verdict::NotConfluent);
  REQUIRE(rep.witness_normal_forms.size() >= 2);
}

TEST_CASE("completion verification accepts the airplane rule and rejects breakage") {
  auto rs = airplane_system();
  CompletionRule good = airplane_completion();
  CHECK(verify_completion(rs, good).ok());

  SUBCASE("measure violation") {
    CompletionRule bad = good;
    bad.rhs.add_edge("w", "w", "red");
    CHECK_FALSE(verify_completion(rs, bad).ok());
  }
  SUBCASE("derivation does not replay") {
    CompletionRule bad = good;
    bad.derivation[0].edge = 0;  // expand the blue edge instead of the loop
    CHECK_FALSE(verify_completion(rs, bad).ok());
  }
  SUBCASE("derivation lands on the wrong graph") {
    CompletionRule bad = good;
    bad.rhs = ColoredGraph();
    bad.rhs.add_edge("v", "w", "red");
    CHECK_FALSE(verify_completion(rs, bad).ok());
  }
  SUBCASE("template boundary labels must carry the rule edges") {
    CompletionRule bad = good;
    bad.conjugator_template[0].strands[1].label.v = "q";
    CHECK_FALSE(verify_completion(rs, bad).ok());
  }
  SUBCASE("missing boundary vertex") {
    CompletionRule bad = good;
    bad.boundary = {"nope"};
    CHECK_FALSE(verify_completion(rs, bad).ok());
  }
}

TEST_CASE("completion rules round-trip through json") {
  CompletionRule extra = airplane_completion();
  CompletionRule back = completion_from_json(completion_to_json(extra));
  CHECK(back.name == extra.name);
  CHECK(back.lhs == extra.lhs);
  CHECK(back.rhs == extra.rhs);
  CHECK(back.boundary == extra.boundary);
  REQUIRE(back.derivation.size() == extra.derivation.size());
  CHECK(back.derivation[0].kind == DerivationStep::Kind::Expand);
  CHECK(back.derivation[0].edge == 1);
  CHECK(back.derivation[1].image_edges == extra.derivation[1].image_edges);
  REQUIRE(back.conjugator_template.size() == 1);
  auto rs = airplane_system();
  CHECK(verify_completion(rs, back).ok());
}
