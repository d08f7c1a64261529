#include "strandlab/catalog.hpp"

#include <stdexcept>

#include "strandlab/rewrite.hpp"

namespace strandlab {
namespace {

ReplacementRule make_rule(Color color, ColoredGraph graph, Symbol initial,
                          Symbol terminal) {
  ReplacementRule rule;
  rule.color = std::move(color);
  rule.graph = std::move(graph);
  rule.initial = std::move(initial);
  rule.terminal = std::move(terminal);
  rule.edge_order = rule.graph.edges();
  return rule;
}

CatalogSystem finish(std::string name, ReplacementSystem rs,
                     ExpectedConfluence expected,
                     std::vector<CompletionRule> completions = {}) {
  rs.base_edge_order = rs.base.edges();
  CatalogSystem out;
  out.name = std::move(name);
  out.system = finalize_system(std::move(rs));
  out.completions = std::move(completions);
  out.expected = expected;
  return out;
}

// A path of two edges: the dyadic interval subdivision rule.
ColoredGraph path_rule_graph(const Color& c) {
  ColoredGraph g;
  g.add_edge("i", "m", c);
  g.add_edge("m", "t", c);
  return g;
}

// n pairwise disjoint edges, the first leaving iota and the last entering
// tau: the Cantor-space subdivision rule.
ColoredGraph disjoint_rule_graph(const Color& c, int n) {
  ColoredGraph g;
  g.add_edge("i", "m0", c);
  for (int j = 1; j + 1 < n; ++j)
    g.add_edge("u" + std::to_string(j), "v" + std::to_string(j), c);
  g.add_edge("m1", "t", c);
  return g;
}

// The five-edge two-lane rule shared by the Houghton and Q systems: a
// two-edge lane and a three-edge lane from iota to tau.
ColoredGraph two_lane_rule_graph(const Color& c) {
  ColoredGraph g;
  g.add_edge("i", "a", c);
  g.add_edge("a", "t", c);
  g.add_edge("i", "b", c);
  g.add_edge("b", "c", c);
  g.add_edge("c", "t", c);
  return g;
}

CatalogSystem thompson_f() {
  ReplacementSystem rs;
  rs.base.add_edge("p", "q", "black");
  rs.rules["black"] = make_rule("black", path_rule_graph("black"), "i", "t");
  return finish("thompson_f", std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem thompson_t() {
  ReplacementSystem rs;
  rs.base.add_edge("p", "p", "black");
  rs.rules["black"] = make_rule("black", path_rule_graph("black"), "i", "t");
  return finish("thompson_t", std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem thompson_v(int n, int r) {
  if (n < 2 || r < 1)
    throw std::invalid_argument("thompson_v: need n >= 2 and r >= 1");
  ReplacementSystem rs;
  for (int j = 0; j < r; ++j)
    rs.base.add_edge("p" + std::to_string(j), "q" + std::to_string(j),
                     "black");
  rs.rules["black"] =
      make_rule("black", disjoint_rule_graph("black", n), "i", "t");
  return finish("thompson_v_" + std::to_string(n) + "_" + std::to_string(r),
                std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem rabbit(int k) {
  if (k < 1) throw std::invalid_argument("rabbit: need k >= 1");
  ReplacementSystem rs;
  rs.base.add_edge("l", "r", "black");
  rs.base.add_edge("r", "l", "black");
  for (int j = 0; j < k; ++j) {
    rs.base.add_edge("l", "l", "black");
    rs.base.add_edge("r", "r", "black");
  }
  ColoredGraph g;
  g.add_edge("i", "m", "black");
  g.add_edge("m", "t", "black");
  for (int j = 0; j < k; ++j) g.add_edge("m", "m", "black");
  rs.rules["black"] = make_rule("black", std::move(g), "i", "t");
  return finish(k == 1 ? "basilica" : "rabbit_" + std::to_string(k),
                std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem vicsek(int d) {
  if (d < 3) throw std::invalid_argument("vicsek: need d >= 3");
  ReplacementSystem rs;
  for (int j = 0; j < d; ++j)
    rs.base.add_edge("c", "a" + std::to_string(j), "black");
  ColoredGraph g;
  for (int j = 0; j + 2 < d; ++j)
    g.add_edge("v", "tip" + std::to_string(j), "black");
  g.add_edge("v", "t", "black");
  g.add_edge("v", "x", "black");
  g.add_edge("i", "x", "black");
  rs.rules["black"] = make_rule("black", std::move(g), "i", "t");
  return finish("vicsek_" + std::to_string(d), std::move(rs),
                ExpectedConfluence::Confluent);
}

CatalogSystem bubble_bath() {
  ReplacementSystem rs;
  rs.base.add_edge("p", "q", "black");
  rs.base.add_edge("p", "q", "black");
  rs.base.add_edge("p", "q", "black");
  ColoredGraph g;
  g.add_edge("m1", "i", "black");
  g.add_edge("m2", "t", "black");
  g.add_edge("m2", "m1", "black");
  g.add_edge("m1", "m2", "black");
  rs.rules["black"] = make_rule("black", std::move(g), "i", "t");
  return finish("bubble_bath", std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem houghton(int n) {
  if (n < 1) throw std::invalid_argument("houghton: need n >= 1");
  ReplacementSystem rs;
  for (int j = 0; j < n; ++j) {
    Color ray = "ray" + std::to_string(j);
    rs.base.add_edge("p" + std::to_string(j), "q" + std::to_string(j), ray);
    ColoredGraph g;
    g.add_edge("i", "m1", "black");
    g.add_edge("m2", "t", ray);
    rs.rules[ray] = make_rule(ray, std::move(g), "i", "t");
  }
  rs.rules["black"] =
      make_rule("black", two_lane_rule_graph("black"), "i", "t");
  return finish("houghton_" + std::to_string(n), std::move(rs),
                ExpectedConfluence::Confluent);
}

ReplacementRule q_blue_disjoint_rule() {
  // QV: three disjoint edges, blue / black / blue.
  ColoredGraph g;
  g.add_edge("i", "a", "blue");
  g.add_edge("b", "c", "black");
  g.add_edge("d", "t", "blue");
  return make_rule("blue", std::move(g), "i", "t");
}

ReplacementRule q_blue_path_rule() {
  // QT and QF: a blue two-edge path plus a disjoint black edge.
  ColoredGraph g;
  g.add_edge("i", "m", "blue");
  g.add_edge("m", "t", "blue");
  g.add_edge("a", "b", "black");
  return make_rule("blue", std::move(g), "i", "t");
}

CatalogSystem q_system(const std::string& name, bool loop_base,
                       bool path_blue, bool extra_base_edge) {
  ReplacementSystem rs;
  if (loop_base)
    rs.base.add_edge("p", "p", "blue");
  else
    rs.base.add_edge("p", "q", "blue");
  if (extra_base_edge) rs.base.add_edge("p2", "q2", "blue");
  rs.rules["blue"] = path_blue ? q_blue_path_rule() : q_blue_disjoint_rule();
  rs.rules["black"] =
      make_rule("black", two_lane_rule_graph("black"), "i", "t");
  return finish(name, std::move(rs), ExpectedConfluence::Confluent);
}

CatalogSystem airplane() {
  ReplacementSystem rs;
  // Base: two wing edges, and the top and bottom halves of the central
  // bigon.
  rs.base.add_edge("x", "lv", "blue");   // L
  rs.base.add_edge("y", "rv", "blue");   // R
  rs.base.add_edge("y", "x", "red");     // T
  rs.base.add_edge("x", "y", "red");     // B

  ColoredGraph red;
  red.add_edge("i", "x", "red");   // a
  red.add_edge("x", "t", "red");   // c
  red.add_edge("x", "y", "blue");  // b
  rs.rules["red"] = make_rule("red", std::move(red), "i", "t");

  ColoredGraph blue;
  blue.add_edge("x", "i", "blue");  // e
  blue.add_edge("y", "t", "blue");  // h
  blue.add_edge("y", "x", "red");   // f
  blue.add_edge("x", "y", "red");   // g
  rs.rules["blue"] = make_rule("blue", std::move(blue), "i", "t");

  // Completion: a blue edge carrying a red bigon loop collapses to a plain
  // blue edge; derivation = expand the loop, reduce the resulting four-edge
  // copy by the blue rule.
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
  DerivationStep reduce;
  reduce.kind = DerivationStep::Kind::Reduce;
  reduce.color = "blue";
  reduce.image_edges = {0, 1, 2, 3};
  extra.derivation.push_back(reduce);

  // Per-winding conjugator: the rhs edge splits by the blue rule and the
  // three strands other than the wing merge back into the lhs loop by the
  // red rule.  Strand slots follow the rules' edge orders above.
  StrandDiagram t;
  t.nodes.resize(5);
  t.nodes[0] = {NodeKind::Source, {}, {0}};
  t.nodes[1] = {NodeKind::Split, {0}, {1, 2, 3, 4}};
  t.nodes[2] = {NodeKind::Merge, {4, 3, 2}, {5}};
  t.nodes[3] = {NodeKind::Sink, {1}, {}};
  t.nodes[4] = {NodeKind::Sink, {5}, {}};
  t.strands = {
      {0, 1, "blue", {"v", "w", "1"}}, {1, 3, "blue", {"v", "x", "1"}},
      {1, 2, "blue", {"e", "w", "1"}}, {1, 2, "red", {"e", "x", "1"}},
      {1, 2, "red", {"x", "e", "1"}},  {2, 4, "red", {"x", "x", "1"}},
  };
  t.sources = {0};
  t.sinks = {3, 4};
  extra.conjugator_template = {t};

  return finish("airplane", std::move(rs),
                ExpectedConfluence::NeedsCompletion, {extra});
}

int param(const std::map<std::string, int>& params, const std::string& key,
          int fallback) {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void check_keys(const std::map<std::string, int>& params,
                const std::vector<std::string>& known) {
  for (const auto& [k, v] : params) {
    bool ok = false;
    for (const auto& w : known) ok = ok || k == w;
    if (!ok) throw std::invalid_argument("unknown parameter: " + k);
  }
}

}  // namespace

std::vector<CatalogEntry> list_builtins() {
  return {
      {"thompson_f", ""},
      {"thompson_t", ""},
      {"thompson_v", "n>=2 (arity, default 2), r>=1 (base edges, default 1)"},
      {"basilica", ""},
      {"rabbit", "k>=1 (loops, default 1)"},
      {"vicsek", "d>=3 (degree, default 4)"},
      {"bubble_bath", ""},
      {"houghton", "n>=1 (rays, default 2)"},
      {"qv", ""},
      {"qv_tilde", ""},
      {"qt", ""},
      {"qt_tilde", ""},
      {"qf", ""},
      {"airplane", ""},
  };
}

CatalogSystem builtin(const std::string& name,
                      const std::map<std::string, int>& params) {
  if (name == "thompson_v") {
    check_keys(params, {"n", "r"});
    return thompson_v(param(params, "n", 2), param(params, "r", 1));
  }
  if (name == "rabbit") {
    check_keys(params, {"k"});
    return rabbit(param(params, "k", 1));
  }
  if (name == "vicsek") {
    check_keys(params, {"d"});
    return vicsek(param(params, "d", 4));
  }
  if (name == "houghton") {
    check_keys(params, {"n"});
    return houghton(param(params, "n", 2));
  }
  check_keys(params, {});
  if (name == "thompson_f") return thompson_f();
  if (name == "thompson_t") return thompson_t();
  if (name == "basilica") return rabbit(1);
  if (name == "bubble_bath") return bubble_bath();
  if (name == "qv") return q_system("qv", false, false, false);
  if (name == "qv_tilde") return q_system("qv_tilde", false, false, true);
  if (name == "qt") return q_system("qt", true, true, false);
  if (name == "qt_tilde") return q_system("qt_tilde", true, true, true);
  if (name == "qf") return q_system("qf", false, true, false);
  if (name == "airplane") return airplane();
  throw std::invalid_argument("unknown builtin: " + name);
}

CatalogSystem subshift_system(
    const std::vector<std::pair<std::string, std::string>>& transitions) {
  if (transitions.empty())
    throw std::invalid_argument("subshift_system: no transitions");
  std::vector<std::string> states;
  auto note = [&](const std::string& s) {
    for (const auto& k : states)
      if (k == s) return;
    states.push_back(s);
  };
  for (const auto& [a, b] : transitions) {
    note(a);
    note(b);
  }
  ReplacementSystem rs;
  for (size_t j = 0; j < states.size(); ++j)
    rs.base.add_edge("p" + std::to_string(j), "q" + std::to_string(j),
                     states[j]);
  for (const auto& s : states) {
    std::vector<std::string> outs;
    for (const auto& [a, b] : transitions)
      if (a == s) outs.push_back(b);
    ColoredGraph g;
    g.add_vertex("i");
    g.add_vertex("t");
    for (size_t j = 0; j < outs.size(); ++j) {
      Symbol from = j == 0 ? Symbol("i") : "u" + std::to_string(j);
      Symbol to = j + 1 == outs.size() ? Symbol("t") : "v" + std::to_string(j);
      g.add_edge(from, to, outs[j]);
    }
    rs.rules[s] = make_rule(s, std::move(g), "i", "t");
  }
  CatalogSystem out = finish("subshift", std::move(rs),
                             ExpectedConfluence::Confluent);
  if (!check_expanding(out.system).ok() ||
      check_confluence(out.system).verdict !=
          ConfluenceReport::Verdict::Confluent)
    out.expected = ExpectedConfluence::NotSupported;
  return out;
}

}  // namespace strandlab
