#include "strandlab/replacement.hpp"

#include <algorithm>

#include "json.hpp"

namespace strandlab {

ExpandingReport check_expanding(const ReplacementSystem& rs) {
  ExpandingReport report;
  auto no_isolated = [&](const ColoredGraph& g, const std::string& where) {
    for (const auto& v : g.vertices())
      if (g.degree(v) == 0)
        report.violations.push_back({where, "isolated vertex " + v});
  };
  no_isolated(rs.base, "base");
  for (const auto& [c, rule] : rs.rules) {
    std::string where = "rule " + c;
    no_isolated(rule.graph, where);
    for (const auto& e : rule.graph.edges()) {
      bool joins = (e.from == rule.initial && e.to == rule.terminal) ||
                   (e.from == rule.terminal && e.to == rule.initial);
      if (joins)
        report.violations.push_back({where, "edge joins iota and tau"});
    }
    if (rule.graph.vertices().size() < 3)
      report.violations.push_back({where, "fewer than 3 vertices"});
    if (rule.graph.edges().size() < 2)
      report.violations.push_back({where, "fewer than 2 edges"});
  }
  return report;
}

ValidationReport validate_system(const ReplacementSystem& rs) {
  ValidationReport report;
  auto need_rule = [&](const Color& c) {
    if (!rs.rules.count(c))
      report.issues.push_back({"missing rule for color " + c});
  };
  for (const auto& e : rs.base.edges()) need_rule(e.color);
  for (const auto& [c, rule] : rs.rules)
    for (const auto& e : rule.graph.edges()) need_rule(e.color);

  auto graph_ok = [&](const ColoredGraph& g, const std::string& where) {
    auto r = validate_graph(g);
    for (auto& i : r.issues) report.issues.push_back({where + ": " + i.what});
  };
  graph_ok(rs.base, "base");

  auto order_ok = [&](const std::vector<ColoredEdge>& order,
                      const ColoredGraph& g, const std::string& where) {
    auto a = order;
    auto b = g.edges();
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b)
      report.issues.push_back(
          {where + ": edge order is not a permutation of the edges"});
  };
  order_ok(rs.base_edge_order, rs.base, "base");

  for (const auto& [c, rule] : rs.rules) {
    std::string where = "rule " + c;
    graph_ok(rule.graph, where);
    order_ok(rule.edge_order, rule.graph, where);
    if (rule.color != c)
      report.issues.push_back({where + ": color field mismatch"});
    if (rule.initial == rule.terminal)
      report.issues.push_back({where + ": iota equals tau"});
    if (!rule.graph.has_vertex(rule.initial) ||
        !rule.graph.has_vertex(rule.terminal))
      report.issues.push_back({where + ": iota or tau not a vertex"});
  }
  return report;
}

ColoredGraph expand_edge(const ColoredGraph& g, const ColoredEdge& e,
                         const ReplacementSystem& rs, FreshSupply& fresh) {
  auto it = rs.rules.find(e.color);
  if (it == rs.rules.end())
    throw std::invalid_argument("expand_edge: no rule for color " + e.color);
  const ReplacementRule& rule = it->second;

  auto [origin, terminus] = g.oriented(e);

  ColoredGraph out;
  for (const auto& c : g.undirected_colors()) out.set_undirected(c);
  for (const auto& v : g.vertices()) out.add_vertex(v);

  // Copy all edges except e, renumbering the surviving members of e's
  // parallel class to close the index gap.
  int shift_from = e.index;
  for (const auto& old : g.edges()) {
    if (old == e) continue;
    int idx = old.index;
    auto [of, ot] = g.oriented(old);
    if (of == origin && ot == terminus && old.color == e.color &&
        idx > shift_from)
      --idx;
    out.add_edge(old.from, old.to, old.color, idx);
  }

  // Substitution for the rule copy: iota/tau to the edge's endpoints,
  // interior vertices to fresh symbols.
  std::map<Symbol, Symbol> sub;
  sub[rule.initial] = origin;
  sub[rule.terminal] = terminus;
  for (const auto& v : rule.graph.vertices())
    if (!sub.count(v)) sub[v] = fresh.next();
  for (const auto& re : rule.graph.edges())
    out.add_edge(sub[re.from], sub[re.to], re.color, re.index);
  return out;
}

std::map<Color, GraphIsomorphism> detect_undirected_colors(
    const ReplacementSystem& rs) {
  // Iterate to a fixpoint: marking a color undirected can create new swap
  // automorphisms for rules containing edges of that color.
  std::set<Color> undirected;
  std::map<Color, GraphIsomorphism> swaps;
  for (;;) {
    bool changed = false;
    for (const auto& [c, rule] : rs.rules) {
      if (undirected.count(c)) continue;
      ColoredGraph g = rule.graph;
      for (const auto& u : undirected) g.set_undirected(u);
      bool found = false;
      for (const auto& iso : isomorphisms(g, g)) {
        if (iso.vertex_map.at(rule.initial) == rule.terminal &&
            iso.vertex_map.at(rule.terminal) == rule.initial) {
          swaps[c] = iso;
          found = true;
          break;  // keep the canonically first swap automorphism
        }
      }
      if (found) {
        undirected.insert(c);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return swaps;
}

ReplacementSystem finalize_system(ReplacementSystem rs) {
  rs.undirected_swaps = detect_undirected_colors(rs);
  auto mark = [&](ColoredGraph& g) {
    for (const auto& [c, swap] : rs.undirected_swaps) g.set_undirected(c);
  };
  mark(rs.base);
  for (auto& e : rs.base_edge_order)
    if (rs.undirected_swaps.count(e.color) && e.to < e.from)
      std::swap(e.from, e.to);
  for (auto& [c, rule] : rs.rules) {
    mark(rule.graph);
    for (auto& e : rule.edge_order)
      if (rs.undirected_swaps.count(e.color) && e.to < e.from)
        std::swap(e.from, e.to);
  }
  return rs;
}

namespace {

nlohmann::json edge_to_json(const ColoredEdge& e) {
  return {{"from", e.from}, {"to", e.to}, {"color", e.color},
          {"index", e.index}};
}

ColoredEdge edge_from_json(const nlohmann::json& j) {
  return {j.at("from").get<Symbol>(), j.at("to").get<Symbol>(),
          j.at("color").get<Color>(), j.value("index", 1)};
}

nlohmann::json graph_json(const ColoredGraph& g) {
  return nlohmann::json::parse(graph_to_json(g));
}

}  // namespace

std::string system_to_json(const ReplacementSystem& rs) {
  nlohmann::json j;
  j["colors"] = nlohmann::json::array();
  for (const auto& [c, rule] : rs.rules) j["colors"].push_back(c);
  j["base"] = graph_json(rs.base);
  j["base_edge_order"] = nlohmann::json::array();
  for (const auto& e : rs.base_edge_order)
    j["base_edge_order"].push_back(edge_to_json(e));
  j["rules"] = nlohmann::json::object();
  for (const auto& [c, rule] : rs.rules) {
    nlohmann::json r;
    r["graph"] = graph_json(rule.graph);
    r["iota"] = rule.initial;
    r["tau"] = rule.terminal;
    r["edge_order"] = nlohmann::json::array();
    for (const auto& e : rule.edge_order)
      r["edge_order"].push_back(edge_to_json(e));
    j["rules"][c] = r;
  }
  return j.dump(2);
}

ReplacementSystem system_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  ReplacementSystem rs;
  rs.base = graph_from_json(j.at("base").dump());
  for (const auto& e : j.at("base_edge_order"))
    rs.base_edge_order.push_back(edge_from_json(e));
  for (const auto& [c, r] : j.at("rules").items()) {
    ReplacementRule rule;
    rule.color = c;
    rule.graph = graph_from_json(r.at("graph").dump());
    rule.initial = r.at("iota").get<Symbol>();
    rule.terminal = r.at("tau").get<Symbol>();
    for (const auto& e : r.at("edge_order"))
      rule.edge_order.push_back(edge_from_json(e));
    rs.rules[c] = rule;
  }
  return finalize_system(std::move(rs));
}

}  // namespace strandlab
