#include "strandlab/forest.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace strandlab {

BranchLabel normalized_label(const BranchLabel& l, const Color& c,
                             const ReplacementSystem& rs) {
  if (rs.is_undirected(c) && l.w < l.v) return {l.w, l.v, l.z};
  return l;
}

const Branch* Forest::find(const BranchPath& p) const {
  if (p.empty() || p[0] < 0 || p[0] >= (int)roots.size()) return nullptr;
  const Branch* b = &roots[p[0]];
  for (size_t i = 1; i < p.size(); ++i) {
    if (p[i] < 0 || p[i] >= (int)b->children.size()) return nullptr;
    b = &b->children[p[i]];
  }
  return b;
}

Branch* Forest::find(const BranchPath& p) {
  return const_cast<Branch*>(static_cast<const Forest*>(this)->find(p));
}

namespace {

void walk(const Branch& b, BranchPath& path, bool leaves_only,
          std::vector<BranchPath>& out) {
  if (b.is_leaf() == leaves_only) out.push_back(path);
  for (int i = 0; i < (int)b.children.size(); ++i) {
    path.push_back(i);
    walk(b.children[i], path, leaves_only, out);
    path.pop_back();
  }
}

std::vector<BranchPath> collect(const Forest& f, bool leaves_only) {
  std::vector<BranchPath> out;
  BranchPath path;
  for (int r = 0; r < (int)f.roots.size(); ++r) {
    path.push_back(r);
    walk(f.roots[r], path, leaves_only, out);
    path.pop_back();
  }
  return out;
}

}  // namespace

std::vector<BranchPath> Forest::leaves() const { return collect(*this, true); }

std::vector<BranchPath> Forest::internal_paths() const {
  return collect(*this, false);
}

Forest base_forest(const ReplacementSystem& rs) {
  Forest f;
  for (const auto& e : rs.base_edge_order) {
    Branch b;
    b.color = e.color;
    b.label = normalized_label({e.from, e.to, std::to_string(e.index)}, e.color,
                               rs);
    f.roots.push_back(std::move(b));
  }
  return f;
}

namespace {

// Children labels for expanding a (color, v, w) leaf: iota -> v, tau -> w,
// interior rule vertices -> fresh symbols; rule-edge indices carry over.
std::vector<Branch> expansion_children(const Color& color,
                                       const BranchLabel& label,
                                       const ReplacementSystem& rs,
                                       FreshSupply& fresh) {
  const ReplacementRule& rule = rs.rule(color);
  std::map<Symbol, Symbol> sub;
  sub[rule.initial] = label.v;
  sub[rule.terminal] = label.w;
  for (const auto& v : rule.graph.vertices())
    if (!sub.count(v)) sub[v] = fresh.next();
  std::vector<Branch> children;
  for (const auto& re : rule.edge_order) {
    Branch c;
    c.color = re.color;
    c.label = normalized_label(
        {sub[re.from], sub[re.to], std::to_string(re.index)}, re.color, rs);
    children.push_back(std::move(c));
  }
  return children;
}

}  // namespace

Forest expand_branch(const Forest& f, const BranchPath& path,
                     const ReplacementSystem& rs, FreshSupply& fresh) {
  Forest out = f;
  Branch* b = out.find(path);
  if (!b) throw std::invalid_argument("expand_branch: no branch at path");
  if (!b->is_leaf())
    throw std::invalid_argument("expand_branch: branch is not a leaf");
  if (!rs.rules.count(b->color))
    throw std::invalid_argument("expand_branch: no rule for color " +
                                b->color);
  b->children = expansion_children(b->color, b->label, rs, fresh);
  return out;
}

ColoredGraph leaf_graph(const Forest& f, const ReplacementSystem& rs) {
  ColoredGraph g;
  for (const auto& [c, swap] : rs.undirected_swaps) g.set_undirected(c);
  // Parallel index per class: order of first appearance of the z symbol.
  std::map<std::tuple<Symbol, Symbol, Color>, std::map<Symbol, int>> classes;
  for (const auto& p : f.leaves()) {
    const Branch* b = f.find(p);
    auto key = std::make_tuple(b->label.v, b->label.w, b->color);
    auto& seen = classes[key];
    auto it = seen.find(b->label.z);
    int idx;
    if (it != seen.end()) {
      idx = it->second;  // duplicate leaf label; validate_forest reports it
    } else {
      idx = (int)seen.size() + 1;
      seen.emplace(b->label.z, idx);
    }
    g.add_edge(b->label.v, b->label.w, b->color, idx);
  }
  return g;
}

namespace {

using FamilyList = std::vector<std::pair<Color, BranchLabel>>;

// Tries to extend `sub` (rule vertex -> symbol) so that `bottoms`
// instantiates the rule template slot by slot.  Undirected child colors allow
// an endpoint flip per slot; the search backtracks over those flips.
bool solve_slots(const ReplacementRule& rule, const FamilyList& bottoms,
                 const ReplacementSystem& rs, std::map<Symbol, Symbol> sub,
                 size_t slot, std::map<Symbol, Symbol>* out) {
  if (slot == rule.edge_order.size()) {
    // Parallel indices must be distinct within each substituted class.
    std::set<std::tuple<Symbol, Symbol, Color, Symbol>> seen;
    for (const auto& [c, l] : bottoms)
      if (!seen.insert({l.v, l.w, c, l.z}).second) return false;
    if (out) *out = sub;
    return true;
  }
  const ColoredEdge& te = rule.edge_order[slot];
  const auto& [ccolor, clabel] = bottoms[slot];
  if (ccolor != te.color) return false;
  auto attempt = [&](const Symbol& cv, const Symbol& cw) {
    auto s = sub;
    auto bind = [&](const Symbol& tv, const Symbol& val) {
      auto it = s.find(tv);
      if (it != s.end()) return it->second == val;
      s.emplace(tv, val);
      return true;
    };
    if (!bind(te.from, cv) || !bind(te.to, cw)) return false;
    return solve_slots(rule, bottoms, rs, std::move(s), slot + 1, out);
  };
  if (attempt(clabel.v, clabel.w)) return true;
  if (rs.is_undirected(ccolor) && clabel.v != clabel.w)
    return attempt(clabel.w, clabel.v);
  return false;
}

FamilyList family_of(const Branch& b) {
  FamilyList out;
  for (const auto& c : b.children) out.push_back({c.color, c.label});
  return out;
}

// Checks that the children of internal branch `b` are an instantiation of its
// rule with iota -> label.v and tau -> label.w (in either orientation when
// the color is undirected).
bool family_instantiates(const Branch& b, const ReplacementSystem& rs) {
  return match_rule_family(b.color, b.label, family_of(b), rs).has_value();
}

std::string label_str(const Branch& b) {
  return "(" + b.label.v + "," + b.label.w + "," + b.label.z + ";" + b.color +
         ")";
}

void validate_branch(const Branch& b, const ReplacementSystem& rs,
                     ValidationReport& report) {
  if (!b.is_leaf()) {
    if (!rs.rules.count(b.color)) {
      report.issues.push_back({"no rule for expanded branch " + label_str(b)});
      return;
    }
    if (!family_instantiates(b, rs))
      report.issues.push_back(
          {"children of " + label_str(b) + " do not instantiate the rule"});
    for (const auto& c : b.children) validate_branch(c, rs, report);
  }
}

}  // namespace

std::optional<RuleInstantiation> match_rule_family(
    const Color& c, const BranchLabel& top, const FamilyList& bottoms,
    const ReplacementSystem& rs) {
  if (!rs.rules.count(c)) return std::nullopt;
  const ReplacementRule& rule = rs.rule(c);
  if (bottoms.size() != rule.edge_order.size()) return std::nullopt;
  RuleInstantiation inst;
  std::map<Symbol, Symbol> seed;
  seed[rule.initial] = top.v;
  seed[rule.terminal] = top.w;
  if (solve_slots(rule, bottoms, rs, seed, 0, &inst.substitution)) return inst;
  if (rs.is_undirected(c) && top.v != top.w) {
    std::map<Symbol, Symbol> flipped;
    flipped[rule.initial] = top.w;
    flipped[rule.terminal] = top.v;
    if (solve_slots(rule, bottoms, rs, flipped, 0, &inst.substitution)) {
      inst.flipped = true;
      return inst;
    }
  }
  return std::nullopt;
}

std::vector<int> swap_slot_permutation(const ReplacementRule& rule,
                                       const GraphIsomorphism& swap) {
  // swap.edge_map maps positions of rule.graph.edges(); translate through
  // edge_order.
  const auto& es = rule.graph.edges();
  auto edge_pos = [&](const ColoredEdge& e) {
    for (int i = 0; i < (int)es.size(); ++i)
      if (es[i] == e) return i;
    throw std::logic_error("swap_slot_permutation: edge not found");
  };
  std::vector<int> slot_of_edge(es.size(), -1);
  for (int s = 0; s < (int)rule.edge_order.size(); ++s)
    slot_of_edge[edge_pos(rule.edge_order[s])] = s;
  std::vector<int> out(rule.edge_order.size());
  for (int s = 0; s < (int)rule.edge_order.size(); ++s)
    out[s] = slot_of_edge[swap.edge_map[edge_pos(rule.edge_order[s])]];
  return out;
}

namespace {

void normalize_branch(Branch& b, const ReplacementSystem& rs) {
  b.label = normalized_label(b.label, b.color, rs);
  if (b.is_leaf()) return;
  auto inst = match_rule_family(b.color, b.label, family_of(b), rs);
  if (!inst)
    throw std::invalid_argument("normalize_orientation: children of " +
                                label_str(b) + " do not instantiate the rule");
  if (inst->flipped) {
    auto pi = swap_slot_permutation(rs.rule(b.color),
                                    rs.undirected_swaps.at(b.color));
    std::vector<Branch> re(b.children.size());
    for (size_t i = 0; i < b.children.size(); ++i)
      re[i] = std::move(b.children[pi[i]]);
    b.children = std::move(re);
  }
  for (auto& c : b.children) normalize_branch(c, rs);
}

}  // namespace

Forest normalize_orientation(Forest f, const ReplacementSystem& rs) {
  for (auto& r : f.roots) normalize_branch(r, rs);
  return f;
}

ValidationReport validate_forest(const Forest& f, const ReplacementSystem& rs) {
  ValidationReport report;
  for (const auto& r : f.roots) validate_branch(r, rs, report);
  std::set<std::tuple<Symbol, Symbol, Symbol, Color>> seen;
  for (const auto& p : f.leaves()) {
    const Branch* b = f.find(p);
    auto key = std::make_tuple(b->label.v, b->label.w, b->label.z, b->color);
    if (!seen.insert(key).second)
      report.issues.push_back({"duplicate leaf label " + label_str(*b)});
  }
  return report;
}

ForestPairDiagram make_pair(const Forest& domain, const Forest& range,
                            const ReplacementSystem& rs) {
  auto labels = [&](const Forest& f) {
    std::multiset<std::tuple<Color, Symbol, Symbol, Symbol>> out;
    for (const auto& p : f.leaves()) {
      const Branch* b = f.find(p);
      out.insert({b->color, b->label.v, b->label.w, b->label.z});
    }
    return out;
  };
  auto ld = labels(domain);
  auto lr = labels(range);
  if (ld != lr) {
    std::string msg = "leaf labels do not match;";
    for (const auto& t : ld)
      if (!lr.count(t))
        msg += " domain-only (" + std::get<1>(t) + "," + std::get<2>(t) + "," +
               std::get<3>(t) + ";" + std::get<0>(t) + ")";
    for (const auto& t : lr)
      if (!ld.count(t))
        msg += " range-only (" + std::get<1>(t) + "," + std::get<2>(t) + "," +
               std::get<3>(t) + ";" + std::get<0>(t) + ")";
    throw std::invalid_argument("make_pair: " + msg);
  }
  return {domain, range};
}

ForestPairDiagram expand_pair(const ForestPairDiagram& p,
                              const BranchPath& domain_leaf,
                              const ReplacementSystem& rs, FreshSupply& fresh) {
  ForestPairDiagram out = p;
  Branch* d = out.domain.find(domain_leaf);
  if (!d || !d->is_leaf())
    throw std::invalid_argument("expand_pair: not a domain leaf");
  Branch* r = nullptr;
  for (const auto& q : out.range.leaves()) {
    Branch* cand = out.range.find(q);
    if (cand->color == d->color && cand->label == d->label) {
      r = cand;
      break;
    }
  }
  if (!r)
    throw std::invalid_argument("expand_pair: no matching range leaf for " +
                                label_str(*d));
  auto children = expansion_children(d->color, d->label, rs, fresh);
  d->children = children;
  r->children = children;
  return out;
}

namespace {

// A branch is collapsible against a range partner when both have all-leaf
// children with identical label lists and the parents carry equal labels, so
// removing both families undoes one shared expansion.
bool all_leaf_children(const Branch& b) {
  if (b.is_leaf()) return false;
  for (const auto& c : b.children)
    if (!c.is_leaf()) return false;
  return true;
}

bool same_family(const Branch& a, const Branch& b) {
  if (a.color != b.color || a.label != b.label) return false;
  if (a.children.size() != b.children.size()) return false;
  for (size_t i = 0; i < a.children.size(); ++i)
    if (a.children[i].color != b.children[i].color ||
        a.children[i].label != b.children[i].label)
      return false;
  return true;
}

}  // namespace

ForestPairDiagram reduce_pair(const ForestPairDiagram& p,
                              const ReplacementSystem& rs) {
  ForestPairDiagram out = p;
  for (;;) {
    bool collapsed = false;
    for (const auto& dp : out.domain.internal_paths()) {
      Branch* d = out.domain.find(dp);
      if (!all_leaf_children(*d)) continue;
      for (const auto& rp : out.range.internal_paths()) {
        Branch* r = out.range.find(rp);
        if (!all_leaf_children(*r) || !same_family(*d, *r)) continue;
        d->children.clear();
        r->children.clear();
        collapsed = true;
        break;
      }
      if (collapsed) break;
    }
    if (!collapsed) return out;
  }
}

namespace {

// Renaming-invariant canonicalization.  Vertex symbols are renamed by first
// appearance along the item sequence; the only freedom is the endpoint order
// of an undirected label whose symbols are both unseen, over which the
// search backtracks and keeps the lexicographically least encoding.
struct SequenceEncoder {
  const ReplacementSystem& rs;
  const std::vector<LabeledItem>& items;
  std::string best;
  bool have_best = false;

  void run(size_t i, std::map<Symbol, Symbol> names,
           std::map<std::tuple<Symbol, Symbol, Color>, std::map<Symbol, int>>
               zclasses,
           std::string acc) {
    if (have_best && acc > best) return;  // no extension can beat best
    if (i == items.size()) {
      if (!have_best || acc < best) {
        best = acc;
        have_best = true;
      }
      return;
    }
    const LabeledItem& it = items[i];
    auto emit = [&](const Symbol& first, const Symbol& second) {
      auto n = names;
      auto zc = zclasses;
      auto canon = [&](const Symbol& s) {
        auto f = n.find(s);
        if (f != n.end()) return f->second;
        Symbol c = "s" + std::to_string(n.size());
        n.emplace(s, c);
        return c;
      };
      Symbol cv = canon(first);
      Symbol cw = canon(second);
      Symbol a = cv, b = cw;
      if (rs.is_undirected(it.color) && b < a) std::swap(a, b);
      auto& zmap = zc[{a, b, it.color}];
      auto zf = zmap.find(it.label.z);
      int zi;
      if (zf != zmap.end()) {
        zi = zf->second;
      } else {
        zi = (int)zmap.size() + 1;
        zmap.emplace(it.label.z, zi);
      }
      std::string line = it.color + "|" + a + ">" + b + "|" +
                         std::to_string(zi) + "|" + it.tag + ";";
      run(i + 1, std::move(n), std::move(zc), acc + line);
    };
    bool both_new = !names.count(it.label.v) && !names.count(it.label.w) &&
                    it.label.v != it.label.w;
    if (rs.is_undirected(it.color) && both_new) {
      emit(it.label.v, it.label.w);
      emit(it.label.w, it.label.v);
    } else {
      emit(it.label.v, it.label.w);
    }
  }
};

void flatten(const Branch& b, std::vector<LabeledItem>& out) {
  out.push_back({b.color, b.label, std::to_string(b.children.size())});
  for (const auto& c : b.children) flatten(c, out);
}

}  // namespace

std::string canonical_label_sequence(const std::vector<LabeledItem>& items,
                                     const ReplacementSystem& rs) {
  SequenceEncoder enc{rs, items};
  enc.run(0, {}, {}, "");
  return enc.best;
}

std::string forest_encoding(const Forest& f, const ReplacementSystem& rs) {
  std::vector<LabeledItem> items;
  for (const auto& r : f.roots) flatten(r, items);
  return canonical_label_sequence(items, rs);
}

std::string pair_encoding(const ForestPairDiagram& p,
                          const ReplacementSystem& rs) {
  std::vector<LabeledItem> items;
  for (const auto& r : p.domain.roots) flatten(r, items);
  items.push_back({"", {"", "", ""}, "#"});
  for (const auto& r : p.range.roots) flatten(r, items);
  return canonical_label_sequence(items, rs);
}

namespace {

int leaf_index_of(const Forest& f, const BranchPath& p) {
  auto ls = f.leaves();
  for (int i = 0; i < (int)ls.size(); ++i)
    if (ls[i] == p) return i;
  return -1;
}

// Recomputes the labels of a range forest bottom-up after its leaves were
// overwritten with the paired domain labels: each internal branch's label is
// solved from its children through the rule template.
void relabel_upward(Branch& b, const ReplacementSystem& rs) {
  if (b.is_leaf()) return;
  for (auto& c : b.children) relabel_upward(c, rs);
  const ReplacementRule& rule = rs.rule(b.color);
  std::map<Symbol, Symbol> sub;
  if (!solve_slots(rule, family_of(b), rs, {}, 0, &sub))
    throw std::invalid_argument(
        "element load: leaf pairing is not a graph isomorphism (family of " +
        label_str(b) + " is inconsistent)");
  if (!sub.count(rule.initial) || !sub.count(rule.terminal))
    throw std::invalid_argument(
        "element load: rule endpoints undetermined for " + label_str(b));
  b.label.v = sub[rule.initial];
  b.label.w = sub[rule.terminal];
  b.label = normalized_label(b.label, b.color, rs);
}

}  // namespace

std::string element_to_json(const ForestPairDiagram& p,
                            const ReplacementSystem& rs,
                            const std::string& system_name) {
  nlohmann::json j;
  if (system_name.empty())
    j["system"] = nlohmann::json::parse(system_to_json(rs));
  else
    j["system"] = system_name;
  auto paths = [](const Forest& f) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : f.internal_paths()) a.push_back(p);
    return a;
  };
  j["domain"] = paths(p.domain);
  j["range"] = paths(p.range);
  nlohmann::json lm = nlohmann::json::array();
  auto rleaves = p.range.leaves();
  for (const auto& dp : p.domain.leaves()) {
    const Branch* d = p.domain.find(dp);
    for (int ri = 0; ri < (int)rleaves.size(); ++ri) {
      const Branch* r = p.range.find(rleaves[ri]);
      if (r->color == d->color && r->label == d->label) {
        lm.push_back({leaf_index_of(p.domain, dp), ri});
        break;
      }
    }
  }
  j["leaf_map"] = lm;
  return j.dump(2);
}

ForestPairDiagram element_from_json(const std::string& text,
                                    const ReplacementSystem& rs) {
  auto j = nlohmann::json::parse(text);
  auto build = [&](const char* key, const char* prefix) {
    FreshSupply fresh(prefix);
    Forest f = base_forest(rs);
    for (const auto& jp : j.at(key)) {
      BranchPath path = jp.get<BranchPath>();
      Branch* b = f.find(path);
      if (!b)
        throw std::invalid_argument(std::string("element load: bad path in ") +
                                    key);
      if (b->is_leaf()) f = expand_branch(f, path, rs, fresh);
    }
    return f;
  };
  Forest domain = build("domain", "d");
  Forest range = build("range", "r");

  auto dleaves = domain.leaves();
  auto rleaves = range.leaves();
  if (dleaves.size() != rleaves.size())
    throw std::invalid_argument("element load: leaf counts differ");
  int n = (int)dleaves.size();
  std::vector<int> sigma(n);  // domain leaf ordinal -> range leaf ordinal
  if (j.contains("leaf_map") && !j.at("leaf_map").is_null()) {
    std::vector<bool> used(n, false);
    std::vector<bool> set(n, false);
    for (const auto& pr : j.at("leaf_map")) {
      int a = pr.at(0).get<int>();
      int b = pr.at(1).get<int>();
      if (a < 0 || a >= n || b < 0 || b >= n || used[b] || set[a])
        throw std::invalid_argument("element load: leaf_map is not a bijection");
      sigma[a] = b;
      used[b] = true;
      set[a] = true;
    }
    for (int i = 0; i < n; ++i)
      if (!set[i])
        throw std::invalid_argument("element load: leaf_map is incomplete");
  } else {
    for (int i = 0; i < n; ++i) sigma[i] = i;
  }

  // Range convention: overwrite each range leaf with its partner's label,
  // then solve internal labels bottom-up.
  for (int i = 0; i < n; ++i) {
    const Branch* d = domain.find(dleaves[i]);
    Branch* r = range.find(rleaves[sigma[i]]);
    if (r->color != d->color)
      throw std::invalid_argument(
          "element load: leaf_map pairs branches of different colors");
    r->label = d->label;
  }
  for (auto& root : range.roots) relabel_upward(root, rs);
  // Root parallel indices: renumber per class in root order.
  std::map<std::tuple<Symbol, Symbol, Color>, int> rclass;
  for (auto& root : range.roots) {
    int k = ++rclass[{root.label.v, root.label.w, root.color}];
    root.label.z = std::to_string(k);
  }

  auto vr = validate_forest(range, rs);
  if (!vr.ok())
    throw std::invalid_argument("element load: invalid range forest: " +
                                vr.issues[0].what);
  return make_pair(domain, range, rs);
}

std::optional<std::string> element_system_field(const std::string& text,
                                                bool* is_inline) {
  auto j = nlohmann::json::parse(text);
  if (!j.contains("system")) return std::nullopt;
  if (j.at("system").is_string()) {
    if (is_inline) *is_inline = false;
    return j.at("system").get<std::string>();
  }
  if (is_inline) *is_inline = true;
  return j.at("system").dump();
}

}  // namespace strandlab
