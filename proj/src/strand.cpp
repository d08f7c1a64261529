#include "strandlab/strand.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "json.hpp"
#include "strand_internal.hpp"

namespace strandlab {

namespace detail {

int add_node(StrandDiagram& sd, NodeKind k) {
  sd.nodes.push_back({k, {}, {}});
  return (int)sd.nodes.size() - 1;
}

// Creates a strand hanging off `from` (appended to its rotation order); the
// destination is attached later.
int add_strand(StrandDiagram& sd, int from, const Color& c,
               const BranchLabel& l) {
  sd.strands.push_back({from, -1, c, l});
  int id = (int)sd.strands.size() - 1;
  if (from >= 0) sd.nodes[from].outs.push_back(id);
  return id;
}

void attach_to(StrandDiagram& sd, int strand, int node) {
  sd.strands[strand].to = node;
  sd.nodes[node].ins.push_back(strand);
}

NodeKind kind_of(const StrandDiagram& sd, int strand_end) {
  return sd.nodes[strand_end].kind;
}

// Drops marked nodes/strands and renumbers everything else, preserving
// rotation and boundary orders.
StrandDiagram repack(const StrandDiagram& sd, const std::vector<char>& dn,
                     const std::vector<char>& ds, std::vector<int>* nmap_out,
                     std::vector<int>* smap_out) {
  StrandDiagram out;
  std::vector<int> nmap(sd.nodes.size(), -1), smap(sd.strands.size(), -1);
  for (int i = 0; i < (int)sd.nodes.size(); ++i)
    if (!dn[i]) {
      nmap[i] = (int)out.nodes.size();
      out.nodes.push_back({sd.nodes[i].kind, {}, {}});
    }
  for (int i = 0; i < (int)sd.strands.size(); ++i)
    if (!ds[i]) {
      smap[i] = (int)out.strands.size();
      Strand s = sd.strands[i];
      s.from = nmap[s.from];
      s.to = nmap[s.to];
      out.strands.push_back(std::move(s));
    }
  for (int i = 0; i < (int)sd.nodes.size(); ++i) {
    if (dn[i]) continue;
    for (int s : sd.nodes[i].ins)
      if (!ds[s]) out.nodes[nmap[i]].ins.push_back(smap[s]);
    for (int s : sd.nodes[i].outs)
      if (!ds[s]) out.nodes[nmap[i]].outs.push_back(smap[s]);
  }
  for (int n : sd.sources) out.sources.push_back(nmap[n]);
  for (int n : sd.sinks) out.sinks.push_back(nmap[n]);
  if (nmap_out) *nmap_out = std::move(nmap);
  if (smap_out) *smap_out = std::move(smap);
  return out;
}

std::vector<std::pair<Color, BranchLabel>> labels_of(
    const StrandDiagram& sd, const std::vector<int>& strand_ids) {
  std::vector<std::pair<Color, BranchLabel>> out;
  for (int s : strand_ids)
    out.push_back({sd.strands[s].color, sd.strands[s].label});
  return out;
}

}  // namespace detail

namespace {

using detail::add_node;
using detail::add_strand;
using detail::attach_to;
using detail::elementary;
using detail::kind_of;
using detail::labels_of;
using detail::repack;
using detail::traversal_order;

using LeafKey = std::tuple<Color, Symbol, Symbol, Symbol>;

LeafKey key_of(const Color& c, const BranchLabel& l) {
  return {c, l.v, l.w, l.z};
}

}  // namespace

StrandDiagram identity_diagram(const ReplacementSystem& rs) {
  StrandDiagram sd;
  for (const auto& r : base_forest(rs).roots) {
    int src = add_node(sd, NodeKind::Source);
    int s = add_strand(sd, src, r.color, r.label);
    int snk = add_node(sd, NodeKind::Sink);
    attach_to(sd, s, snk);
    sd.sources.push_back(src);
    sd.sinks.push_back(snk);
  }
  return sd;
}

namespace {

void build_down(StrandDiagram& sd, const Branch& b, int from_node,
                std::map<LeafKey, int>& leaf_strands) {
  int s = add_strand(sd, from_node, b.color, b.label);
  if (b.is_leaf()) {
    if (!leaf_strands.emplace(key_of(b.color, b.label), s).second)
      throw std::invalid_argument(
          "from_forest_pair: duplicate domain leaf label (" + b.label.v + "," +
          b.label.w + "," + b.label.z + ";" + b.color + ")");
    return;
  }
  int sp = add_node(sd, NodeKind::Split);
  attach_to(sd, s, sp);
  for (const auto& c : b.children) build_down(sd, c, sp, leaf_strands);
}

// Returns the strand flowing out of this range subtree's bottom.
int build_up(StrandDiagram& sd, const Branch& b,
             std::map<LeafKey, int>& leaf_strands, std::set<int>& used) {
  if (b.is_leaf()) {
    auto it = leaf_strands.find(key_of(b.color, b.label));
    if (it == leaf_strands.end() || used.count(it->second))
      throw std::invalid_argument(
          "from_forest_pair: no unused domain leaf matches range leaf (" +
          b.label.v + "," + b.label.w + "," + b.label.z + ";" + b.color + ")");
    used.insert(it->second);
    return it->second;
  }
  int m = add_node(sd, NodeKind::Merge);
  for (const auto& c : b.children) {
    int cs = build_up(sd, c, leaf_strands, used);
    attach_to(sd, cs, m);
  }
  return add_strand(sd, m, b.color, b.label);
}

}  // namespace

StrandDiagram from_forest_pair(const ForestPairDiagram& p,
                               const ReplacementSystem& rs) {
  Forest dom = normalize_orientation(p.domain, rs);
  Forest ran = normalize_orientation(p.range, rs);
  StrandDiagram sd;
  std::map<LeafKey, int> leaf_strands;
  for (const auto& r : dom.roots) {
    int src = add_node(sd, NodeKind::Source);
    sd.sources.push_back(src);
    build_down(sd, r, src, leaf_strands);
  }
  std::set<int> used;
  for (const auto& r : ran.roots) {
    int s = build_up(sd, r, leaf_strands, used);
    int snk = add_node(sd, NodeKind::Sink);
    attach_to(sd, s, snk);
    sd.sinks.push_back(snk);
  }
  if (used.size() != leaf_strands.size())
    throw std::invalid_argument("from_forest_pair: unmatched domain leaves");
  return sd;
}

ValidationReport validate_strand(const StrandDiagram& sd) {
  ValidationReport rep;
  int nn = (int)sd.nodes.size(), ns = (int)sd.strands.size();
  for (int i = 0; i < ns; ++i) {
    const Strand& s = sd.strands[i];
    if (s.from < 0 || s.from >= nn || s.to < 0 || s.to >= nn) {
      rep.issues.push_back({"strand " + std::to_string(i) +
                            " has an endpoint out of range"});
      return rep;
    }
  }
  std::vector<int> out_count(ns, 0), in_count(ns, 0);
  for (int n = 0; n < nn; ++n) {
    for (int s : sd.nodes[n].outs) {
      if (s < 0 || s >= ns || sd.strands[s].from != n) {
        rep.issues.push_back({"node " + std::to_string(n) +
                              " lists a strand it does not emit"});
        return rep;
      }
      ++out_count[s];
    }
    for (int s : sd.nodes[n].ins) {
      if (s < 0 || s >= ns || sd.strands[s].to != n) {
        rep.issues.push_back({"node " + std::to_string(n) +
                              " lists a strand it does not absorb"});
        return rep;
      }
      ++in_count[s];
    }
  }
  for (int i = 0; i < ns; ++i)
    if (out_count[i] != 1 || in_count[i] != 1) {
      rep.issues.push_back({"strand " + std::to_string(i) +
                            " is not listed exactly once at each endpoint"});
      return rep;
    }
  for (int n = 0; n < nn; ++n) {
    const StrandNode& node = sd.nodes[n];
    size_t ni = node.ins.size(), no = node.outs.size();
    bool ok = true;
    switch (node.kind) {
      case NodeKind::Source: ok = ni == 0 && no == 1; break;
      case NodeKind::Sink: ok = ni == 1 && no == 0; break;
      case NodeKind::Split: ok = ni == 1 && no >= 2; break;
      case NodeKind::Merge: ok = ni >= 2 && no == 1; break;
    }
    if (!ok)
      rep.issues.push_back({"node " + std::to_string(n) +
                            " has the wrong number of incident strands"});
  }
  auto check_boundary = [&](const std::vector<int>& list, NodeKind k,
                            const char* what) {
    std::set<int> seen;
    for (int n : list)
      if (n < 0 || n >= nn || sd.nodes[n].kind != k || !seen.insert(n).second)
        rep.issues.push_back({std::string(what) + " list is invalid"});
    int total = 0;
    for (int n = 0; n < nn; ++n)
      if (sd.nodes[n].kind == k) ++total;
    if ((int)seen.size() != total)
      rep.issues.push_back({std::string(what) + " list is incomplete"});
  };
  check_boundary(sd.sources, NodeKind::Source, "source");
  check_boundary(sd.sinks, NodeKind::Sink, "sink");
  if (!rep.ok()) return rep;
  // Acyclicity via Kahn's algorithm on nodes.
  std::vector<int> deg(nn, 0);
  for (int n = 0; n < nn; ++n) deg[n] = (int)sd.nodes[n].ins.size();
  std::deque<int> q;
  for (int n = 0; n < nn; ++n)
    if (deg[n] == 0) q.push_back(n);
  int done = 0;
  while (!q.empty()) {
    int n = q.front();
    q.pop_front();
    ++done;
    for (int s : sd.nodes[n].outs)
      if (--deg[sd.strands[s].to] == 0) q.push_back(sd.strands[s].to);
  }
  if (done != nn) rep.issues.push_back({"diagram contains a directed cycle"});
  return rep;
}

ValidationReport validate_r_branching(const StrandDiagram& sd,
                                      const ReplacementSystem& rs) {
  ValidationReport rep = validate_strand(sd);
  if (!rep.ok()) return rep;
  auto label_str = [](const Color& c, const BranchLabel& l) {
    return "(" + l.v + "," + l.w + "," + l.z + ";" + c + ")";
  };
  // Clause (1): every split and merge instantiates its color's rule.
  for (int n = 0; n < (int)sd.nodes.size(); ++n) {
    const StrandNode& node = sd.nodes[n];
    if (node.kind == NodeKind::Split) {
      const Strand& top = sd.strands[node.ins[0]];
      if (!match_rule_family(top.color, top.label, labels_of(sd, node.outs),
                             rs))
        rep.issues.push_back({"clause 1: split below " +
                              label_str(top.color, top.label) +
                              " does not instantiate the rule"});
    } else if (node.kind == NodeKind::Merge) {
      const Strand& bot = sd.strands[node.outs[0]];
      if (!match_rule_family(bot.color, bot.label, labels_of(sd, node.ins),
                             rs))
        rep.issues.push_back({"clause 1: merge above " +
                              label_str(bot.color, bot.label) +
                              " does not instantiate the rule"});
    }
  }
  // Clause (2): at each merge-into-split strand the families agree
  // positionally.
  for (int i = 0; i < (int)sd.strands.size(); ++i) {
    const Strand& s = sd.strands[i];
    if (kind_of(sd, s.from) != NodeKind::Merge ||
        kind_of(sd, s.to) != NodeKind::Split)
      continue;
    auto tops = labels_of(sd, sd.nodes[s.from].ins);
    auto bots = labels_of(sd, sd.nodes[s.to].outs);
    if (tops != bots)
      rep.issues.push_back({"clause 2: mirrored merge and split around " +
                            label_str(s.color, s.label) +
                            " carry different labels"});
  }
  // Clause (3): a symbol generated by two splits (or two merges) forces their
  // branching strands to carry equal labels.
  auto clause3 = [&](bool splits) {
    std::map<Symbol, std::pair<Color, BranchLabel>> origin;
    for (int n = 0; n < (int)sd.nodes.size(); ++n) {
      const StrandNode& node = sd.nodes[n];
      if (node.kind != (splits ? NodeKind::Split : NodeKind::Merge)) continue;
      const Strand& branching =
          sd.strands[splits ? node.ins[0] : node.outs[0]];
      for (int s : (splits ? node.outs : node.ins)) {
        for (const Symbol& v : {sd.strands[s].label.v, sd.strands[s].label.w}) {
          if (v == branching.label.v || v == branching.label.w) continue;
          auto key = std::make_pair(branching.color, branching.label);
          auto it = origin.find(v);
          if (it == origin.end())
            origin.emplace(v, key);
          else if (it->second != key)
            rep.issues.push_back(
                {"clause 3: symbol " + v + " is generated by different " +
                 (splits ? "splits" : "merges") + " with different labels"});
        }
      }
    }
  };
  clause3(true);
  clause3(false);
  return rep;
}

namespace {

struct Redex {
  int type;  // 1 = split atop its mirror merge, 2 = merge feeding a split
  int at;    // type 1: split node id; type 2: strand id
};

// Number of strands carrying exactly this label (parallel-class ties).
int label_count(const StrandDiagram& sd, const Color& c,
                const BranchLabel& l) {
  int n = 0;
  for (const auto& st : sd.strands)
    if (st.color == c && st.label == l) ++n;
  return n;
}

std::vector<Redex> find_strand_redexes(const StrandDiagram& sd) {
  std::vector<Redex> out;
  for (int i = 0; i < (int)sd.strands.size(); ++i) {
    const Strand& s = sd.strands[i];
    NodeKind kf = kind_of(sd, s.from), kt = kind_of(sd, s.to);
    if (kf == NodeKind::Merge && kt == NodeKind::Split) out.push_back({2, i});
    if (kt != NodeKind::Split) continue;
    const StrandNode& sp = sd.nodes[s.to];
    int m = sd.strands[sp.outs[0]].to;
    if (kind_of(sd, m) != NodeKind::Merge) continue;
    if (sd.nodes[m].ins != sp.outs) continue;
    const Strand& bot = sd.strands[sd.nodes[m].outs[0]];
    if (bot.color != s.color) continue;
    if (bot.label == s.label) {
      out.push_back({1, s.to});
    } else if (bot.label.v == s.label.v && bot.label.w == s.label.w) {
      // The pair cancels with differing parallel indices only when at least
      // one index is untied (no other strand of the class carries it);
      // otherwise the diagram genuinely permutes parallel edges.
      if (label_count(sd, s.color, s.label) == 1 ||
          label_count(sd, bot.color, bot.label) == 1)
        out.push_back({1, s.to});
    }
  }
  return out;
}

StrandDiagram apply_redex(const StrandDiagram& sd, const Redex& r) {
  StrandDiagram out = sd;
  std::vector<char> dn(sd.nodes.size(), 0), ds(sd.strands.size(), 0);
  auto rewire = [&](int strand, int old_strand_at_dst, int dst) {
    out.strands[strand].to = dst;
    for (int& in : out.nodes[dst].ins)
      if (in == old_strand_at_dst) in = strand;
  };
  if (r.type == 1) {
    int sp = r.at;
    int top = sd.nodes[sp].ins[0];
    int m = sd.strands[sd.nodes[sp].outs[0]].to;
    int bot = sd.nodes[m].outs[0];
    rewire(top, bot, sd.strands[bot].to);
    if (sd.strands[top].label.z != sd.strands[bot].label.z) {
      // Keep the tied side's index so parallel-class coincidences survive.
      const Strand &ts = sd.strands[top], &bs = sd.strands[bot];
      if (label_count(sd, ts.color, ts.label) == 1 &&
          label_count(sd, bs.color, bs.label) > 1)
        out.strands[top].label.z = bs.label.z;
    }
    dn[sp] = dn[m] = 1;
    for (int s : sd.nodes[sp].outs) ds[s] = 1;
    ds[bot] = 1;
  } else {
    int s = r.at;
    int m = sd.strands[s].from;
    int sp = sd.strands[s].to;
    const auto& tops = sd.nodes[m].ins;
    const auto& bots = sd.nodes[sp].outs;
    if (labels_of(sd, tops) != labels_of(sd, bots))
      throw std::logic_error(
          "reduce: merge and split around a strand mirror each other but "
          "carry different labels (branching clause 2 fails)");
    for (size_t i = 0; i < tops.size(); ++i)
      rewire(tops[i], bots[i], sd.strands[bots[i]].to);
    dn[m] = dn[sp] = 1;
    ds[s] = 1;
    for (int b : bots) ds[b] = 1;
  }
  return repack(out, dn, ds);
}

}  // namespace

bool is_reduced(const StrandDiagram& sd) {
  return find_strand_redexes(sd).empty();
}

StrandDiagram reduce(const StrandDiagram& sd, const ReplacementSystem& rs,
                     std::mt19937* shuffle) {
  (void)rs;
  StrandDiagram cur = sd;
  for (;;) {
    auto redexes = find_strand_redexes(cur);
    if (redexes.empty()) return cur;
    size_t pick = 0;
    if (shuffle) {
      std::uniform_int_distribution<size_t> d(0, redexes.size() - 1);
      pick = d(*shuffle);
    }
    cur = apply_redex(cur, redexes[pick]);
  }
}

StrandDiagram invert(const StrandDiagram& sd) {
  StrandDiagram out = sd;
  for (auto& s : out.strands) std::swap(s.from, s.to);
  for (auto& n : out.nodes) {
    std::swap(n.ins, n.outs);
    switch (n.kind) {
      case NodeKind::Source: n.kind = NodeKind::Sink; break;
      case NodeKind::Sink: n.kind = NodeKind::Source; break;
      case NodeKind::Split: n.kind = NodeKind::Merge; break;
      case NodeKind::Merge: n.kind = NodeKind::Split; break;
    }
  }
  std::swap(out.sources, out.sinks);
  return out;
}

namespace detail {

// Deterministic node order: breadth-first from the ordered sources, following
// rotation order.  Returns strand visit order; node ids via node_order.
std::vector<int> traversal_order(const StrandDiagram& sd,
                                 std::vector<int>* node_order_out) {
  std::vector<int> node_id(sd.nodes.size(), -1);
  std::vector<int> order;
  std::vector<char> seen(sd.strands.size(), 0);
  std::deque<int> q;
  int next = 0;
  for (int src : sd.sources) {
    node_id[src] = next++;
    for (int s : sd.nodes[src].outs) q.push_back(s);
  }
  while (!q.empty()) {
    int s = q.front();
    q.pop_front();
    if (seen[s]) continue;
    seen[s] = 1;
    order.push_back(s);
    int n = sd.strands[s].to;
    if (node_id[n] == -1) {
      node_id[n] = next++;
      for (int o : sd.nodes[n].outs) q.push_back(o);
    }
  }
  if (node_order_out) *node_order_out = node_id;
  return order;
}

// Binds f-boundary labels to g-boundary labels position by position,
// backtracking over the endpoint order of undirected labels.  rho must end up
// injective (the boundary renaming is a graph isomorphism).
bool bind_boundary(const std::vector<const Strand*>& fs,
                   const std::vector<const Strand*>& gs,
                   const ReplacementSystem& rs, size_t i,
                   std::map<Symbol, Symbol> rho,
                   std::map<Symbol, Symbol> rho_inv,
                   std::map<std::tuple<Symbol, Symbol, Color, Symbol>, Symbol>
                       rho_z,
                   std::map<Symbol, Symbol>* out,
                   std::map<std::tuple<Symbol, Symbol, Color, Symbol>,
                            Symbol>* out_z) {
  if (i == fs.size()) {
    *out = rho;
    *out_z = rho_z;
    return true;
  }
  if (fs[i]->color != gs[i]->color) return false;
  const Color& c = fs[i]->color;
  auto attempt = [&](const Symbol& fv, const Symbol& fw) {
    auto r = rho;
    auto ri = rho_inv;
    auto rz = rho_z;
    auto bind = [&](const Symbol& a, const Symbol& b) {
      auto it = r.find(a);
      if (it != r.end()) return it->second == b;
      auto jt = ri.find(b);
      if (jt != ri.end()) return false;  // not injective
      r.emplace(a, b);
      ri.emplace(b, a);
      return true;
    };
    if (!bind(fv, gs[i]->label.v) || !bind(fw, gs[i]->label.w)) return false;
    BranchLabel renamed{r.at(fs[i]->label.v), r.at(fs[i]->label.w), ""};
    renamed = normalized_label(renamed, c, rs);
    auto zkey = std::make_tuple(renamed.v, renamed.w, c, fs[i]->label.z);
    auto it = rz.find(zkey);
    if (it != rz.end()) {
      if (it->second != gs[i]->label.z) return false;
    } else {
      rz.emplace(zkey, gs[i]->label.z);
    }
    return bind_boundary(fs, gs, rs, i + 1, std::move(r), std::move(ri),
                         std::move(rz), out, out_z);
  };
  if (attempt(fs[i]->label.v, fs[i]->label.w)) return true;
  if (rs.is_undirected(c) && fs[i]->label.v != fs[i]->label.w)
    return attempt(fs[i]->label.w, fs[i]->label.v);
  return false;
}

}  // namespace detail

namespace {
using detail::bind_boundary;
}  // namespace

StrandDiagram compose(const StrandDiagram& f0, const StrandDiagram& g0,
                      const ReplacementSystem& rs) {
  return compose(f0, g0, rs, nullptr);
}

StrandDiagram compose(const StrandDiagram& f0, const StrandDiagram& g0,
                      const ReplacementSystem& rs, ComposeTrace* trace) {
  StrandDiagram fc = reduce(f0, rs);
  StrandDiagram g = reduce(g0, rs);
  if (fc.sources.size() != g.sinks.size())
    throw std::invalid_argument(
        "compose: boundary sizes differ (" +
        std::to_string(g.sinks.size()) + " sinks vs " +
        std::to_string(fc.sources.size()) + " sources)");

  // Requirement: a renaming takes f's source sequence to g's sink sequence.
  std::vector<const Strand*> fsrc, gsnk;
  for (int n : fc.sources) fsrc.push_back(&fc.strands[fc.nodes[n].outs[0]]);
  for (int n : g.sinks) gsnk.push_back(&g.strands[g.nodes[n].ins[0]]);
  std::map<Symbol, Symbol> rho;
  std::map<std::tuple<Symbol, Symbol, Color, Symbol>, Symbol> rho_z;
  if (!bind_boundary(fsrc, gsnk, rs, 0, {}, {}, {}, &rho, &rho_z))
    throw std::invalid_argument(
        "compose: boundary labels do not match up to renaming");

  // Fresh symbols must avoid everything already in g's namespace.
  std::set<Symbol> used, used_z;
  for (const auto& s : g.strands) {
    used.insert(s.label.v);
    used.insert(s.label.w);
    used_z.insert(s.label.z);
  }
  FreshSupply vsupply("q"), zsupply("qz");
  auto fresh_v = [&] {
    Symbol s;
    do s = vsupply.next();
    while (used.count(s));
    used.insert(s);
    return s;
  };
  auto fresh_z = [&] {
    Symbol s;
    do s = zsupply.next();
    while (used_z.count(s));
    used_z.insert(s);
    return s;
  };

  // Index g's merges by the color and label of their branching strand.
  std::map<std::pair<Color, BranchLabel>, int> gmerge;
  for (int n = 0; n < (int)g.nodes.size(); ++n)
    if (g.nodes[n].kind == NodeKind::Merge) {
      const Strand& bot = g.strands[g.nodes[n].outs[0]];
      gmerge.emplace(std::make_pair(bot.color, bot.label), n);
    }

  // Rename f's splits top-down: when a split continues a family that a merge
  // of g contracted, reuse the merge's symbols; otherwise use fresh ones.
  std::vector<int> node_order;
  std::vector<int> strand_order = traversal_order(fc, &node_order);
  for (int sid : strand_order) {
    int n = fc.strands[sid].to;
    if (fc.nodes[n].kind != NodeKind::Split || fc.nodes[n].ins[0] != sid)
      continue;
    const Strand& top = fc.strands[sid];
    BranchLabel rtop{rho.at(top.label.v), rho.at(top.label.w), ""};
    rtop = normalized_label(rtop, top.color, rs);
    auto zit = rho_z.find({rtop.v, rtop.w, top.color, top.label.z});
    bool matched = false;
    if (zit != rho_z.end()) {
      rtop.z = zit->second;
      auto mit = gmerge.find(std::make_pair(top.color, rtop));
      if (mit != gmerge.end()) {
        const auto& mins = g.nodes[mit->second].ins;
        // Positional binding of the split's out labels to the merge's in
        // labels; when the undirected orientations disagree, retry with the
        // swap automorphism's slot permutation and reorder the split.
        auto try_bind = [&](const std::vector<int>& outs) {
          std::vector<const Strand*> fb, gt;
          for (int s : outs) fb.push_back(&fc.strands[s]);
          for (int s : mins) gt.push_back(&g.strands[s]);
          if (fb.size() != gt.size()) return false;
          // Reuse the boundary binder but without the injectivity
          // requirement: interior substitutions need not be injective, so
          // track only consistency.
          std::map<Symbol, Symbol> r = rho;
          auto rz = rho_z;
          for (size_t i = 0; i < fb.size(); ++i) {
            if (fb[i]->color != gt[i]->color) return false;
            auto bind = [&](const Symbol& a, const Symbol& b) {
              auto it = r.find(a);
              if (it != r.end()) return it->second == b;
              r.emplace(a, b);
              return true;
            };
            auto rcopy = r;
            if (!bind(fb[i]->label.v, gt[i]->label.v) ||
                !bind(fb[i]->label.w, gt[i]->label.w)) {
              r = rcopy;
              if (!rs.is_undirected(fb[i]->color) ||
                  fb[i]->label.v == fb[i]->label.w)
                return false;
              if (!bind(fb[i]->label.v, gt[i]->label.w) ||
                  !bind(fb[i]->label.w, gt[i]->label.v))
                return false;
            }
            BranchLabel rl{r.at(fb[i]->label.v), r.at(fb[i]->label.w), ""};
            rl = normalized_label(rl, fb[i]->color, rs);
            auto zk = std::make_tuple(rl.v, rl.w, fb[i]->color,
                                      fb[i]->label.z);
            auto it = rz.find(zk);
            if (it != rz.end()) {
              if (it->second != gt[i]->label.z) return false;
            } else {
              rz.emplace(zk, gt[i]->label.z);
            }
          }
          rho = std::move(r);
          rho_z = std::move(rz);
          return true;
        };
        if (try_bind(fc.nodes[n].outs)) {
          matched = true;
        } else if (rs.is_undirected(top.color)) {
          auto pi = swap_slot_permutation(rs.rule(top.color),
                                          rs.undirected_swaps.at(top.color));
          std::vector<int> permuted(fc.nodes[n].outs.size());
          for (size_t i = 0; i < permuted.size(); ++i)
            permuted[i] = fc.nodes[n].outs[pi[i]];
          if (try_bind(permuted)) {
            fc.nodes[n].outs = permuted;
            matched = true;
          }
        }
      }
    }
    if (!matched) {
      for (int s : fc.nodes[n].outs) {
        const Strand& b = fc.strands[s];
        for (const Symbol& v : {b.label.v, b.label.w})
          if (!rho.count(v)) rho.emplace(v, fresh_v());
        BranchLabel rl{rho.at(b.label.v), rho.at(b.label.w), ""};
        rl = normalized_label(rl, b.color, rs);
        auto zk = std::make_tuple(rl.v, rl.w, b.color, b.label.z);
        if (!rho_z.count(zk)) rho_z.emplace(zk, fresh_z());
      }
    }
  }

  // Rewrite all of f; every vertex symbol below the splits already appears at
  // or above them, so rho is total.
  for (auto& s : fc.strands) {
    auto iv = rho.find(s.label.v);
    auto iw = rho.find(s.label.w);
    if (iv == rho.end() || iw == rho.end())
      throw std::logic_error("compose: renaming left a symbol unbound");
    BranchLabel rl{iv->second, iw->second, ""};
    rl = normalized_label(rl, s.color, rs);
    auto zk = std::make_tuple(rl.v, rl.w, s.color, s.label.z);
    auto iz = rho_z.find(zk);
    // Only merge bottoms reach here unbound (split tops and outs are all
    // recorded above).  Their index is kept: a fresh one would detach the
    // strand from the mirror split it may cancel against.
    if (iz == rho_z.end()) iz = rho_z.emplace(zk, s.label.z).first;
    rl.z = iz->second;
    s.label = rl;
  }
  if (trace) trace->renaming = rho;

  // Glue g's sinks to f's sources in order.
  StrandDiagram h = g;
  int noff = (int)h.nodes.size(), soff = (int)h.strands.size();
  for (const auto& node : fc.nodes) {
    StrandNode nn = node;
    for (int& s : nn.ins) s += soff;
    for (int& s : nn.outs) s += soff;
    h.nodes.push_back(std::move(nn));
  }
  for (const auto& s : fc.strands) {
    Strand ss = s;
    ss.from += noff;
    ss.to += noff;
    h.strands.push_back(std::move(ss));
  }
  std::vector<char> dn(h.nodes.size(), 0), ds(h.strands.size(), 0);
  for (size_t i = 0; i < g.sinks.size(); ++i) {
    int snk = g.sinks[i];
    int gs = h.nodes[snk].ins[0];
    int srcn = fc.sources[i] + noff;
    int fs = h.nodes[srcn].outs[0];
    if (h.strands[gs].color != h.strands[fs].color ||
        h.strands[gs].label != h.strands[fs].label)
      throw std::logic_error("compose: glued strands carry different labels");
    int dst = h.strands[fs].to;
    h.strands[gs].to = dst;
    for (int& in : h.nodes[dst].ins)
      if (in == fs) in = gs;
    dn[snk] = dn[srcn] = 1;
    ds[fs] = 1;
  }
  h.sinks.clear();
  for (int n : fc.sinks) h.sinks.push_back(n + noff);
  return reduce(repack(h, dn, ds), rs);
}

namespace {

// cut[s] holds when every path above s passes only splits and every path
// below passes only merges.
std::vector<char> cut_strands(const StrandDiagram& sd) {
  int ns = (int)sd.strands.size();
  std::vector<int> above(ns, -1), below(ns, -1);
  std::function<bool(int)> ok_above = [&](int s) -> bool {
    if (above[s] != -1) return above[s] != 0;
    const StrandNode& n = sd.nodes[sd.strands[s].from];
    bool ok = n.kind == NodeKind::Source ||
              (n.kind == NodeKind::Split && ok_above(n.ins[0]));
    above[s] = ok ? 1 : 0;
    return ok;
  };
  std::function<bool(int)> ok_below = [&](int s) -> bool {
    if (below[s] != -1) return below[s] != 0;
    const StrandNode& n = sd.nodes[sd.strands[s].to];
    bool ok = n.kind == NodeKind::Sink ||
              (n.kind == NodeKind::Merge && ok_below(n.outs[0]));
    below[s] = ok ? 1 : 0;
    return ok;
  };
  std::vector<char> cut(ns, 0);
  for (int s = 0; s < ns; ++s) cut[s] = ok_above(s) && ok_below(s);
  return cut;
}

}  // namespace

ForestPairDiagram cut(const StrandDiagram& sd, const ReplacementSystem& rs) {
  (void)rs;
  if (!is_reduced(sd))
    throw std::invalid_argument("cut: diagram is not reduced");
  std::vector<char> is_cut = cut_strands(sd);
  std::function<Branch(int)> down = [&](int s) -> Branch {
    const Strand& st = sd.strands[s];
    Branch b{st.color, st.label, {}};
    if (is_cut[s]) return b;
    const StrandNode& n = sd.nodes[st.to];
    if (n.kind != NodeKind::Split)
      throw std::logic_error("cut: strand below the split layer is not cut");
    for (int o : n.outs) b.children.push_back(down(o));
    return b;
  };
  std::function<Branch(int)> up = [&](int s) -> Branch {
    const Strand& st = sd.strands[s];
    Branch b{st.color, st.label, {}};
    if (is_cut[s]) return b;
    const StrandNode& n = sd.nodes[st.from];
    if (n.kind != NodeKind::Merge)
      throw std::logic_error("cut: strand above the merge layer is not cut");
    for (int i : n.ins) b.children.push_back(up(i));
    return b;
  };
  ForestPairDiagram out;
  for (int src : sd.sources)
    out.domain.roots.push_back(down(sd.nodes[src].outs[0]));
  for (int snk : sd.sinks)
    out.range.roots.push_back(up(sd.nodes[snk].ins[0]));
  return out;
}

namespace detail {

// Elementary diagram: straight strands for every boundary position except
// `pos`, which carries a single split (splitting ? top at pos, outs below) or
// merge (ins above, bottom at pos).
StrandDiagram elementary(const std::vector<std::pair<Color, BranchLabel>>& thin,
                         int pos,
                         const std::vector<std::pair<Color, BranchLabel>>& fat,
                         bool splitting) {
  StrandDiagram d;
  for (int i = 0; i < (int)thin.size(); ++i) {
    if (i != pos) {
      int src = add_node(d, NodeKind::Source);
      d.sources.push_back(src);
      int s = add_strand(d, src, thin[i].first, thin[i].second);
      int snk = add_node(d, NodeKind::Sink);
      attach_to(d, s, snk);
      d.sinks.push_back(snk);
      continue;
    }
    if (splitting) {
      int src = add_node(d, NodeKind::Source);
      d.sources.push_back(src);
      int top = add_strand(d, src, thin[i].first, thin[i].second);
      int sp = add_node(d, NodeKind::Split);
      attach_to(d, top, sp);
      for (const auto& [c, l] : fat) {
        int s = add_strand(d, sp, c, l);
        int snk = add_node(d, NodeKind::Sink);
        attach_to(d, s, snk);
        d.sinks.push_back(snk);
      }
    } else {
      int m = add_node(d, NodeKind::Merge);
      for (const auto& [c, l] : fat) {
        int src = add_node(d, NodeKind::Source);
        d.sources.push_back(src);
        int s = add_strand(d, src, c, l);
        attach_to(d, s, m);
      }
      int bot = add_strand(d, m, thin[i].first, thin[i].second);
      int snk = add_node(d, NodeKind::Sink);
      attach_to(d, bot, snk);
      d.sinks.push_back(snk);
    }
  }
  return d;
}

}  // namespace detail

MPSFactorization mps_factorize(const StrandDiagram& sd,
                               const ReplacementSystem& rs) {
  if (!is_reduced(sd))
    throw std::invalid_argument("mps_factorize: diagram is not reduced");
  MPSFactorization out;
  // Peel splits from the sources downward.
  std::vector<int> frontier;
  for (int src : sd.sources) frontier.push_back(sd.nodes[src].outs[0]);
  for (;;) {
    int pos = -1;
    for (int i = 0; i < (int)frontier.size(); ++i)
      if (kind_of(sd, sd.strands[frontier[i]].to) == NodeKind::Split) {
        pos = i;
        break;
      }
    if (pos < 0) break;
    const StrandNode& sp = sd.nodes[sd.strands[frontier[pos]].to];
    out.splits.push_back(elementary(labels_of(sd, frontier), pos,
                                    labels_of(sd, sp.outs), true));
    std::vector<int> next(frontier.begin(), frontier.begin() + pos);
    next.insert(next.end(), sp.outs.begin(), sp.outs.end());
    next.insert(next.end(), frontier.begin() + pos + 1, frontier.end());
    frontier = std::move(next);
  }
  std::vector<int> top_order = frontier;
  // Peel merges from the sinks upward; the factors come out bottom-to-top.
  frontier.clear();
  for (int snk : sd.sinks) frontier.push_back(sd.nodes[snk].ins[0]);
  for (;;) {
    int pos = -1;
    for (int i = 0; i < (int)frontier.size(); ++i)
      if (kind_of(sd, sd.strands[frontier[i]].from) == NodeKind::Merge) {
        pos = i;
        break;
      }
    if (pos < 0) break;
    const StrandNode& m = sd.nodes[sd.strands[frontier[pos]].from];
    out.merges.push_back(elementary(labels_of(sd, frontier), pos,
                                    labels_of(sd, m.ins), false));
    std::vector<int> next(frontier.begin(), frontier.begin() + pos);
    next.insert(next.end(), m.ins.begin(), m.ins.end());
    next.insert(next.end(), frontier.begin() + pos + 1, frontier.end());
    frontier = std::move(next);
  }
  std::reverse(out.merges.begin(), out.merges.end());
  // The permutation diagram links the cut strands' top order to their bottom
  // order.
  std::map<int, int> bottom_pos;
  for (int i = 0; i < (int)frontier.size(); ++i) bottom_pos[frontier[i]] = i;
  StrandDiagram& p = out.permutation;
  std::vector<int> sink_nodes(frontier.size());
  for (size_t i = 0; i < frontier.size(); ++i)
    sink_nodes[i] = add_node(p, NodeKind::Sink);
  for (int s : top_order) {
    int src = add_node(p, NodeKind::Source);
    p.sources.push_back(src);
    int id = add_strand(p, src, sd.strands[s].color, sd.strands[s].label);
    attach_to(p, id, sink_nodes[bottom_pos.at(s)]);
  }
  p.sinks = sink_nodes;
  return out;
}

std::string strand_encoding(const StrandDiagram& sd,
                            const ReplacementSystem& rs) {
  std::vector<int> node_id;
  std::vector<int> order = traversal_order(sd, &node_id);
  auto kind_char = [&](int n) {
    switch (sd.nodes[n].kind) {
      case NodeKind::Source: return 'o';
      case NodeKind::Sink: return 'k';
      case NodeKind::Split: return 's';
      case NodeKind::Merge: return 'm';
    }
    return '?';
  };
  auto pos_in = [](const std::vector<int>& v, int x) {
    for (int i = 0; i < (int)v.size(); ++i)
      if (v[i] == x) return i;
    return -1;
  };
  std::vector<LabeledItem> items;
  for (size_t i = 0; i < order.size(); ++i) {
    int s = order[i];
    const Strand& st = sd.strands[s];
    std::string tag = std::to_string(node_id[st.from]) + kind_char(st.from) +
                      "." + std::to_string(pos_in(sd.nodes[st.from].outs, s)) +
                      ">" + std::to_string(node_id[st.to]) + kind_char(st.to) +
                      "." + std::to_string(pos_in(sd.nodes[st.to].ins, s));
    items.push_back({st.color, st.label, tag});
  }
  std::string sink_tag = "sinks";
  for (int snk : sd.sinks) sink_tag += ":" + std::to_string(node_id[snk]);
  items.push_back({"", {"", "", ""}, sink_tag});
  return canonical_label_sequence(items, rs);
}

namespace {

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Source: return "source";
    case NodeKind::Sink: return "sink";
    case NodeKind::Split: return "split";
    case NodeKind::Merge: return "merge";
  }
  return "?";
}

NodeKind kind_from_name(const std::string& s) {
  if (s == "source") return NodeKind::Source;
  if (s == "sink") return NodeKind::Sink;
  if (s == "split") return NodeKind::Split;
  if (s == "merge") return NodeKind::Merge;
  throw std::invalid_argument("diagram load: unknown node kind " + s);
}

}  // namespace

std::string diagram_to_json(const StrandDiagram& sd) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : sd.nodes)
    j["nodes"].push_back(
        {{"kind", kind_name(n.kind)}, {"ins", n.ins}, {"outs", n.outs}});
  j["strands"] = nlohmann::json::array();
  for (const auto& s : sd.strands)
    j["strands"].push_back({{"from", s.from},
                            {"to", s.to},
                            {"color", s.color},
                            {"label", {s.label.v, s.label.w, s.label.z}}});
  j["sources"] = sd.sources;
  j["sinks"] = sd.sinks;
  return j.dump(2);
}

StrandDiagram diagram_from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  StrandDiagram sd;
  for (const auto& jn : j.at("nodes")) {
    StrandNode n;
    n.kind = kind_from_name(jn.at("kind").get<std::string>());
    n.ins = jn.at("ins").get<std::vector<int>>();
    n.outs = jn.at("outs").get<std::vector<int>>();
    sd.nodes.push_back(std::move(n));
  }
  for (const auto& js : j.at("strands")) {
    Strand s;
    s.from = js.at("from").get<int>();
    s.to = js.at("to").get<int>();
    s.color = js.at("color").get<std::string>();
    auto l = js.at("label");
    s.label = {l.at(0).get<std::string>(), l.at(1).get<std::string>(),
               l.at(2).get<std::string>()};
    sd.strands.push_back(std::move(s));
  }
  sd.sources = j.at("sources").get<std::vector<int>>();
  sd.sinks = j.at("sinks").get<std::vector<int>>();
  auto rep = validate_strand(sd);
  if (!rep.ok())
    throw std::invalid_argument("diagram load: " + rep.issues[0].what);
  return sd;
}

std::string diagram_to_dot(const StrandDiagram& sd) {
  std::string out = "digraph strand {\n  rankdir=TB;\n";
  for (int n = 0; n < (int)sd.nodes.size(); ++n) {
    std::string shape;
    switch (sd.nodes[n].kind) {
      case NodeKind::Source: shape = "invtriangle"; break;
      case NodeKind::Sink: shape = "triangle"; break;
      default: shape = "point"; break;
    }
    out += "  n" + std::to_string(n) + " [shape=" + shape + ",label=\"" +
           kind_name(sd.nodes[n].kind) + std::to_string(n) + "\"];\n";
  }
  for (const auto& s : sd.strands)
    out += "  n" + std::to_string(s.from) + " -> n" + std::to_string(s.to) +
           " [label=\"" + s.color + " (" + s.label.v + "," + s.label.w + "," +
           s.label.z + ")\"];\n";
  out += "}\n";
  return out;
}

}  // namespace strandlab
