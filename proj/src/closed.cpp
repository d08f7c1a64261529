#include "strandlab/closed.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "strand_internal.hpp"

namespace strandlab {

namespace {

using detail::add_node;
using detail::add_strand;
using detail::attach_to;
using detail::bind_boundary;
using detail::elementary;
using detail::labels_of;
using detail::repack;

// Fresh symbols avoiding everything already present in a diagram.
class Freshener {
 public:
  Freshener(const StrandDiagram& sd, std::string prefix)
      : sup_(std::move(prefix)) {
    note(sd);
  }
  void note(const StrandDiagram& sd) {
    for (const auto& s : sd.strands) {
      used_.insert(s.label.v);
      used_.insert(s.label.w);
      used_.insert(s.label.z);
    }
  }
  Symbol next() {
    Symbol s;
    do s = sup_.next();
    while (used_.count(s));
    used_.insert(s);
    return s;
  }

 private:
  std::set<Symbol> used_;
  FreshSupply sup_;
};

int source_strand(const StrandDiagram& sd, int pos) {
  return sd.nodes[sd.sources[pos]].outs[0];
}
int sink_strand(const StrandDiagram& sd, int pos) {
  return sd.nodes[sd.sinks[pos]].ins[0];
}

std::map<Symbol, Symbol> invert_map(const std::map<Symbol, Symbol>& m) {
  std::map<Symbol, Symbol> out;
  for (const auto& [a, b] : m) out.emplace(b, a);
  return out;
}

// Straight diagram over sd's top boundary labels.
StrandDiagram identity_over(const StrandDiagram& sd) {
  StrandDiagram d;
  for (size_t i = 0; i < sd.sources.size(); ++i) {
    const Strand& s = sd.strands[sd.nodes[sd.sources[i]].outs[0]];
    int src = add_node(d, NodeKind::Source);
    d.sources.push_back(src);
    int id = add_strand(d, src, s.color, s.label);
    int snk = add_node(d, NodeKind::Sink);
    attach_to(d, id, snk);
    d.sinks.push_back(snk);
  }
  return d;
}

}  // namespace

std::optional<std::map<Symbol, Symbol>> closure_binding(
    const StrandDiagram& sd, const ReplacementSystem& rs) {
  if (sd.sources.size() != sd.sinks.size()) return std::nullopt;
  std::vector<const Strand*> ins, outs;
  for (int n : sd.sinks) ins.push_back(&sd.strands[sd.nodes[n].ins[0]]);
  for (int n : sd.sources) outs.push_back(&sd.strands[sd.nodes[n].outs[0]]);
  std::map<Symbol, Symbol> rho;
  std::map<std::tuple<Symbol, Symbol, Color, Symbol>, Symbol> rho_z;
  if (!bind_boundary(ins, outs, rs, 0, {}, {}, {}, &rho, &rho_z))
    return std::nullopt;
  return rho;
}

ClosedDiagram close_diagram(const StrandDiagram& sd,
                            const ReplacementSystem& rs) {
  if (sd.sources.size() != sd.sinks.size())
    throw std::invalid_argument("close: source and sink counts differ");
  if (!closure_binding(sd, rs))
    throw std::invalid_argument(
        "close: sink labels do not match source labels up to renaming");
  return ClosedDiagram{sd};
}

const StrandDiagram& open_diagram(const ClosedDiagram& cd) { return cd.open; }

ValidationReport validate_closed(const ClosedDiagram& cd,
                                 const ReplacementSystem& rs) {
  ValidationReport rep = validate_r_branching(cd.open, rs);
  if (cd.open.sources.size() != cd.open.sinks.size())
    rep.issues.push_back({"closed: source and sink counts differ"});
  else if (!closure_binding(cd.open, rs))
    rep.issues.push_back(
        {"closed: no consistent renaming glues the sinks onto the sources"});
  return rep;
}

std::string closed_encoding(const ClosedDiagram& cd,
                            const ReplacementSystem& rs) {
  // The base-point pairing is positional, so the open encoding (which fixes
  // the boundary orders) determines the closed diagram.
  return strand_encoding(cd.open, rs);
}

// ---------------------------------------------------------------------------
// Erased graph and cohomology.

ErasedGraph erase_base_line(const ClosedDiagram& cd) {
  const StrandDiagram& sd = cd.open;
  ErasedGraph g;
  g.node_vertex.assign(sd.nodes.size(), -1);
  for (int n = 0; n < (int)sd.nodes.size(); ++n)
    if (sd.nodes[n].kind == NodeKind::Split ||
        sd.nodes[n].kind == NodeKind::Merge) {
      g.node_vertex[n] = g.vertex_count++;
      g.vertex_node.push_back(n);
    }
  std::map<int, int> sink_pos, src_pos;
  for (int i = 0; i < (int)sd.sinks.size(); ++i) sink_pos[sd.sinks[i]] = i;
  for (int i = 0; i < (int)sd.sources.size(); ++i) src_pos[sd.sources[i]] = i;
  std::vector<char> visited(sd.strands.size(), 0);
  auto walk = [&](int start, int from_vertex, int from_slot) {
    ErasedArc arc;
    arc.from = from_vertex;
    arc.from_slot = from_slot;
    arc.color = sd.strands[start].color;
    int s = start;
    for (;;) {
      visited[s] = 1;
      arc.segments.push_back(s);
      int n = sd.strands[s].to;
      if (sd.nodes[n].kind == NodeKind::Sink) {
        int bp = sink_pos.at(n);
        arc.crossings.push_back(bp);
        s = sd.nodes[sd.sources[bp]].outs[0];
        if (s == start) break;  // free loop closed up
        continue;
      }
      arc.to = g.node_vertex[n];
      for (int k = 0; k < (int)sd.nodes[n].ins.size(); ++k)
        if (sd.nodes[n].ins[k] == s) arc.to_slot = k;
      break;
    }
    g.arcs.push_back(std::move(arc));
  };
  for (int v = 0; v < g.vertex_count; ++v) {
    int n = g.vertex_node[v];
    for (int k = 0; k < (int)sd.nodes[n].outs.size(); ++k)
      walk(sd.nodes[n].outs[k], v, k);
  }
  // Remaining strands form free loops; start each at its least base point.
  for (int i = 0; i < (int)sd.sources.size(); ++i) {
    int s = sd.nodes[sd.sources[i]].outs[0];
    if (!visited[s]) walk(s, -1, -1);
  }
  return g;
}

BaseCochain baseline_cochain(const ErasedGraph& g) {
  BaseCochain c;
  for (const auto& a : g.arcs) c.counts.push_back((int)a.crossings.size());
  return c;
}

BaseCochain baseline_cochain(const ClosedDiagram& cd) {
  return baseline_cochain(erase_base_line(cd));
}

bool cohomologous(const BaseCochain& c1, const BaseCochain& c2,
                  const ErasedGraph& g) {
  if (c1.counts.size() != g.arcs.size() || c2.counts.size() != g.arcs.size())
    throw std::invalid_argument("cohomologous: cochain size mismatch");
  std::vector<int> d(g.arcs.size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = c1.counts[i] - c2.counts[i];
  // delta x (arc) = x[from] - x[to]; free loops admit no change.
  std::vector<std::vector<std::pair<int, int>>> incident(g.vertex_count);
  for (int a = 0; a < (int)g.arcs.size(); ++a) {
    if (g.arcs[a].from < 0) {
      if (d[a] != 0) return false;
      continue;
    }
    incident[g.arcs[a].from].push_back({a, +1});
    incident[g.arcs[a].to].push_back({a, -1});
  }
  std::vector<int> x(g.vertex_count);
  std::vector<char> seen(g.vertex_count, 0);
  for (int v0 = 0; v0 < g.vertex_count; ++v0) {
    if (seen[v0]) continue;
    seen[v0] = 1;
    x[v0] = 0;
    std::deque<int> q{v0};
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (auto [a, sgn] : incident[v]) {
        int u = sgn > 0 ? g.arcs[a].to : g.arcs[a].from;
        // x[from] - x[to] = d[a]
        int xu = sgn > 0 ? x[v] - d[a] : x[v] + d[a];
        if (!seen[u]) {
          seen[u] = 1;
          x[u] = xu;
          q.push_back(u);
        } else if (x[u] != xu) {
          return false;
        }
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Permutations and shifts.

std::pair<ClosedDiagram, TransformationStep> permute(
    const ClosedDiagram& cd, const std::vector<int>& perm,
    const ReplacementSystem& rs) {
  (void)rs;
  const StrandDiagram& sd = cd.open;
  int n = (int)sd.sources.size();
  if ((int)perm.size() != n)
    throw std::invalid_argument("permute: permutation size mismatch");
  std::vector<char> hit(n, 0);
  for (int p : perm) {
    if (p < 0 || p >= n || hit[p])
      throw std::invalid_argument("permute: not a permutation");
    hit[p] = 1;
  }
  ClosedDiagram out{sd};
  for (int i = 0; i < n; ++i) {
    out.open.sources[i] = sd.sources[perm[i]];
    out.open.sinks[i] = sd.sinks[perm[i]];
  }
  TransformationStep step;
  step.kind = StepKind::Permute;
  step.site = "permute base points";
  step.trivial = true;
  for (int i = 0; i < n; ++i) step.trivial = step.trivial && perm[i] == i;
  // Conjugator: top boundary in the new order, bottom in the old order.
  StrandDiagram& h = step.conjugator;
  std::vector<int> sinknodes(n);
  for (int i = 0; i < n; ++i) sinknodes[i] = add_node(h, NodeKind::Sink);
  for (int i = 0; i < n; ++i) {
    const Strand& s = sd.strands[source_strand(sd, perm[i])];
    int src = add_node(h, NodeKind::Source);
    h.sources.push_back(src);
    int id = add_strand(h, src, s.color, s.label);
    attach_to(h, id, sinknodes[perm[i]]);
  }
  h.sinks = sinknodes;
  step.node_map.resize(sd.nodes.size());
  std::iota(step.node_map.begin(), step.node_map.end(), 0);
  return {std::move(out), std::move(step)};
}

namespace {

// Builds the conjugator of a reducing shift: straight strands everywhere
// except at new position `p`, which carries `top_label` splitting (or fat
// strands merging, when `splitting` is false) into the old positions `qs`.
StrandDiagram routed_branch_conjugator(
    const StrandDiagram& before, int p, const std::vector<int>& qs,
    const Color& c, const BranchLabel& top_label,
    const std::vector<std::pair<Color, BranchLabel>>& fat) {
  int n = (int)before.sources.size();
  std::set<int> qset(qs.begin(), qs.end());
  StrandDiagram h;
  std::vector<int> sinknodes(n);
  for (int o = 0; o < n; ++o) sinknodes[o] = add_node(h, NodeKind::Sink);
  for (int o = 0; o < n; ++o) {
    if (o == p) {
      int src = add_node(h, NodeKind::Source);
      h.sources.push_back(src);
      int top = add_strand(h, src, c, top_label);
      int br = add_node(h, NodeKind::Split);
      attach_to(h, top, br);
      for (size_t j = 0; j < qs.size(); ++j) {
        int s = add_strand(h, br, fat[j].first, fat[j].second);
        attach_to(h, s, sinknodes[qs[j]]);
      }
    } else if (qset.count(o)) {
      continue;  // position consumed by the branch
    } else {
      const Strand& s = before.strands[source_strand(before, o)];
      int src = add_node(h, NodeKind::Source);
      h.sources.push_back(src);
      int id = add_strand(h, src, s.color, s.label);
      attach_to(h, id, sinknodes[o]);
    }
  }
  h.sinks = sinknodes;
  return h;
}

}  // namespace

std::pair<ClosedDiagram, TransformationStep> shift(
    const ClosedDiagram& cd, int node, ShiftDirection dir,
    const ReplacementSystem& rs) {
  const StrandDiagram& sd = cd.open;
  if (node < 0 || node >= (int)sd.nodes.size())
    throw std::invalid_argument("shift: node out of range");
  NodeKind kind = sd.nodes[node].kind;
  if (kind != NodeKind::Split && kind != NodeKind::Merge)
    throw std::invalid_argument("shift: node is not a split or a merge");
  auto rho_opt = closure_binding(sd, rs);
  if (!rho_opt) throw std::invalid_argument("shift: diagram is not closed");
  const auto rho = *rho_opt;
  const auto rho_inv = invert_map(rho);
  std::map<int, int> src_pos, snk_pos;
  for (int i = 0; i < (int)sd.sources.size(); ++i) src_pos[sd.sources[i]] = i;
  for (int i = 0; i < (int)sd.sinks.size(); ++i) snk_pos[sd.sinks[i]] = i;

  StrandDiagram w = sd;
  Freshener fr(w, "cv"), frz(w, "cz");
  std::set<int> dead_nodes, dead_strands;
  TransformationStep step;
  int moved_tmp = -1;

  auto family_instantiation = [&](int branch_node, const Strand& thin,
                                  const std::vector<int>& fat_strands) {
    auto inst = match_rule_family(thin.color, thin.label,
                                  labels_of(sd, fat_strands), rs);
    if (!inst)
      throw std::logic_error(
          "shift: branch node does not instantiate its rule");
    (void)branch_node;
    return *inst;
  };
  const ReplacementRule* rule = nullptr;
  {
    // The branching strand fixes the color.
    const Strand& thin =
        kind == NodeKind::Split ? sd.strands[sd.nodes[node].ins[0]]
                                : sd.strands[sd.nodes[node].outs[0]];
    rule = &rs.rule(thin.color);
  }

  if (kind == NodeKind::Split && dir == ShiftDirection::Expanding) {
    int t = sd.nodes[node].ins[0];
    int fn = sd.strands[t].from;
    if (sd.nodes[fn].kind != NodeKind::Source)
      throw std::invalid_argument(
          "shift: expanding past a split needs a base point on its top "
          "strand");
    int i = src_pos.at(fn);
    int u = sink_strand(sd, i);
    if (sd.nodes[sd.strands[u].from].kind == NodeKind::Merge)
      throw std::invalid_argument(
          "shift: a merge feeds the base point; this shift only exists fused "
          "with the Type 2 reduction (use reduce_closed)");
    auto inst = family_instantiation(node, sd.strands[t], sd.nodes[node].outs);
    step.conjugator =
        elementary(labels_of(sd, [&] {
                     std::vector<int> v;
                     for (int p = 0; p < (int)sd.sources.size(); ++p)
                       v.push_back(source_strand(sd, p));
                     return v;
                   }()),
                   i, labels_of(sd, sd.nodes[node].outs), false);
    // Fresh family below the base line, seeded through the closure renaming.
    std::map<Symbol, Symbol> sig2;
    for (const Symbol& vert : rule->graph.vertices())
      sig2[vert] = vert == rule->initial || vert == rule->terminal
                       ? rho_inv.at(inst.substitution.at(vert))
                       : fr.next();
    // Promote the split's bottom strands to base points.
    std::vector<int> new_srcs, new_snks;
    for (int s : sd.nodes[node].outs) {
      int ns = add_node(w, NodeKind::Source);
      w.strands[s].from = ns;
      w.nodes[ns].outs = {s};
      new_srcs.push_back(ns);
    }
    dead_nodes.insert(node);
    dead_strands.insert(t);
    dead_nodes.insert(fn);
    // Re-create the split below the base line.
    int sp2 = add_node(w, NodeKind::Split);
    moved_tmp = sp2;
    w.strands[u].to = sp2;
    w.nodes[sp2].ins = {u};
    dead_nodes.insert(sd.sinks[i]);
    for (const auto& e : rule->edge_order) {
      BranchLabel l{sig2.at(e.from), sig2.at(e.to), frz.next()};
      l = normalized_label(l, e.color, rs);
      int s = add_strand(w, sp2, e.color, l);
      int snk = add_node(w, NodeKind::Sink);
      attach_to(w, s, snk);
      new_snks.push_back(snk);
    }
    std::vector<int> srcs, snks;
    for (int p = 0; p < (int)sd.sources.size(); ++p) {
      if (p == i) {
        srcs.insert(srcs.end(), new_srcs.begin(), new_srcs.end());
        snks.insert(snks.end(), new_snks.begin(), new_snks.end());
      } else {
        srcs.push_back(sd.sources[p]);
        snks.push_back(sd.sinks[p]);
      }
    }
    w.sources = std::move(srcs);
    w.sinks = std::move(snks);
    step.kind = StepKind::ShiftExpand;
    step.site = "expanding shift past a split at base point " +
                std::to_string(i);
  } else if (kind == NodeKind::Split && dir == ShiftDirection::Reducing) {
    int t = sd.nodes[node].ins[0];
    std::vector<int> qs;
    for (int s : sd.nodes[node].outs) {
      int tn = sd.strands[s].to;
      if (sd.nodes[tn].kind != NodeKind::Sink)
        throw std::invalid_argument(
            "shift: reducing past a split needs base points on all its "
            "bottom strands");
      qs.push_back(snk_pos.at(tn));
    }
    auto inst = family_instantiation(node, sd.strands[t], sd.nodes[node].outs);
    int p = qs[0];
    const Color& c = sd.strands[t].color;
    BranchLabel lstar{rho.at(inst.substitution.at(rule->initial)),
                      rho.at(inst.substitution.at(rule->terminal)),
                      frz.next()};
    lstar = normalized_label(lstar, c, rs);
    std::vector<int> Ms;
    for (int q : qs) Ms.push_back(source_strand(sd, q));
    step.conjugator = routed_branch_conjugator(sd, p, qs, c, lstar,
                                               labels_of(sd, Ms));
    // Bottom: the split's top strand runs into a single base point.
    int snk2 = add_node(w, NodeKind::Sink);
    w.strands[t].to = snk2;
    w.nodes[snk2].ins = {t};
    dead_nodes.insert(node);
    for (int s : sd.nodes[node].outs) dead_strands.insert(s);
    for (int q : qs) dead_nodes.insert(sd.sinks[q]);
    // Top: a fresh split re-emits the old outgoing strands.
    int src2 = add_node(w, NodeKind::Source);
    int sstar = add_strand(w, src2, c, lstar);
    int sp2 = add_node(w, NodeKind::Split);
    moved_tmp = sp2;
    attach_to(w, sstar, sp2);
    for (int M : Ms) {
      w.strands[M].from = sp2;
      w.nodes[sp2].outs.push_back(M);
    }
    for (int q : qs) dead_nodes.insert(sd.sources[q]);
    std::set<int> qset(qs.begin(), qs.end());
    std::vector<int> srcs, snks;
    for (int o = 0; o < (int)sd.sources.size(); ++o) {
      if (o == p) {
        srcs.push_back(src2);
        snks.push_back(snk2);
      } else if (!qset.count(o)) {
        srcs.push_back(sd.sources[o]);
        snks.push_back(sd.sinks[o]);
      }
    }
    w.sources = std::move(srcs);
    w.sinks = std::move(snks);
    step.kind = StepKind::ShiftReduce;
    step.site = "reducing shift past a split onto base point " +
                std::to_string(p);
  } else if (kind == NodeKind::Merge && dir == ShiftDirection::Expanding) {
    int b = sd.nodes[node].outs[0];
    int tn = sd.strands[b].to;
    if (sd.nodes[tn].kind != NodeKind::Sink)
      throw std::invalid_argument(
          "shift: expanding past a merge needs a base point on its bottom "
          "strand");
    int i = snk_pos.at(tn);
    int v0 = source_strand(sd, i);
    if (sd.nodes[sd.strands[v0].to].kind == NodeKind::Split)
      throw std::invalid_argument(
          "shift: a split drains the base point; this shift only exists "
          "fused with the Type 2 reduction (use reduce_closed)");
    auto inst = family_instantiation(node, sd.strands[b], sd.nodes[node].ins);
    std::map<Symbol, Symbol> sig2;
    for (const Symbol& vert : rule->graph.vertices())
      sig2[vert] = vert == rule->initial || vert == rule->terminal
                       ? rho.at(inst.substitution.at(vert))
                       : fr.next();
    std::vector<std::pair<Color, BranchLabel>> fat;
    for (const auto& e : rule->edge_order) {
      BranchLabel l{sig2.at(e.from), sig2.at(e.to), frz.next()};
      fat.push_back({e.color, normalized_label(l, e.color, rs)});
    }
    step.conjugator =
        elementary(labels_of(sd, [&] {
                     std::vector<int> v;
                     for (int p = 0; p < (int)sd.sources.size(); ++p)
                       v.push_back(source_strand(sd, p));
                     return v;
                   }()),
                   i, fat, false);
    // Bottom: the merge's in-strands run into base points.
    std::vector<int> new_snks, new_srcs;
    for (int s : sd.nodes[node].ins) {
      int snk = add_node(w, NodeKind::Sink);
      w.strands[s].to = snk;
      w.nodes[snk].ins = {s};
      new_snks.push_back(snk);
    }
    dead_nodes.insert(node);
    dead_strands.insert(b);
    dead_nodes.insert(tn);
    // Top: a fresh merge feeds the old source strand.
    int m2 = add_node(w, NodeKind::Merge);
    moved_tmp = m2;
    for (const auto& [c, l] : fat) {
      int ns = add_node(w, NodeKind::Source);
      int s = add_strand(w, ns, c, l);
      attach_to(w, s, m2);
      new_srcs.push_back(ns);
    }
    w.strands[v0].from = m2;
    w.nodes[m2].outs = {v0};
    dead_nodes.insert(sd.sources[i]);
    std::vector<int> srcs, snks;
    for (int p = 0; p < (int)sd.sources.size(); ++p) {
      if (p == i) {
        srcs.insert(srcs.end(), new_srcs.begin(), new_srcs.end());
        snks.insert(snks.end(), new_snks.begin(), new_snks.end());
      } else {
        srcs.push_back(sd.sources[p]);
        snks.push_back(sd.sinks[p]);
      }
    }
    w.sources = std::move(srcs);
    w.sinks = std::move(snks);
    step.kind = StepKind::ShiftExpand;
    step.site = "expanding shift past a merge at base point " +
                std::to_string(i);
  } else {  // Merge, Reducing
    int b = sd.nodes[node].outs[0];
    std::vector<int> qs;
    for (int s : sd.nodes[node].ins) {
      int fn = sd.strands[s].from;
      if (sd.nodes[fn].kind != NodeKind::Source)
        throw std::invalid_argument(
            "shift: reducing past a merge needs base points on all its top "
            "strands");
      qs.push_back(src_pos.at(fn));
    }
    auto inst = family_instantiation(node, sd.strands[b], sd.nodes[node].ins);
    int p = qs[0];
    const Color& c = sd.strands[b].color;
    step.conjugator = routed_branch_conjugator(
        sd, p, qs, c, sd.strands[b].label,
        labels_of(sd, sd.nodes[node].ins));
    // Top: the merge's bottom strand now leaves a base point.
    int src2 = add_node(w, NodeKind::Source);
    w.strands[b].from = src2;
    w.nodes[src2].outs = {b};
    dead_nodes.insert(node);
    for (int s : sd.nodes[node].ins) dead_strands.insert(s);
    for (int q : qs) dead_nodes.insert(sd.sources[q]);
    // Bottom: a fresh merge contracts the old sink strands.
    int m2 = add_node(w, NodeKind::Merge);
    moved_tmp = m2;
    std::vector<int> Us;
    for (int q : qs) Us.push_back(sink_strand(sd, q));
    for (int U : Us) {
      w.strands[U].to = m2;
      w.nodes[m2].ins.push_back(U);
    }
    BranchLabel tstar{rho_inv.at(inst.substitution.at(rule->initial)),
                      rho_inv.at(inst.substitution.at(rule->terminal)),
                      frz.next()};
    tstar = normalized_label(tstar, c, rs);
    int bstar = add_strand(w, m2, c, tstar);
    int snk2 = add_node(w, NodeKind::Sink);
    attach_to(w, bstar, snk2);
    for (int q : qs) dead_nodes.insert(sd.sinks[q]);
    std::set<int> qset(qs.begin(), qs.end());
    std::vector<int> srcs, snks;
    for (int o = 0; o < (int)sd.sources.size(); ++o) {
      if (o == p) {
        srcs.push_back(src2);
        snks.push_back(snk2);
      } else if (!qset.count(o)) {
        srcs.push_back(sd.sources[o]);
        snks.push_back(sd.sinks[o]);
      }
    }
    w.sources = std::move(srcs);
    w.sinks = std::move(snks);
    step.kind = StepKind::ShiftReduce;
    step.site = "reducing shift past a merge onto base point " +
                std::to_string(p);
  }

  // Repack, dropping what the surgery deleted.
  std::vector<char> dn(w.nodes.size(), 0), ds(w.strands.size(), 0);
  for (int n : dead_nodes) dn[n] = 1;
  for (int s : dead_strands) ds[s] = 1;
  // Also rebuild rotation lists of surviving old endpoints that lost strands:
  // all re-pointed strands had deleted endpoints, so none survive stale, but
  // deleted strands may still sit in surviving nodes' lists.
  for (auto& nd : w.nodes) {
    auto prune = [&](std::vector<int>& v) {
      v.erase(std::remove_if(v.begin(), v.end(),
                             [&](int s) { return ds[s]; }),
              v.end());
    };
    prune(nd.ins);
    prune(nd.outs);
  }
  std::vector<int> nmap;
  ClosedDiagram out{repack(w, dn, ds, &nmap, nullptr)};
  step.node_map.assign(sd.nodes.size(), -1);
  for (int n = 0; n < (int)sd.nodes.size(); ++n) step.node_map[n] = nmap[n];
  step.moved_node = nmap[moved_tmp];
  return {std::move(out), std::move(step)};
}

// ---------------------------------------------------------------------------
// Conjugator arithmetic.

StrandDiagram fold_conjugators(const std::vector<TransformationStep>& steps,
                               const StrandDiagram& before,
                               const ReplacementSystem& rs) {
  StrandDiagram h = identity_over(before);
  for (const auto& s : steps) h = compose(h, s.conjugator, rs);
  return h;
}

// ---------------------------------------------------------------------------
// Type 3 reductions.

namespace {

// Base points whose outgoing strand runs straight into another base point.
struct ThroughMap {
  std::vector<int> succ;       // bp -> next bp, -1 when the strand meets a node
  std::vector<int> out_strand; // bp -> outgoing strand id
};

ThroughMap through_map(const StrandDiagram& sd) {
  ThroughMap t;
  std::map<int, int> snk_pos;
  for (int i = 0; i < (int)sd.sinks.size(); ++i) snk_pos[sd.sinks[i]] = i;
  int n = (int)sd.sources.size();
  t.succ.assign(n, -1);
  t.out_strand.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    int s = sd.nodes[sd.sources[i]].outs[0];
    t.out_strand[i] = s;
    auto it = snk_pos.find(sd.strands[s].to);
    if (it != snk_pos.end()) t.succ[i] = it->second;
  }
  return t;
}

// Matches `bottoms` against a family of template edges: finds a substitution
// template-vertex -> symbol (injective on the aliased vertex set) realizing
// bottoms[j] as tmpl[j].  `alias` folds glued vertices together.
std::optional<std::map<Symbol, Symbol>> match_edge_family(
    const std::vector<ColoredEdge>& tmpl,
    const std::vector<std::pair<Color, BranchLabel>>& bottoms,
    const ReplacementSystem& rs, const std::map<Symbol, Symbol>& alias) {
  if (tmpl.size() != bottoms.size()) return std::nullopt;
  auto key = [&](const Symbol& v) {
    auto it = alias.find(v);
    return it == alias.end() ? v : it->second;
  };
  std::map<Symbol, Symbol> sigma, sigma_inv;
  std::function<bool(size_t)> go = [&](size_t j) -> bool {
    if (j == tmpl.size()) return true;
    if (bottoms[j].first != tmpl[j].color) return false;
    auto attempt = [&](const Symbol& av, const Symbol& aw) -> bool {
      auto sig = sigma;
      auto inv = sigma_inv;
      auto bind = [&](const Symbol& tv, const Symbol& sym) {
        auto it = sig.find(tv);
        if (it != sig.end()) return it->second == sym;
        auto jt = inv.find(sym);
        if (jt != inv.end()) return false;
        sig.emplace(tv, sym);
        inv.emplace(sym, tv);
        return true;
      };
      if (!bind(key(tmpl[j].from), av) || !bind(key(tmpl[j].to), aw))
        return false;
      std::swap(sig, sigma);
      std::swap(inv, sigma_inv);
      if (go(j + 1)) return true;
      std::swap(sig, sigma);
      std::swap(inv, sigma_inv);
      return false;
    };
    const BranchLabel& l = bottoms[j].second;
    if (attempt(l.v, l.w)) return true;
    if (rs.is_undirected(bottoms[j].first) && l.v != l.w)
      return attempt(l.w, l.v);
    return false;
  };
  if (!go(0)) return std::nullopt;
  std::set<std::tuple<Color, Symbol, Symbol, Symbol>> seen;
  for (const auto& [c, l] : bottoms)
    if (!seen.insert({c, l.v, l.w, l.z}).second) return std::nullopt;
  return sigma;
}

}  // namespace

std::vector<Type3Redex> find_type3(const ClosedDiagram& cd,
                                   const ReplacementSystem& rs,
                                   const std::vector<CompletionRule>& extras) {
  const StrandDiagram& sd = cd.open;
  ThroughMap tm = through_map(sd);
  int n = (int)sd.sources.size();
  std::vector<int> through;
  for (int i = 0; i < n; ++i)
    if (tm.succ[i] >= 0) through.push_back(i);

  std::vector<Type3Redex> out;
  std::set<std::tuple<Color, bool, int, std::vector<int>>> seen;

  auto consider = [&](const Color& c, bool glued, int extra_index,
                      const std::vector<ColoredEdge>& tmpl,
                      const std::map<Symbol, Symbol>& alias,
                      const std::set<Symbol>& kept_vertices,
                      const std::vector<int>& p0) {
    int E = (int)tmpl.size();
    // Follow the loops to build the winding blocks.
    std::vector<std::vector<int>> blocks{p0};
    std::set<int> used(p0.begin(), p0.end());
    if ((int)used.size() != E) return;
    for (;;) {
      std::vector<int> next(E);
      for (int j = 0; j < E; ++j) {
        next[j] = tm.succ[blocks.back()[j]];
        if (next[j] < 0) return;
      }
      if (next == p0) break;
      for (int j = 0; j < E; ++j)
        if (!used.insert(next[j]).second) return;
      blocks.push_back(std::move(next));
      if ((int)blocks.size() > n) return;
    }
    int k = (int)blocks.size();
    // Canonical rotation: the least involved base point sits in block 0.
    {
      int best_r = 0, best = n;
      for (int r = 0; r < k; ++r)
        for (int p : blocks[r])
          if (p < best) {
            best = p;
            best_r = r;
          }
      std::rotate(blocks.begin(), blocks.begin() + best_r, blocks.end());
    }
    std::vector<int> all_sorted(used.begin(), used.end());
    if (!seen.insert({c, glued, extra_index, all_sorted}).second) return;
    // Every block must instantiate the template.
    Type3Redex r;
    r.color = c;
    r.glued = glued;
    r.extra = extra_index >= 0;
    r.extra_index = extra_index;
    r.winding = k;
    r.blocks = blocks;
    std::set<Symbol> deleted;
    for (const auto& block : blocks) {
      std::vector<std::pair<Color, BranchLabel>> bottoms;
      for (int p : block)
        bottoms.push_back({sd.strands[tm.out_strand[p]].color,
                           sd.strands[tm.out_strand[p]].label});
      auto sig = match_edge_family(tmpl, bottoms, rs, alias);
      if (!sig) return;
      for (const auto& [vert, sym] : *sig)
        if (!kept_vertices.count(vert)) deleted.insert(sym);
      r.substitutions.push_back(std::move(*sig));
    }
    // Legality: deleted symbols occur on no strand outside the redex.
    std::set<int> involved;
    for (int p : used) involved.insert(tm.out_strand[p]);
    for (int s = 0; s < (int)sd.strands.size(); ++s) {
      if (involved.count(s)) continue;
      if (deleted.count(sd.strands[s].label.v) ||
          deleted.count(sd.strands[s].label.w))
        return;
    }
    r.deleted.assign(deleted.begin(), deleted.end());
    out.push_back(std::move(r));
  };

  auto enumerate = [&](const Color& c, bool glued, int extra_index,
                       const std::vector<ColoredEdge>& tmpl,
                       const std::map<Symbol, Symbol>& alias,
                       const std::set<Symbol>& kept_vertices) {
    int E = (int)tmpl.size();
    std::vector<int> p0(E, -1);
    std::function<void(int)> choose = [&](int j) {
      if (j == E) {
        consider(c, glued, extra_index, tmpl, alias, kept_vertices, p0);
        return;
      }
      for (int p : through) {
        bool dup = false;
        for (int jj = 0; jj < j; ++jj) dup = dup || p0[jj] == p;
        if (dup) continue;
        p0[j] = p;
        choose(j + 1);
      }
      p0[j] = -1;
    };
    choose(0);
  };

  for (const auto& [c, rule] : rs.rules) {
    std::set<Symbol> kept{rule.initial, rule.terminal};
    enumerate(c, false, -1, rule.edge_order, {}, kept);
    enumerate(c, true, -1, rule.edge_order,
              {{rule.terminal, rule.initial}}, {rule.initial});
  }
  for (int x = 0; x < (int)extras.size(); ++x) {
    const CompletionRule& cr = extras[x];
    std::set<Symbol> kept(cr.boundary.begin(), cr.boundary.end());
    enumerate(cr.lhs.edges().empty() ? Color{} : cr.lhs.edges()[0].color,
              false, x, cr.lhs.edges(), {}, kept);
  }

  // Drop plain-rule matches that glue iota and tau: those are the glued
  // variant and are reported as such.
  std::vector<Type3Redex> filtered;
  for (auto& r : out) {
    if (!r.extra && !r.glued) {
      const auto& rule = rs.rule(r.color);
      if (r.substitutions[0].at(rule.initial) ==
          r.substitutions[0].at(rule.terminal))
        continue;
    }
    filtered.push_back(std::move(r));
  }
  return filtered;
}

std::pair<ClosedDiagram, TransformationStep> apply_type3(
    const ClosedDiagram& cd, const Type3Redex& r, const ReplacementSystem& rs,
    const std::vector<CompletionRule>& extras) {
  const StrandDiagram& sd = cd.open;
  ThroughMap tm = through_map(sd);
  int k = r.winding;
  int E = (int)r.blocks[0].size();
  StrandDiagram w = sd;
  Freshener fr(w, "cv"), frz(w, "cz");
  std::set<int> dead_nodes, dead_strands;

  // Kept base points per block and the labels of the replacement strands.
  int keep = 1;
  const CompletionRule* extra = nullptr;
  if (r.extra) {
    extra = &extras.at(r.extra_index);
    keep = (int)extra->rhs.edges().size();
    if (keep < 1 || keep > E)
      throw std::invalid_argument("apply_type3: malformed completion rule");
  }
  // Per-block symbol maps for the replacement labels.
  std::vector<std::map<Symbol, Symbol>> block_map(k);
  for (int b = 0; b < k; ++b) {
    if (!r.extra) {
      const auto& rule = rs.rule(r.color);
      block_map[b][rule.initial] = r.substitutions[b].at(rule.initial);
      block_map[b][rule.terminal] =
          r.glued ? r.substitutions[b].at(rule.initial)
                  : r.substitutions[b].at(rule.terminal);
    } else {
      for (const Symbol& v : extra->rhs.vertices()) {
        auto it = r.substitutions[b].find(v);
        block_map[b][v] = it != r.substitutions[b].end() ? it->second
                                                         : fr.next();
      }
    }
  }
  std::vector<std::vector<std::pair<Color, BranchLabel>>> new_labels(k);
  for (int b = 0; b < k; ++b) {
    if (!r.extra) {
      const auto& rule = rs.rule(r.color);
      BranchLabel l{block_map[b].at(rule.initial),
                    block_map[b].at(rule.terminal), frz.next()};
      new_labels[b].push_back({r.color, normalized_label(l, r.color, rs)});
    } else {
      for (const auto& e : extra->rhs.edges()) {
        BranchLabel l{block_map[b].at(e.from), block_map[b].at(e.to),
                      frz.next()};
        new_labels[b].push_back({e.color, normalized_label(l, e.color, rs)});
      }
    }
  }

  // Surgery: delete every involved strand, keep the first `keep` base points
  // of each block, and run the replacement strands between kept base points
  // of consecutive blocks.
  for (int b = 0; b < k; ++b)
    for (int j = 0; j < E; ++j) {
      int p = r.blocks[b][j];
      dead_strands.insert(tm.out_strand[p]);
      if (j >= keep) {
        dead_nodes.insert(sd.sources[p]);
        dead_nodes.insert(sd.sinks[p]);
      }
    }
  for (int b = 0; b < k; ++b)
    for (int j = 0; j < keep; ++j) {
      int p = r.blocks[b][j];
      int pn = r.blocks[(b + 1) % k][j];
      int s = add_strand(w, sd.sources[p], new_labels[b][j].first,
                         new_labels[b][j].second);
      attach_to(w, s, sd.sinks[pn]);
    }
  std::set<int> deadpos;
  for (int b = 0; b < k; ++b)
    for (int j = keep; j < E; ++j) deadpos.insert(r.blocks[b][j]);
  std::vector<int> srcs, snks;
  for (int p = 0; p < (int)sd.sources.size(); ++p)
    if (!deadpos.count(p)) {
      srcs.push_back(sd.sources[p]);
      snks.push_back(sd.sinks[p]);
    }
  w.sources = std::move(srcs);
  w.sinks = std::move(snks);

  // Conjugator: straight strands away from the redex; at each block, the
  // replacement strand(s) branch back into the old family (a split for a
  // basic rule, the completion rule's template fragment otherwise).
  TransformationStep step;
  step.kind = r.extra ? StepKind::Red3Extra : StepKind::Red3;
  step.site = (r.extra ? "type 3 reduction (completion rule), winding "
                       : "type 3 reduction, winding ") +
              std::to_string(k);
  StrandDiagram& h = step.conjugator;
  int n_old = (int)sd.sources.size();
  std::vector<int> sinknodes(n_old);
  for (int o = 0; o < n_old; ++o) sinknodes[o] = add_node(h, NodeKind::Sink);
  // Which block/slot a kept position carries, if any.
  std::map<int, std::pair<int, int>> kept_at;
  std::set<int> involved_pos;
  for (int b = 0; b < k; ++b)
    for (int j = 0; j < E; ++j) {
      involved_pos.insert(r.blocks[b][j]);
      if (j < keep) kept_at[r.blocks[b][j]] = {b, j};
    }
  std::vector<int> hsource(n_old, -1);
  for (int o = 0; o < n_old; ++o) {
    if (involved_pos.count(o) && !kept_at.count(o)) continue;
    int src = add_node(h, NodeKind::Source);
    h.sources.push_back(src);
    hsource[o] = src;
    if (!kept_at.count(o)) {
      const Strand& s = sd.strands[source_strand(sd, o)];
      int id = add_strand(h, src, s.color, s.label);
      attach_to(h, id, sinknodes[o]);
    }
  }
  for (int b = 0; b < k; ++b) {
    if (!r.extra) {
      int p = r.blocks[b][0];
      int top = add_strand(h, hsource[p], new_labels[b][0].first,
                           new_labels[b][0].second);
      int br = add_node(h, NodeKind::Split);
      attach_to(h, top, br);
      for (int j = 0; j < E; ++j) {
        const Strand& olds = sd.strands[tm.out_strand[r.blocks[b][j]]];
        int s = add_strand(h, br, olds.color, olds.label);
        attach_to(h, s, sinknodes[r.blocks[b][j]]);
      }
    } else {
      // Embed the template: its sources carry the rhs edges, its sinks the
      // lhs edges; rename through the block's substitution, everything else
      // fresh.
      const StrandDiagram& t = extra->conjugator_template.at(0);
      std::map<Symbol, Symbol> vmap = block_map[b];
      for (const auto& [vert, sym] : r.substitutions[b]) vmap[vert] = sym;
      std::map<Symbol, Symbol> zmap;
      auto rename = [&](const Strand& s) {
        BranchLabel l;
        auto sub = [&](const Symbol& v) {
          auto it = vmap.find(v);
          if (it != vmap.end()) return it->second;
          return vmap[v] = fr.next();
        };
        l.v = sub(s.label.v);
        l.w = sub(s.label.w);
        auto zt = zmap.find(s.label.z);
        l.z = zt != zmap.end() ? zt->second : (zmap[s.label.z] = frz.next());
        return normalized_label(l, s.color, rs);
      };
      std::map<int, int> src_of_tnode, snk_of_tnode;
      for (int j = 0; j < (int)t.sources.size(); ++j)
        src_of_tnode[t.sources[j]] = hsource[r.blocks[b][j]];
      for (int j = 0; j < (int)t.sinks.size(); ++j)
        snk_of_tnode[t.sinks[j]] = sinknodes[r.blocks[b][j]];
      std::map<int, int> copied;
      for (int tn = 0; tn < (int)t.nodes.size(); ++tn)
        if (!src_of_tnode.count(tn) && !snk_of_tnode.count(tn))
          copied[tn] = add_node(h, t.nodes[tn].kind);
      // Template strands in a deterministic order that respects rotation:
      // iterate template nodes and their out lists.
      for (int tn = 0; tn < (int)t.nodes.size(); ++tn) {
        for (int ts : t.nodes[tn].outs) {
          const Strand& s = t.strands[ts];
          int from = src_of_tnode.count(s.from) ? src_of_tnode.at(s.from)
                                                : copied.at(s.from);
          int id = add_strand(h, from, s.color, rename(s));
          int to = snk_of_tnode.count(s.to) ? snk_of_tnode.at(s.to)
                                            : copied.at(s.to);
          attach_to(h, id, to);
        }
      }
    }
  }
  h.sinks = sinknodes;

  std::vector<char> dn(w.nodes.size(), 0), ds(w.strands.size(), 0);
  for (int nn : dead_nodes) dn[nn] = 1;
  for (int s : dead_strands) ds[s] = 1;
  for (auto& nd : w.nodes) {
    auto prune = [&](std::vector<int>& v) {
      v.erase(std::remove_if(v.begin(), v.end(),
                             [&](int s) { return ds[s]; }),
              v.end());
    };
    prune(nd.ins);
    prune(nd.outs);
  }
  std::vector<int> nmap;
  ClosedDiagram out{repack(w, dn, ds, &nmap, nullptr)};
  step.node_map.assign(sd.nodes.size(), -1);
  for (int nn = 0; nn < (int)sd.nodes.size(); ++nn)
    step.node_map[nn] = nmap[nn];
  return {std::move(out), std::move(step)};
}

// ---------------------------------------------------------------------------
// Closed reduction.

namespace {

struct Type2Site {
  int arc;
};
struct Type1Site {
  int split_vertex;
  int tube;  // common crossing count
};

std::vector<Type2Site> type2_sites(const ErasedGraph& g,
                                   const StrandDiagram& sd) {
  std::vector<Type2Site> out;
  for (int a = 0; a < (int)g.arcs.size(); ++a) {
    const auto& arc = g.arcs[a];
    if (arc.from < 0 || arc.to < 0) continue;
    if (sd.nodes[g.vertex_node[arc.from]].kind == NodeKind::Merge &&
        sd.nodes[g.vertex_node[arc.to]].kind == NodeKind::Split)
      out.push_back({a});
  }
  return out;
}

std::vector<Type1Site> type1_sites(const ErasedGraph& g,
                                   const StrandDiagram& sd) {
  // Split whose every bottom chain runs (slot-aligned, equally many base
  // points) into one merge; the base line can be shifted out of the way
  // exactly when the chains cross it equally often.
  std::vector<std::vector<const ErasedArc*>> from_vertex(g.vertex_count);
  for (const auto& arc : g.arcs)
    if (arc.from >= 0) from_vertex[arc.from].push_back(&arc);
  std::vector<Type1Site> out;
  for (int v = 0; v < g.vertex_count; ++v) {
    if (sd.nodes[g.vertex_node[v]].kind != NodeKind::Split) continue;
    auto arcs = from_vertex[v];
    std::sort(arcs.begin(), arcs.end(),
              [](const ErasedArc* a, const ErasedArc* b) {
                return a->from_slot < b->from_slot;
              });
    bool ok = !arcs.empty();
    int mergev = -1, t = -1;
    for (const ErasedArc* a : arcs) {
      if (a->to < 0 || sd.nodes[g.vertex_node[a->to]].kind != NodeKind::Merge ||
          a->to_slot != a->from_slot) {
        ok = false;
        break;
      }
      if (mergev < 0) {
        mergev = a->to;
        t = (int)a->crossings.size();
      }
      ok = ok && a->to == mergev && (int)a->crossings.size() == t;
      if (!ok) break;
    }
    if (ok && t >= 1) out.push_back({v, t});
  }
  return out;
}

// Fused expanding-shift + Type 2 reduction across an arc with one crossing.
std::pair<ClosedDiagram, TransformationStep> fuse_type2(
    const ClosedDiagram& cd, const ErasedGraph& g, int arc_id,
    const ReplacementSystem& rs) {
  const StrandDiagram& sd = cd.open;
  const ErasedArc& arc = g.arcs[arc_id];
  int m = g.vertex_node[arc.from], sp = g.vertex_node[arc.to];
  int bp = arc.crossings[0];
  StrandDiagram w = sd;
  std::set<int> dead_nodes{m, sp, sd.sources[bp], sd.sinks[bp]};
  std::set<int> dead_strands(arc.segments.begin(), arc.segments.end());
  TransformationStep step;
  step.kind = StepKind::Red2;
  step.site = "type 2 reduction across base point " + std::to_string(bp);
  step.conjugator =
      elementary(labels_of(sd, [&] {
                   std::vector<int> v;
                   for (int p = 0; p < (int)sd.sources.size(); ++p)
                     v.push_back(source_strand(sd, p));
                   return v;
                 }()),
                 bp, labels_of(sd, sd.nodes[sp].outs), false);
  std::vector<int> new_snks, new_srcs;
  for (int s : sd.nodes[m].ins) {
    int snk = add_node(w, NodeKind::Sink);
    w.strands[s].to = snk;
    w.nodes[snk].ins = {s};
    new_snks.push_back(snk);
  }
  for (int s : sd.nodes[sp].outs) {
    int ns = add_node(w, NodeKind::Source);
    w.strands[s].from = ns;
    w.nodes[ns].outs = {s};
    new_srcs.push_back(ns);
  }
  std::vector<int> srcs, snks;
  for (int p = 0; p < (int)sd.sources.size(); ++p) {
    if (p == bp) {
      srcs.insert(srcs.end(), new_srcs.begin(), new_srcs.end());
      snks.insert(snks.end(), new_snks.begin(), new_snks.end());
    } else {
      srcs.push_back(sd.sources[p]);
      snks.push_back(sd.sinks[p]);
    }
  }
  w.sources = std::move(srcs);
  w.sinks = std::move(snks);
  std::vector<char> dn(w.nodes.size(), 0), ds(w.strands.size(), 0);
  for (int nn : dead_nodes) dn[nn] = 1;
  for (int s : dead_strands) ds[s] = 1;
  for (auto& nd : w.nodes) {
    auto prune = [&](std::vector<int>& v) {
      v.erase(std::remove_if(v.begin(), v.end(),
                             [&](int s) { return ds[s]; }),
              v.end());
    };
    prune(nd.ins);
    prune(nd.outs);
  }
  std::vector<int> nmap;
  ClosedDiagram out{repack(w, dn, ds, &nmap, nullptr)};
  step.node_map.assign(sd.nodes.size(), -1);
  for (int nn = 0; nn < (int)sd.nodes.size(); ++nn)
    step.node_map[nn] = nmap[nn];
  return {std::move(out), std::move(step)};
}

}  // namespace

std::pair<ClosedDiagram, std::vector<TransformationStep>> reduce_closed(
    const ClosedDiagram& cd, const ReplacementSystem& rs,
    const std::vector<CompletionRule>& extras, std::mt19937* shuffle) {
  ClosedDiagram cur = cd;
  std::vector<TransformationStep> trace;
  for (;;) {
    // Interior reductions of the open diagram (conjugator-free).
    if (!is_reduced(cur.open)) {
      TransformationStep step;
      step.kind = StepKind::Red1;
      step.site = "interior type 1/2 reductions";
      step.conjugator = identity_over(cur.open);
      step.trivial = true;
      cur.open = reduce(cur.open, rs, shuffle);
      trace.push_back(std::move(step));
      continue;
    }
    ErasedGraph g = erase_base_line(cur);
    auto t2 = type2_sites(g, cur.open);
    auto t1 = type1_sites(g, cur.open);
    auto t3 = find_type3(cur, rs, extras);
    size_t total = t2.size() + t1.size() + t3.size();
    if (total == 0) break;
    size_t pick = shuffle ? (*shuffle)() % total : 0;
    if (pick < t2.size()) {
      const ErasedArc& arc = g.arcs[t2[pick].arc];
      if ((int)arc.crossings.size() == 0)
        throw std::logic_error(
            "reduce_closed: direct merge-to-split strand survived interior "
            "reduction");
      if ((int)arc.crossings.size() >= 2) {
        auto [next, step] =
            shift(cur, g.vertex_node[arc.to], ShiftDirection::Expanding, rs);
        cur = std::move(next);
        trace.push_back(std::move(step));
      } else {
        auto [next, step] = fuse_type2(cur, g, t2[pick].arc, rs);
        cur = std::move(next);
        trace.push_back(std::move(step));
      }
      continue;
    }
    pick -= t2.size();
    if (pick < t1.size()) {
      auto [next, step] =
          shift(cur, g.vertex_node[t1[pick].split_vertex],
                ShiftDirection::Reducing, rs);
      cur = std::move(next);
      trace.push_back(std::move(step));
      continue;
    }
    pick -= t1.size();
    {
      auto [next, step] = apply_type3(cur, t3[pick], rs, extras);
      cur = std::move(next);
      trace.push_back(std::move(step));
    }
  }
  return {std::move(cur), std::move(trace)};
}

bool is_reduced_closed(const ClosedDiagram& cd, const ReplacementSystem& rs,
                       const std::vector<CompletionRule>& extras) {
  if (!is_reduced(cd.open)) return false;
  ErasedGraph g = erase_base_line(cd);
  return type2_sites(g, cd.open).empty() && type1_sites(g, cd.open).empty() &&
         find_type3(cd, rs, extras).empty();
}

std::optional<StrandDiagram> replay_steps(
    const StrandDiagram& before, const std::vector<TransformationStep>& steps,
    const StrandDiagram& after, const ReplacementSystem& rs) {
  StrandDiagram h = fold_conjugators(steps, before, rs);
  StrandDiagram conjugated = compose(compose(invert(h), before, rs), h, rs);
  if (strand_encoding(conjugated, rs) != strand_encoding(reduce(after, rs), rs))
    return std::nullopt;
  return h;
}

// ---------------------------------------------------------------------------
// Stable and vanishing symbols.

SymbolDynamics symbol_dynamics(const StrandDiagram& sd,
                               const ReplacementSystem& rs) {
  SymbolDynamics dyn;
  // Copy of sd one period up, with every symbol replaced by a fresh one.
  StrandDiagram up = sd;
  Freshener fv(sd, "pv"), fz(sd, "pz");
  std::map<Symbol, Symbol> hat, hat_inv, hatz;
  auto subst = [](std::map<Symbol, Symbol>& m, Freshener& f, const Symbol& s) {
    auto it = m.find(s);
    if (it != m.end()) return it->second;
    return m[s] = f.next();
  };
  for (auto& s : up.strands) {
    BranchLabel l{subst(hat, fv, s.label.v), subst(hat, fv, s.label.w),
                  subst(hatz, fz, s.label.z)};
    s.label = normalized_label(l, s.color, rs);
  }
  for (const auto& [a, b] : hat) hat_inv[b] = a;
  // Stacking the copy on top identifies each of sd's symbols with either a
  // symbol of the upper copy (pull it back: that is the one-period map) or a
  // fresh symbol (the identification dies out).
  ComposeTrace trace;
  compose(sd, up, rs, &trace);
  for (const auto& [s, img] : trace.renaming) {
    auto it = hat_inv.find(img);
    if (it != hat_inv.end()) dyn.mu[s] = it->second;
  }
  std::set<Symbol> allsyms;
  for (const auto& s : sd.strands) {
    allsyms.insert(s.label.v);
    allsyms.insert(s.label.w);
  }
  for (const Symbol& s : allsyms) {
    Symbol t = s;
    bool cyc = false;
    for (size_t k = 0; k < allsyms.size(); ++k) {
      auto it = dyn.mu.find(t);
      if (it == dyn.mu.end()) break;
      t = it->second;
      if (t == s) {
        cyc = true;
        break;
      }
    }
    (cyc ? dyn.stable : dyn.vanishing).insert(s);
  }
  // Connected components of the closure, merging across shared symbols.
  int n = (int)sd.nodes.size();
  std::vector<int> uf(n);
  std::iota(uf.begin(), uf.end(), 0);
  std::function<int(int)> find = [&](int x) {
    return uf[x] == x ? x : uf[x] = find(uf[x]);
  };
  auto unite = [&](int a, int b) { uf[find(a)] = find(b); };
  for (const auto& s : sd.strands) unite(s.from, s.to);
  for (int i = 0; i < (int)sd.sources.size(); ++i)
    unite(sd.sources[i], sd.sinks[i]);
  std::map<Symbol, int> rep_of;
  for (const auto& s : sd.strands) {
    int r = find(s.from);
    for (const Symbol& sym : {s.label.v, s.label.w}) {
      auto it = rep_of.find(sym);
      if (it == rep_of.end())
        rep_of[sym] = r;
      else
        unite(it->second, r);
    }
  }
  std::map<int, int> comp_index;
  std::map<Symbol, int> comp_of;
  for (const Symbol& s : allsyms) {
    int r = find(rep_of.at(s));
    auto [it, fresh] = comp_index.try_emplace(r, (int)dyn.components.size());
    if (fresh) dyn.components.push_back({});
    dyn.components[it->second].insert(s);
    comp_of[s] = it->second;
  }
  dyn.component_permutation.assign(dyn.components.size(), {});
  dyn.component_order.assign(dyn.components.size(), 1);
  for (const Symbol& s : dyn.stable)
    dyn.component_permutation[comp_of.at(s)][s] = dyn.mu.at(s);
  for (size_t c = 0; c < dyn.components.size(); ++c) {
    std::set<Symbol> seen;
    long long ord = 1;
    for (const auto& [s, _] : dyn.component_permutation[c]) {
      if (seen.count(s)) continue;
      int len = 0;
      Symbol t = s;
      do {
        seen.insert(t);
        t = dyn.component_permutation[c].at(t);
        ++len;
      } while (t != s);
      ord = std::lcm(ord, (long long)len);
    }
    dyn.component_order[c] = (int)ord;
  }
  return dyn;
}

StrandDiagram apply_period(const StrandDiagram& sd, const SymbolDynamics& dyn,
                           const std::vector<int>& powers,
                           const ReplacementSystem& rs) {
  if (powers.size() != dyn.components.size())
    throw std::invalid_argument("apply_period: one power per component");
  std::map<Symbol, int> comp_of;
  for (size_t c = 0; c < dyn.components.size(); ++c)
    for (const Symbol& s : dyn.components[c]) comp_of[s] = (int)c;
  std::map<Symbol, Symbol> vmap;
  for (const Symbol& s : dyn.stable) {
    int c = comp_of.at(s);
    int ord = std::max(dyn.component_order[c], 1);
    int p = ((powers[c] % ord) + ord) % ord;
    Symbol t = s;
    for (int k = 0; k < p; ++k) t = dyn.component_permutation[c].at(t);
    vmap[s] = t;
  }
  StrandDiagram out = sd;
  Freshener fv(sd, "sv"), fz(sd, "sz");
  std::map<Symbol, Symbol> fresh_v;
  std::map<std::tuple<Symbol, Symbol, Color, Symbol>, Symbol> fresh_z;
  auto mv = [&](const Symbol& s) {
    auto it = vmap.find(s);
    if (it != vmap.end()) return it->second;
    auto jt = fresh_v.find(s);
    if (jt != fresh_v.end()) return jt->second;
    return fresh_v[s] = fv.next();
  };
  for (auto& s : out.strands) {
    Symbol v = mv(s.label.v), w = mv(s.label.w);
    auto key = std::tuple{v, w, s.color, s.label.z};
    if (rs.is_undirected(s.color) && w < v) key = {w, v, s.color, s.label.z};
    auto it = fresh_z.find(key);
    Symbol z = it != fresh_z.end() ? it->second : (fresh_z[key] = fz.next());
    s.label = normalized_label({v, w, z}, s.color, rs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarity.

namespace {

// Slot- and color-preserving isomorphisms of base-line-erased graphs,
// ignoring crossing counts on non-loop arcs (free loops are matched by color
// and crossing count; one canonical assignment per vertex map, since loop
// alignment is re-enumerated when the base points are matched up).
struct ErasedIso {
  std::vector<int> vmap;  // g2 vertex -> g1 vertex
  std::vector<int> amap;  // g2 arc -> g1 arc
};

struct ArcTables {
  std::vector<std::map<int, int>> out_at, in_at;  // vertex -> slot -> arc
  std::vector<int> loops;
};

ArcTables arc_tables(const ErasedGraph& g) {
  ArcTables t;
  t.out_at.resize(g.vertex_count);
  t.in_at.resize(g.vertex_count);
  for (int a = 0; a < (int)g.arcs.size(); ++a) {
    const auto& arc = g.arcs[a];
    if (arc.from < 0) {
      t.loops.push_back(a);
      continue;
    }
    t.out_at[arc.from][arc.from_slot] = a;
    t.in_at[arc.to][arc.to_slot] = a;
  }
  return t;
}

std::vector<ErasedIso> erased_isos(const ErasedGraph& g2,
                                   const StrandDiagram& sd2,
                                   const ErasedGraph& g1,
                                   const StrandDiagram& sd1) {
  std::vector<ErasedIso> out;
  if (g2.vertex_count != g1.vertex_count ||
      g2.arcs.size() != g1.arcs.size())
    return out;
  ArcTables t2 = arc_tables(g2), t1 = arc_tables(g1);
  // Free loops must pair off within (color, crossing count) groups.
  std::map<std::pair<Color, int>, std::vector<int>> lg2, lg1;
  for (int a : t2.loops)
    lg2[{g2.arcs[a].color, (int)g2.arcs[a].crossings.size()}].push_back(a);
  for (int a : t1.loops)
    lg1[{g1.arcs[a].color, (int)g1.arcs[a].crossings.size()}].push_back(a);
  if (lg2.size() != lg1.size()) return out;
  for (const auto& [k, v] : lg2) {
    auto it = lg1.find(k);
    if (it == lg1.end() || it->second.size() != v.size()) return out;
  }
  int n = g2.vertex_count;
  std::vector<int> vmap(n, -1);
  std::vector<char> used(n, 0);
  auto kind2 = [&](int v) { return sd2.nodes[g2.vertex_node[v]].kind; };
  auto kind1 = [&](int v) { return sd1.nodes[g1.vertex_node[v]].kind; };
  std::function<void(int)> go = [&](int v2) {
    if (v2 == n) {
      ErasedIso iso;
      iso.vmap = vmap;
      iso.amap.assign(g2.arcs.size(), -1);
      for (int a2 = 0; a2 < (int)g2.arcs.size(); ++a2) {
        const auto& arc = g2.arcs[a2];
        if (arc.from < 0) continue;
        iso.amap[a2] = t1.out_at[vmap[arc.from]].at(arc.from_slot);
      }
      for (const auto& [k, v] : lg2) {
        const auto& w = lg1.at(k);
        for (size_t i = 0; i < v.size(); ++i) iso.amap[v[i]] = w[i];
      }
      out.push_back(std::move(iso));
      return;
    }
    for (int v1 = 0; v1 < n; ++v1) {
      if (used[v1] || kind1(v1) != kind2(v2) ||
          t1.out_at[v1].size() != t2.out_at[v2].size() ||
          t1.in_at[v1].size() != t2.in_at[v2].size())
        continue;
      bool ok = true;
      for (const auto& [slot, a2] : t2.out_at[v2]) {
        auto it = t1.out_at[v1].find(slot);
        if (it == t1.out_at[v1].end()) {
          ok = false;
          break;
        }
        const auto& arc2 = g2.arcs[a2];
        const auto& arc1 = g1.arcs[it->second];
        if (arc1.color != arc2.color || arc1.to_slot != arc2.to_slot ||
            (arc2.to < v2 && vmap[arc2.to] != arc1.to) ||
            (arc2.to == v2 && arc1.to != v1)) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      for (const auto& [slot, a2] : t2.in_at[v2]) {
        auto it = t1.in_at[v1].find(slot);
        if (it == t1.in_at[v1].end()) {
          ok = false;
          break;
        }
        const auto& arc2 = g2.arcs[a2];
        const auto& arc1 = g1.arcs[it->second];
        if (arc1.color != arc2.color || arc1.from_slot != arc2.from_slot) {
          ok = false;
          break;
        }
        if (arc2.from < v2 && vmap[arc2.from] != arc1.from) {
          ok = false;
          break;
        }
        if (arc2.from == v2 && arc1.from != v1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      vmap[v2] = v1;
      used[v1] = 1;
      go(v2 + 1);
      vmap[v2] = -1;
      used[v1] = 0;
    }
  };
  go(0);
  return out;
}

// Breadth-first search in base-cochain space from `start` to `target`.
// A move pushes the base line past one vertex: sign + adds one crossing to
// every outgoing arc and removes one from every incoming arc (net zero on
// self-loops), sign - is the inverse; a move applies only when every arc it
// decrements (self-loops included, since the line must actually cross them
// next to the vertex) has a crossing to spare.
std::optional<std::vector<std::pair<int, bool>>> cochain_path(
    const ErasedGraph& g, const std::vector<int>& start,
    const std::vector<int>& target) {
  if (start == target) return std::vector<std::pair<int, bool>>{};
  int V = g.vertex_count, A = (int)g.arcs.size();
  if (V == 0) return std::nullopt;
  std::vector<int> cap(A);
  for (int a = 0; a < A; ++a)
    cap[a] = std::max(start[a], target[a]) + V + 2;
  std::vector<std::vector<int>> states{start};
  std::map<std::vector<int>, int> index{{start, 0}};
  std::vector<std::pair<int, std::pair<int, bool>>> parent{{-1, {-1, false}}};
  std::deque<int> queue{0};
  const int kMaxStates = 200000;
  while (!queue.empty()) {
    int cur = queue.front();
    queue.pop_front();
    for (int v = 0; v < V; ++v)
      for (bool plus : {true, false}) {
        std::vector<int> next = states[cur];
        bool ok = true;
        for (int a = 0; a < A && ok; ++a) {
          const auto& arc = g.arcs[a];
          int need_dec = plus ? arc.to == v : arc.from == v;
          int inc = plus ? arc.from == v : arc.to == v;
          if (need_dec && next[a] < 1) ok = false;
          next[a] += inc - need_dec;
          if (next[a] > cap[a]) ok = false;
        }
        if (!ok) continue;
        auto [it, fresh] = index.try_emplace(next, (int)states.size());
        if (!fresh) continue;
        states.push_back(next);
        parent.push_back({cur, {v, plus}});
        if (next == target) {
          std::vector<std::pair<int, bool>> moves;
          for (int i = it->second; parent[i].first >= 0; i = parent[i].first)
            moves.push_back(parent[i].second);
          std::reverse(moves.begin(), moves.end());
          return moves;
        }
        if ((int)states.size() > kMaxStates) return std::nullopt;
        queue.push_back(it->second);
      }
  }
  return std::nullopt;
}

}  // namespace

std::optional<SimilarityWitness> similar(const ClosedDiagram& cd1,
                                         const ClosedDiagram& cd2,
                                         const ReplacementSystem& rs) {
  std::string enc1 = closed_encoding(cd1, rs);
  if (enc1 == closed_encoding(cd2, rs)) return SimilarityWitness{};
  ErasedGraph g1 = erase_base_line(cd1), g2 = erase_base_line(cd2);
  BaseCochain c1 = baseline_cochain(g1), c2 = baseline_cochain(g2);
  for (const ErasedIso& iso : erased_isos(g2, cd2.open, g1, cd1.open)) {
    std::vector<int> target(g2.arcs.size());
    bool ok = true;
    for (int a = 0; a < (int)g2.arcs.size(); ++a) {
      target[a] = c1.counts[iso.amap[a]];
      if (g2.arcs[a].from < 0 && target[a] != c2.counts[a]) ok = false;
    }
    if (!ok || !cohomologous(BaseCochain{target}, c2, g2)) continue;
    auto moves = cochain_path(g2, c2.counts, target);
    if (!moves) continue;
    // Replay the base-line moves on the actual diagram.
    ClosedDiagram cur = cd2;
    std::vector<TransformationStep> steps;
    std::vector<int> cur_node(g2.vertex_count);
    for (int v = 0; v < g2.vertex_count; ++v) cur_node[v] = g2.vertex_node[v];
    bool fail = false;
    for (auto [v, plus] : *moves) {
      NodeKind k = cur.open.nodes[cur_node[v]].kind;
      ShiftDirection dir = (k == NodeKind::Split) == plus
                               ? ShiftDirection::Expanding
                               : ShiftDirection::Reducing;
      try {
        auto [next, step] = shift(cur, cur_node[v], dir, rs);
        for (int u = 0; u < g2.vertex_count; ++u)
          if (u != v) cur_node[u] = step.node_map[cur_node[u]];
        cur_node[v] = step.moved_node;
        cur = std::move(next);
        steps.push_back(std::move(step));
      } catch (const std::exception&) {
        fail = true;
        break;
      }
    }
    if (fail) continue;
    int n = cur.base_points();
    if (n != cd1.base_points()) continue;
    // Align base points arc by arc: the crossings along corresponding arcs
    // pair off in order (free loops additionally admit rotations).
    ErasedGraph gc = erase_base_line(cur);
    ArcTables tc = arc_tables(gc);
    std::vector<int> pi(n, -1);
    bool bad = false;
    for (int a2 = 0; a2 < (int)g2.arcs.size() && !bad; ++a2) {
      const auto& arc = g2.arcs[a2];
      if (arc.from < 0) continue;
      int vc = gc.node_vertex[cur_node[arc.from]];
      const auto& A = gc.arcs[tc.out_at[vc].at(arc.from_slot)];
      const auto& B = g1.arcs[iso.amap[a2]];
      if (A.crossings.size() != B.crossings.size()) {
        bad = true;
        break;
      }
      for (size_t j = 0; j < A.crossings.size(); ++j)
        pi[A.crossings[j]] = B.crossings[j];
    }
    if (bad) continue;
    // Free loops of the shifted diagram vs cd1, grouped as in erased_isos.
    std::map<std::pair<Color, int>, std::vector<int>> lgc, lg1;
    for (int a : tc.loops)
      lgc[{gc.arcs[a].color, (int)gc.arcs[a].crossings.size()}].push_back(a);
    for (int a = 0; a < (int)g1.arcs.size(); ++a)
      if (g1.arcs[a].from < 0)
        lg1[{g1.arcs[a].color, (int)g1.arcs[a].crossings.size()}].push_back(a);
    if (lgc.size() != lg1.size()) continue;
    std::vector<std::pair<std::vector<int>, std::vector<int>>> groups;
    for (const auto& [k, v] : lgc) {
      auto it = lg1.find(k);
      if (it == lg1.end() || it->second.size() != v.size()) {
        bad = true;
        break;
      }
      groups.push_back({v, it->second});
    }
    if (bad) continue;
    // Odometer over per-group bijections and per-loop rotations.
    std::optional<SimilarityWitness> found;
    std::function<void(size_t)> assign = [&](size_t gi) {
      if (found) return;
      if (gi == groups.size()) {
        std::vector<int> perm(n, -1);
        for (int p = 0; p < n; ++p) {
          if (pi[p] < 0) return;  // unreachable when counts all matched
          perm[pi[p]] = p;
        }
        bool ident = true;
        for (int i = 0; i < n; ++i) ident = ident && perm[i] == i;
        auto [fin, pstep] = permute(cur, perm, rs);
        if (closed_encoding(fin, rs) == enc1) {
          SimilarityWitness w;
          w.steps = steps;
          if (!ident) w.steps.push_back(pstep);
          found = std::move(w);
        }
        return;
      }
      auto& [cs, os] = groups[gi];
      std::vector<int> ord(os);
      std::sort(ord.begin(), ord.end());
      do {
        std::function<void(size_t)> rot = [&](size_t li) {
          if (found) return;
          if (li == cs.size()) {
            assign(gi + 1);
            return;
          }
          const auto& C = gc.arcs[cs[li]].crossings;
          const auto& D = g1.arcs[ord[li]].crossings;
          int t = (int)C.size();
          if (t == 0) {
            rot(li + 1);
            return;
          }
          for (int r = 0; r < t && !found; ++r) {
            for (int j = 0; j < t; ++j) pi[C[j]] = D[(j + r) % t];
            rot(li + 1);
          }
          for (int j = 0; j < t; ++j) pi[C[j]] = -1;
        };
        rot(0);
      } while (!found && std::next_permutation(ord.begin(), ord.end()));
    };
    assign(0);
    if (found) return found;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Serialization and export.

namespace {

std::string step_kind_name(StepKind k) {
  switch (k) {
    case StepKind::ShiftExpand: return "shift_expand";
    case StepKind::ShiftReduce: return "shift_reduce";
    case StepKind::Permute: return "permute";
    case StepKind::Red1: return "reduction_1";
    case StepKind::Red2: return "reduction_2";
    case StepKind::Red3: return "reduction_3";
    case StepKind::Red3Extra: return "reduction_3_completion";
  }
  return "?";
}

}  // namespace

std::string closed_to_json(const ClosedDiagram& cd) {
  nlohmann::json j;
  j["closed"] = true;
  j["open"] = nlohmann::json::parse(diagram_to_json(cd.open));
  return j.dump(2);
}

ClosedDiagram closed_from_json(const std::string& text,
                               const ReplacementSystem& rs) {
  auto j = nlohmann::json::parse(text);
  StrandDiagram sd = diagram_from_json(j.at("open").dump());
  return close_diagram(sd, rs);
}

std::string closed_to_dot(const ClosedDiagram& cd) {
  std::string out = diagram_to_dot(cd.open);
  std::string extra;
  for (int i = 0; i < cd.base_points(); ++i)
    extra += "  n" + std::to_string(cd.open.sinks[i]) + " -> n" +
             std::to_string(cd.open.sources[i]) +
             " [style=dashed,constraint=false,label=\"base " +
             std::to_string(i) + "\"];\n";
  out.insert(out.rfind('}'), extra);
  return out;
}

std::string trace_to_json(const std::vector<TransformationStep>& steps) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& st : steps) {
    nlohmann::json j;
    j["kind"] = step_kind_name(st.kind);
    j["site"] = st.site;
    j["trivial"] = st.trivial;
    j["conjugator"] = nlohmann::json::parse(diagram_to_json(st.conjugator));
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace strandlab
