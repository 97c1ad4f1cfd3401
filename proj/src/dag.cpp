#include "fedmarket/dag.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "fedmarket/errors.hpp"

namespace fedmarket {

const char* to_string(Slice s) {
  switch (s) {
    case Slice::urllc: return "urllc";
    case Slice::embb: return "embb";
    case Slice::best_effort: return "best-effort";
  }
  return "?";
}

Slice slice_from_string(const std::string& s) {
  if (s == "urllc") return Slice::urllc;
  if (s == "embb") return Slice::embb;
  if (s == "best-effort" || s == "best_effort") return Slice::best_effort;
  throw ConfigError("unknown slice '" + s + "' (expected urllc|embb|best-effort)");
}

const char* to_string(DagClass c) {
  switch (c) {
    case DagClass::tree: return "tree";
    case DagClass::series_parallel: return "series-parallel";
    case DagClass::general: return "general";
  }
  return "?";
}

const StageSpec& PipelineTemplate::stage(int stage_id) const {
  for (const auto& s : stages)
    if (s.stage_id == stage_id) return s;
  throw StructuralError("no stage with id " + std::to_string(stage_id) +
                        " in template '" + kind + "'");
}

bool PipelineTemplate::has_stage(int stage_id) const {
  for (const auto& s : stages)
    if (s.stage_id == stage_id) return true;
  return false;
}

/* ==================================================================== */
/* Built-in templates                                                    */
/* ==================================================================== */

namespace {

// Admission budget: per-stage allowance of 10x the nominal base bid (10),
// i.e. 100 per stage. Kept in sync with MarketConfig defaults.
constexpr double k_budget_per_stage = 100.0;

StageSpec st(int id, const char* type, const char* home, Slice sl,
             Sovereignty sov = Sovereignty::free) {
  StageSpec s;
  s.stage_id = id;
  s.stage_type = type;
  s.home_domain = home;
  s.slice = sl;
  s.sovereignty = sov;
  return s;
}

StageEdge ed(int from, int to) { return StageEdge{from, to, std::nullopt}; }

PipelineTemplate make_cqi_chain() {
  PipelineTemplate t;
  t.kind = "cqi-chain";
  t.stages = {
      st(0, "raw_cqi", "d1", Slice::embb),
      st(1, "denoise", "d1", Slice::embb),
      st(2, "normalise", "d2", Slice::embb),
      st(3, "feature_extract", "d2", Slice::embb),
      st(4, "predict", "d2", Slice::embb),
      st(5, "validate", "d2", Slice::embb),
      st(6, "aggregate", "d3", Slice::embb),
      st(7, "report", "d4", Slice::best_effort, Sovereignty::local_only),
  };
  for (int i = 0; i + 1 < 8; ++i) t.edges.push_back(ed(i, i + 1));
  t.value_budget = k_budget_per_stage * static_cast<double>(t.stages.size());
  return t;
}

// Four parallel probe sources converging on a fusion stage, then a linear
// classify/alert/log tail. Fan-in only; two-terminal series-parallel once a
// virtual source fronts the probes.
PipelineTemplate make_anomaly_sp() {
  PipelineTemplate t;
  t.kind = "anomaly-sp";
  t.stages = {
      st(0, "du_probe_a", "d1", Slice::embb),
      st(1, "du_probe_b", "d1", Slice::embb),
      st(2, "cu_metrics_a", "d2", Slice::embb),
      st(3, "cu_metrics_b", "d2", Slice::embb),
      st(4, "fuse", "d2", Slice::embb),
      st(5, "classify", "d2", Slice::embb),
      st(6, "alert", "d3", Slice::embb),
      st(7, "incident_log", "d4", Slice::best_effort, Sovereignty::local_only),
  };
  t.edges = {ed(0, 4), ed(1, 4), ed(2, 4), ed(3, 4), ed(4, 5), ed(5, 6), ed(6, 7)};
  t.value_budget = k_budget_per_stage * static_cast<double>(t.stages.size());
  return t;
}

// Cross-layer intelligence suite. Deliberately entangled: the diamond
// 1->{2,3}->4 plus the private descendants of 2 (model_refresh) and 3
// (suite_report) make the leaf-set family cross, so the raw graph is not
// laminar; contracting by home domain yields the path d1->d2->d3->d4.
// Three terminal outputs: refreshed model, applied policy, suite report.
PipelineTemplate make_ran_entangled() {
  PipelineTemplate t;
  t.kind = "ran-entangled";
  t.stages = {
      st(0, "raw_kpi", "d1", Slice::embb),
      st(1, "feature_extract", "d2", Slice::embb),
      st(2, "cqi_predict", "d3", Slice::embb),
      st(3, "anomaly_detect", "d3", Slice::embb),
      st(4, "handover_optimise", "d3", Slice::embb),
      st(5, "model_refresh", "d3", Slice::embb),
      st(6, "policy_update", "d3", Slice::embb),
      st(7, "suite_report", "d4", Slice::best_effort, Sovereignty::local_only),
  };
  t.edges = {ed(0, 1), ed(1, 2), ed(1, 3), ed(1, 4), ed(2, 4),
             ed(3, 4), ed(2, 5), ed(4, 6), ed(3, 6), ed(3, 7)};
  t.value_budget = k_budget_per_stage * static_cast<double>(t.stages.size());
  return t;
}

}  // namespace

PipelineTemplate build_template(const std::string& kind) {
  PipelineTemplate t;
  if (kind == "cqi-chain") {
    t = make_cqi_chain();
  } else if (kind == "anomaly-sp") {
    t = make_anomaly_sp();
  } else if (kind == "ran-entangled") {
    t = make_ran_entangled();
  } else {
    throw ConfigError("unknown pipeline template '" + kind +
                      "' (built-ins: cqi-chain, anomaly-sp, ran-entangled)");
  }
  validate_template(t);
  return t;
}

std::vector<std::string> builtin_template_kinds() {
  return {"cqi-chain", "anomaly-sp", "ran-entangled"};
}

void validate_template(const PipelineTemplate& t) {
  if (t.stages.empty()) throw ConfigError("template '" + t.kind + "' has no stages");
  std::set<int> ids;
  for (const auto& s : t.stages) {
    if (!ids.insert(s.stage_id).second)
      throw ConfigError("template '" + t.kind + "': duplicate stage id " +
                        std::to_string(s.stage_id));
    if (s.demand <= 0.0)
      throw ConfigError("template '" + t.kind + "': stage " +
                        std::to_string(s.stage_id) + " has non-positive demand");
    if (s.stage_type.empty())
      throw ConfigError("template '" + t.kind + "': stage " +
                        std::to_string(s.stage_id) + " has empty type");
  }
  for (const auto& e : t.edges) {
    if (!ids.count(e.from) || !ids.count(e.to))
      throw ConfigError("template '" + t.kind + "': edge " + std::to_string(e.from) +
                        "->" + std::to_string(e.to) + " references unknown stage");
    if (e.from == e.to)
      throw ConfigError("template '" + t.kind + "': self-loop on stage " +
                        std::to_string(e.from));
  }
  if (t.value_budget <= 0.0)
    throw ConfigError("template '" + t.kind + "': non-positive value budget");
  // Cycle check doubles as reachability sanity; throws StructuralError, which
  // we convert since a cyclic template is an input problem at this layer.
  try {
    topo_order(t);
  } catch (const StructuralError&) {
    throw ConfigError("template '" + t.kind + "' contains a cycle");
  }
}

/* ==================================================================== */
/* Topological order                                                     */
/* ==================================================================== */

std::vector<int> topo_order_edges(int n_nodes,
                                  const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> indeg(n_nodes, 0);
  std::vector<std::vector<int>> out(n_nodes);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= n_nodes || v < 0 || v >= n_nodes)
      throw StructuralError("edge endpoint out of range");
    out[u].push_back(v);
    ++indeg[v];
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n_nodes; ++i)
    if (indeg[i] == 0) ready.push(i);
  std::vector<int> order;
  order.reserve(n_nodes);
  while (!ready.empty()) {
    int u = ready.top();
    ready.pop();
    order.push_back(u);
    for (int v : out[u])
      if (--indeg[v] == 0) ready.push(v);
  }
  if (static_cast<int>(order.size()) != n_nodes)
    throw StructuralError("graph contains a cycle: topological order impossible");
  return order;
}

std::vector<int> topo_order(const PipelineTemplate& t) {
  // Map stage ids to a dense range, order, then map back. Built-ins already
  // use dense ids but custom configs need not.
  std::vector<int> ids;
  ids.reserve(t.stages.size());
  for (const auto& s : t.stages) ids.push_back(s.stage_id);
  std::sort(ids.begin(), ids.end());
  std::map<int, int> dense;
  for (std::size_t i = 0; i < ids.size(); ++i) dense[ids[i]] = static_cast<int>(i);
  std::vector<std::pair<int, int>> es;
  es.reserve(t.edges.size());
  for (const auto& e : t.edges) es.emplace_back(dense.at(e.from), dense.at(e.to));
  std::vector<int> order = topo_order_edges(static_cast<int>(ids.size()), es);
  for (int& v : order) v = ids[static_cast<std::size_t>(v)];
  return order;
}

/* ==================================================================== */
/* Structure classification                                              */
/* ==================================================================== */

std::vector<std::pair<int, int>> SpParseTree::leaf_edges() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& n : nodes)
    if (n.kind == Kind::edge && !n.virtual_edge) out.emplace_back(n.u, n.v);
  return out;
}

namespace {

// Live super-edge in the reduction multigraph; `tree` indexes the parse node
// that summarises everything already folded into this edge.
struct SuperEdge {
  int u, v;
  int tree;
  bool alive = true;
};

struct Reducer {
  SpParseTree tree;
  std::vector<SuperEdge> edges;
  int n = 0;

  int add_leaf(int u, int v, bool virt) {
    tree.nodes.push_back({SpParseTree::Kind::edge, u, v, virt, -1, -1});
    return static_cast<int>(tree.nodes.size()) - 1;
  }
  int add_inner(SpParseTree::Kind k, int l, int r) {
    tree.nodes.push_back({k, -1, -1, false, l, r});
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  // One full pass of parallel then series reductions; true if anything moved.
  bool pass(int source, int sink) {
    bool changed = false;
    // Parallel: merge edge pairs sharing both endpoints.
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (!edges[i].alive) continue;
      for (std::size_t j = i + 1; j < edges.size(); ++j) {
        if (!edges[j].alive) continue;
        if (edges[i].u == edges[j].u && edges[i].v == edges[j].v) {
          edges[i].tree = add_inner(SpParseTree::Kind::parallel, edges[i].tree,
                                    edges[j].tree);
          edges[j].alive = false;
          changed = true;
        }
      }
    }
    // Series: contract internal nodes with exactly one live in- and out-edge.
    std::vector<int> indeg(n, 0), outdeg(n, 0);
    std::vector<int> in_edge(n, -1), out_edge(n, -1);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      if (!edges[i].alive) continue;
      ++indeg[edges[i].v];
      in_edge[edges[i].v] = static_cast<int>(i);
      ++outdeg[edges[i].u];
      out_edge[edges[i].u] = static_cast<int>(i);
    }
    for (int v = 0; v < n; ++v) {
      if (v == source || v == sink) continue;
      if (indeg[v] != 1 || outdeg[v] != 1) continue;
      SuperEdge& a = edges[static_cast<std::size_t>(in_edge[v])];
      SuperEdge& b = edges[static_cast<std::size_t>(out_edge[v])];
      if (!a.alive || !b.alive) continue;  // merged earlier in this pass
      a.tree = add_inner(SpParseTree::Kind::series, a.tree, b.tree);
      a.v = b.v;
      b.alive = false;
      changed = true;
      // Degrees are now stale; finish the pass conservatively.
      return true;
    }
    return changed;
  }
};

}  // namespace

StructureClass classify_structure(int n_nodes,
                                  const std::vector<std::pair<int, int>>& edges) {
  // Cyclic input is a caller bug; topo_order_edges throws for us.
  topo_order_edges(n_nodes, edges);

  std::vector<int> indeg(n_nodes, 0), outdeg(n_nodes, 0);
  for (const auto& [u, v] : edges) {
    ++indeg[v];
    ++outdeg[u];
  }
  bool is_tree = true;
  for (int v = 0; v < n_nodes; ++v)
    if (indeg[v] > 1) is_tree = false;

  StructureClass result;

  if (edges.empty()) {
    // Degenerate: isolated stages. Call it a tree with an empty parse tree.
    result.cls = DagClass::tree;
    result.parse_tree = SpParseTree{};
    return result;
  }

  // Build the two-terminal reduction graph, adding virtual terminals when the
  // DAG has several sources/sinks (or isolated nodes).
  std::vector<int> sources, sinks;
  for (int v = 0; v < n_nodes; ++v) {
    if (indeg[v] == 0 && outdeg[v] > 0) sources.push_back(v);
    if (outdeg[v] == 0 && indeg[v] > 0) sinks.push_back(v);
    if (indeg[v] == 0 && outdeg[v] == 0) {
      sources.push_back(v);
      sinks.push_back(v);
    }
  }

  Reducer red;
  bool need_vsource = sources.size() != 1;
  bool need_vsink = sinks.size() != 1;
  red.n = n_nodes + (need_vsource ? 1 : 0) + (need_vsink ? 1 : 0);
  int source = need_vsource ? n_nodes : sources[0];
  int sink = need_vsink ? n_nodes + (need_vsource ? 1 : 0) : sinks[0];

  for (const auto& [u, v] : edges)
    red.edges.push_back({u, v, red.add_leaf(u, v, false), true});
  if (need_vsource)
    for (int s : sources) red.edges.push_back({source, s, red.add_leaf(-1, s, true), true});
  if (need_vsink)
    for (int t : sinks) red.edges.push_back({t, sink, red.add_leaf(t, -1, true), true});

  while (red.pass(source, sink)) {
  }

  int live = 0, last = -1;
  for (std::size_t i = 0; i < red.edges.size(); ++i) {
    if (red.edges[i].alive) {
      ++live;
      last = static_cast<int>(i);
    }
  }
  bool reduced = live == 1 && red.edges[static_cast<std::size_t>(last)].u == source &&
                 red.edges[static_cast<std::size_t>(last)].v == sink;

  if (is_tree) {
    result.cls = DagClass::tree;
    if (reduced) {
      red.tree.root = red.edges[static_cast<std::size_t>(last)].tree;
      result.parse_tree = std::move(red.tree);
    } else {
      result.parse_tree = SpParseTree{};  // keeps the cls!=general contract
    }
  } else if (reduced) {
    result.cls = DagClass::series_parallel;
    red.tree.root = red.edges[static_cast<std::size_t>(last)].tree;
    result.parse_tree = std::move(red.tree);
  } else {
    result.cls = DagClass::general;
  }
  return result;
}

StructureClass classify_structure(const PipelineTemplate& t) {
  std::vector<int> ids;
  for (const auto& s : t.stages) ids.push_back(s.stage_id);
  std::sort(ids.begin(), ids.end());
  std::map<int, int> dense;
  for (std::size_t i = 0; i < ids.size(); ++i) dense[ids[i]] = static_cast<int>(i);
  std::vector<std::pair<int, int>> es;
  for (const auto& e : t.edges) es.emplace_back(dense.at(e.from), dense.at(e.to));
  return classify_structure(static_cast<int>(ids.size()), es);
}

}  // namespace fedmarket
