/**
 * @file polymatroid.cpp
 */

#include "fedmarket/polymatroid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "fedmarket/errors.hpp"

namespace fedmarket {

namespace {

constexpr double k_inf = std::numeric_limits<double>::infinity();

std::string node_name(const ServiceDag& g, int v) {
  if (v >= 0 && v < static_cast<int>(g.label.size()) && !g.label[v].empty())
    return g.label[v];
  return "node " + std::to_string(v);
}

}  // namespace

/* ==================================================================== */
/* Construction                                                          */
/* ==================================================================== */

ServiceDag make_service_dag(int n, std::vector<std::pair<int, int>> edges,
                            std::vector<double> capacity,
                            std::vector<std::string> label) {
  if (n < 0) throw StructuralError("service dag: negative node count");
  if (static_cast<int>(capacity.size()) != n)
    throw StructuralError("service dag: capacity size mismatch");
  if (!label.empty() && static_cast<int>(label.size()) != n)
    throw StructuralError("service dag: label size mismatch");
  for (int v = 0; v < n; ++v)
    if (!(capacity[v] > 0.0))
      throw StructuralError("service dag: non-positive capacity at node " +
                            std::to_string(v));
  for (auto [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw StructuralError("service dag: edge endpoint out of range");
    if (u == v) throw StructuralError("service dag: self loop");
  }
  topo_order_edges(n, edges);  // throws StructuralError on cycles
  ServiceDag g;
  g.n = n;
  g.edges = std::move(edges);
  g.capacity = std::move(capacity);
  g.label = std::move(label);
  return g;
}

std::vector<int> dag_leaves(const ServiceDag& g) {
  std::vector<int> outdeg(g.n, 0);
  for (auto [u, v] : g.edges) {
    (void)v;
    ++outdeg[u];
  }
  std::vector<int> leaves;
  for (int v = 0; v < g.n; ++v)
    if (outdeg[v] == 0) leaves.push_back(v);
  return leaves;
}

ServiceDag service_dag_from_template(const PipelineTemplate& t) {
  std::vector<std::pair<int, int>> edges;
  edges.reserve(t.edges.size());
  for (const auto& e : t.edges) edges.emplace_back(e.from, e.to);
  std::vector<double> cap;
  std::vector<std::string> label;
  cap.reserve(t.stages.size());
  for (const auto& s : t.stages) {
    cap.push_back(s.demand);
    label.push_back(s.stage_type);
  }
  return make_service_dag(static_cast<int>(t.stages.size()), std::move(edges),
                          std::move(cap), std::move(label));
}

/* ==================================================================== */
/* Leaf-set families                                                     */
/* ==================================================================== */

LeafSetFamily leaf_sets(const ServiceDag& g) {
  std::vector<std::vector<int>> adj(g.n);
  std::vector<int> outdeg(g.n, 0);
  for (auto [u, v] : g.edges) {
    adj[u].push_back(v);
    ++outdeg[u];
  }
  // Reverse topological order so children are finished before parents.
  std::vector<int> topo = topo_order_edges(g.n, g.edges);

  std::vector<std::set<int>> reach(g.n);
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    int v = *it;
    if (outdeg[v] == 0) {
      reach[v].insert(v);
      continue;
    }
    for (int w : adj[v]) reach[v].insert(reach[w].begin(), reach[w].end());
  }

  LeafSetFamily fam;
  for (int v = 0; v < g.n; ++v) {
    if (outdeg[v] == 0) {
      fam.leaves.push_back(v);
    } else {
      LeafSetFamily::Entry e;
      e.node = v;
      e.leaf_set.assign(reach[v].begin(), reach[v].end());
      fam.sets.push_back(std::move(e));
    }
  }
  return fam;
}

std::optional<LaminarWitness> laminar_crossing(const LeafSetFamily& fam) {
  auto relation = [](const std::vector<int>& a, const std::vector<int>& b) {
    // 0 = disjoint, 1 = nested either way, 2 = crossing
    std::vector<int> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                          std::back_inserter(inter));
    if (inter.empty()) return 0;
    if (inter.size() == a.size() || inter.size() == b.size()) return 1;
    return 2;
  };
  for (size_t i = 0; i < fam.sets.size(); ++i)
    for (size_t j = i + 1; j < fam.sets.size(); ++j)
      if (relation(fam.sets[i].leaf_set, fam.sets[j].leaf_set) == 2) {
        LaminarWitness w;
        w.node_a = fam.sets[i].node;
        w.node_b = fam.sets[j].node;
        w.set_a = fam.sets[i].leaf_set;
        w.set_b = fam.sets[j].leaf_set;
        return w;
      }
  return std::nullopt;
}

/* ==================================================================== */
/* Rank                                                                  */
/* ==================================================================== */

namespace {

struct CoverSet {
  uint64_t mask = 0;   // over leaf positions
  double cost = 0.0;
  int node = -1;
};

// Shared preparation: leaf position index + one candidate cover set per
// node (internal leaf-sets and leaf singletons), restricted to S.
struct RankProblem {
  uint64_t target = 0;  // positions of S
  std::vector<CoverSet> sets;
};

RankProblem build_rank_problem(const ServiceDag& g, const std::vector<int>& S) {
  LeafSetFamily fam = leaf_sets(g);
  if (fam.leaves.size() > 64)
    throw StructuralError("rank: more than 64 leaves unsupported");
  std::map<int, int> pos;
  for (size_t i = 0; i < fam.leaves.size(); ++i)
    pos[fam.leaves[i]] = static_cast<int>(i);

  RankProblem p;
  for (int l : S) {
    auto it = pos.find(l);
    if (it == pos.end())
      throw StructuralError("rank: " + node_name(g, l) + " is not a leaf");
    p.target |= uint64_t{1} << it->second;
  }
  for (int l : fam.leaves) {
    CoverSet c;
    c.mask = uint64_t{1} << pos[l];
    c.cost = g.capacity[l];
    c.node = l;
    if (c.mask & p.target) p.sets.push_back(c);
  }
  for (const auto& e : fam.sets) {
    CoverSet c;
    for (int l : e.leaf_set) c.mask |= uint64_t{1} << pos[l];
    c.mask &= p.target;
    if (c.mask == 0) continue;
    c.cost = g.capacity[e.node];
    c.node = e.node;
    p.sets.push_back(c);
  }
  return p;
}

// Exhaustive weighted cover via branch and bound on the lowest uncovered
// position. Dropping dominated members of a cover never raises cost, so the
// optimum over arbitrary covers equals the optimum over antichain covers.
double cover_search(const RankProblem& p) {
  if (p.target == 0) return 0.0;
  // Sets able to cover each position, cheap first for tighter early bounds.
  std::vector<CoverSet> sets = p.sets;
  std::sort(sets.begin(), sets.end(),
            [](const CoverSet& a, const CoverSet& b) { return a.cost < b.cost; });
  double best = k_inf;
  std::vector<std::pair<uint64_t, double>> stack;  // (still uncovered, cost so far)
  stack.emplace_back(p.target, 0.0);
  while (!stack.empty()) {
    auto [left, cost] = stack.back();
    stack.pop_back();
    if (left == 0) {
      best = std::min(best, cost);
      continue;
    }
    if (cost >= best) continue;
    uint64_t lowest = left & (~left + 1);
    for (const auto& c : sets) {
      if (!(c.mask & lowest)) continue;
      if (cost + c.cost >= best) break;  // sorted ascending
      stack.emplace_back(left & ~c.mask, cost + c.cost);
    }
  }
  return best;
}

// Laminar containment forest: per distinct set keep the cheapest capacity,
// then each tree costs min(own capacity, sum of child covers).
struct LaminarNode {
  std::vector<int> leaf_set;  // ascending
  double cost = 0.0;
  std::vector<int> children;
};

double laminar_cover(const std::vector<LaminarNode>& nodes, int idx,
                     const std::set<int>& S) {
  const LaminarNode& nd = nodes[idx];
  bool touches = false;
  for (int l : nd.leaf_set)
    if (S.count(l)) {
      touches = true;
      break;
    }
  if (!touches) return 0.0;
  double via_children = 0.0;
  bool have_children = !nd.children.empty();
  for (int c : nd.children) via_children += laminar_cover(nodes, c, S);
  if (!have_children) return nd.cost;
  return std::min(nd.cost, via_children);
}

double rank_laminar(const ServiceDag& g, const LeafSetFamily& fam,
                    const std::vector<int>& S) {
  // Distinct sets with min capacity; singletons for every leaf.
  std::map<std::vector<int>, double> distinct;
  for (int l : fam.leaves) {
    std::vector<int> single{l};
    distinct[single] = g.capacity[l];
  }
  for (const auto& e : fam.sets) {
    auto it = distinct.find(e.leaf_set);
    double c = g.capacity[e.node];
    if (it == distinct.end())
      distinct[e.leaf_set] = c;
    else
      it->second = std::min(it->second, c);
  }
  std::vector<LaminarNode> nodes;
  nodes.reserve(distinct.size());
  for (auto& [ls, c] : distinct) {
    LaminarNode nd;
    nd.leaf_set = ls;
    nd.cost = c;
    nodes.push_back(std::move(nd));
  }
  // Parent = smallest strict superset. Sorting by size makes parents later.
  std::vector<int> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return nodes[a].leaf_set.size() < nodes[b].leaf_set.size();
  });
  std::vector<int> parent(nodes.size(), -1);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    int i = order[oi];
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      int j = order[oj];
      if (nodes[j].leaf_set.size() <= nodes[i].leaf_set.size()) continue;
      if (std::includes(nodes[j].leaf_set.begin(), nodes[j].leaf_set.end(),
                        nodes[i].leaf_set.begin(), nodes[i].leaf_set.end())) {
        parent[i] = j;
        break;  // smallest superset: first hit in size order
      }
    }
  }
  for (size_t i = 0; i < nodes.size(); ++i)
    if (parent[i] >= 0) nodes[parent[i]].children.push_back(static_cast<int>(i));

  std::set<int> want(S.begin(), S.end());
  for (int l : S)
    if (!std::binary_search(fam.leaves.begin(), fam.leaves.end(), l))
      throw StructuralError("rank: " + node_name(g, l) + " is not a leaf");
  double total = 0.0;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (parent[i] < 0) total += laminar_cover(nodes, static_cast<int>(i), want);
  return total;
}

}  // namespace

double rank(const ServiceDag& g, const std::vector<int>& S) {
  if (S.empty()) return 0.0;
  LeafSetFamily fam = leaf_sets(g);
  if (is_laminar(fam)) return rank_laminar(g, fam, S);
  return cover_search(build_rank_problem(g, S));
}

double rank_bruteforce_antichains(const ServiceDag& g, const std::vector<int>& S) {
  if (S.empty()) return 0.0;
  RankProblem p = build_rank_problem(g, S);
  // Recurse over candidate sets in id order; a chosen set must not nest with
  // any earlier choice (antichain in the containment order).
  size_t m = p.sets.size();
  double best = k_inf;
  std::vector<int> chosen;
  auto nested = [&](uint64_t a, uint64_t b) {
    return (a & b) == a || (a & b) == b;
  };
  std::function<void(size_t, uint64_t, double)> rec = [&](size_t i, uint64_t covered,
                                                          double cost) {
    if (cost >= best) return;
    if ((covered & p.target) == p.target) {
      best = std::min(best, cost);
      return;
    }
    if (i == m) return;
    rec(i + 1, covered, cost);
    for (int c : chosen)
      if (nested(p.sets[static_cast<size_t>(c)].mask, p.sets[i].mask)) return;
    chosen.push_back(static_cast<int>(i));
    rec(i + 1, covered | p.sets[i].mask, cost + p.sets[i].cost);
    chosen.pop_back();
  };
  rec(0, 0, 0.0);
  return best;
}

/* ==================================================================== */
/* Feasibility                                                           */
/* ==================================================================== */

bool is_feasible(const ServiceDag& g, const std::map<int, double>& x,
                 const GovernanceBounds* bounds) {
  LeafSetFamily fam = leaf_sets(g);
  std::set<int> leaf_ids(fam.leaves.begin(), fam.leaves.end());
  for (const auto& [l, r] : x) {
    if (!leaf_ids.count(l))
      throw StructuralError("is_feasible: " + node_name(g, l) + " is not a leaf");
    if (r < 0.0) return false;
    if (r > g.capacity[l]) return false;
    if (bounds) {
      auto it = bounds->upper.find(l);
      if (it != bounds->upper.end() && r > it->second) return false;
    }
  }
  for (const auto& e : fam.sets) {
    double total = 0.0;
    for (int l : e.leaf_set) {
      auto it = x.find(l);
      if (it != x.end()) total += it->second;
    }
    if (total > g.capacity[e.node]) return false;
  }
  return true;
}

/* ==================================================================== */
/* Submodularity                                                         */
/* ==================================================================== */

SubmodularReport check_submodular(const ServiceDag& g, int sample_budget,
                                  uint64_t seed) {
  LeafSetFamily fam = leaf_sets(g);
  int nl = static_cast<int>(fam.leaves.size());
  if (nl > 64) throw StructuralError("check_submodular: too many leaves");

  auto subset_vec = [&](uint64_t mask) {
    std::vector<int> v;
    for (int i = 0; i < nl; ++i)
      if (mask & (uint64_t{1} << i)) v.push_back(fam.leaves[static_cast<size_t>(i)]);
    return v;
  };

  SubmodularReport rep;
  std::map<uint64_t, double> memo;
  auto f = [&](uint64_t mask) {
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second;
    double val = rank(g, subset_vec(mask));
    memo[mask] = val;
    return val;
  };

  auto audit_pair = [&](uint64_t s, uint64_t t) {
    ++rep.pairs_checked;
    double lhs = f(s) + f(t);
    double rhs = f(s | t) + f(s & t);
    if (lhs + 1e-9 < rhs) {
      ++rep.violations;
      rep.max_violation = std::max(rep.max_violation, rhs - lhs);
    }
  };

  if (nl <= 12) {
    rep.exhaustive = true;
    uint64_t full = (nl == 64) ? ~uint64_t{0} : ((uint64_t{1} << nl) - 1);
    for (uint64_t s = 0; s <= full; ++s)
      for (uint64_t t = 0; t <= full; ++t) {
        if (s == t) continue;
        audit_pair(s, t);
      }
  } else {
    std::mt19937_64 rng(seed);
    uint64_t all = (nl >= 64) ? ~uint64_t{0} : ((uint64_t{1} << nl) - 1);
    for (int i = 0; i < sample_budget; ++i) {
      uint64_t s = rng() & all;
      uint64_t t = rng() & all;
      if (s == t) continue;
      audit_pair(s, t);
    }
  }
  rep.submodular = rep.violations == 0;
  return rep;
}

/* ==================================================================== */
/* Max flow (Edmonds-Karp)                                               */
/* ==================================================================== */

namespace {

struct FlowGraph {
  struct Arc {
    int to;
    double cap;
    size_t rev;
  };
  std::vector<std::vector<Arc>> adj;

  explicit FlowGraph(int n) : adj(static_cast<size_t>(n)) {}

  void add(int u, int v, double c) {
    adj[static_cast<size_t>(u)].push_back({v, c, adj[static_cast<size_t>(v)].size()});
    adj[static_cast<size_t>(v)].push_back(
        {u, 0.0, adj[static_cast<size_t>(u)].size() - 1});
  }

  double run(int s, int t) {
    double total = 0.0;
    const int n = static_cast<int>(adj.size());
    for (;;) {
      std::vector<int> prev_node(static_cast<size_t>(n), -1);
      std::vector<size_t> prev_arc(static_cast<size_t>(n), 0);
      std::deque<int> q{s};
      prev_node[static_cast<size_t>(s)] = s;
      while (!q.empty() && prev_node[static_cast<size_t>(t)] < 0) {
        int u = q.front();
        q.pop_front();
        for (size_t i = 0; i < adj[static_cast<size_t>(u)].size(); ++i) {
          const Arc& a = adj[static_cast<size_t>(u)][i];
          if (a.cap > 1e-12 && prev_node[static_cast<size_t>(a.to)] < 0) {
            prev_node[static_cast<size_t>(a.to)] = u;
            prev_arc[static_cast<size_t>(a.to)] = i;
            q.push_back(a.to);
          }
        }
      }
      if (prev_node[static_cast<size_t>(t)] < 0) break;
      double push = k_inf;
      for (int v = t; v != s; v = prev_node[static_cast<size_t>(v)]) {
        int u = prev_node[static_cast<size_t>(v)];
        push = std::min(push,
                        adj[static_cast<size_t>(u)][prev_arc[static_cast<size_t>(v)]].cap);
      }
      for (int v = t; v != s; v = prev_node[static_cast<size_t>(v)]) {
        int u = prev_node[static_cast<size_t>(v)];
        Arc& a = adj[static_cast<size_t>(u)][prev_arc[static_cast<size_t>(v)]];
        a.cap -= push;
        adj[static_cast<size_t>(a.to)][a.rev].cap += push;
      }
      total += push;
    }
    return total;
  }
};

}  // namespace

double max_flow(int n_nodes, const std::vector<FlowEdge>& edges, int source, int sink) {
  if (source < 0 || source >= n_nodes || sink < 0 || sink >= n_nodes)
    throw StructuralError("max_flow: terminal out of range");
  if (source == sink) throw StructuralError("max_flow: source equals sink");
  FlowGraph fg(n_nodes);
  for (const auto& e : edges) {
    if (e.from < 0 || e.from >= n_nodes || e.to < 0 || e.to >= n_nodes)
      throw StructuralError("max_flow: edge endpoint out of range");
    if (e.capacity < 0.0) throw StructuralError("max_flow: negative capacity");
    fg.add(e.from, e.to, e.capacity);
  }
  return fg.run(source, sink);
}

/* ==================================================================== */
/* Encapsulation                                                         */
/* ==================================================================== */

namespace {

// Composite capacity of one class: node-split max flow from the class's
// entry boundary to its exit boundary. Sources/sinks of the induced
// sub-DAG stand in when a boundary side is empty.
double composite_capacity(const ServiceDag& g, const std::vector<int>& members,
                          const std::vector<int>& node_class, int cls) {
  std::set<int> inside(members.begin(), members.end());
  std::set<int> entries, exits, local_src(inside), local_sink(inside);
  for (auto [u, v] : g.edges) {
    bool ui = inside.count(u) > 0, vi = inside.count(v) > 0;
    if (ui && vi) {
      local_src.erase(v);
      local_sink.erase(u);
    } else if (!ui && vi) {
      entries.insert(v);
      local_src.erase(v);
    } else if (ui && !vi) {
      exits.insert(u);
      local_sink.erase(u);
    }
  }
  (void)node_class;
  (void)cls;
  if (entries.empty()) entries = local_src;
  if (exits.empty()) exits = local_sink;

  // v -> (v_in, v_out)
  std::map<int, std::pair<int, int>> split;
  int next = 0;
  for (int v : members) {
    split[v] = {next, next + 1};
    next += 2;
  }
  int s = next, t = next + 1;
  std::vector<FlowEdge> fe;
  for (int v : members)
    fe.push_back({split[v].first, split[v].second, g.capacity[v]});
  for (auto [u, v] : g.edges)
    if (inside.count(u) && inside.count(v))
      fe.push_back({split[u].second, split[v].first, k_inf});
  for (int v : entries) fe.push_back({s, split[v].first, k_inf});
  for (int v : exits) fe.push_back({split[v].second, t, k_inf});
  return max_flow(next + 2, fe, s, t);
}

}  // namespace

EncapsulatedDag encapsulate(const ServiceDag& g, const std::vector<int>& node_class,
                            std::vector<std::string> class_names) {
  if (static_cast<int>(node_class.size()) != g.n)
    throw StructuralError("encapsulate: class assignment size mismatch");
  int k = 0;
  for (int c : node_class) {
    if (c < 0) throw StructuralError("encapsulate: negative class id");
    k = std::max(k, c + 1);
  }
  std::vector<std::vector<int>> members(static_cast<size_t>(k));
  for (int v = 0; v < g.n; ++v)
    members[static_cast<size_t>(node_class[static_cast<size_t>(v)])].push_back(v);
  for (int c = 0; c < k; ++c)
    if (members[static_cast<size_t>(c)].empty())
      throw StructuralError("encapsulate: empty class " + std::to_string(c));
  if (!class_names.empty() && static_cast<int>(class_names.size()) != k)
    throw StructuralError("encapsulate: class name count mismatch");

  // Each class must induce one weakly connected piece.
  for (int c = 0; c < k; ++c) {
    const auto& mem = members[static_cast<size_t>(c)];
    std::map<int, std::vector<int>> und;
    std::set<int> inside(mem.begin(), mem.end());
    for (auto [u, v] : g.edges)
      if (inside.count(u) && inside.count(v)) {
        und[u].push_back(v);
        und[v].push_back(u);
      }
    std::set<int> seen;
    std::deque<int> q{mem.front()};
    seen.insert(mem.front());
    while (!q.empty()) {
      int u = q.front();
      q.pop_front();
      for (int v : und[u])
        if (seen.insert(v).second) q.push_back(v);
    }
    if (seen.size() != mem.size()) {
      std::string nm = class_names.empty() ? std::to_string(c)
                                           : class_names[static_cast<size_t>(c)];
      throw StructuralError("encapsulate: class " + nm +
                            " does not induce a connected subgraph");
    }
  }

  // Quotient edges, deduplicated; quotient must stay acyclic.
  std::set<std::pair<int, int>> qedges;
  for (auto [u, v] : g.edges) {
    int cu = node_class[static_cast<size_t>(u)], cv = node_class[static_cast<size_t>(v)];
    if (cu != cv) qedges.insert({cu, cv});
  }
  try {
    topo_order_edges(k, std::vector<std::pair<int, int>>(qedges.begin(), qedges.end()));
  } catch (const StructuralError&) {
    throw StructuralError("encapsulate: quotient graph has a cycle");
  }

  EncapsulatedDag out;
  out.node_class = node_class;
  if (class_names.empty())
    for (int c = 0; c < k; ++c) out.class_names.push_back("class" + std::to_string(c));
  else
    out.class_names = std::move(class_names);

  std::vector<double> qcap;
  for (int c = 0; c < k; ++c)
    qcap.push_back(composite_capacity(g, members[static_cast<size_t>(c)], node_class, c));
  std::vector<std::pair<int, int>> qe(qedges.begin(), qedges.end());
  out.quotient = make_service_dag(k, std::move(qe), std::move(qcap), out.class_names);
  return out;
}

std::pair<std::vector<int>, std::vector<std::string>> partition_by_home_domain(
    const PipelineTemplate& t) {
  std::vector<int> cls;
  std::vector<std::string> names;
  std::map<std::string, int> idx;
  for (const auto& s : t.stages) {
    auto it = idx.find(s.home_domain);
    if (it == idx.end()) {
      it = idx.emplace(s.home_domain, static_cast<int>(names.size())).first;
      names.push_back(s.home_domain);
    }
    cls.push_back(it->second);
  }
  return {cls, names};
}

/* ==================================================================== */
/* Structure report                                                      */
/* ==================================================================== */

StructureReport structure_report(const ServiceDag& g, int sample_budget,
                                 uint64_t seed) {
  StructureReport rep;
  rep.cls = classify_structure(g.n, g.edges).cls;
  LeafSetFamily fam = leaf_sets(g);
  rep.witness = laminar_crossing(fam);
  rep.laminar = !rep.witness.has_value();
  SubmodularReport sub = check_submodular(g, sample_budget, seed);
  rep.submodular = sub.submodular;
  rep.gamma_violations = sub.violations;
  rep.gamma_max = sub.max_violation;
  return rep;
}

}  // namespace fedmarket
