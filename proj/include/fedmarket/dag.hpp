#pragma once
/**
 * @file dag.hpp
 * @brief Pipeline templates and DAG structure classification.
 *
 * A pipeline is a DAG of stages. Three built-in templates cover the shapes the
 * evaluation harness exercises: a linear chain, a fan-in (series-parallel)
 * detector suite, and an entangled cross-layer suite whose leaf-set families
 * cross (resolved downstream by integrator encapsulation).
 */

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedmarket {

/* ==================================================================== */
/* Slices and sovereignty                                                */
/* ==================================================================== */

// QoS tiers, strictest first. A worker may serve a stage iff the worker's
// tier is <= the stage's tier: URLLC workers serve anything, URLLC stages
// are never served by non-URLLC workers.
enum class Slice : uint8_t { urllc = 0, embb = 1, best_effort = 2 };

enum class Sovereignty : uint8_t { free = 0, local_only = 1 };

const char* to_string(Slice s);
Slice slice_from_string(const std::string& s);

inline bool slice_compatible(Slice worker, Slice stage) {
  return static_cast<uint8_t>(worker) <= static_cast<uint8_t>(stage);
}

/* ==================================================================== */
/* Stages, edges, templates                                              */
/* ==================================================================== */

struct StageSpec {
  int stage_id = 0;
  std::string stage_type;
  double demand = 1.0;       // load units occupied on the assigned worker
  double output_rate = 1.0;  // relative payload rate on outgoing edges
  std::string home_domain;   // nominal layer of the stage; template metadata
  Slice slice = Slice::embb;
  Sovereignty sovereignty = Sovereignty::free;
};

struct StageEdge {
  int from = 0;
  int to = 0;
  std::optional<double> latency_bound_ms;  // advisory; strategies do not enforce it
};

struct PipelineTemplate {
  std::string kind;
  std::vector<StageSpec> stages;
  std::vector<StageEdge> edges;
  double value_budget = 0.0;  // admission budget for the market strategy

  const StageSpec& stage(int stage_id) const;
  bool has_stage(int stage_id) const;
};

// Built-in template registry. Stage-type strings are part of the CSV output
// contract; do not rename them casually.
PipelineTemplate build_template(const std::string& kind);
std::vector<std::string> builtin_template_kinds();

// Throws ConfigError on duplicate ids, dangling edges, cycles, non-positive
// demand or budget.
void validate_template(const PipelineTemplate& t);

/* ==================================================================== */
/* Topological order                                                     */
/* ==================================================================== */

// Kahn's algorithm; taken-next ties broken by ascending node id so downstream
// placement walks are reproducible. Throws StructuralError on a cycle.
std::vector<int> topo_order_edges(int n_nodes,
                                  const std::vector<std::pair<int, int>>& edges);
std::vector<int> topo_order(const PipelineTemplate& t);

/* ==================================================================== */
/* Structure classification                                              */
/* ==================================================================== */

enum class DagClass : uint8_t { tree, series_parallel, general };
const char* to_string(DagClass c);

// Series-parallel parse tree. Leaves are edges of the (possibly augmented)
// two-terminal graph; edges added to virtualise a super-source/super-sink are
// flagged so callers can recover exactly the original edge set.
struct SpParseTree {
  enum class Kind : uint8_t { edge, series, parallel };
  struct Node {
    Kind kind = Kind::edge;
    int u = -1, v = -1;        // endpoints for leaves; -1 = virtual terminal
    bool virtual_edge = false;
    int left = -1, right = -1;  // children for series/parallel nodes
  };
  std::vector<Node> nodes;
  int root = -1;

  // Original (non-virtual) edges, in no particular order.
  std::vector<std::pair<int, int>> leaf_edges() const;
};

struct StructureClass {
  DagClass cls = DagClass::general;
  std::optional<SpParseTree> parse_tree;  // present when cls != general
};

// tree: every node has at most one parent (forests count).
// series-parallel: iterated series/parallel reduction of the two-terminal
//   graph (augmented with virtual terminals when needed) collapses it to a
//   single edge.
// general: everything else.
StructureClass classify_structure(int n_nodes,
                                  const std::vector<std::pair<int, int>>& edges);
StructureClass classify_structure(const PipelineTemplate& t);

}  // namespace fedmarket
