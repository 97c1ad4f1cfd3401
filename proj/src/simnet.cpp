/**
 * @file simnet.cpp
 * @brief Discrete-event pipeline execution engine.
 *
 * Design notes, enforced throughout:
 *  - one event queue, strict (time, sequence) order, times in milliseconds;
 *  - workers serve one load unit at a time from a FIFO queue; a worker's
 *    load is its queued plus in-service demand, which is exactly what
 *    brokers see; multi-stage over-commitment inside one placement round is
 *    the reservation ledger's job, not the load signal's;
 *  - stage dataflow: a stage enters its worker's queue once every
 *    predecessor output has arrived over a sampled link; managed strategies
 *    re-place a stage (bounded attempts) rather than feed a full queue,
 *    while the unconditional round-robin dispatcher pushes into saturated
 *    workers and pays for it with unbounded backlog past the service knee;
 *  - failures re-place work with bounded attempts; partitions drop every
 *    cross-site message, and stranded work is re-planned on the owner side.
 */

#include "fedmarket/simnet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <set>

#include "fedmarket/errors.hpp"

namespace fedmarket {

/* ==================================================================== */
/* Topology and models                                                   */
/* ==================================================================== */

static WorkerSpec mk_worker(int id, const std::string& dom, Site site,
                            Slice tier) {
  WorkerSpec w;
  w.worker_id = id;
  w.domain = dom;
  w.site = site;
  w.tier = tier;
  w.capacity = 4.0;
  w.speed = 1.0;
  return w;
}

std::vector<DomainSpec> default_topology() {
  std::vector<DomainSpec> out;
  int next_id = 0;
  auto add = [&](const std::string& dom, Site site, const std::string& role,
                 const std::vector<Slice>& tiers) {
    DomainSpec d;
    d.domain_id = dom;
    d.site = site;
    d.role = role;
    for (Slice t : tiers) d.workers.push_back(mk_worker(next_id++, dom, site, t));
    out.push_back(std::move(d));
  };
  add("d1", Site::edge, "DU", std::vector<Slice>(12, Slice::urllc));
  std::vector<Slice> mixed(6, Slice::urllc);
  mixed.insert(mixed.end(), 6, Slice::embb);
  add("d2", Site::edge, "CU+nearRT-RIC", mixed);
  add("d3", Site::cloud, "nonRT-RIC", std::vector<Slice>(12, Slice::embb));
  add("d4", Site::cloud, "SMO", std::vector<Slice>(12, Slice::best_effort));
  return out;
}

double LatencyModel::slice_delay_ms(Slice s) const {
  switch (s) {
    case Slice::urllc: return 1.0;
    case Slice::embb: return 5.0;
    case Slice::best_effort: return 0.0;
  }
  return 0.0;
}

std::vector<double> poisson_arrivals(double lambda_pps, double duration_s,
                                     std::mt19937_64& rng) {
  if (lambda_pps <= 0.0) throw ConfigError("arrival rate must be positive");
  std::vector<double> out;
  // Inverse-CDF exponential gaps keep the stream identical across library
  // implementations.
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double t = 0.0;
  for (;;) {
    double u = uni(rng);
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    t += -std::log(u) / lambda_pps;
    if (t >= duration_s) break;
    out.push_back(t);
  }
  return out;
}

double sample_link_latency(const WorkerSpec& src, const WorkerSpec& dst,
                           const LatencyModel& m, std::mt19937_64& rng) {
  if (src.worker_id == dst.worker_id) return 0.0;
  if (src.site == dst.site) return m.lan_ms;
  std::uniform_real_distribution<double> uni(m.wan_ms - m.wan_jitter_ms,
                                             m.wan_ms + m.wan_jitter_ms);
  return std::max(0.0, uni(rng));
}

const char* to_string(FailureKind k) {
  switch (k) {
    case FailureKind::worker_kill: return "worker-kill";
    case FailureKind::broker_kill: return "broker-kill";
    case FailureKind::partition_start: return "partition-start";
    case FailureKind::partition_end: return "partition-end";
    case FailureKind::heterogeneity_profile: return "heterogeneity-profile";
  }
  return "?";
}

FailureKind failure_kind_from_name(const std::string& name) {
  if (name == "worker-kill") return FailureKind::worker_kill;
  if (name == "broker-kill") return FailureKind::broker_kill;
  if (name == "partition-start") return FailureKind::partition_start;
  if (name == "partition-end") return FailureKind::partition_end;
  if (name == "heterogeneity-profile") return FailureKind::heterogeneity_profile;
  throw ConfigError("unknown failure kind '" + name + "'");
}

/* ==================================================================== */
/* Engine internals                                                      */
/* ==================================================================== */

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  return std::mt19937_64(mix64(seed * 0x100000001b3ULL + tag));
}

enum EvKind {
  ev_arrival,       // a: merged-arrival index
  ev_periodic,      // a: broker index
  ev_plan_retry,    // a: pipeline index
  ev_input,         // a: pipeline, b: dense stage, c: stage generation
  ev_complete,      // a: worker index, c: service generation
  ev_push_deliver,  // a: from broker, b: to broker, c: payload index
  ev_push_result,   // a: from broker, b: to broker, c: 1 success / 0 miss
  ev_probe_ok,      // a: prober broker, b: target broker
  ev_failure        // a: failure plan index
};

struct Ev {
  double t = 0.0;
  std::uint64_t seq = 0;
  EvKind kind = ev_arrival;
  int a = -1, b = -1, c = -1;
};

struct EvAfter {
  bool operator()(const Ev& x, const Ev& y) const {
    if (x.t != y.t) return x.t > y.t;
    return x.seq > y.seq;
  }
};

struct StageRt {
  int worker = -1;      // assigned worker id (spec id, not index)
  int gen = 0;          // bumped on every re-placement; stale events ignored
  int attempts = 0;     // placements consumed by this stage
  int missing = 0;      // predecessor outputs still in flight
  bool counted = false; // currently held as outstanding load on `worker`
  bool enqueued = false;
  bool running = false;
  bool done = false;
  double done_ms = -1.0;
};

struct PipeRt {
  long id = 0;
  int owner = -1;  // broker index that planned the pipeline
  int source_domain = -1;
  double arrival_ms = 0.0;
  bool in_window = false;
  bool accepted = false;
  bool completed = false;
  bool failed = false;
  int plan_attempts = 0;
  int replans = 0;
  std::set<std::string> excluded;  // peers that refused or timed out
  std::map<int, int> assignment;   // stage id -> worker id
  double cost = 0.0;
  std::string reason;
  std::vector<StageRt> st;
  int remaining = 0;
  double done_ms = -1.0;
};

struct SimWorker {
  WorkerSpec spec;
  double nominal_speed = 1.0;
  int dom = -1;  // domain index
  bool alive = true;
  double outstanding = 0.0;  // queued + in-service demand
  bool busy = false;
  int cur_p = -1, cur_s = -1, cur_gen = -1;
  std::deque<std::array<int, 3>> fifo;  // (pipeline, stage, gen)
};

struct BrokerRt {
  BrokerState st;
  bool alive = true;
  Site site = Site::edge;
  std::vector<int> widx;  // indices into the engine worker array
  int rep_widx = -1;      // representative worker for ingress links
  std::vector<std::pair<double, PriceSignalMsg>> own_log;
};

class Engine {
 public:
  explicit Engine(const SimConfig& cfg) : cfg_(cfg) { init(); }

  RunRecord run();

 private:
  const SimConfig& cfg_;
  PipelineTemplate templ_;
  std::vector<int> stage_ids_;      // dense index -> stage id
  std::map<int, int> stage_dense_;  // stage id -> dense index
  std::vector<std::vector<int>> preds_, succs_;
  std::vector<int> order_;  // dense indices in topological order
  std::vector<int> sinks_;

  std::vector<DomainSpec> topo_;
  std::vector<SimWorker> workers_;
  std::map<int, int> wix_;  // worker id -> index
  std::vector<BrokerRt> brokers_;
  std::map<std::string, int> bix_;         // domain -> broker index
  std::vector<PipelineTemplate> planned_;  // governance-rewritten, per broker

  std::vector<PipeRt> pipes_;
  std::vector<std::pair<double, int>> arrivals_;  // (ms, source domain index)

  std::priority_queue<Ev, std::vector<Ev>, EvAfter> pq_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double end_ms_ = 0.0;
  bool partition_ = false;
  double partition_since_ms_ = -1.0;
  int rr_cursor_ = 0;  // the round-robin orchestrator keeps one global cursor
  std::mt19937_64 wan_rng_;
  std::vector<PriceSignalMsg> push_store_;
  long cross_site_partition_completions_ = 0;

  bool is_market() const { return cfg_.strategy == "market"; }

  void init();
  void schedule(double t, EvKind k, int a = -1, int b = -1, int c = -1) {
    pq_.push(Ev{t, seq_++, k, a, b, c});
  }

  bool reachable(Site a, Site b) const { return !partition_ || a == b; }
  bool dispatch_ok(int owner, const SimWorker& w) const {
    return brokers_[static_cast<size_t>(w.dom)].alive &&
           reachable(brokers_[static_cast<size_t>(owner)].site, w.spec.site);
  }
  double wlink(const SimWorker& a, const SimWorker& b) {
    return sample_link_latency(a.spec, b.spec, cfg_.latency, wan_rng_);
  }
  double broker_link(const BrokerRt& a, const BrokerRt& b) {
    if (a.site == b.site) return cfg_.latency.lan_ms;
    std::uniform_real_distribution<double> uni(
        cfg_.latency.wan_ms - cfg_.latency.wan_jitter_ms,
        cfg_.latency.wan_ms + cfg_.latency.wan_jitter_ms);
    return std::max(0.0, uni(wan_rng_));
  }
  double ingress_ms(int owner, const SimWorker& w) {
    const BrokerRt& b = brokers_[static_cast<size_t>(owner)];
    if (w.dom == owner) return 0.0;  // broker and worker share a host
    if (b.rep_widx >= 0)
      return wlink(workers_[static_cast<size_t>(b.rep_widx)], w);
    return b.site == w.spec.site ? cfg_.latency.lan_ms : cfg_.latency.wan_ms;
  }
  double service_ms(const SimWorker& w, const StageSpec& s) const {
    return cfg_.base_service_ms * w.spec.speed +
           cfg_.latency.slice_delay_ms(s.slice);
  }
  const StageSpec& stage_spec(int owner, int dense) const {
    return planned_[static_cast<size_t>(owner)]
        .stages[static_cast<size_t>(dense)];
  }
  SimWorker& worker_of(const StageRt& s) {
    return workers_[static_cast<size_t>(wix_.at(s.worker))];
  }
  bool worker_eligible(const StageSpec& s, const SimWorker& w,
                       const std::string& origin) const {
    if (!w.alive) return false;
    if (static_cast<int>(s.slice) < static_cast<int>(w.spec.tier)) return false;
    if (s.sovereignty == Sovereignty::local_only && w.spec.domain != origin)
      return false;
    return true;
  }

  void refresh_beliefs(BrokerRt& b);
  TopologySnapshot snapshot(int owner, bool origin_only) const;

  void handle_arrival(int idx);
  void plan_pipeline(int pi);
  bool resolve_remote(PipeRt& p, PlacementResult& plan);
  void commit(int pi, const std::map<int, int>& assignment, double cost);
  void release_stage(PipeRt& p, int dense);
  void fail_pipeline(PipeRt& p, const std::string& reason);
  void on_input(int pi, int dense, int gen);
  void enqueue_stage(int pi, int dense);
  void start_service(int widx, int pi, int dense);
  void on_complete(int widx, int gen);
  void complete_stage(int pi, int dense, int widx);
  void finish_pipeline(int pi);
  void stage_failure(int pi, int dense, const std::string& why);
  int replace_worker(const PipeRt& p, int dense);
  void stranded_replan(int pi);
  void deliver_inputs_for(int pi, int dense);

  void on_periodic(int bidx);
  void apply_failure(const FailureEvent& ev);
  void kill_worker(int widx);

  RunRecord collect();
};

/* -------------------------------------------------------------------- */
/* Setup                                                                 */
/* -------------------------------------------------------------------- */

void Engine::init() {
  static const std::set<std::string> kStrategies = {
      "market",   "oracle",         "oracle-sharded", "rr-global",
      "locality", "latency-greedy", "spillover"};
  if (!kStrategies.count(cfg_.strategy))
    throw ConfigError("unknown strategy '" + cfg_.strategy + "'");
  if (cfg_.workload.warmup_s < 0 ||
      cfg_.workload.warmup_s >= cfg_.workload.duration_s)
    throw ConfigError("warmup must lie inside the run duration");
  if (cfg_.base_service_ms <= 0)
    throw ConfigError("base service time must be positive");

  templ_ = cfg_.custom_template ? *cfg_.custom_template
                                : build_template(cfg_.workload.pipeline_kind);
  validate_template(templ_);

  const size_t n = templ_.stages.size();
  stage_ids_.resize(n);
  preds_.assign(n, {});
  succs_.assign(n, {});
  for (size_t i = 0; i < n; ++i) {
    stage_ids_[i] = templ_.stages[i].stage_id;
    stage_dense_[templ_.stages[i].stage_id] = static_cast<int>(i);
  }
  for (const StageEdge& e : templ_.edges) {
    int a = stage_dense_.at(e.from), b = stage_dense_.at(e.to);
    succs_[static_cast<size_t>(a)].push_back(b);
    preds_[static_cast<size_t>(b)].push_back(a);
  }
  for (int sid : topo_order(templ_)) order_.push_back(stage_dense_.at(sid));
  for (size_t i = 0; i < n; ++i)
    if (succs_[i].empty()) sinks_.push_back(static_cast<int>(i));

  topo_ = cfg_.topology.empty() ? default_topology() : cfg_.topology;
  for (size_t di = 0; di < topo_.size(); ++di) {
    BrokerRt b;
    b.st.domain = topo_[di].domain_id;
    b.st.site = topo_[di].site;
    b.site = topo_[di].site;
    if (bix_.count(topo_[di].domain_id))
      throw ConfigError("duplicate domain id in topology");
    for (const WorkerSpec& ws : topo_[di].workers) {
      if (wix_.count(ws.worker_id))
        throw ConfigError("duplicate worker id in topology");
      SimWorker w;
      w.spec = ws;
      w.nominal_speed = ws.speed;
      w.dom = static_cast<int>(di);
      wix_[ws.worker_id] = static_cast<int>(workers_.size());
      b.widx.push_back(static_cast<int>(workers_.size()));
      workers_.push_back(std::move(w));
    }
    if (!b.widx.empty()) b.rep_widx = b.widx.front();
    for (const StageSpec& s : templ_.stages) b.st.known_types.insert(s.stage_type);
    b.st.governance.scenario = cfg_.governance;
    for (const std::string& t : cfg_.local_only_types)
      b.st.governance.local_only_types.insert(t);
    bix_[topo_[di].domain_id] = static_cast<int>(brokers_.size());
    brokers_.push_back(std::move(b));
  }
  for (BrokerRt& b : brokers_)
    for (const DomainSpec& d : topo_)
      if (d.domain_id != b.st.domain) {
        PeerView pv;
        pv.peer_domain = d.domain_id;
        b.st.peers[d.domain_id] = std::move(pv);
      }

  for (const BrokerRt& b : brokers_)
    planned_.push_back(apply_governance(templ_, b.st.governance, b.site));

  // Per-domain Poisson arrival streams at an even lambda split, merged.
  end_ms_ = cfg_.workload.duration_s * 1000.0;
  double share = cfg_.workload.lambda_pps / static_cast<double>(topo_.size());
  for (size_t di = 0; di < topo_.size(); ++di) {
    auto rng = stream(cfg_.workload.seed, 0x1000 + di);
    for (double t_s : poisson_arrivals(share, cfg_.workload.duration_s, rng))
      arrivals_.push_back({t_s * 1000.0, static_cast<int>(di)});
  }
  std::sort(arrivals_.begin(), arrivals_.end());
  for (size_t i = 0; i < arrivals_.size(); ++i)
    schedule(arrivals_[i].first, ev_arrival, static_cast<int>(i));

  wan_rng_ = stream(cfg_.workload.seed, 0x2000);

  for (size_t i = 0; i < cfg_.failures.events.size(); ++i) {
    const FailureEvent& f = cfg_.failures.events[i];
    if (f.time_s < 0 || f.time_s > cfg_.workload.duration_s)
      throw ConfigError("failure event outside the run window");
    if (f.kind == FailureKind::worker_kill ||
        f.kind == FailureKind::broker_kill) {
      bool dom = bix_.count(f.target) > 0;
      bool wid = !dom && !f.target.empty() &&
                 f.target.find_first_not_of("0123456789") ==
                     std::string::npos &&
                 wix_.count(std::stoi(f.target)) > 0;
      if (f.kind == FailureKind::broker_kill && !dom)
        throw ConfigError("broker-kill target must name a domain");
      if (f.kind == FailureKind::worker_kill && !dom && !wid)
        throw ConfigError("worker-kill target must name a domain or worker id");
    }
    schedule(f.time_s * 1000.0, ev_failure, static_cast<int>(i));
  }

  if (is_market())
    for (size_t bi = 0; bi < brokers_.size(); ++bi)
      schedule(0.0, ev_periodic, static_cast<int>(bi));
}

/* -------------------------------------------------------------------- */
/* Broker views                                                          */
/* -------------------------------------------------------------------- */

void Engine::refresh_beliefs(BrokerRt& b) {
  b.st.workers.clear();
  for (int wi : b.widx) {
    const SimWorker& w = workers_[static_cast<size_t>(wi)];
    WorkerView v;
    v.spec = w.spec;
    v.load = w.outstanding;
    v.alive = w.alive;
    b.st.workers.push_back(std::move(v));
  }
}

TopologySnapshot Engine::snapshot(int owner, bool origin_only) const {
  TopologySnapshot s;
  s.lan_ms = cfg_.latency.lan_ms;
  s.wan_ms = cfg_.latency.wan_ms;
  for (const SimWorker& w : workers_) {
    if (origin_only && w.dom != owner) continue;
    if (!origin_only && !dispatch_ok(owner, w)) continue;
    WorkerView v;
    v.spec = w.spec;
    v.load = w.outstanding;
    v.alive = w.alive;
    s.workers.push_back(std::move(v));
  }
  return s;
}

/* -------------------------------------------------------------------- */
/* Arrivals and planning                                                 */
/* -------------------------------------------------------------------- */

void Engine::handle_arrival(int idx) {
  const auto& [t_ms, src] = arrivals_[static_cast<size_t>(idx)];
  PipeRt p;
  p.id = static_cast<long>(pipes_.size());
  p.source_domain = src;
  p.arrival_ms = t_ms;
  p.in_window = t_ms >= cfg_.workload.warmup_s * 1000.0;
  p.st.assign(templ_.stages.size(), StageRt{});

  // Arrivals of a dead broker's domain re-register with the lowest-latency
  // healthy broker: same site first, then across, names breaking ties.
  int owner = src;
  if (!brokers_[static_cast<size_t>(src)].alive) {
    owner = -1;
    Site home = brokers_[static_cast<size_t>(src)].site;
    for (int pass = 0; pass < 2 && owner < 0; ++pass)
      for (size_t bi = 0; bi < brokers_.size(); ++bi)
        if (brokers_[bi].alive && (brokers_[bi].site == home) == (pass == 0)) {
          owner = static_cast<int>(bi);
          break;
        }
  }
  if (owner < 0) {
    p.failed = true;
    p.reason = "no-broker";
    pipes_.push_back(std::move(p));
    return;
  }
  p.owner = owner;
  pipes_.push_back(std::move(p));
  plan_pipeline(static_cast<int>(pipes_.size()) - 1);
}

// Choose workers for every remote stage of a market plan by asking each
// peer broker, which books against its own outstanding load. Returns false
// on any refusal or unreachable peer; the caller re-plans local-only.
bool Engine::resolve_remote(PipeRt& p, PlacementResult& plan) {
  BrokerRt& owner = brokers_[static_cast<size_t>(p.owner)];
  std::map<std::string, ReservationLedger> ledgers;
  std::map<std::string, std::vector<WorkerView>> views;
  for (StagePlacement& sp : plan.stages) {
    if (!sp.remote) continue;
    auto it = bix_.find(sp.domain);
    BrokerRt* peer =
        it == bix_.end() ? nullptr : &brokers_[static_cast<size_t>(it->second)];
    if (!peer || !peer->alive || !reachable(owner.site, peer->site)) {
      // The dispatch RPC times out; the miss counts toward peer eviction.
      if (peer)
        on_price_push_result(owner.st.peers[sp.domain], false,
                             cfg_.federation);
      p.excluded.insert(sp.domain);
      p.reason = "peer-timeout";
      return false;
    }
    if (!views.count(sp.domain)) {
      refresh_beliefs(*peer);
      views[sp.domain] = peer->st.workers;
    }
    const StageSpec& spec =
        planned_[static_cast<size_t>(p.owner)]
            .stages[static_cast<size_t>(stage_dense_.at(sp.stage_id))];
    auto pick =
        cheapest_local(spec, views[sp.domain], ledgers[sp.domain], cfg_.market);
    bool ok = pick.has_value();
    if (ok) {
      const WorkerView* wv = nullptr;
      for (const WorkerView& v : views[sp.domain])
        if (v.spec.worker_id == pick->first) wv = &v;
      ok = wv && ledgers[sp.domain].reserve(wv->spec, wv->load, spec.demand);
    }
    if (!ok) {
      p.excluded.insert(sp.domain);
      p.reason = "peer-refused";
      return false;
    }
    sp.worker_id = pick->first;
  }
  p.reason.clear();
  return true;
}

void Engine::plan_pipeline(int pi) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  if (p.failed || p.completed) return;
  BrokerRt& owner = brokers_[static_cast<size_t>(p.owner)];
  if (!owner.alive) {
    fail_pipeline(p, "broker-killed");
    return;
  }
  ++p.plan_attempts;
  const PipelineTemplate& t = planned_[static_cast<size_t>(p.owner)];

  if (is_market()) {
    refresh_beliefs(owner);
    PlacementResult plan;
    if (p.plan_attempts == 1) {
      EpochArrival arr{static_cast<int>(p.id), &t};
      EpochOutput out = mape_epoch(owner.st, now_ / 1000.0, {arr}, false,
                                   cfg_.market, cfg_.federation);
      plan = out.plans.front().result;
    } else {
      // A failed remote resolution re-plans local-only.
      plan = market_place(t, owner.st.domain, owner.st.workers, {}, cfg_.market);
    }
    if (!plan.accepted) {
      p.reason = plan.reject_reason;
      return;  // admission refusal: a decision, not an error
    }
    if (!resolve_remote(p, plan)) {
      bool timeout = p.reason == "peer-timeout";
      if (p.plan_attempts >= 2) {
        fail_pipeline(p, "placement-retries-exhausted");
      } else if (timeout) {  // detected only after the dispatch window
        schedule(now_ + cfg_.federation.tau_fed_s * 1000.0, ev_plan_retry, pi);
      } else {
        plan_pipeline(pi);
      }
      return;
    }
    std::map<int, int> assign;
    for (const StagePlacement& sp : plan.stages)
      assign[sp.stage_id] = sp.worker_id;
    commit(pi, assign, plan.total_cost);
    return;
  }

  PlacementDecision d;
  if (cfg_.strategy == "oracle") {
    d = oracle_place(t, owner.st.domain, snapshot(p.owner, false),
                     cfg_.weights);
  } else if (cfg_.strategy == "oracle-sharded") {
    std::vector<TopologySnapshot> pulled;
    pulled.push_back(snapshot(p.owner, true));
    for (size_t bi = 0; bi < brokers_.size(); ++bi) {
      if (static_cast<int>(bi) == p.owner) continue;
      const BrokerRt& peer = brokers_[bi];
      if (!peer.alive || !reachable(owner.site, peer.site)) continue;
      pulled.push_back(snapshot(static_cast<int>(bi), true));
    }
    d = sharded_oracle_place(t, owner.st.domain, pulled, cfg_.weights);
  } else if (cfg_.strategy == "rr-global") {
    d = rr_place(t, owner.st.domain, snapshot(p.owner, false), rr_cursor_);
  } else if (cfg_.strategy == "locality") {
    d = locality_place(t, owner.st.domain, snapshot(p.owner, true),
                       cfg_.market);
  } else if (cfg_.strategy == "latency-greedy") {
    d = latency_greedy_place(t, owner.st.domain, snapshot(p.owner, false));
  } else {  // spillover
    d = spillover_place(t, owner.st.domain, snapshot(p.owner, false));
  }
  if (!d.accepted) {
    p.reason = d.reject_reason;
    return;
  }
  commit(pi, d.assignment, d.total_cost);
}

void Engine::commit(int pi, const std::map<int, int>& assignment,
                    double cost) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  p.accepted = true;
  p.assignment = assignment;
  p.cost = cost;
  p.remaining = static_cast<int>(templ_.stages.size());
  for (size_t i = 0; i < templ_.stages.size(); ++i) {
    StageRt& s = p.st[i];
    s.worker = assignment.at(stage_ids_[i]);
    s.gen += 1;
    s.attempts = 1;
    s.missing = static_cast<int>(preds_[i].size());
  }
  for (size_t i = 0; i < templ_.stages.size(); ++i) {
    if (!preds_[i].empty()) continue;
    double in_ms =
        cfg_.broker_decision_ms + ingress_ms(p.owner, worker_of(p.st[i]));
    schedule(now_ + in_ms, ev_input, pi, static_cast<int>(i), p.st[i].gen);
  }
}

/* -------------------------------------------------------------------- */
/* Stage dataflow                                                        */
/* -------------------------------------------------------------------- */

void Engine::release_stage(PipeRt& p, int dense) {
  StageRt& s = p.st[static_cast<size_t>(dense)];
  if (s.counted) {
    worker_of(s).outstanding -= stage_spec(p.owner, dense).demand;
    s.counted = false;
  }
}

void Engine::fail_pipeline(PipeRt& p, const std::string& reason) {
  if (p.failed || p.completed) return;
  p.failed = true;
  p.reason = reason;
  for (size_t i = 0; i < p.st.size(); ++i) {
    StageRt& s = p.st[i];
    if (!s.done) release_stage(p, static_cast<int>(i));
    s.gen += 1;  // invalidate any in-flight events
    s.enqueued = s.running = false;
  }
}

void Engine::on_input(int pi, int dense, int gen) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  StageRt& s = p.st[static_cast<size_t>(dense)];
  if (p.failed || p.completed || s.done || s.gen != gen) return;
  if (s.missing > 0) s.missing -= 1;
  if (s.missing == 0 && !s.enqueued && !s.running) enqueue_stage(pi, dense);
}

void Engine::enqueue_stage(int pi, int dense) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  StageRt& s = p.st[static_cast<size_t>(dense)];
  SimWorker& w = worker_of(s);
  if (!w.alive) {
    stage_failure(pi, dense, "worker");
    return;
  }
  // A managed dispatcher never knowingly feeds a full queue: when a race
  // fills the worker between planning and arrival, the stage re-places
  // (bounded attempts). The unconditional round-robin orchestrator does no
  // such check and pushes into saturated workers regardless; its backlog
  // past the service knee is the collapse the saturation study measures.
  double demand = stage_spec(p.owner, dense).demand;
  if (cfg_.strategy != "rr-global" &&
      w.outstanding + demand > w.spec.capacity + 1e-9) {
    stage_failure(pi, dense, "worker-full");
    return;
  }
  s.enqueued = true;
  s.counted = true;
  w.outstanding += demand;
  if (w.busy)
    w.fifo.push_back({pi, dense, s.gen});
  else
    start_service(wix_.at(s.worker), pi, dense);
}

void Engine::start_service(int widx, int pi, int dense) {
  SimWorker& w = workers_[static_cast<size_t>(widx)];
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  StageRt& s = p.st[static_cast<size_t>(dense)];
  s.running = true;
  s.enqueued = false;
  w.busy = true;
  w.cur_p = pi;
  w.cur_s = dense;
  w.cur_gen = s.gen;
  schedule(now_ + service_ms(w, stage_spec(p.owner, dense)), ev_complete, widx,
           -1, s.gen);
}

void Engine::on_complete(int widx, int gen) {
  SimWorker& w = workers_[static_cast<size_t>(widx)];
  if (!w.alive) return;  // killed mid-service; queue already failed over
  int pi = w.cur_p, dense = w.cur_s;
  bool credited = w.busy && pi >= 0 && w.cur_gen == gen;
  w.busy = false;
  w.cur_p = w.cur_s = -1;
  if (credited) {
    PipeRt& p = pipes_[static_cast<size_t>(pi)];
    StageRt& s = p.st[static_cast<size_t>(dense)];
    if (!p.failed && !p.completed && s.running && s.gen == gen &&
        wix_.at(s.worker) == widx)
      complete_stage(pi, dense, widx);
    else if (s.gen == gen)
      s.running = false;  // result discarded (pipeline moved on)
  }
  // Pull the next live queue entry.
  while (!w.fifo.empty()) {
    auto [qp, qs, qg] = w.fifo.front();
    w.fifo.pop_front();
    PipeRt& p2 = pipes_[static_cast<size_t>(qp)];
    StageRt& s2 = p2.st[static_cast<size_t>(qs)];
    if (p2.failed || p2.completed || s2.done || s2.gen != qg ||
        wix_.at(s2.worker) != widx || !s2.enqueued)
      continue;
    start_service(widx, qp, qs);
    break;
  }
}

void Engine::complete_stage(int pi, int dense, int widx) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  StageRt& s = p.st[static_cast<size_t>(dense)];
  SimWorker& w = workers_[static_cast<size_t>(widx)];
  s.running = false;
  s.done = true;
  s.done_ms = now_;
  release_stage(p, dense);
  p.remaining -= 1;

  if (p.remaining == 0) {
    finish_pipeline(pi);
    return;
  }
  for (int nx : succs_[static_cast<size_t>(dense)]) {
    const StageRt& t = p.st[static_cast<size_t>(nx)];
    if (t.done) continue;
    const SimWorker& wd = workers_[static_cast<size_t>(wix_.at(t.worker))];
    if (partition_ && w.spec.site != wd.spec.site) {
      stranded_replan(pi);  // the output cannot cross the cut
      return;
    }
    schedule(now_ + wlink(w, wd), ev_input, pi, nx, t.gen);
  }
}

void Engine::finish_pipeline(int pi) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  const BrokerRt& owner = brokers_[static_cast<size_t>(p.owner)];
  if (partition_) {
    for (int sk : sinks_) {
      const SimWorker& w = worker_of(p.st[static_cast<size_t>(sk)]);
      if (w.spec.site != owner.site) {
        stranded_replan(pi);  // the sink result cannot reach the owner
        return;
      }
    }
    // A far-side stage freshly completed inside the partition window would
    // mean a result crossed the cut; count such leaks for the audit.
    for (const StageRt& s : p.st) {
      const SimWorker& w = workers_[static_cast<size_t>(wix_.at(s.worker))];
      if (w.spec.site != owner.site && s.done_ms >= partition_since_ms_)
        cross_site_partition_completions_ += 1;
    }
  }
  p.completed = true;
  p.done_ms = now_;
}

/* -------------------------------------------------------------------- */
/* Re-placement                                                          */
/* -------------------------------------------------------------------- */

// Pick a replacement worker for one stage: the round-robin orchestrator
// walks its ring; the latency heuristic minimises the link to finished
// predecessors; everything else takes the cheapest congestion-priced
// eligible worker with spare outstanding capacity.
int Engine::replace_worker(const PipeRt& p, int dense) {
  const StageSpec& spec = stage_spec(p.owner, dense);
  const std::string& origin = brokers_[static_cast<size_t>(p.owner)].st.domain;
  std::vector<int> elig;
  for (size_t wi = 0; wi < workers_.size(); ++wi) {
    const SimWorker& w = workers_[wi];
    if (!dispatch_ok(p.owner, w)) continue;
    if (!worker_eligible(spec, w, origin)) continue;
    if (cfg_.strategy == "locality" && w.spec.domain != origin) continue;
    elig.push_back(static_cast<int>(wi));
  }
  if (elig.empty()) return -1;

  if (cfg_.strategy == "rr-global") {
    std::sort(elig.begin(), elig.end(), [&](int a, int b) {
      return workers_[static_cast<size_t>(a)].spec.worker_id <
             workers_[static_cast<size_t>(b)].spec.worker_id;
    });
    size_t start = static_cast<size_t>(rr_cursor_) % elig.size();
    int wi = elig[start];
    rr_cursor_ = static_cast<int>((start + 1) % elig.size());
    return workers_[static_cast<size_t>(wi)].spec.worker_id;
  }

  bool by_latency = cfg_.strategy == "latency-greedy";
  double best = 0.0;
  int best_id = -1;
  for (int wi : elig) {
    const SimWorker& w = workers_[static_cast<size_t>(wi)];
    double score;
    if (by_latency) {
      score = 0.0;
      for (int pd : preds_[static_cast<size_t>(dense)]) {
        const StageRt& ps = p.st[static_cast<size_t>(pd)];
        if (!ps.done) continue;
        const SimWorker& pw = workers_[static_cast<size_t>(wix_.at(ps.worker))];
        double l = pw.spec.worker_id == w.spec.worker_id ? 0.0
                   : pw.spec.site == w.spec.site         ? cfg_.latency.lan_ms
                                                         : cfg_.latency.wan_ms;
        score = std::max(score, l);
      }
    } else {
      if (w.outstanding + spec.demand > w.spec.capacity + 1e-9) continue;
      score = worker_cost(worker_bid(w.spec, cfg_.market), w.outstanding,
                          w.spec.capacity, cfg_.market.rho_max);
    }
    if (best_id < 0 || score < best - 1e-12 ||
        (score <= best + 1e-12 && w.spec.worker_id < best_id)) {
      best = score;
      best_id = w.spec.worker_id;
    }
  }
  return best_id;
}

void Engine::deliver_inputs_for(int pi, int dense) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  StageRt& s = p.st[static_cast<size_t>(dense)];
  const SimWorker& w = worker_of(s);
  if (preds_[static_cast<size_t>(dense)].empty()) {
    schedule(now_ + ingress_ms(p.owner, w), ev_input, pi, dense, s.gen);
    return;
  }
  s.missing = 0;
  for (int pd : preds_[static_cast<size_t>(dense)]) {
    const StageRt& ps = p.st[static_cast<size_t>(pd)];
    if (ps.done) {
      const SimWorker& pw = workers_[static_cast<size_t>(wix_.at(ps.worker))];
      schedule(now_ + wlink(pw, w), ev_input, pi, dense, s.gen);
    }
    s.missing += 1;  // finished predecessors re-send; the rest send later
  }
}

void Engine::stage_failure(int pi, int dense, const std::string& why) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  if (p.failed || p.completed) return;
  StageRt& s = p.st[static_cast<size_t>(dense)];
  release_stage(p, dense);
  s.gen += 1;
  s.running = s.enqueued = false;
  s.attempts += 1;
  if (s.attempts > cfg_.max_stage_attempts) {
    fail_pipeline(p, why + "-retries-exhausted");
    return;
  }
  int wid = replace_worker(p, dense);
  if (wid < 0) {
    fail_pipeline(p, "no-feasible-worker");
    return;
  }
  s.worker = wid;
  p.assignment[stage_ids_[static_cast<size_t>(dense)]] = wid;
  deliver_inputs_for(pi, dense);
}

// A partition stranded part of this pipeline on the far side: re-run every
// far-side stage that is unfinished, or finished but still feeding work
// (or terminating the pipeline), on owner-side workers. Near-side stages
// keep their placements and queue positions.
void Engine::stranded_replan(int pi) {
  PipeRt& p = pipes_[static_cast<size_t>(pi)];
  if (p.failed || p.completed) return;
  p.replans += 1;
  if (p.replans > cfg_.max_stage_attempts) {
    fail_pipeline(p, "partition-retries-exhausted");
    return;
  }
  Site home = brokers_[static_cast<size_t>(p.owner)].site;
  size_t n = p.st.size();
  std::vector<bool> rerun(n, false);
  // Successors are decided before their predecessors, so a needed far-side
  // output forces its producer to re-run too.
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    size_t i = static_cast<size_t>(*it);
    const StageRt& s = p.st[i];
    if (worker_of(p.st[i]).spec.site == home) continue;
    if (!s.done) {
      rerun[i] = true;
      continue;
    }
    bool needed = succs_[i].empty();
    for (int nx : succs_[i])
      if (rerun[static_cast<size_t>(nx)] || !p.st[static_cast<size_t>(nx)].done)
        needed = true;
    rerun[i] = needed;
  }
  for (size_t i = 0; i < n; ++i) {
    if (!rerun[i]) continue;
    StageRt& s = p.st[i];
    release_stage(p, static_cast<int>(i));
    if (s.done) {
      s.done = false;
      s.done_ms = -1.0;
      p.remaining += 1;
    }
    s.gen += 1;
    s.running = s.enqueued = false;
  }
  for (int i : order_) {
    if (!rerun[static_cast<size_t>(i)]) continue;
    int wid = replace_worker(p, i);
    if (wid < 0) {
      fail_pipeline(p, "no-feasible-worker");
      return;
    }
    StageRt& s = p.st[static_cast<size_t>(i)];
    s.worker = wid;
    p.assignment[stage_ids_[static_cast<size_t>(i)]] = wid;
  }
  for (int i : order_)
    if (rerun[static_cast<size_t>(i)]) deliver_inputs_for(pi, i);
}

/* -------------------------------------------------------------------- */
/* Federation bookkeeping (market only)                                  */
/* -------------------------------------------------------------------- */

void Engine::on_periodic(int bidx) {
  BrokerRt& b = brokers_[static_cast<size_t>(bidx)];
  if (!b.alive) return;
  refresh_beliefs(b);
  EpochOutput out =
      mape_epoch(b.st, now_ / 1000.0, {}, true, cfg_.market, cfg_.federation);
  if (out.price_push) {
    b.own_log.push_back({now_ / 1000.0, *out.price_push});
    size_t cap = static_cast<size_t>(cfg_.federation.history_capacity()) + 2;
    if (b.own_log.size() > cap)
      b.own_log.erase(b.own_log.begin(),
                      b.own_log.begin() +
                          static_cast<long>(b.own_log.size() - cap));
    int payload = static_cast<int>(push_store_.size());
    push_store_.push_back(*out.price_push);
    for (const std::string& target : out.push_targets) {
      int ti = bix_.at(target);
      BrokerRt& tb = brokers_[static_cast<size_t>(ti)];
      if (tb.alive && reachable(b.site, tb.site)) {
        double l = broker_link(b, tb);
        schedule(now_ + l, ev_push_deliver, bidx, ti, payload);
        schedule(now_ + 2 * l, ev_push_result, bidx, ti, 1);
      } else {
        schedule(now_ + cfg_.federation.tau_fed_s * 1000.0, ev_push_result,
                 bidx, ti, 0);
      }
    }
  }
  for (const std::string& peer : out.recovery_probes) {
    int ti = bix_.at(peer);
    BrokerRt& tb = brokers_[static_cast<size_t>(ti)];
    if (tb.alive && reachable(b.site, tb.site))
      schedule(now_ + 2 * broker_link(b, tb), ev_probe_ok, bidx, ti);
  }
  double next = now_ + cfg_.federation.delta_health_s * 1000.0;
  if (next <= end_ms_) schedule(next, ev_periodic, bidx);
}

/* -------------------------------------------------------------------- */
/* Failure injection                                                     */
/* -------------------------------------------------------------------- */

void Engine::kill_worker(int widx) {
  SimWorker& w = workers_[static_cast<size_t>(widx)];
  if (!w.alive) return;
  w.alive = false;
  std::vector<std::pair<int, int>> affected;
  if (w.busy && w.cur_p >= 0) affected.push_back({w.cur_p, w.cur_s});
  for (const auto& e : w.fifo) affected.push_back({e[0], e[1]});
  w.fifo.clear();
  w.busy = false;
  w.cur_p = w.cur_s = -1;
  for (auto [pi, dense] : affected) {
    PipeRt& p = pipes_[static_cast<size_t>(pi)];
    const StageRt& s = p.st[static_cast<size_t>(dense)];
    if (!s.done && !p.failed && !p.completed && wix_.at(s.worker) == widx)
      stage_failure(pi, dense, "worker");
  }
}

void Engine::apply_failure(const FailureEvent& ev) {
  switch (ev.kind) {
    case FailureKind::worker_kill: {
      auto it = bix_.find(ev.target);
      if (it != bix_.end()) {
        for (int wi : brokers_[static_cast<size_t>(it->second)].widx)
          kill_worker(wi);
      } else {
        kill_worker(wix_.at(std::stoi(ev.target)));
      }
      break;
    }
    case FailureKind::broker_kill: {
      int bi = bix_.at(ev.target);
      BrokerRt& b = brokers_[static_cast<size_t>(bi)];
      b.alive = false;
      for (size_t k = 0; k < pipes_.size(); ++k) {
        PipeRt& p = pipes_[k];
        if (p.owner == bi && p.accepted && !p.completed && !p.failed)
          fail_pipeline(p, "broker-killed");
      }
      for (int wi : b.widx) kill_worker(wi);
      break;
    }
    case FailureKind::partition_start:
      partition_ = true;
      partition_since_ms_ = now_;
      break;
    case FailureKind::partition_end:
      partition_ = false;
      break;
    case FailureKind::heterogeneity_profile:
      // Edge workers turn twice as slow, cloud workers 1.5x faster (speed
      // multiplies both service time and bids); stages already in service
      // keep the duration they started with.
      for (SimWorker& w : workers_)
        w.spec.speed =
            w.nominal_speed * (w.spec.site == Site::edge ? 2.0 : 1.0 / 1.5);
      break;
  }
}

/* -------------------------------------------------------------------- */
/* Main loop and record assembly                                         */
/* -------------------------------------------------------------------- */

RunRecord Engine::run() {
  while (!pq_.empty() && pq_.top().t <= end_ms_) {
    Ev ev = pq_.top();
    pq_.pop();
    now_ = ev.t;
    switch (ev.kind) {
      case ev_arrival: handle_arrival(ev.a); break;
      case ev_periodic: on_periodic(ev.a); break;
      case ev_plan_retry: plan_pipeline(ev.a); break;
      case ev_input: on_input(ev.a, ev.b, ev.c); break;
      case ev_complete: on_complete(ev.a, ev.c); break;
      case ev_push_deliver: {
        BrokerRt& to = brokers_[static_cast<size_t>(ev.b)];
        if (to.alive)
          record_price_signal(
              to.st.peers.at(brokers_[static_cast<size_t>(ev.a)].st.domain),
              now_ / 1000.0, push_store_[static_cast<size_t>(ev.c)],
              cfg_.federation);
        break;
      }
      case ev_push_result: {
        BrokerRt& from = brokers_[static_cast<size_t>(ev.a)];
        if (from.alive)
          on_price_push_result(
              from.st.peers.at(brokers_[static_cast<size_t>(ev.b)].st.domain),
              ev.c == 1, cfg_.federation);
        break;
      }
      case ev_probe_ok: {
        BrokerRt& a = brokers_[static_cast<size_t>(ev.a)];
        BrokerRt& b = brokers_[static_cast<size_t>(ev.b)];
        if (a.alive && b.alive && reachable(a.site, b.site)) {
          reinstate_peer(a.st.peers.at(b.st.domain), now_ / 1000.0, b.own_log,
                         cfg_.federation);
          reinstate_peer(b.st.peers.at(a.st.domain), now_ / 1000.0, a.own_log,
                         cfg_.federation);
        }
        break;
      }
      case ev_failure:
        apply_failure(cfg_.failures.events[static_cast<size_t>(ev.a)]);
        break;
    }
  }
  return collect();
}

RunRecord Engine::collect() {
  RunRecord r;
  r.strategy = cfg_.strategy;
  r.pipeline_kind = templ_.kind;
  r.lambda_pps = cfg_.workload.lambda_pps;
  r.seed = cfg_.workload.seed;
  r.governance = cfg_.governance;
  r.warmup_s = cfg_.workload.warmup_s;
  r.duration_s = cfg_.workload.duration_s;
  r.cross_site_completions_in_partition = cross_site_partition_completions_;
  for (const PipeRt& p : pipes_) {
    if (!p.in_window) continue;
    PipelineRow row;
    row.pipeline_id = p.id;
    row.arrival_s = p.arrival_ms / 1000.0;
    row.origin_domain =
        p.owner >= 0 ? brokers_[static_cast<size_t>(p.owner)].st.domain
                     : topo_[static_cast<size_t>(p.source_domain)].domain_id;
    row.accepted = p.accepted;
    row.completed = p.completed;
    row.e2e_ms = p.completed ? p.done_ms - p.arrival_ms : 0.0;
    row.placement_cost = p.accepted ? p.cost : 0.0;
    if (p.accepted) {
      std::set<std::string> doms;
      for (const auto& [sid, wid] : p.assignment)
        doms.insert(workers_[static_cast<size_t>(wix_.at(wid))].spec.domain);
      row.domains_crossed = static_cast<int>(doms.size());
    }
    row.reject_reason = p.completed ? "" : p.reason;
    r.arrived += 1;
    if (p.accepted) r.accepted += 1;
    if (p.completed)
      r.completed += 1;
    else if (p.accepted && p.failed)
      r.failed += 1;
    else if (p.accepted)
      r.in_flight += 1;
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace

RunRecord run_sim(const SimConfig& cfg) { return Engine(cfg).run(); }

}  // namespace fedmarket
