#pragma once

// The stochastic lateral-traversal game: ground-truth state, the two partial
// views, simultaneous moves resolved defender-first, alerts and rewards.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "acdsim/digest.hpp"
#include "acdsim/error.hpp"
#include "acdsim/netmodel.hpp"
#include "acdsim/rng.hpp"

namespace acdsim {

inline constexpr const char* kVersion = "acdsim/0.1.0";

enum class TerminalCause { TargetCompromised, HorizonReached };

inline const char* to_string(TerminalCause c) {
  return c == TerminalCause::TargetCompromised ? "TargetCompromised" : "HorizonReached";
}

inline TerminalCause terminal_cause_from(const std::string& s) {
  if (s == "TargetCompromised") return TerminalCause::TargetCompromised;
  if (s == "HorizonReached") return TerminalCause::HorizonReached;
  throw ParseError("unknown terminal cause \"" + s + "\"");
}

enum class AlertKind { AttemptFail, AttemptSuccess, FalsePositive };

inline const char* to_string(AlertKind k) {
  switch (k) {
    case AlertKind::AttemptFail: return "fail";
    case AlertKind::AttemptSuccess: return "success";
    case AlertKind::FalsePositive: return "false";
  }
  return "?";
}

/// Ground-truth alert. Only the (node, step) projection reaches the defender.
struct Alert {
  NodeId node = 0;
  AlertKind kind = AlertKind::FalsePositive;
  int step = 0;

  friend bool operator==(const Alert&, const Alert&) = default;
};

struct DefenderAlert {
  NodeId node = 0;
  int step = 0;

  friend bool operator==(const DefenderAlert&, const DefenderAlert&) = default;
};

struct ScanResult {
  int step = 0;
  bool positive = false;

  friend bool operator==(const ScanResult&, const ScanResult&) = default;
};

struct GameState {
  int t = 0;
  std::set<NodeId> compromised;
  std::set<NodeId> attacker_known;
  std::set<std::string> attacker_creds;
  std::map<NodeId, int> isolation;  // only nodes with remaining steps > 0
  std::map<NodeId, double> defence_now;
  std::optional<TerminalCause> terminal;
  Rng rng;

  // Defender-side observation carried between steps.
  std::vector<Alert> last_alerts;
  std::map<NodeId, ScanResult> scan_results;
  double cumulative_reward = 0.0;

  friend bool operator==(const GameState&, const GameState&) = default;
};

struct AttackerView {
  std::map<NodeId, std::vector<NodeId>> known_nodes;  // neighbours restricted to known nodes
  std::set<NodeId> compromised;
  std::set<std::string> creds;
  std::optional<NodeId> target_seen;
  /// unlocks sets of known nodes; credential requirements are visible on discovery.
  std::map<NodeId, std::set<std::string>> unlocks;
  std::set<NodeId> isolated;
};

struct DefenderView {
  const NetworkTopology* topology = nullptr;
  int t = 0;
  std::vector<DefenderAlert> alerts_last_step;
  std::map<NodeId, ScanResult> scan_results;
  std::map<NodeId, int> isolation;
  std::map<NodeId, double> defence_now;
  double cumulative_reward = 0.0;
};

struct AttackerAction {
  std::set<NodeId> attempts;  // empty = pass

  friend bool operator==(const AttackerAction&, const AttackerAction&) = default;
};

struct DefenderAction {
  enum class Kind { Nop, Patch, Restore, Isolate, Scan };
  Kind kind = Kind::Nop;
  NodeId node = -1;
  int duration = 1;  // Isolate only

  static DefenderAction nop() { return {}; }
  static DefenderAction patch(NodeId n) { return {Kind::Patch, n, 1}; }
  static DefenderAction restore(NodeId n) { return {Kind::Restore, n, 1}; }
  static DefenderAction isolate(NodeId n, int duration = 1) { return {Kind::Isolate, n, duration}; }
  static DefenderAction scan(NodeId n) { return {Kind::Scan, n, 1}; }

  friend bool operator==(const DefenderAction&, const DefenderAction&) = default;
};

inline const char* to_string(DefenderAction::Kind k) {
  switch (k) {
    case DefenderAction::Kind::Nop: return "nop";
    case DefenderAction::Kind::Patch: return "patch";
    case DefenderAction::Kind::Restore: return "restore";
    case DefenderAction::Kind::Isolate: return "isolate";
    case DefenderAction::Kind::Scan: return "scan";
  }
  return "?";
}

struct Event {
  enum class Kind { Attempt, Skip, Success, Loot, Discover, TargetSeen, Patch, Restore, Isolate, Scan, Alert };
  Kind kind = Kind::Attempt;
  NodeId node = -1;
  double value = 0.0;               // attempt probability or new defence
  bool flag = false;                // scan result or restore-cleared
  std::vector<std::string> creds;   // loot
  AlertKind alert = AlertKind::FalsePositive;

  static Event of(Kind k, NodeId n, double v = 0.0) {
    Event e;
    e.kind = k;
    e.node = n;
    e.value = v;
    return e;
  }

  friend bool operator==(const Event&, const Event&) = default;
};

struct StepOutcome {
  double reward = 0.0;
  std::vector<Event> events;
  std::optional<TerminalCause> terminal_cause;

  friend bool operator==(const StepOutcome&, const StepOutcome&) = default;
};

/// Success probability of one compromise attempt. Holding any credential in
/// node.unlocks gives credentialed access at a fixed 0.9.
inline double compromise_probability(double strength, const NodeSpec& node, double defence_now,
                                     bool cred_held) {
  if (cred_held) return 0.9;
  const double p = strength * node.max_severity() * (1.0 - defence_now);
  return std::clamp(p, 0.0, 1.0);
}

class Game {
 public:
  explicit Game(Scenario s) : scenario_(std::move(s)) {
    validate_scenario(scenario_);
    adjacency_ = scenario_.topology.adjacency();
    for (const auto& n : scenario_.topology.nodes) nodes_.emplace(n.id, &n);
    target_ = scenario_.topology.target();
    digest_ = sha256_hex(serialize_scenario(scenario_));
  }

  Game(const Game& other) : Game(other.scenario_) {}
  Game& operator=(const Game&) = delete;

  const Scenario& scenario() const { return scenario_; }
  const std::string& digest() const { return digest_; }
  NodeId target() const { return target_; }
  const std::vector<NodeId>& neighbors(NodeId id) const {
    auto it = adjacency_.find(id);
    if (it == adjacency_.end()) throw UnknownNode("unknown node " + std::to_string(id));
    return it->second;
  }
  const NodeSpec& node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw UnknownNode("unknown node " + std::to_string(id));
    return *it->second;
  }

  GameState init(std::uint64_t seed) const {
    GameState st;
    st.rng = Rng(seed);
    for (const auto& n : scenario_.topology.nodes) st.defence_now[n.id] = n.defence;
    for (NodeId e : scenario_.attacker.entry) {
      st.compromised.insert(e);
      st.attacker_known.insert(e);
      for (NodeId nb : neighbors(e)) st.attacker_known.insert(nb);
      const auto& creds = node(e).creds_stored;
      st.attacker_creds.insert(creds.begin(), creds.end());
    }
    return st;
  }

  bool holds_credential_for(const GameState& st, NodeId id) const {
    for (const auto& c : node(id).unlocks)
      if (st.attacker_creds.count(c)) return true;
    return false;
  }

  AttackerView attacker_view(const GameState& st) const {
    AttackerView v;
    for (NodeId id : st.attacker_known) {
      auto& list = v.known_nodes[id];
      for (NodeId nb : neighbors(id))
        if (st.attacker_known.count(nb)) list.push_back(nb);
      v.unlocks[id] = node(id).unlocks;
      if (st.isolation.count(id)) v.isolated.insert(id);
    }
    v.compromised = st.compromised;
    v.creds = st.attacker_creds;
    if (st.attacker_known.count(target_)) v.target_seen = target_;
    return v;
  }

  DefenderView defender_view(const GameState& st) const {
    DefenderView v;
    v.topology = &scenario_.topology;
    v.t = st.t;
    for (const auto& a : st.last_alerts) v.alerts_last_step.push_back({a.node, a.step});
    v.scan_results = st.scan_results;
    v.isolation = st.isolation;
    v.defence_now = st.defence_now;
    v.cumulative_reward = st.cumulative_reward;
    return v;
  }

  void check_defender_action(const DefenderAction& d) const {
    if (d.kind == DefenderAction::Kind::Nop) return;
    if (!nodes_.count(d.node)) throw IllegalAction("defender action on unknown node " + std::to_string(d.node));
    if (d.kind == DefenderAction::Kind::Isolate && d.duration < 1)
      throw IllegalAction("isolation duration must be >= 1");
  }

  void check_attacker_action(const GameState& st, const AttackerAction& a) const {
    if (static_cast<int>(a.attempts.size()) > scenario_.attacker.spread)
      throw IllegalAction("attempt count exceeds spread");
    for (NodeId id : a.attempts) {
      const std::string who = "attempt on node " + std::to_string(id);
      if (!st.attacker_known.count(id)) throw IllegalAction(who + ": node unknown to attacker");
      if (st.compromised.count(id)) throw IllegalAction(who + ": already compromised");
      if (st.isolation.count(id)) throw IllegalAction(who + ": node isolated");
      const auto& nbs = neighbors(id);
      const bool adjacent = std::any_of(nbs.begin(), nbs.end(), [&](NodeId nb) { return st.compromised.count(nb) > 0; });
      if (!adjacent) throw IllegalAction(who + ": not adjacent to a compromised node");
    }
  }

  /// One simultaneous move. Resolution order: defender action, attempts in
  /// ascending node id (isolated targets skipped), looting, discovery,
  /// alerts, isolation countdown, reward, clock and termination.
  /// RNG draw order: scan draw; per resolved attempt a success draw then an
  /// alert draw; one false-alert draw per node in ascending id.
  std::pair<GameState, StepOutcome> step(const GameState& st, const DefenderAction& d,
                                         const AttackerAction& a) const {
    if (st.terminal) throw TerminalState("step on a terminal state");
    check_defender_action(d);
    check_attacker_action(st, a);

    GameState next = st;
    StepOutcome out;
    const auto& costs = scenario_.costs;
    const auto& alerts = scenario_.alerts;
    double cost = 0.0;

    // (1) defender
    switch (d.kind) {
      case DefenderAction::Kind::Nop:
        break;
      case DefenderAction::Kind::Patch: {
        double& def = next.defence_now[d.node];
        def = std::min(1.0, def + costs.patch_delta);
        cost += costs.patch_cost + costs.patch_usability;
        out.events.push_back(Event::of(Event::Kind::Patch, d.node, def));
        break;
      }
      case DefenderAction::Kind::Restore: {
        const bool cleared = next.compromised.erase(d.node) > 0;
        cost += costs.restore_cost + costs.restore_usability;
        Event e = Event::of(Event::Kind::Restore, d.node);
        e.flag = cleared;
        out.events.push_back(e);
        break;
      }
      case DefenderAction::Kind::Isolate: {
        int& left = next.isolation[d.node];
        left = std::max(left, d.duration);
        out.events.push_back(Event::of(Event::Kind::Isolate, d.node, static_cast<double>(d.duration)));
        break;
      }
      case DefenderAction::Kind::Scan: {
        const double u = next.rng.uniform();
        const bool truth = next.compromised.count(d.node) > 0;
        const bool positive = u < (truth ? alerts.scan_tpr : alerts.scan_fpr);
        next.scan_results[d.node] = {st.t, positive};
        cost += costs.scan_cost;
        Event e = Event::of(Event::Kind::Scan, d.node);
        e.flag = positive;
        out.events.push_back(e);
        break;
      }
    }

    // (2) attempts
    std::vector<Alert> new_alerts;
    std::vector<NodeId> newly;
    for (NodeId id : a.attempts) {
      if (next.isolation.count(id)) {
        out.events.push_back(Event::of(Event::Kind::Skip, id));
        continue;
      }
      const double p = compromise_probability(scenario_.attacker.strength, node(id), next.defence_now.at(id),
                                              holds_credential_for(st, id));
      const bool success = next.rng.uniform() < p;
      out.events.push_back(Event::of(Event::Kind::Attempt, id, p));
      if (success) {
        next.compromised.insert(id);
        newly.push_back(id);
        out.events.push_back(Event::of(Event::Kind::Success, id));
      }
      const double p_alert = success ? alerts.p_alert_success : alerts.p_alert_fail;
      if (next.rng.uniform() < p_alert)
        new_alerts.push_back({id, success ? AlertKind::AttemptSuccess : AlertKind::AttemptFail, st.t});
    }

    // (3) loot, (4) discovery
    for (NodeId id : newly) {
      const auto& stored = node(id).creds_stored;
      if (!stored.empty()) {
        Event e = Event::of(Event::Kind::Loot, id);
        e.creds.assign(stored.begin(), stored.end());
        out.events.push_back(e);
        next.attacker_creds.insert(stored.begin(), stored.end());
      }
    }
    const bool target_was_known = st.attacker_known.count(target_) > 0;
    for (NodeId id : newly) {
      for (NodeId nb : neighbors(id)) {
        if (next.attacker_known.insert(nb).second) out.events.push_back(Event::of(Event::Kind::Discover, nb));
      }
    }
    if (!target_was_known && next.attacker_known.count(target_))
      out.events.push_back(Event::of(Event::Kind::TargetSeen, target_));

    // (5) false alerts
    for (const auto& n : scenario_.topology.nodes) {
      if (next.rng.uniform() < alerts.p_false_alert) new_alerts.push_back({n.id, AlertKind::FalsePositive, st.t});
    }
    for (const auto& al : new_alerts) {
      Event e = Event::of(Event::Kind::Alert, al.node);
      e.alert = al.kind;
      out.events.push_back(e);
    }
    next.last_alerts = std::move(new_alerts);

    // (6) isolation countdown; the isolated-node cost covers this step
    cost += costs.isolate_cost_per_step * static_cast<double>(next.isolation.size());
    for (auto it = next.isolation.begin(); it != next.isolation.end();) {
      if (--it->second <= 0) it = next.isolation.erase(it);
      else ++it;
    }

    // (7) reward, (8) clock
    next.t = st.t + 1;
    if (next.compromised.count(target_)) next.terminal = TerminalCause::TargetCompromised;
    else if (next.t >= scenario_.horizon) next.terminal = TerminalCause::HorizonReached;
    out.terminal_cause = next.terminal;
    out.reward = next.terminal == TerminalCause::TargetCompromised ? costs.target_loss_penalty
                                                                   : costs.survival_bonus - cost;
    next.cumulative_reward += out.reward;
    return {std::move(next), std::move(out)};
  }

 private:
  Scenario scenario_;
  std::map<NodeId, std::vector<NodeId>> adjacency_;
  std::map<NodeId, const NodeSpec*> nodes_;
  NodeId target_ = -1;
  std::string digest_;
};

inline GameState init(const Scenario& s, std::uint64_t seed) { return Game(s).init(seed); }

// ---------------------------------------------------------------------------
// Policies

class DefenderPolicy {
 public:
  virtual ~DefenderPolicy() = default;
  virtual DefenderAction act(const DefenderView& view, Rng& rng) = 0;
  virtual void observe(const StepOutcome&) {}
};

class AttackerPolicy {
 public:
  virtual ~AttackerPolicy() = default;
  virtual AttackerAction act(const AttackerView& view, int spread, Rng& rng) = 0;
  virtual void observe(const StepOutcome&) {}
};

// ---------------------------------------------------------------------------
// Episode log

struct StepRecord {
  int t = 0;
  std::vector<NodeId> compromised_before;  // ground truth at the start of the step
  DefenderAction defender;
  AttackerAction attacker;
  StepOutcome outcome;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeLog {
  std::string scenario_sha256;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  Scenario scenario;
  std::vector<StepRecord> steps;
  // final summary
  int final_t = 0;
  std::vector<NodeId> final_compromised;
  std::vector<std::string> final_creds;
  std::optional<TerminalCause> cause;

  double total_reward() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.outcome.reward;
    return r;
  }

  /// Steps until the target fell; episodes that survive count the full length.
  int time_to_target_compromise() const { return final_t; }
};

inline OrderedJson to_json(const DefenderAction& d) {
  OrderedJson j{{"kind", to_string(d.kind)}};
  if (d.kind != DefenderAction::Kind::Nop) j["node"] = d.node;
  if (d.kind == DefenderAction::Kind::Isolate) j["duration"] = d.duration;
  return j;
}

inline DefenderAction defender_action_from_json(const Json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  DefenderAction d;
  if (kind == "nop") return d;
  d.node = j.at("node").get<NodeId>();
  if (kind == "patch") d.kind = DefenderAction::Kind::Patch;
  else if (kind == "restore") d.kind = DefenderAction::Kind::Restore;
  else if (kind == "scan") d.kind = DefenderAction::Kind::Scan;
  else if (kind == "isolate") {
    d.kind = DefenderAction::Kind::Isolate;
    d.duration = j.value("duration", 1);
  } else {
    throw ParseError("unknown defender action \"" + kind + "\"");
  }
  return d;
}

inline const char* to_string(Event::Kind k) {
  switch (k) {
    case Event::Kind::Attempt: return "attempt";
    case Event::Kind::Skip: return "skip";
    case Event::Kind::Success: return "success";
    case Event::Kind::Loot: return "loot";
    case Event::Kind::Discover: return "discover";
    case Event::Kind::TargetSeen: return "target_seen";
    case Event::Kind::Patch: return "patch";
    case Event::Kind::Restore: return "restore";
    case Event::Kind::Isolate: return "isolate";
    case Event::Kind::Scan: return "scan";
    case Event::Kind::Alert: return "alert";
  }
  return "?";
}

inline OrderedJson to_json(const Event& e) {
  OrderedJson j{{"kind", to_string(e.kind)}, {"node", e.node}};
  switch (e.kind) {
    case Event::Kind::Attempt: j["p"] = e.value; break;
    case Event::Kind::Patch: j["defence"] = e.value; break;
    case Event::Kind::Isolate: j["duration"] = static_cast<int>(e.value); break;
    case Event::Kind::Restore: j["cleared"] = e.flag; break;
    case Event::Kind::Scan: j["result"] = e.flag; break;
    case Event::Kind::Loot: j["creds"] = e.creds; break;
    case Event::Kind::Alert: j["cause"] = to_string(e.alert); break;
    default: break;
  }
  return j;
}

inline Event event_from_json(const Json& j) {
  static const std::map<std::string, Event::Kind> kinds{
      {"attempt", Event::Kind::Attempt}, {"skip", Event::Kind::Skip},       {"success", Event::Kind::Success},
      {"loot", Event::Kind::Loot},       {"discover", Event::Kind::Discover}, {"target_seen", Event::Kind::TargetSeen},
      {"patch", Event::Kind::Patch},     {"restore", Event::Kind::Restore}, {"isolate", Event::Kind::Isolate},
      {"scan", Event::Kind::Scan},       {"alert", Event::Kind::Alert}};
  Event e;
  auto it = kinds.find(j.at("kind").get<std::string>());
  if (it == kinds.end()) throw ParseError("unknown event kind");
  e.kind = it->second;
  e.node = j.at("node").get<NodeId>();
  switch (e.kind) {
    case Event::Kind::Attempt: e.value = j.at("p").get<double>(); break;
    case Event::Kind::Patch: e.value = j.at("defence").get<double>(); break;
    case Event::Kind::Isolate: e.value = j.at("duration").get<int>(); break;
    case Event::Kind::Restore: e.flag = j.at("cleared").get<bool>(); break;
    case Event::Kind::Scan: e.flag = j.at("result").get<bool>(); break;
    case Event::Kind::Loot: e.creds = j.at("creds").get<std::vector<std::string>>(); break;
    case Event::Kind::Alert: {
      const auto c = j.at("cause").get<std::string>();
      e.alert = c == "fail" ? AlertKind::AttemptFail : c == "success" ? AlertKind::AttemptSuccess : AlertKind::FalsePositive;
      break;
    }
    default: break;
  }
  return e;
}

inline OrderedJson to_json(const StepRecord& r) {
  OrderedJson events = OrderedJson::array();
  for (const auto& e : r.outcome.events) events.push_back(to_json(e));
  OrderedJson j{{"t", r.t},
                {"def", to_json(r.defender)},
                {"atk", {{"attempts", r.attacker.attempts}}},
                {"events", events},
                {"reward", r.outcome.reward},
                {"compromised", r.compromised_before}};
  if (r.outcome.terminal_cause) j["terminal"] = to_string(*r.outcome.terminal_cause);
  return j;
}

inline OrderedJson log_header_json(const EpisodeLog& log) {
  return OrderedJson{{"scenario_sha256", log.scenario_sha256},
                     {"seed", log.seed},
                     {"version", log.version},
                     {"scenario", scenario_to_json(log.scenario)}};
}

inline OrderedJson log_final_json(const EpisodeLog& log) {
  return OrderedJson{{"final",
                      {{"t", log.final_t},
                       {"cause", log.cause ? to_string(*log.cause) : "none"},
                       {"return", log.total_reward()},
                       {"compromised", log.final_compromised},
                       {"creds", log.final_creds}}}};
}

/// JSON-lines: header, one line per step, final summary line.
inline std::string serialize_log(const EpisodeLog& log) {
  std::string out = log_header_json(log).dump() + "\n";
  for (const auto& r : log.steps) out += to_json(r).dump() + "\n";
  out += log_final_json(log).dump() + "\n";
  return out;
}

inline EpisodeLog parse_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  EpisodeLog log;
  bool header = false;
  bool final_seen = false;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      if (!header) {
        log.scenario_sha256 = j.at("scenario_sha256").get<std::string>();
        log.seed = j.at("seed").get<std::uint64_t>();
        log.version = j.at("version").get<std::string>();
        log.scenario = parse_scenario(j.at("scenario").dump());
        header = true;
        continue;
      }
      if (j.contains("final")) {
        const Json& f = j.at("final");
        log.final_t = f.at("t").get<int>();
        const auto cause = f.at("cause").get<std::string>();
        if (cause != "none") log.cause = terminal_cause_from(cause);
        log.final_compromised = f.at("compromised").get<std::vector<NodeId>>();
        log.final_creds = f.at("creds").get<std::vector<std::string>>();
        final_seen = true;
        continue;
      }
      StepRecord r;
      r.t = j.at("t").get<int>();
      r.defender = defender_action_from_json(j.at("def"));
      for (const auto& id : j.at("atk").at("attempts")) r.attacker.attempts.insert(id.get<NodeId>());
      for (const auto& e : j.at("events")) r.outcome.events.push_back(event_from_json(e));
      r.outcome.reward = j.at("reward").get<double>();
      r.compromised_before = j.at("compromised").get<std::vector<NodeId>>();
      if (j.contains("terminal")) r.outcome.terminal_cause = terminal_cause_from(j.at("terminal").get<std::string>());
      log.steps.push_back(std::move(r));
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed episode log: ") + e.what());
  }
  if (!header) throw ParseError("episode log has no header line");
  if (!final_seen) throw ParseError("episode log has no final line");
  return log;
}

/// Incrementally builds an EpisodeLog while an episode is driven step by step.
class EpisodeRecorder {
 public:
  EpisodeRecorder(const Game& game, std::uint64_t seed) {
    log_.scenario_sha256 = game.digest();
    log_.seed = seed;
    log_.scenario = game.scenario();
  }

  void record(const GameState& before, const DefenderAction& d, const AttackerAction& a, const StepOutcome& o) {
    StepRecord r;
    r.t = before.t;
    r.compromised_before.assign(before.compromised.begin(), before.compromised.end());
    r.defender = d;
    r.attacker = a;
    r.outcome = o;
    log_.steps.push_back(std::move(r));
  }

  const StepRecord& last() const { return log_.steps.back(); }

  EpisodeLog finish(const GameState& last) {
    log_.final_t = last.t;
    log_.final_compromised.assign(last.compromised.begin(), last.compromised.end());
    log_.final_creds.assign(last.attacker_creds.begin(), last.attacker_creds.end());
    log_.cause = last.terminal;
    return std::move(log_);
  }

 private:
  EpisodeLog log_;
};

inline Scenario with_horizon(Scenario s, std::optional<int> horizon_override) {
  if (horizon_override) s.horizon = *horizon_override;
  return s;
}

/// Drive one episode to termination. Policies draw from their own labelled
/// streams so the game generator's draw order is unaffected by them.
inline EpisodeLog run_episode(const Scenario& s, DefenderPolicy& defender, AttackerPolicy& attacker,
                              std::uint64_t seed, std::optional<int> horizon_override = std::nullopt) {
  const Game game(with_horizon(s, horizon_override));
  GameState st = game.init(seed);
  Rng def_rng = Rng::stream(seed, "defender");
  Rng atk_rng = Rng::stream(seed, "attacker");
  EpisodeRecorder rec(game, seed);
  while (!st.terminal) {
    const DefenderAction d = defender.act(game.defender_view(st), def_rng);
    const AttackerAction a = attacker.act(game.attacker_view(st), game.scenario().attacker.spread, atk_rng);
    auto [next, outcome] = game.step(st, d, a);
    rec.record(st, d, a, outcome);
    defender.observe(outcome);
    attacker.observe(outcome);
    st = std::move(next);
  }
  return rec.finish(st);
}

/// Re-run the recorded actions from the recorded seed; returns the
/// regenerated log text.
inline std::string replay_log(const EpisodeLog& log) {
  const Game game(log.scenario);
  if (game.digest() != log.scenario_sha256) throw ReplayMismatch("scenario digest mismatch");
  GameState st = game.init(log.seed);
  EpisodeRecorder rec(game, log.seed);
  for (const auto& r : log.steps) {
    if (st.terminal) throw ReplayMismatch("log continues past a terminal state");
    std::pair<GameState, StepOutcome> res;
    try {
      res = game.step(st, r.defender, r.attacker);
    } catch (const IllegalAction& e) {
      throw ReplayMismatch("step " + std::to_string(r.t) + " does not replay: " + e.what());
    }
    auto& [next, outcome] = res;
    rec.record(st, r.defender, r.attacker, outcome);
    st = std::move(next);
  }
  EpisodeLog regenerated = rec.finish(st);
  regenerated.version = log.version;
  return serialize_log(regenerated);
}

/// Throws ReplayMismatch unless replaying the text reproduces it byte for byte.
inline void verify_replay(std::string_view text) {
  const EpisodeLog log = parse_log(text);
  const std::string again = replay_log(log);
  if (again != text) throw ReplayMismatch("replayed log differs from the recorded log");
}

// ---------------------------------------------------------------------------
// View serialization (used for observation-hygiene checks and debugging)

inline OrderedJson to_json(const DefenderView& v) {
  OrderedJson alerts = OrderedJson::array();
  for (const auto& a : v.alerts_last_step) alerts.push_back({{"node", a.node}, {"step", a.step}});
  OrderedJson scans = OrderedJson::array();
  for (const auto& [n, r] : v.scan_results) scans.push_back({{"node", n}, {"step", r.step}, {"positive", r.positive}});
  OrderedJson iso = OrderedJson::array();
  for (const auto& [n, left] : v.isolation) iso.push_back({{"node", n}, {"remaining", left}});
  OrderedJson def = OrderedJson::array();
  for (const auto& [n, d] : v.defence_now) def.push_back({{"node", n}, {"defence", d}});
  OrderedJson j{{"t", v.t}, {"alerts", alerts}, {"scans", scans}, {"isolation", iso}, {"defence", def},
                {"cumulative_reward", v.cumulative_reward}};
  if (v.topology) {
    j["nodes"] = OrderedJson::array();
    for (const auto& n : v.topology->nodes) j["nodes"].push_back(n.id);
    j["edges"] = OrderedJson::array();
    for (const auto& [a, b] : v.topology->edges) j["edges"].push_back({a, b});
  }
  return j;
}

inline OrderedJson to_json(const AttackerView& v) {
  OrderedJson known = OrderedJson::array();
  for (const auto& [n, nbs] : v.known_nodes) known.push_back({{"node", n}, {"neighbors", nbs}});
  OrderedJson j{{"known", known}, {"compromised", v.compromised}, {"creds", v.creds}, {"isolated", v.isolated}};
  j["target_seen"] = v.target_seen ? OrderedJson(*v.target_seen) : OrderedJson(nullptr);
  return j;
}

}  // namespace acdsim
