#pragma once

// Static enterprise-network scenario: devices, links, attacker capability and
// the cost/alert parameters of one game.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdsim/error.hpp"

namespace acdsim {

using NodeId = int;
using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

struct VulnSpec {
  std::string id;
  double severity = 0.0;

  friend bool operator==(const VulnSpec&, const VulnSpec&) = default;
};

struct NodeSpec {
  NodeId id = 0;
  double defence = 0.0;
  std::vector<VulnSpec> vulns;
  std::set<std::string> creds_stored;
  std::set<std::string> unlocks;
  bool is_target = false;

  /// Highest exploitable severity; 0 when the device has no vulnerability.
  double max_severity() const {
    double v = 0.0;
    for (const auto& vuln : vulns) v = std::max(v, vuln.severity);
    return v;
  }

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

using Edge = std::pair<NodeId, NodeId>;

inline Edge make_edge(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

struct NetworkTopology {
  std::vector<NodeSpec> nodes;
  std::set<Edge> edges;  // stored as (min, max)

  bool has_node(NodeId id) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const NodeSpec& n) { return n.id == id; });
  }

  const NodeSpec& node(NodeId id) const {
    for (const auto& n : nodes)
      if (n.id == id) return n;
    throw UnknownNode("unknown node " + std::to_string(id));
  }

  /// Sorted neighbour lists for every node (isolated nodes map to empty).
  std::map<NodeId, std::vector<NodeId>> adjacency() const {
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const auto& n : nodes) adj[n.id];
    for (const auto& [a, b] : edges) {
      if (a == b) continue;
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    for (auto& [id, list] : adj) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    return adj;
  }

  std::vector<NodeId> neighbors(NodeId id) const {
    if (!has_node(id)) throw UnknownNode("unknown node " + std::to_string(id));
    return adjacency()[id];
  }

  /// The unique target node, or -1 if the topology has none.
  NodeId target() const {
    for (const auto& n : nodes)
      if (n.is_target) return n.id;
    return -1;
  }

  friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;
};

struct AttackerParams {
  double strength = 0.0;
  int spread = 1;
  std::set<NodeId> entry;

  friend bool operator==(const AttackerParams&, const AttackerParams&) = default;
};

struct CostParams {
  double patch_cost = 1.0;
  double patch_usability = 0.5;
  double restore_cost = 3.0;
  double restore_usability = 2.0;
  double isolate_cost_per_step = 2.0;
  double scan_cost = 0.5;
  double survival_bonus = 1.0;
  double target_loss_penalty = -100.0;
  double patch_delta = 0.2;

  friend bool operator==(const CostParams&, const CostParams&) = default;
};

struct AlertParams {
  double p_alert_fail = 0.6;
  double p_alert_success = 0.3;
  double p_false_alert = 0.05;
  double scan_tpr = 0.9;
  double scan_fpr = 0.05;

  friend bool operator==(const AlertParams&, const AlertParams&) = default;
};

inline constexpr int kDefaultHorizon = 100;

struct Scenario {
  NetworkTopology topology;
  AttackerParams attacker;
  CostParams costs;
  AlertParams alerts;
  int horizon = kDefaultHorizon;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Breadth-first hop distance between two nodes. Unreachable pairs return -1.
inline int shortest_hops(const NetworkTopology& t, NodeId a, NodeId b) {
  if (!t.has_node(a)) throw UnknownNode("unknown node " + std::to_string(a));
  if (!t.has_node(b)) throw UnknownNode("unknown node " + std::to_string(b));
  if (a == b) return 0;
  const auto adj = t.adjacency();
  std::map<NodeId, int> dist{{a, 0}};
  std::deque<NodeId> queue{a};
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (NodeId v : adj.at(u)) {
      if (dist.count(v)) continue;
      dist[v] = dist[u] + 1;
      if (v == b) return dist[v];
      queue.push_back(v);
    }
  }
  return -1;
}

inline bool is_connected(const NetworkTopology& t) {
  if (t.nodes.empty()) return true;
  const auto adj = t.adjacency();
  std::set<NodeId> seen{t.nodes.front().id};
  std::deque<NodeId> queue{t.nodes.front().id};
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (NodeId v : adj.at(u))
      if (seen.insert(v).second) queue.push_back(v);
  }
  return seen.size() == adj.size();
}

namespace detail {

inline bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace detail

/// Every violated scenario rule, in a stable order. Empty means valid.
inline std::vector<std::string> scenario_violations(const Scenario& s) {
  using detail::in_unit;
  std::vector<std::string> out;
  const auto& topo = s.topology;

  std::set<NodeId> ids;
  int targets = 0;
  for (const auto& n : topo.nodes) {
    const std::string where = "node " + std::to_string(n.id) + ": ";
    if (n.id < 0) out.push_back(where + "negative node id");
    if (!ids.insert(n.id).second) out.push_back(where + "duplicate node id");
    if (!in_unit(n.defence)) out.push_back(where + "defence out of range");
    std::set<std::string> vuln_ids;
    for (const auto& v : n.vulns) {
      if (v.id.empty()) out.push_back(where + "empty vuln id");
      else if (!vuln_ids.insert(v.id).second) out.push_back(where + "duplicate vuln id " + v.id);
      if (!in_unit(v.severity)) out.push_back(where + "severity out of range");
    }
    if (n.is_target) ++targets;
  }
  if (topo.nodes.empty()) out.push_back("scenario has no nodes");
  if (targets != 1) out.push_back("exactly one target required (found " + std::to_string(targets) + ")");

  bool endpoints_ok = true;
  for (const auto& [a, b] : topo.edges) {
    if (a == b) out.push_back("self-loop on node " + std::to_string(a));
    if (!ids.count(a) || !ids.count(b)) {
      out.push_back("edge endpoint missing (" + std::to_string(a) + "," + std::to_string(b) + ")");
      endpoints_ok = false;
    }
  }
  if (endpoints_ok && !is_connected(topo)) out.push_back("graph not connected");

  const auto& atk = s.attacker;
  if (!in_unit(atk.strength)) out.push_back("attacker strength out of range");
  if (atk.spread < 1) out.push_back("attacker spread must be >= 1");
  if (atk.entry.empty()) out.push_back("attacker entry set is empty");
  for (NodeId e : atk.entry) {
    if (!ids.count(e)) out.push_back("entry node " + std::to_string(e) + " missing");
    else if (topo.node(e).is_target) out.push_back("entry node " + std::to_string(e) + " is the target");
  }

  const auto& c = s.costs;
  for (double v : {c.patch_cost, c.patch_usability, c.restore_cost, c.restore_usability,
                   c.isolate_cost_per_step, c.scan_cost}) {
    if (!(v >= 0.0)) {
      out.push_back("costs must be non-negative");
      break;
    }
  }
  if (!(c.target_loss_penalty < 0.0)) out.push_back("target_loss_penalty must be negative");
  if (!(c.patch_delta > 0.0 && c.patch_delta <= 1.0)) out.push_back("patch_delta out of range");

  const auto& al = s.alerts;
  for (double v : {al.p_alert_fail, al.p_alert_success, al.p_false_alert, al.scan_tpr, al.scan_fpr}) {
    if (!in_unit(v)) {
      out.push_back("alert probability out of range");
      break;
    }
  }
  if (s.horizon < 1) out.push_back("horizon must be >= 1");
  return out;
}

inline void validate_scenario(const Scenario& s) {
  const auto violations = scenario_violations(s);
  if (violations.empty()) return;
  std::string msg;
  for (const auto& v : violations) {
    if (!msg.empty()) msg += "; ";
    msg += v;
  }
  throw ValidationError(msg);
}

namespace detail {

class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string where, bool lenient)
      : obj_(obj), where_(std::move(where)), lenient_(lenient) {
    if (!obj_.is_object()) throw ParseError(where_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  const Json& at(const std::string& key) {
    if (!has(key)) throw ParseError(where_ + ": missing key \"" + key + "\"");
    return obj_.at(key);
  }

  double number(const std::string& key) { return as_number(at(key), key); }
  double number_or(const std::string& key, double dflt) {
    return has(key) ? as_number(obj_.at(key), key) : dflt;
  }

  long long integer(const std::string& key) { return as_integer(at(key), key); }

  void finish() const {
    if (lenient_) return;
    for (const auto& [key, _] : obj_.items())
      if (!seen_.count(key)) throw ParseError(where_ + ": unknown key \"" + key + "\"");
  }

  double as_number(const Json& v, const std::string& key) const {
    if (!v.is_number()) throw ParseError(where_ + ": \"" + key + "\" must be a number");
    return v.get<double>();
  }

  long long as_integer(const Json& v, const std::string& key) const {
    if (!v.is_number_integer()) throw ParseError(where_ + ": \"" + key + "\" must be an integer");
    return v.get<long long>();
  }

  const Json& array(const std::string& key) {
    const Json& v = at(key);
    if (!v.is_array()) throw ParseError(where_ + ": \"" + key + "\" must be an array");
    return v;
  }

  std::set<std::string> strings(const std::string& key) {
    std::set<std::string> out;
    if (!has(key)) return out;
    const Json& v = obj_.at(key);
    if (!v.is_array()) throw ParseError(where_ + ": \"" + key + "\" must be an array");
    for (const auto& e : v) {
      if (!e.is_string()) throw ParseError(where_ + ": \"" + key + "\" entries must be strings");
      out.insert(e.get<std::string>());
    }
    return out;
  }

 private:
  const Json& obj_;
  std::string where_;
  bool lenient_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Parse without validating. Omitted cost/alert/horizon fields keep their
/// defaults.
inline Scenario parse_scenario(std::string_view text, bool lenient = false) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed scenario JSON: ") + e.what());
  }
  Scenario s;
  detail::ObjectReader root(doc, "scenario", lenient);

  int index = 0;
  for (const auto& jn : root.array("nodes")) {
    detail::ObjectReader r(jn, "nodes[" + std::to_string(index++) + "]", lenient);
    NodeSpec n;
    n.id = static_cast<NodeId>(r.integer("id"));
    n.defence = r.number("defence");
    if (r.has("vulns")) {
      const Json& vs = r.array("vulns");
      int vi = 0;
      for (const auto& jv : vs) {
        detail::ObjectReader vr(jv, "vulns[" + std::to_string(vi++) + "]", lenient);
        VulnSpec v;
        const Json& vid = vr.at("id");
        if (!vid.is_string()) throw ParseError("vuln id must be a string");
        v.id = vid.get<std::string>();
        v.severity = vr.number("severity");
        vr.finish();
        n.vulns.push_back(std::move(v));
      }
    }
    n.creds_stored = r.strings("creds_stored");
    n.unlocks = r.strings("unlocks");
    if (r.has("target")) {
      const Json& t = r.at("target");
      if (!t.is_boolean()) throw ParseError("node target must be a boolean");
      n.is_target = t.get<bool>();
    }
    r.finish();
    s.topology.nodes.push_back(std::move(n));
  }

  for (const auto& je : root.array("edges")) {
    if (!je.is_array() || je.size() != 2 || !je[0].is_number_integer() || !je[1].is_number_integer())
      throw ParseError("edges entries must be 2-element integer arrays");
    s.topology.edges.insert(make_edge(je[0].get<NodeId>(), je[1].get<NodeId>()));
  }

  {
    detail::ObjectReader r(root.at("attacker"), "attacker", lenient);
    s.attacker.strength = r.number("strength");
    s.attacker.spread = static_cast<int>(r.integer("spread"));
    for (const auto& e : r.array("entry")) {
      if (!e.is_number_integer()) throw ParseError("attacker entry must hold integer ids");
      s.attacker.entry.insert(e.get<NodeId>());
    }
    r.finish();
  }

  if (root.has("costs")) {
    detail::ObjectReader r(doc.at("costs"), "costs", lenient);
    auto& c = s.costs;
    c.patch_cost = r.number_or("patch_cost", c.patch_cost);
    c.patch_usability = r.number_or("patch_usability", c.patch_usability);
    c.restore_cost = r.number_or("restore_cost", c.restore_cost);
    c.restore_usability = r.number_or("restore_usability", c.restore_usability);
    c.isolate_cost_per_step = r.number_or("isolate_cost_per_step", c.isolate_cost_per_step);
    c.scan_cost = r.number_or("scan_cost", c.scan_cost);
    c.survival_bonus = r.number_or("survival_bonus", c.survival_bonus);
    c.target_loss_penalty = r.number_or("target_loss_penalty", c.target_loss_penalty);
    c.patch_delta = r.number_or("patch_delta", c.patch_delta);
    r.finish();
  }
  if (root.has("alerts")) {
    detail::ObjectReader r(doc.at("alerts"), "alerts", lenient);
    auto& a = s.alerts;
    a.p_alert_fail = r.number_or("p_alert_fail", a.p_alert_fail);
    a.p_alert_success = r.number_or("p_alert_success", a.p_alert_success);
    a.p_false_alert = r.number_or("p_false_alert", a.p_false_alert);
    a.scan_tpr = r.number_or("scan_tpr", a.scan_tpr);
    a.scan_fpr = r.number_or("scan_fpr", a.scan_fpr);
    r.finish();
  }
  if (root.has("horizon")) s.horizon = static_cast<int>(root.integer("horizon"));
  root.finish();
  return s;
}

/// Parse and validate a scenario document.
inline Scenario load_scenario(std::string_view text, bool lenient = false) {
  Scenario s = parse_scenario(text, lenient);
  validate_scenario(s);
  return s;
}

/// Canonical JSON form; every field is written so the digest is stable.
inline OrderedJson scenario_to_json(const Scenario& s) {
  OrderedJson nodes = OrderedJson::array();
  for (const auto& n : s.topology.nodes) {
    OrderedJson vulns = OrderedJson::array();
    for (const auto& v : n.vulns) vulns.push_back({{"id", v.id}, {"severity", v.severity}});
    nodes.push_back({{"id", n.id},
                     {"defence", n.defence},
                     {"vulns", vulns},
                     {"creds_stored", n.creds_stored},
                     {"unlocks", n.unlocks},
                     {"target", n.is_target}});
  }
  OrderedJson edges = OrderedJson::array();
  for (const auto& [a, b] : s.topology.edges) edges.push_back({a, b});
  const auto& c = s.costs;
  const auto& a = s.alerts;
  return OrderedJson{
      {"nodes", nodes},
      {"edges", edges},
      {"attacker", {{"strength", s.attacker.strength}, {"spread", s.attacker.spread}, {"entry", s.attacker.entry}}},
      {"costs",
       {{"patch_cost", c.patch_cost},
        {"patch_usability", c.patch_usability},
        {"restore_cost", c.restore_cost},
        {"restore_usability", c.restore_usability},
        {"isolate_cost_per_step", c.isolate_cost_per_step},
        {"scan_cost", c.scan_cost},
        {"survival_bonus", c.survival_bonus},
        {"target_loss_penalty", c.target_loss_penalty},
        {"patch_delta", c.patch_delta}}},
      {"alerts",
       {{"p_alert_fail", a.p_alert_fail},
        {"p_alert_success", a.p_alert_success},
        {"p_false_alert", a.p_false_alert},
        {"scan_tpr", a.scan_tpr},
        {"scan_fpr", a.scan_fpr}}},
      {"horizon", s.horizon}};
}

inline std::string serialize_scenario(const Scenario& s) { return scenario_to_json(s).dump(); }

}  // namespace acdsim
