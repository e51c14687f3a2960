#pragma once

// Closed detection -> mitigation loop. Each step the recent indicator window
// is smoothed under the malign model; a confident detection triggers the
// choice of a causal intervention, which is mapped onto a defender action and
// applied according to the autonomy level.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "acdsim/agents.hpp"
#include "acdsim/causal.hpp"
#include "acdsim/detect.hpp"
#include "acdsim/game.hpp"

namespace acdsim {

enum class AutonomyLevel { Advise, Confirm, Auto };

inline const char* to_string(AutonomyLevel a) {
  switch (a) {
    case AutonomyLevel::Advise: return "advise";
    case AutonomyLevel::Confirm: return "confirm";
    case AutonomyLevel::Auto: return "auto";
  }
  return "?";
}

inline AutonomyLevel autonomy_from(const std::string& s) {
  if (s == "advise") return AutonomyLevel::Advise;
  if (s == "confirm") return AutonomyLevel::Confirm;
  if (s == "auto") return AutonomyLevel::Auto;
  throw ParseError("unknown autonomy level \"" + s + "\"");
}

/// A slice-relative intervention: tactic name -> forced value. Empty = do nothing.
struct CandidateIntervention {
  std::map<std::string, int> forced;

  Assignment at_slice(int slice) const {
    Assignment a;
    for (const auto& [name, v] : forced) a[VarId(name, slice)] = v;
    return a;
  }

  std::string label() const {
    if (forced.empty()) return "do(nothing)";
    std::string s = "do(";
    bool first = true;
    for (const auto& [name, v] : forced) {
      if (!first) s += ",";
      s += name + "=" + std::to_string(v);
      first = false;
    }
    return s + ")";
  }
};

struct CandidateRisk {
  Assignment forced;
  double risk = 0.0;
};

struct InterventionPlan {
  Assignment forced;
  double predicted_risk = 0.0;
  std::size_t chosen = 0;
  std::vector<CandidateRisk> rationale;  // every candidate in declaration order
};

inline Assignment risk_target(int horizon_slice) { return {{VarId("Y", horizon_slice), 1}}; }

/// Minimizes p(Y at horizon_slice = 1 | evidence, do) over the candidates;
/// the first declared candidate wins ties.
inline InterventionPlan select_intervention(const Cgm& m, const Assignment& evidence,
                                            const std::vector<Assignment>& candidates, int horizon_slice,
                                            Method method = Method::ForwardBackward) {
  if (candidates.empty()) throw SpecError("no candidate interventions");
  InterventionPlan plan;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double r = interventional(m, risk_target(horizon_slice), candidates[i], evidence, method);
    plan.rationale.push_back({candidates[i], r});
    if (i == 0 || r < plan.predicted_risk) {
      plan.predicted_risk = r;
      plan.chosen = i;
    }
  }
  plan.forced = candidates[plan.chosen];
  return plan;
}

/// do(X=0) isolates and do(Y=0) restores the node with most last-step
/// alerts; anything else, or no alerts at all, is a no-op.
inline DefenderAction map_intervention_to_action(const InterventionPlan& plan, const DefenderView& v) {
  bool stop_movement = false;
  bool stop_collection = false;
  for (const auto& [id, value] : plan.forced) {
    if (value != 0) continue;
    if (id.name == "X") stop_movement = true;
    if (id.name == "Y") stop_collection = true;
  }
  const auto hot = hottest_node(v);
  if (!hot) return DefenderAction::nop();
  if (stop_movement) return DefenderAction::isolate(*hot);
  if (stop_collection) return DefenderAction::restore(*hot);
  return DefenderAction::nop();
}

using ApprovalHook = std::function<bool(const InterventionPlan&)>;

inline constexpr int kMaxWindow = 16;

struct LoopConfig {
  AutonomyLevel autonomy = AutonomyLevel::Auto;
  double tau = 0.8;  // values above 1 disable proposals
  DbnSpec dbn = DbnSpec::defaults(Topology::ChainA, 1);
  EmissionNoise noise;
  std::vector<CandidateIntervention> candidates{{{{"X", 0}}}, {{{"Y", 0}}}};
  int window = 8;
  int lookahead = 1;  // risk is read this many slices after the intervention slice

  void validate() const {
    if (!(tau >= 0.0) || std::isinf(tau)) throw ValidationError("tau must be a non-negative number");
    if (window < 1 || window > kMaxWindow) throw ValidationError("window must be in [1,16]");
    if (lookahead < 0) throw ValidationError("lookahead must be non-negative");
    if (candidates.empty()) throw ValidationError("at least one candidate intervention is required");
  }
};

struct DetectionRecord {
  int t = 0;
  std::array<std::optional<double>, 3> posterior;  // Z, X, Y at the newest window slice
  double max = 0.0;
};

struct InterventionRecord {
  int t = 0;
  InterventionPlan plan;
  std::optional<bool> approved;  // set only at Confirm
  bool applied = false;
  DefenderAction action;
};

struct LoopReport {
  AutonomyLevel autonomy = AutonomyLevel::Auto;
  double tau = 0.0;
  EpisodeLog log;
  IndicatorSequence indicators;
  std::vector<DetectionRecord> detections;
  std::vector<InterventionRecord> interventions;

  std::size_t applied_count() const {
    return static_cast<std::size_t>(std::count_if(interventions.begin(), interventions.end(),
                                                  [](const InterventionRecord& r) { return r.applied; }));
  }
};

namespace detail {

inline IndicatorSequence window_of(const IndicatorSequence& all, int window) {
  IndicatorSequence w;
  const std::size_t n = std::min<std::size_t>(all.size(), static_cast<std::size_t>(window));
  for (std::size_t k = all.size() - n; k < all.size(); ++k) {
    IndicatorFrame f = all.frames[k];
    f.t = static_cast<int>(w.frames.size());
    w.frames.push_back(f);
  }
  return w;
}

inline Cgm dbn_with_slices(DbnSpec spec, int T) {
  spec.T = T;
  if (!spec.schedule.empty()) {
    std::vector<bool> s(T);
    for (int t = 0; t < T; ++t) s[t] = spec.schedule[t % spec.schedule.size()];
    spec.schedule = std::move(s);
  }
  return build_topology(spec);
}

}  // namespace detail

/// Detection and, when confident, a plan for the upcoming step. The evidence
/// window occupies slices [0, n); the intervention sits on slice n.
struct LoopDecision {
  DetectionRecord detection;
  std::optional<InterventionPlan> plan;
};

inline std::optional<LoopDecision> decide(const LoopConfig& cfg, const IndicatorSequence& history, int t) {
  if (history.size() == 0) return std::nullopt;
  const IndicatorSequence win = detail::window_of(history, cfg.window);
  const int n = static_cast<int>(win.size());
  const Cgm window_model = detail::dbn_with_slices(cfg.dbn, n);
  const auto trace = tactic_posteriors(window_model, win, cfg.noise);

  LoopDecision d;
  d.detection.t = t;
  d.detection.posterior = trace.back().p;
  for (const auto& p : d.detection.posterior)
    if (p) d.detection.max = std::max(d.detection.max, *p);
  if (d.detection.max < cfg.tau) return d;

  const Cgm plan_model =
      attach_emissions(detail::dbn_with_slices(cfg.dbn, n + 1 + cfg.lookahead), cfg.noise.miss, cfg.noise.false_pos);
  const Assignment evidence = indicator_evidence(window_model, win);
  std::vector<Assignment> candidates;
  for (const auto& c : cfg.candidates) candidates.push_back(c.at_slice(n));
  d.plan = select_intervention(plan_model, evidence, candidates, n + cfg.lookahead);
  return d;
}

/// One episode under the loop. `fallback` is the defender used whenever no
/// intervention is applied (Nop when null). RNG streams: the game generator
/// as in run_episode, the policies' labelled streams, and a separate
/// "indicators" stream for indicator noise.
inline LoopReport run_loop(const Scenario& s, const LoopConfig& cfg, std::uint64_t seed,
                           const ApprovalHook& approve = {}, DefenderPolicy* fallback = nullptr,
                           std::optional<int> horizon_override = std::nullopt) {
  cfg.validate();
  NopDefender nop;
  DefenderPolicy& defender = fallback ? *fallback : nop;
  LateralAttacker attacker;

  const Game game(with_horizon(s, horizon_override));
  GameState st = game.init(seed);
  Rng def_rng = Rng::stream(seed, "defender");
  Rng atk_rng = Rng::stream(seed, "attacker");
  IndicatorExtractor extractor(cfg.noise, seed);
  EpisodeRecorder rec(game, seed);

  LoopReport report;
  report.autonomy = cfg.autonomy;
  report.tau = cfg.tau;
  report.indicators.source_digest = game.digest();

  while (!st.terminal) {
    const DefenderView view = game.defender_view(st);
    DefenderAction action = defender.act(view, def_rng);

    if (auto decision = decide(cfg, report.indicators, st.t)) {
      report.detections.push_back(decision->detection);
      if (decision->plan) {
        InterventionRecord ir;
        ir.t = st.t;
        ir.plan = *decision->plan;
        ir.action = map_intervention_to_action(ir.plan, view);
        switch (cfg.autonomy) {
          case AutonomyLevel::Advise: break;
          case AutonomyLevel::Confirm:
            ir.approved = approve ? approve(ir.plan) : false;
            ir.applied = *ir.approved;
            break;
          case AutonomyLevel::Auto: ir.applied = true; break;
        }
        if (ir.applied) action = ir.action;
        report.interventions.push_back(std::move(ir));
      }
    }

    const AttackerAction a = attacker.act(game.attacker_view(st), game.scenario().attacker.spread, atk_rng);
    auto [next, outcome] = game.step(st, action, a);
    rec.record(st, action, a, outcome);
    defender.observe(outcome);
    st = std::move(next);
    report.indicators.frames.push_back(extractor.next(rec.last()));
  }
  report.log = rec.finish(st);
  return report;
}

inline OrderedJson plan_to_json(const InterventionPlan& p) {
  auto bindings = [](const Assignment& a) {
    OrderedJson j = OrderedJson::object();
    for (const auto& [id, v] : a) j[id.str()] = v;
    return j;
  };
  OrderedJson cands = OrderedJson::array();
  for (const auto& c : p.rationale) cands.push_back({{"do", bindings(c.forced)}, {"risk", c.risk}});
  return {{"do", bindings(p.forced)}, {"predicted_risk", p.predicted_risk}, {"chosen", p.chosen}, {"candidates", cands}};
}

/// Report document; the episode log is embedded as its JSON-lines text.
inline OrderedJson loop_report_to_json(const LoopReport& r) {
  OrderedJson detections = OrderedJson::array();
  for (const auto& d : r.detections) {
    OrderedJson row{{"t", d.t}};
    for (std::size_t j = 0; j < kTactics.size(); ++j)
      row[kTactics[j]] = d.posterior[j] ? OrderedJson(*d.posterior[j]) : OrderedJson(nullptr);
    row["max"] = d.max;
    detections.push_back(row);
  }
  OrderedJson interventions = OrderedJson::array();
  std::size_t approved = 0;
  for (const auto& i : r.interventions) {
    OrderedJson row{{"t", i.t}, {"plan", plan_to_json(i.plan)}};
    row["approved"] = i.approved ? OrderedJson(*i.approved) : OrderedJson(nullptr);
    row["applied"] = i.applied;
    row["action"] = to_json(i.action);
    if (i.approved && *i.approved) ++approved;
    interventions.push_back(row);
  }
  OrderedJson indicators = OrderedJson::array();
  for (const auto& f : r.indicators.frames)
    indicators.push_back({{"t", f.t}, {"Z", f.bits[0]}, {"X", f.bits[1]}, {"Y", f.bits[2]}});
  return {{"version", kVersion},
          {"seed", r.log.seed},
          {"autonomy", to_string(r.autonomy)},
          {"tau", r.tau},
          {"summary",
           {{"steps", r.log.steps.size()},
            {"cause", r.log.cause ? to_string(*r.log.cause) : "none"},
            {"return", r.log.total_reward()},
            {"time_to_target_compromise", r.log.time_to_target_compromise()},
            {"proposed", r.interventions.size()},
            {"approved", approved},
            {"applied", r.applied_count()}}},
          {"detections", detections},
          {"interventions", interventions},
          {"indicators", indicators},
          {"episode_log", serialize_log(r.log)}};
}

}  // namespace acdsim
