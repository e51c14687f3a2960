#pragma once

// Policies for both sides and a tabular Q-learning harness.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acdsim/game.hpp"

namespace acdsim {

// ---------------------------------------------------------------------------
// Attacker

/// Scripted lateral traversal. Frontier = known, uncompromised, not isolated,
/// adjacent to a compromised node. Priority: seen target, then nodes unlocked
/// by held credentials, then the rest; ascending id within each class.
inline AttackerAction lateral_attacker_act(const AttackerView& view, int spread, Rng& /*rng*/) {
  std::vector<NodeId> frontier;
  for (const auto& [id, nbs] : view.known_nodes) {
    if (view.compromised.count(id) || view.isolated.count(id)) continue;
    const bool adjacent = std::any_of(nbs.begin(), nbs.end(), [&](NodeId nb) { return view.compromised.count(nb) > 0; });
    if (adjacent) frontier.push_back(id);
  }
  auto priority = [&](NodeId id) {
    if (view.target_seen && *view.target_seen == id) return 0;
    auto it = view.unlocks.find(id);
    if (it != view.unlocks.end())
      for (const auto& c : it->second)
        if (view.creds.count(c)) return 1;
    return 2;
  };
  std::stable_sort(frontier.begin(), frontier.end(),
                   [&](NodeId a, NodeId b) { return std::pair(priority(a), a) < std::pair(priority(b), b); });
  AttackerAction out;
  for (NodeId id : frontier) {
    if (static_cast<int>(out.attempts.size()) >= spread) break;
    out.attempts.insert(id);
  }
  return out;
}

class LateralAttacker final : public AttackerPolicy {
 public:
  AttackerAction act(const AttackerView& view, int spread, Rng& rng) override {
    return lateral_attacker_act(view, spread, rng);
  }
};

class PassingAttacker final : public AttackerPolicy {
 public:
  AttackerAction act(const AttackerView&, int, Rng&) override { return {}; }
};

// ---------------------------------------------------------------------------
// Defender meta-actions and features

enum class MetaAction { Nop, ScanHottest, PatchHottest, IsolateHottest, RestoreHottest, PatchTargetNeighbor };

inline constexpr int kMetaActionCount = 6;

inline const std::array<std::string, kMetaActionCount>& meta_action_names() {
  static const std::array<std::string, kMetaActionCount> names{
      "nop", "scan_hottest", "patch_hottest", "isolate_hottest", "restore_hottest", "patch_target_neighbor"};
  return names;
}

/// Node with the most last-step alerts; lowest id on ties.
inline std::optional<NodeId> hottest_node(const DefenderView& v) {
  std::map<NodeId, int> counts;
  for (const auto& a : v.alerts_last_step) ++counts[a.node];
  std::optional<NodeId> best;
  int best_count = 0;
  for (const auto& [id, c] : counts) {
    if (c > best_count) {
      best = id;
      best_count = c;
    }
  }
  return best;
}

inline DefenderAction meta_to_action(MetaAction m, const DefenderView& v) {
  if (m == MetaAction::PatchTargetNeighbor) {
    const auto nbs = v.topology->neighbors(v.topology->target());
    return nbs.empty() ? DefenderAction::nop() : DefenderAction::patch(nbs.front());
  }
  if (m == MetaAction::Nop) return DefenderAction::nop();
  const auto hot = hottest_node(v);
  if (!hot) return DefenderAction::nop();
  switch (m) {
    case MetaAction::ScanHottest: return DefenderAction::scan(*hot);
    case MetaAction::PatchHottest: return DefenderAction::patch(*hot);
    case MetaAction::IsolateHottest: return DefenderAction::isolate(*hot);
    case MetaAction::RestoreHottest: return DefenderAction::restore(*hot);
    default: return DefenderAction::nop();
  }
}

struct FeatureKey {
  int alert_bucket = 0;  // 0, 1, 2, 3 (= 3 or more)
  bool target_adjacent_alert = false;
  int isolated_bucket = 0;  // 0, 1, 2 (= 2 or more)

  static constexpr int kCount = 4 * 2 * 3;

  int index() const { return alert_bucket * 6 + (target_adjacent_alert ? 3 : 0) + isolated_bucket; }

  static FeatureKey from_index(int i) {
    return {i / 6, (i % 6) / 3 == 1, i % 3};
  }

  friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
};

inline FeatureKey featurize(const DefenderView& v) {
  FeatureKey k;
  k.alert_bucket = std::min<int>(3, static_cast<int>(v.alerts_last_step.size()));
  const auto nbs = v.topology->neighbors(v.topology->target());
  for (const auto& a : v.alerts_last_step)
    if (std::binary_search(nbs.begin(), nbs.end(), a.node)) k.target_adjacent_alert = true;
  k.isolated_bucket = std::min<int>(2, static_cast<int>(v.isolation.size()));
  return k;
}

// ---------------------------------------------------------------------------
// Q-learning

struct LearningParams {
  double alpha = 0.1;
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay = 0.995;
  int episodes = 10000;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in (0,1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ValidationError("gamma must be in [0,1)");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0))
      throw ValidationError("epsilon must be in [0,1]");
    if (!(epsilon_decay > 0.0 && epsilon_decay <= 1.0)) throw ValidationError("epsilon_decay must be in (0,1]");
    if (episodes < 0) throw ValidationError("episodes must be non-negative");
  }

  double epsilon_at(int episode) const {
    return std::max(epsilon_end, epsilon_start * std::pow(epsilon_decay, episode));
  }
};

class QTable {
 public:
  QTable() = default;
  QTable(int states, std::vector<std::string> actions)
      : states_(states), actions_(std::move(actions)), values_(states_ * actions_.size(), 0.0) {}

  /// Zero table over the 24 feature keys and the defender meta-actions.
  static QTable for_defender() {
    const auto& names = meta_action_names();
    return QTable(FeatureKey::kCount, std::vector<std::string>(names.begin(), names.end()));
  }

  int states() const { return states_; }
  int actions() const { return static_cast<int>(actions_.size()); }
  const std::vector<std::string>& action_names() const { return actions_; }

  double& at(int s, int a) { return values_.at(static_cast<std::size_t>(s) * actions_.size() + a); }
  double at(int s, int a) const { return values_.at(static_cast<std::size_t>(s) * actions_.size() + a); }

  double max_value(int s) const {
    double best = at(s, 0);
    for (int a = 1; a < actions(); ++a) best = std::max(best, at(s, a));
    return best;
  }

  /// Lowest action index wins ties.
  int greedy(int s) const {
    int best = 0;
    for (int a = 1; a < actions(); ++a)
      if (at(s, a) > at(s, best)) best = a;
    return best;
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  int states_ = 0;
  std::vector<std::string> actions_;
  std::vector<double> values_;
};

/// One-step backup. Terminal transitions do not bootstrap.
inline void q_update(QTable& q, int state, int action, double reward, int next_state, const LearningParams& p,
                     bool terminal = false) {
  const double target = reward + (terminal ? 0.0 : p.gamma * q.max_value(next_state));
  double& v = q.at(state, action);
  v += p.alpha * (target - v);
}

inline void q_update(QTable& q, const FeatureKey& k, MetaAction a, double reward, const FeatureKey& k2,
                     const LearningParams& p, bool terminal = false) {
  q_update(q, k.index(), static_cast<int>(a), reward, k2.index(), p, terminal);
}

struct Transition {
  int next_state = 0;
  double reward = 0.0;
  bool done = false;
};

/// An episodic environment with a finite state index space.
template <typename E>
concept TabularEnv = requires(E env, std::uint64_t seed, int action) {
  { env.num_states() } -> std::convertible_to<int>;
  { env.num_actions() } -> std::convertible_to<int>;
  { env.reset(seed) } -> std::convertible_to<int>;
  { env.step(action) } -> std::convertible_to<Transition>;
};

struct TrainResult {
  QTable table;
  std::vector<double> curve;  // per-episode return
};

/// epsilon-greedy Q-learning. Episode e is reset with seed + e; exploration
/// draws come from a separate stream of the same seed.
template <TabularEnv Env>
TrainResult train_q(Env& env, const LearningParams& p, std::uint64_t seed, std::vector<std::string> action_names = {}) {
  p.validate();
  if (action_names.empty())
    for (int a = 0; a < env.num_actions(); ++a) action_names.push_back("a" + std::to_string(a));
  TrainResult out{QTable(env.num_states(), std::move(action_names)), {}};
  out.curve.reserve(p.episodes);
  Rng explore = Rng::stream(seed, "explore");
  for (int e = 0; e < p.episodes; ++e) {
    const double eps = p.epsilon_at(e);
    int s = env.reset(seed + static_cast<std::uint64_t>(e));
    double ret = 0.0;
    for (;;) {
      const int a = explore.uniform() < eps ? static_cast<int>(explore.below(env.num_actions())) : out.table.greedy(s);
      const Transition tr = env.step(a);
      q_update(out.table, s, a, tr.reward, tr.next_state, p, tr.done);
      ret += tr.reward;
      s = tr.next_state;
      if (tr.done) break;
    }
    out.curve.push_back(ret);
  }
  return out;
}

/// The game seen through the defender's feature key against the scripted
/// lateral attacker.
class DefenderTrainingEnv {
 public:
  explicit DefenderTrainingEnv(const Scenario& s) : game_(s) {}

  int num_states() const { return FeatureKey::kCount; }
  int num_actions() const { return kMetaActionCount; }

  int reset(std::uint64_t episode_seed) {
    state_ = game_.init(episode_seed);
    atk_rng_ = Rng::stream(episode_seed, "attacker");
    return featurize(game_.defender_view(state_)).index();
  }

  Transition step(int action) {
    const DefenderView view = game_.defender_view(state_);
    last_action_ = meta_to_action(static_cast<MetaAction>(action), view);
    const AttackerAction atk = lateral_attacker_act(game_.attacker_view(state_), game_.scenario().attacker.spread, atk_rng_);
    auto [next, outcome] = game_.step(state_, last_action_, atk);
    state_ = std::move(next);
    return {featurize(game_.defender_view(state_)).index(), outcome.reward, state_.terminal.has_value()};
  }

  const Game& game() const { return game_; }
  const DefenderAction& last_action() const { return last_action_; }

 private:
  Game game_;
  GameState state_;
  Rng atk_rng_;
  DefenderAction last_action_;
};

inline TrainResult train(const Scenario& s, const LearningParams& p, std::uint64_t seed) {
  DefenderTrainingEnv env(s);
  const auto& names = meta_action_names();
  return train_q(env, p, seed, std::vector<std::string>(names.begin(), names.end()));
}

// ---------------------------------------------------------------------------
// Baseline defenders

class NopDefender final : public DefenderPolicy {
 public:
  DefenderAction act(const DefenderView&, Rng&) override { return DefenderAction::nop(); }
};

/// Uniform over action kinds, then uniform over nodes.
class RandomDefender final : public DefenderPolicy {
 public:
  DefenderAction act(const DefenderView& v, Rng& rng) override {
    const auto kind = static_cast<DefenderAction::Kind>(rng.below(5));
    if (kind == DefenderAction::Kind::Nop) return DefenderAction::nop();
    const auto& nodes = v.topology->nodes;
    const NodeId id = nodes[rng.below(nodes.size())].id;
    return {kind, id, 1};
  }
};

class GreedyQDefender final : public DefenderPolicy {
 public:
  explicit GreedyQDefender(QTable table) : table_(std::move(table)) {
    if (table_.states() != FeatureKey::kCount || table_.actions() != kMetaActionCount)
      throw ValidationError("Q-table shape does not match the defender feature/action space");
  }
  DefenderAction act(const DefenderView& v, Rng&) override {
    return meta_to_action(static_cast<MetaAction>(table_.greedy(featurize(v).index())), v);
  }

 private:
  QTable table_;
};

// ---------------------------------------------------------------------------
// Persistence

inline OrderedJson qtable_to_json(const QTable& q) {
  OrderedJson entries = OrderedJson::array();
  for (int s = 0; s < q.states(); ++s) {
    const FeatureKey k = FeatureKey::from_index(s);
    std::vector<double> values;
    for (int a = 0; a < q.actions(); ++a) values.push_back(q.at(s, a));
    entries.push_back({{"key", {k.alert_bucket, k.target_adjacent_alert ? 1 : 0, k.isolated_bucket}}, {"values", values}});
  }
  return OrderedJson{{"version", kVersion}, {"actions", q.action_names()}, {"entries", entries}};
}

inline QTable qtable_from_json(std::string_view text) {
  try {
    const Json j = Json::parse(text);
    QTable q(FeatureKey::kCount, j.at("actions").get<std::vector<std::string>>());
    if (q.action_names() != std::vector<std::string>(meta_action_names().begin(), meta_action_names().end()))
      throw ParseError("Q-table action list does not match the defender meta-actions");
    for (const auto& e : j.at("entries")) {
      const auto key = e.at("key").get<std::vector<int>>();
      if (key.size() != 3 || key[0] < 0 || key[0] > 3 || key[1] < 0 || key[1] > 1 || key[2] < 0 || key[2] > 2)
        throw ParseError("Q-table key out of range");
      const int s = FeatureKey{key[0], key[1] == 1, key[2]}.index();
      const auto values = e.at("values").get<std::vector<double>>();
      if (static_cast<int>(values.size()) != q.actions()) throw ParseError("Q-table row has the wrong width");
      for (int a = 0; a < q.actions(); ++a) {
        if (!std::isfinite(values[a])) throw ParseError("Q-table value is not finite");
        q.at(s, a) = values[a];
      }
    }
    return q;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed Q-table: ") + e.what());
  }
}

inline std::string curve_to_csv(const std::vector<double>& curve) {
  std::ostringstream out;
  out.precision(17);
  out << "episode,return\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
  return out.str();
}

}  // namespace acdsim
