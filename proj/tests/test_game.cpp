#include <gtest/gtest.h>

#include <random>

#include "acdsim/agents.hpp"
#include "acdsim/game.hpp"
#include "support.hpp"

using namespace acdsim;

namespace {

Scenario two_node() {
  Scenario s;
  s.topology.nodes = {{0, 0.1, {{"v", 0.5}}, {}, {}, false}, {1, 0.2, {{"v", 0.5}}, {}, {}, true}};
  s.topology.edges = {make_edge(0, 1)};
  s.attacker = {0.5, 1, {0}};
  return s;
}

/// Chain 0-1-2 with target 2 and certain compromise.
Scenario certain_chain() {
  Scenario s;
  for (int i = 0; i < 3; ++i) s.topology.nodes.push_back({i, 0.0, {{"v", 1.0}}, {}, {}, i == 2});
  s.topology.edges = {make_edge(0, 1), make_edge(1, 2)};
  s.attacker = {1.0, 1, {0}};
  return s;
}

/// Star around node 0 (entry) with leaves 1..4; target 5 hangs off leaf 4.
Scenario star() {
  Scenario s;
  for (int i = 0; i <= 5; ++i) s.topology.nodes.push_back({i, 0.3, {{"v", 0.8}}, {}, {}, i == 5});
  s.topology.edges = {make_edge(0, 1), make_edge(0, 2), make_edge(0, 3), make_edge(0, 4), make_edge(4, 5)};
  s.attacker = {0.9, 2, {0}};
  s.alerts.p_false_alert = 0.3;
  return s;
}

bool json_has_key(const Json& j, const std::string& key) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items())
      if (k == key || json_has_key(v, key)) return true;
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (json_has_key(v, key)) return true;
  }
  return false;
}

}  // namespace

TEST(Init, TwoNodeEntry) {
  const GameState st = init(two_node(), 3);
  EXPECT_EQ(st.t, 0);
  EXPECT_EQ(st.compromised, (std::set<NodeId>{0}));
  EXPECT_EQ(st.attacker_known, (std::set<NodeId>{0, 1}));
  EXPECT_FALSE(st.terminal);
  EXPECT_EQ(st.defence_now.at(1), 0.2);
}

TEST(Init, EntryCredentialsAreLooted) {
  Scenario s = two_node();
  s.topology.nodes[0].creds_stored = {"c1"};
  EXPECT_EQ(init(s, 0).attacker_creds, (std::set<std::string>{"c1"}));
}

TEST(Init, SameSeedSameState) {
  EXPECT_EQ(init(star(), 7), init(star(), 7));
  GameState a = init(star(), 7);
  GameState b = init(star(), 8);
  EXPECT_NE(a.rng.next_u64(), b.rng.next_u64());
}

TEST(Init, InvalidScenarioPropagates) {
  Scenario s = two_node();
  s.topology.nodes[1].is_target = false;
  EXPECT_THROW(init(s, 0), ValidationError);
}

TEST(CompromiseProbability, Examples) {
  NodeSpec n{1, 0.2, {{"v", 0.5}}, {}, {}, false};
  EXPECT_NEAR(compromise_probability(0.6, n, 0.2, false), 0.6 * 0.5 * 0.8, 1e-15);
  EXPECT_NEAR(compromise_probability(0.6, n, 0.2, false), 0.24, 1e-15);
  NodeSpec bare{2, 0.0, {}, {}, {}, false};
  EXPECT_EQ(compromise_probability(1.0, bare, 0.0, false), 0.0);
  EXPECT_EQ(compromise_probability(0.1, n, 1.0, true), 0.9);
}

TEST(CompromiseProbability, UsesMaximumSeverity) {
  NodeSpec n{1, 0.0, {{"a", 0.2}, {"b", 0.9}}, {}, {}, false};
  EXPECT_NEAR(compromise_probability(1.0, n, 0.5, false), 0.45, 1e-15);
}

TEST(Step, CertainChainCapturesAtTwo) {
  NopDefender nop;
  LateralAttacker atk;
  const EpisodeLog log = run_episode(certain_chain(), nop, atk, 0);
  ASSERT_TRUE(log.cause);
  EXPECT_EQ(*log.cause, TerminalCause::TargetCompromised);
  EXPECT_EQ(log.final_t, 2);
  EXPECT_EQ(log.total_reward(), 1.0 - 100.0);
}

TEST(Step, PassAndNopOnlyAdvancesClock) {
  const Game g(two_node());
  GameState st = g.init(1);
  st.isolation[1] = 2;
  auto [next, out] = g.step(st, DefenderAction::nop(), {});
  EXPECT_EQ(next.t, 1);
  EXPECT_EQ(next.compromised, st.compromised);
  EXPECT_EQ(next.attacker_known, st.attacker_known);
  EXPECT_EQ(next.attacker_creds, st.attacker_creds);
  EXPECT_EQ(next.isolation.at(1), 1);
  // survival bonus minus the cost of the one isolated node
  EXPECT_EQ(out.reward, 1.0 - 2.0);

  GameState quiet = g.init(1);
  auto [n2, o2] = g.step(quiet, DefenderAction::nop(), {});
  EXPECT_EQ(o2.reward, 1.0);
  EXPECT_TRUE(n2.isolation.empty());
}

TEST(Step, IsolateBeforeAttemptSkipsIt) {
  const Game g(certain_chain());
  const GameState st = g.init(0);
  AttackerAction a;
  a.attempts = {1};
  auto [next, out] = g.step(st, DefenderAction::isolate(1), a);
  EXPECT_FALSE(next.compromised.count(1));
  bool skipped = false;
  for (const auto& e : out.events) {
    EXPECT_NE(e.kind, Event::Kind::Success);
    EXPECT_NE(e.kind, Event::Kind::Attempt);
    skipped |= e.kind == Event::Kind::Skip && e.node == 1;
  }
  EXPECT_TRUE(skipped);
}

TEST(Step, IllegalAttacksAndTerminal) {
  const Game g(certain_chain());
  const GameState st = g.init(0);
  AttackerAction far;
  far.attempts = {2};  // unknown and not adjacent
  EXPECT_THROW(g.step(st, DefenderAction::nop(), far), IllegalAction);
  AttackerAction own;
  own.attempts = {0};
  EXPECT_THROW(g.step(st, DefenderAction::nop(), own), IllegalAction);
  EXPECT_THROW(g.step(st, DefenderAction::patch(99), {}), IllegalAction);

  GameState iso = st;
  iso.isolation[1] = 1;
  AttackerAction to1;
  to1.attempts = {1};
  EXPECT_THROW(g.step(iso, DefenderAction::nop(), to1), IllegalAction);

  Scenario wide = star();
  const Game gs(wide);
  AttackerAction too_many;
  too_many.attempts = {1, 2, 3};
  EXPECT_THROW(gs.step(gs.init(0), DefenderAction::nop(), too_many), IllegalAction);

  GameState done = st;
  done.terminal = TerminalCause::HorizonReached;
  EXPECT_THROW(g.step(done, DefenderAction::nop(), {}), TerminalState);
}

TEST(Step, PatchRaisesDefenceAndCosts) {
  const Game g(two_node());
  auto [next, out] = g.step(g.init(0), DefenderAction::patch(1), {});
  EXPECT_NEAR(next.defence_now.at(1), 0.4, 1e-15);
  EXPECT_EQ(out.reward, 1.0 - 1.0 - 0.5);
  GameState high = g.init(0);
  high.defence_now[1] = 0.95;
  EXPECT_EQ(g.step(high, DefenderAction::patch(1), {}).first.defence_now.at(1), 1.0);
}

TEST(Step, RestoreClearsFlagButKeepsCredentials) {
  Scenario s = certain_chain();
  s.topology.nodes[1].creds_stored = {"loot"};
  const Game g(s);
  GameState st = g.init(0);
  AttackerAction a;
  a.attempts = {1};
  st = g.step(st, DefenderAction::nop(), a).first;
  ASSERT_TRUE(st.compromised.count(1));
  ASSERT_TRUE(st.attacker_creds.count("loot"));
  auto [next, out] = g.step(st, DefenderAction::restore(1), {});
  EXPECT_FALSE(next.compromised.count(1));
  EXPECT_TRUE(next.attacker_creds.count("loot"));
  EXPECT_EQ(out.reward, 1.0 - 3.0 - 2.0);
}

TEST(Step, CredentialGivesNinetyPercent) {
  Scenario s = certain_chain();
  s.attacker.strength = 0.0;
  s.topology.nodes[0].creds_stored = {"key"};
  s.topology.nodes[1].unlocks = {"key"};
  const Game g(s);
  AttackerAction a;
  a.attempts = {1};
  auto [next, out] = g.step(g.init(0), DefenderAction::nop(), a);
  ASSERT_FALSE(out.events.empty());
  EXPECT_EQ(out.events.front().kind, Event::Kind::Attempt);
  EXPECT_EQ(out.events.front().value, 0.9);
}

TEST(Step, TargetSeenWhenItEntersTheFrontier) {
  const Game g(certain_chain());
  AttackerAction a;
  a.attempts = {1};
  auto [next, out] = g.step(g.init(0), DefenderAction::nop(), a);
  EXPECT_TRUE(next.attacker_known.count(2));
  EXPECT_TRUE(std::any_of(out.events.begin(), out.events.end(),
                          [](const Event& e) { return e.kind == Event::Kind::TargetSeen && e.node == 2; }));
  EXPECT_EQ(g.attacker_view(next).target_seen, 2);
  EXPECT_FALSE(g.attacker_view(g.init(0)).target_seen);
}

TEST(Step, RngDrawOrderIsDocumented) {
  Scenario s = star();
  const Game g(s);
  const GameState st = g.init(99);
  AttackerAction a;
  a.attempts = {1, 3};
  auto [next, out] = g.step(st, DefenderAction::scan(2), a);

  Rng r = st.rng;
  const auto& al = s.alerts;
  const double scan_u = r.uniform();
  std::vector<Event::Kind> kinds;
  std::set<NodeId> newly;
  for (NodeId id : {1, 3}) {
    const double p = compromise_probability(s.attacker.strength, s.topology.node(id), 0.3, false);
    const bool ok = r.uniform() < p;
    if (ok) newly.insert(id);
    (void)r.uniform();  // alert draw
  }
  std::vector<NodeId> false_alerts;
  for (const auto& n : s.topology.nodes)
    if (r.uniform() < al.p_false_alert) false_alerts.push_back(n.id);

  EXPECT_EQ(scan_u < al.scan_fpr, out.events.front().flag);
  for (NodeId id : {1, 3}) EXPECT_EQ(next.compromised.count(id) > 0, newly.count(id) > 0);
  std::vector<NodeId> got_false;
  for (const auto& x : next.last_alerts)
    if (x.kind == AlertKind::FalsePositive) got_false.push_back(x.node);
  EXPECT_EQ(got_false, false_alerts);
  EXPECT_EQ(next.rng, r);
}

TEST(Step, TargetLossReplacesReward) {
  Scenario s = certain_chain();
  s.topology.edges.insert(make_edge(0, 2));
  const Game g(s);
  AttackerAction a;
  a.attempts = {2};
  auto [next, out] = g.step(g.init(0), DefenderAction::patch(1), a);
  EXPECT_EQ(next.terminal, TerminalCause::TargetCompromised);
  EXPECT_EQ(out.reward, -100.0);
}

TEST(Step, HorizonTerminates) {
  Scenario s = two_node();
  s.horizon = 1;
  const Game g(s);
  auto [next, out] = g.step(g.init(0), DefenderAction::nop(), {});
  EXPECT_EQ(next.terminal, TerminalCause::HorizonReached);
  EXPECT_EQ(out.terminal_cause, TerminalCause::HorizonReached);
}

TEST(RunEpisode, PassingAttackerHorizonFive) {
  NopDefender nop;
  PassingAttacker pass;
  const EpisodeLog log = run_episode(two_node(), nop, pass, 0, 5);
  EXPECT_EQ(log.steps.size(), 5u);
  EXPECT_EQ(log.total_reward(), 5.0);
  EXPECT_EQ(log.cause, TerminalCause::HorizonReached);
  EXPECT_EQ(log.final_t, 5);
}

TEST(RunEpisode, SameSeedSameBytes) {
  RandomDefender d1, d2;
  LateralAttacker a1, a2;
  const std::string x = serialize_log(run_episode(star(), d1, a1, 42));
  const std::string y = serialize_log(run_episode(star(), d2, a2, 42));
  EXPECT_EQ(x, y);
  RandomDefender d3;
  LateralAttacker a3;
  EXPECT_NE(x, serialize_log(run_episode(star(), d3, a3, 43)));
}

TEST(EpisodeLog, ParseSerializeRoundTripAndReplay) {
  std::mt19937_64 gen(3);
  for (int k = 0; k < 40; ++k) {
    const Scenario s = oracle::random_scenario(gen);
    RandomDefender d;
    LateralAttacker a;
    const std::string text = serialize_log(run_episode(s, d, a, gen()));
    const EpisodeLog back = parse_log(text);
    EXPECT_EQ(serialize_log(back), text);
    EXPECT_EQ(replay_log(back), text);
    EXPECT_NO_THROW(verify_replay(text));
  }
}

TEST(EpisodeLog, FormatHeaderStepsFinal) {
  RandomDefender d;
  LateralAttacker a;
  const std::string text = serialize_log(run_episode(star(), d, a, 5));
  std::istringstream in(text);
  std::string line;
  std::vector<Json> lines;
  while (std::getline(in, line)) lines.push_back(Json::parse(line));
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines.front().at("version"), kVersion);
  EXPECT_EQ(lines.front().at("seed"), 5);
  EXPECT_EQ(lines.front().at("scenario_sha256").get<std::string>().size(), 64u);
  for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
    for (const char* k : {"t", "def", "atk", "events", "reward"}) EXPECT_TRUE(lines[i].contains(k)) << k;
    EXPECT_EQ(lines[i].at("t"), static_cast<int>(i - 1));
  }
  EXPECT_TRUE(lines.back().contains("final"));
}

TEST(Replay, DetectsTampering) {
  RandomDefender d;
  LateralAttacker a;
  const std::string text = serialize_log(run_episode(star(), d, a, 5));
  std::string bad = text;
  const auto pos = bad.find("\"reward\":1");
  ASSERT_NE(pos, std::string::npos);
  bad.insert(pos + 9, "1");
  EXPECT_THROW(verify_replay(bad), ReplayMismatch);

  std::string seed = text;
  seed.replace(seed.find("\"seed\":5"), 8, "\"seed\":6");
  EXPECT_THROW(verify_replay(seed), ReplayMismatch);

  std::string digest = text;
  digest[digest.find("scenario_sha256") + 18] ^= 1;
  EXPECT_THROW(verify_replay(digest), Error);
}

TEST(Replay, MalformedLogIsParseError) {
  EXPECT_THROW(parse_log("not json\n"), ParseError);
  EXPECT_THROW(parse_log(""), ParseError);
}

TEST(Views, DefenderViewHidesCompromise) {
  RandomDefender d;
  LateralAttacker a;
  const Game g(star());
  GameState st = g.init(1);
  Rng dr(1), ar(2);
  while (!st.terminal) {
    const DefenderView v = g.defender_view(st);
    const Json j = Json::parse(to_json(v).dump());
    EXPECT_FALSE(json_has_key(j, "compromised"));
    EXPECT_FALSE(json_has_key(j, "kind"));
    st = g.step(st, d.act(v, dr), a.act(g.attacker_view(st), 2, ar)).first;
  }
}

TEST(Views, AttackerViewHasNoUnknownEdges) {
  const Game g(star());
  const AttackerView v = g.attacker_view(g.init(0));
  const Json j = Json::parse(to_json(v).dump());
  EXPECT_FALSE(json_has_key(j, "defence"));
  for (const auto& [id, nbs] : v.known_nodes)
    for (NodeId nb : nbs) EXPECT_TRUE(v.known_nodes.count(nb));
  EXPECT_FALSE(v.known_nodes.count(5));
}
