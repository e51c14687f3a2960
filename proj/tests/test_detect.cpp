#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "acdsim/agents.hpp"
#include "acdsim/detect.hpp"
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

Scenario certain_chain() {
  Scenario s;
  for (int i = 0; i < 3; ++i) s.topology.nodes.push_back({i, 0.0, {{"v", 1.0}}, {}, {}, i == 2});
  s.topology.edges = {make_edge(0, 1), make_edge(1, 2)};
  s.attacker = {1.0, 1, {0}};
  return s;
}

IndicatorSequence constant(int T, std::array<int, 3> bits) {
  IndicatorSequence s;
  for (int t = 0; t < T; ++t) s.frames.push_back({t, bits});
  return s;
}

IndicatorSequence from_bits(int T, std::uint64_t code) {
  IndicatorSequence s;
  for (int t = 0; t < T; ++t) {
    IndicatorFrame f;
    f.t = t;
    for (int j = 0; j < 3; ++j) f.bits[j] = static_cast<int>((code >> (3 * t + j)) & 1u);
    s.frames.push_back(f);
  }
  return s;
}

/// log p(seq) by brute force over the tactic model with hand-built noisy
/// indicator children; tactics the model lacks contribute pure false-positive noise.
double oracle_loglik(const Cgm& m, const IndicatorSequence& seq, EmissionNoise noise) {
  auto vars = m.specs();
  Assignment ev;
  double absent = 1.0;
  const char* names[3] = {"Z", "X", "Y"};
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    for (int j = 0; j < 3; ++j) {
      const VarId v(names[j], static_cast<int>(t));
      const int bit = seq.frames[t].bits[j];
      if (!m.contains(v)) {
        absent *= bit ? noise.false_pos : 1.0 - noise.false_pos;
        continue;
      }
      const VarId obs("obs_" + std::string(names[j]), static_cast<int>(t));
      vars.push_back({obs, false, {v}, {noise.false_pos, 1.0 - noise.miss}});
      ev[obs] = bit;
    }
  }
  return std::log(oracle::BruteJoint(vars).prob(ev) * absent);
}

}  // namespace

TEST(ExtractIndicators, PassingAttackerBeaconsOnly) {
  NopDefender nop;
  PassingAttacker pass;
  const EpisodeLog log = run_episode(two_node(), nop, pass, 3, 12);
  const IndicatorSequence seq = extract_indicators(log, {0.0, 0.0}, 3);
  ASSERT_EQ(seq.size(), 12u);
  EXPECT_EQ(seq.source_digest, log.scenario_sha256);
  for (const auto& f : seq.frames) {
    EXPECT_EQ(f.bits[0], f.t % 5 == 0 ? 1 : 0) << "t=" << f.t;
    EXPECT_EQ(f.bits[1], 0);
    EXPECT_EQ(f.bits[2], 0);
  }
}

TEST(ExtractIndicators, AttemptSetsLateralMovement) {
  NopDefender nop;
  LateralAttacker lateral;
  const EpisodeLog log = run_episode(certain_chain(), nop, lateral, 1);
  const IndicatorSequence seq = extract_indicators(log, {0.0, 0.0}, 1);
  ASSERT_FALSE(seq.frames.empty());
  EXPECT_EQ(seq.frames[0].bits[1], 1);
}

TEST(ExtractIndicators, LootSetsCollection) {
  StepRecord r;
  r.t = 3;
  r.outcome.events = {Event::of(Event::Kind::Loot, 1)};
  EXPECT_EQ(ground_truth_frame(r).bits, (std::array<int, 3>{0, 0, 1}));
}

TEST(ExtractIndicators, TotalMissSilencesEverything) {
  NopDefender nop;
  LateralAttacker lateral;
  const EpisodeLog log = run_episode(certain_chain(), nop, lateral, 1);
  for (const auto& f : extract_indicators(log, {1.0, 0.0}, 9).frames) EXPECT_EQ(f.bits, (std::array<int, 3>{}));
}

TEST(ExtractIndicators, SameSeedSameNoise) {
  NopDefender nop;
  PassingAttacker pass;
  const EpisodeLog log = run_episode(two_node(), nop, pass, 0, 40);
  const auto a = extract_indicators(log, {0.3, 0.3}, 5);
  const auto b = extract_indicators(log, {0.3, 0.3}, 5);
  EXPECT_EQ(a.frames, b.frames);
}

TEST(SequenceLoglik, BenignAllZero) {
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ChainA, 2));
  EXPECT_NEAR(sequence_loglik(benign, constant(2, {0, 0, 0}), {}), 6.0 * std::log(0.95), 1e-12);
}

TEST(SequenceLoglik, MatchesBruteForceOracle) {
  std::mt19937_64 gen(8);
  for (auto topo : {Topology::ChainA, Topology::ForkB, Topology::ConfoundedC}) {
    for (int k = 0; k < 10; ++k) {
      const int T = 1 + static_cast<int>(gen() % 2);
      const Cgm m = build_topology(oracle::random_dbn(gen, topo, T));
      const IndicatorSequence seq = from_bits(T, gen());
      const EmissionNoise noise{0.3, 0.1};
      EXPECT_NEAR(sequence_loglik(m, seq, noise), oracle_loglik(m, seq, noise), 1e-10);
    }
  }
}

TEST(SequenceLoglik, LengthMismatch) {
  const Cgm m = build_topology(DbnSpec::defaults(Topology::ChainA, 3));
  EXPECT_THROW(sequence_loglik(m, constant(2, {0, 0, 0}), {}), SpecError);
}

TEST(SequenceLoglik, DegenerateEmissionsGiveMinusInfinity) {
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ChainA, 2));
  const double ll = sequence_loglik(benign, constant(2, {0, 1, 0}), {0.0, 0.0});
  EXPECT_TRUE(std::isinf(ll) && ll < 0);
}

TEST(SequenceLoglik, NormalizesOverAllSequences) {
  for (auto topo : {Topology::ChainA, Topology::ForkB, Topology::ConfoundedC}) {
    for (int T = 1; T <= 3; ++T) {
      const Cgm m = build_topology(DbnSpec::defaults(topo, T));
      double total = 0.0;
      for (std::uint64_t code = 0; code < (std::uint64_t{1} << (3 * T)); ++code)
        total += std::exp(sequence_loglik(m, from_bits(T, code), {}));
      EXPECT_NEAR(total, 1.0, 1e-9) << to_string(topo) << " T=" << T;
    }
  }
}

TEST(Classify, Examples) {
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ChainA, 4));
  const Cgm malign = build_topology(DbnSpec::defaults(Topology::ChainA, 4));
  EXPECT_EQ(classify(constant(4, {0, 0, 0}), benign, malign, {}).label, Label::Benign);
  EXPECT_EQ(classify(constant(4, {0, 1, 1}), benign, malign, {}).label, Label::Malign);
  const auto same = classify(constant(4, {1, 1, 1}), malign, malign, {});
  EXPECT_EQ(same.llr, 0.0);
  EXPECT_EQ(same.label, Label::Benign);
}

TEST(Classify, DegenerateBenignGivesInfiniteRatio) {
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ChainA, 2));
  const Cgm malign = build_topology(DbnSpec::defaults(Topology::ChainA, 2));
  const auto r = classify(constant(2, {1, 1, 1}), benign, malign, {0.0, 0.0});
  EXPECT_EQ(r.label, Label::Malign);
  EXPECT_TRUE(std::isinf(r.llr) && r.llr > 0);
  EXPECT_THROW(classify(constant(2, {1, 1, 1}), benign, benign, {0.0, 0.0}), ZeroEvidence);
}

TEST(Classify, LlrIsAntisymmetric) {
  std::mt19937_64 gen(9);
  for (int k = 0; k < 30; ++k) {
    const auto topo = static_cast<Topology>(gen() % 3);
    const int T = 1 + static_cast<int>(gen() % 6);
    const Cgm a = build_topology(oracle::random_dbn(gen, topo, T));
    const Cgm b = build_topology(oracle::random_dbn(gen, topo, T));
    const IndicatorSequence seq = from_bits(T, gen());
    EXPECT_NEAR(classify(seq, a, b, {}).llr, -classify(seq, b, a, {}).llr, 1e-9);
  }
}

TEST(Classify, PosteriorTraceIsProper) {
  std::mt19937_64 gen(10);
  for (auto topo : {Topology::ChainA, Topology::ForkB, Topology::ConfoundedC}) {
    const int T = 8;
    const Cgm benign = build_topology(DbnSpec::benign(topo, T));
    const Cgm malign = build_topology(DbnSpec::defaults(topo, T));
    const auto r = classify(from_bits(T, gen()), benign, malign, {});
    ASSERT_EQ(r.posterior_trace.size(), static_cast<std::size_t>(T));
    for (const auto& p : r.posterior_trace) {
      EXPECT_EQ(p.p[0].has_value(), topo != Topology::ConfoundedC);
      for (const auto& v : p.p)
        if (v) {
          EXPECT_GE(*v, 0.0);
          EXPECT_LE(*v, 1.0);
        }
    }
  }
}

TEST(Classify, JsonForm) {
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ChainA, 2));
  const Cgm malign = build_topology(DbnSpec::defaults(Topology::ChainA, 2));
  const auto j = to_json(classify(constant(2, {0, 1, 1}), benign, malign, {}));
  EXPECT_EQ(j.at("version"), kVersion);
  EXPECT_EQ(j.at("label"), "Malign");
  EXPECT_EQ(j.at("posterior").size(), 2u);
  const auto inf = to_json(classify(constant(2, {1, 1, 1}), benign, malign, {0.0, 0.0}));
  EXPECT_EQ(inf.at("llr"), "Infinity");
}

TEST(SampleIndicators, HitRateExceedsFalseAlarmRate) {
  const int T = 8;
  const Cgm benign = build_topology(DbnSpec::benign(Topology::ForkB, T));
  const Cgm malign = build_topology(DbnSpec::defaults(Topology::ForkB, T));
  Rng rng(77);
  int hits = 0;
  int false_alarms = 0;
  for (int k = 0; k < 200; ++k) {
    hits += classify(sample_indicators(malign, {}, rng), benign, malign, {}).label == Label::Malign;
    false_alarms += classify(sample_indicators(benign, {}, rng), benign, malign, {}).label == Label::Malign;
  }
  EXPECT_GT(hits, 4 * false_alarms);
  EXPECT_GT(hits, 100);
}

TEST(SequenceCsv, RoundTrip) {
  const IndicatorSequence s = from_bits(5, 0x5a3c1ull);
  const IndicatorSequence back = sequence_from_csv(sequence_to_csv(s));
  EXPECT_EQ(back.frames, s.frames);
  EXPECT_EQ(sequence_to_csv(s).substr(0, 8), "t,Z,X,Y\n");
}

TEST(SequenceCsv, Errors) {
  EXPECT_THROW(sequence_from_csv(""), ParseError);
  EXPECT_THROW(sequence_from_csv("t,X,Y,Z\n0,0,0,0\n"), ParseError);
  EXPECT_THROW(sequence_from_csv("t,Z,X,Y\n0,0,2,0\n"), ParseError);
  EXPECT_THROW(sequence_from_csv("t,Z,X,Y\n1,0,0,0\n"), ParseError);
  EXPECT_THROW(sequence_from_csv("t,Z,X,Y\n0;0;0;0\n"), ParseError);
  EXPECT_TRUE(sequence_from_csv("t,Z,X,Y\n").frames.empty());
}
