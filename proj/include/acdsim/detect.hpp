#pragma once

// Tactic indicator sequences extracted from episode logs, and benign/malign
// classification by exact log-likelihood ratio.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acdsim/causal.hpp"
#include "acdsim/game.hpp"

namespace acdsim {

/// Tactic order inside a frame: command-and-control, lateral movement, collection.
inline constexpr std::array<const char*, 3> kTactics{"Z", "X", "Y"};

inline constexpr int kBeaconPeriod = 5;

struct IndicatorFrame {
  int t = 0;
  std::array<int, 3> bits{};  // Z, X, Y

  friend bool operator==(const IndicatorFrame&, const IndicatorFrame&) = default;
};

struct IndicatorSequence {
  std::vector<IndicatorFrame> frames;
  std::string source_digest;

  std::size_t size() const { return frames.size(); }
};

struct EmissionNoise {
  double miss = 0.2;
  double false_pos = 0.05;
};

/// Noise-free tactic bits of one step: Z beacons at t = 0 and every fifth
/// step while anything is compromised, X marks compromise attempts, Y marks
/// credential loot.
inline IndicatorFrame ground_truth_frame(const StepRecord& r) {
  IndicatorFrame f;
  f.t = r.t;
  f.bits[0] = (r.t % kBeaconPeriod == 0 && !r.compromised_before.empty()) ? 1 : 0;
  for (const auto& e : r.outcome.events) {
    if (e.kind == Event::Kind::Attempt) f.bits[1] = 1;
    if (e.kind == Event::Kind::Loot) f.bits[2] = 1;
  }
  return f;
}

/// Applies bit-flip noise frame by frame; three draws per frame in Z, X, Y order.
class IndicatorExtractor {
 public:
  IndicatorExtractor(EmissionNoise noise, std::uint64_t seed)
      : noise_(noise), rng_(Rng::stream(seed, "indicators")) {}

  IndicatorFrame next(const StepRecord& r) {
    IndicatorFrame f = ground_truth_frame(r);
    for (int& b : f.bits) {
      const double u = rng_.uniform();
      if (b == 1 && u < noise_.miss) b = 0;
      else if (b == 0 && u < noise_.false_pos) b = 1;
    }
    return f;
  }

 private:
  EmissionNoise noise_;
  Rng rng_;
};

inline IndicatorSequence extract_indicators(const EpisodeLog& log, EmissionNoise noise, std::uint64_t seed) {
  IndicatorSequence seq;
  seq.source_digest = log.scenario_sha256;
  IndicatorExtractor ex(noise, seed);
  for (const auto& r : log.steps) seq.frames.push_back(ex.next(r));
  return seq;
}

/// Evidence on the indicator variables of a model, frame k mapped to slice k.
inline Assignment indicator_evidence(const Cgm& tactic_model, const IndicatorSequence& seq) {
  Assignment e;
  for (std::size_t k = 0; k < seq.frames.size(); ++k) {
    for (std::size_t j = 0; j < kTactics.size(); ++j) {
      const VarId v(kTactics[j], static_cast<int>(k));
      if (tactic_model.contains(v)) e[indicator_of(v)] = seq.frames[k].bits[j];
    }
  }
  return e;
}

namespace detail {

inline int model_slices(const Cgm& m) { return m.max_slice() + 1; }

inline void check_length(const Cgm& m, const IndicatorSequence& seq) {
  if (model_slices(m) != static_cast<int>(seq.size()))
    throw SpecError("sequence length " + std::to_string(seq.size()) + " does not match the model's " +
                    std::to_string(model_slices(m)) + " slices");
}

}  // namespace detail

/// log p(seq | model). Tactics missing from the model are treated as
/// permanently inactive, so their bits are pure false-positive noise.
/// Returns -infinity when the sequence is impossible.
inline double sequence_loglik(const Cgm& tactic_model, const IndicatorSequence& seq, EmissionNoise noise) {
  detail::check_length(tactic_model, seq);
  const Cgm augmented = attach_emissions(tactic_model, noise.miss, noise.false_pos);
  const double p = marginal(augmented, indicator_evidence(tactic_model, seq), Method::ForwardBackward);
  double absent = 0.0;
  for (std::size_t k = 0; k < seq.frames.size(); ++k)
    for (std::size_t j = 0; j < kTactics.size(); ++j)
      if (!tactic_model.contains(VarId(kTactics[j], static_cast<int>(k))))
        absent += std::log(seq.frames[k].bits[j] ? noise.false_pos : 1.0 - noise.false_pos);
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(p) + absent;
}

enum class Label { Benign, Malign };

inline const char* to_string(Label l) { return l == Label::Malign ? "Malign" : "Benign"; }

struct TacticPosterior {
  int t = 0;
  std::array<std::optional<double>, 3> p;  // Z, X, Y; empty when the model lacks the tactic
};

/// Per-slice tactic posteriors of a tactic model given an indicator sequence.
inline std::vector<TacticPosterior> tactic_posteriors(const Cgm& tactic_model, const IndicatorSequence& seq,
                                                      EmissionNoise noise) {
  detail::check_length(tactic_model, seq);
  const Cgm augmented = attach_emissions(tactic_model, noise.miss, noise.false_pos);
  const auto post = smooth(augmented, indicator_evidence(tactic_model, seq));
  std::vector<TacticPosterior> out(seq.size());
  for (std::size_t k = 0; k < seq.size(); ++k) out[k].t = seq.frames[k].t;
  for (const auto& p : post) {
    if (!p.var.slice) continue;
    for (std::size_t j = 0; j < kTactics.size(); ++j)
      if (p.var.name == kTactics[j]) out[*p.var.slice].p[j] = p.p1;
  }
  return out;
}

struct DetectionResult {
  Label label = Label::Benign;
  double llr = 0.0;
  std::vector<TacticPosterior> posterior_trace;
};

inline DetectionResult classify(const IndicatorSequence& seq, const Cgm& benign, const Cgm& malign,
                                EmissionNoise noise, double threshold = 0.0) {
  const double lm = sequence_loglik(malign, seq, noise);
  const double lb = sequence_loglik(benign, seq, noise);
  if (std::isinf(lm) && std::isinf(lb)) throw ZeroEvidence("sequence is impossible under both models");
  DetectionResult r;
  r.llr = lm - lb;
  r.label = r.llr > threshold ? Label::Malign : Label::Benign;
  if (!std::isinf(lm)) r.posterior_trace = tactic_posteriors(malign, seq, noise);
  return r;
}

/// Draw one indicator sequence from a tactic model through the emission noise.
inline IndicatorSequence sample_indicators(const Cgm& tactic_model, EmissionNoise noise, Rng& rng) {
  const Cgm augmented = attach_emissions(tactic_model, noise.miss, noise.false_pos);
  const auto vals = sample_one(augmented, rng);
  IndicatorSequence seq;
  const int T = tactic_model.max_slice() + 1;
  for (int t = 0; t < T; ++t) {
    IndicatorFrame f;
    f.t = t;
    for (std::size_t j = 0; j < kTactics.size(); ++j) {
      const VarId v(kTactics[j], t);
      f.bits[j] = tactic_model.contains(v) ? vals[augmented.index_of(indicator_of(v))]
                                           : (rng.uniform() < noise.false_pos ? 1 : 0);
    }
    seq.frames.push_back(f);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// File forms

inline std::string sequence_to_csv(const IndicatorSequence& seq) {
  std::string out = "t,Z,X,Y\n";
  for (const auto& f : seq.frames)
    out += std::to_string(f.t) + "," + std::to_string(f.bits[0]) + "," + std::to_string(f.bits[1]) + "," +
           std::to_string(f.bits[2]) + "\n";
  return out;
}

inline IndicatorSequence sequence_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "t,Z,X,Y") throw ParseError("indicator CSV must start with \"t,Z,X,Y\"");
  IndicatorSequence seq;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IndicatorFrame f;
    char c1, c2, c3;
    std::istringstream row(line);
    if (!(row >> f.t >> c1 >> f.bits[0] >> c2 >> f.bits[1] >> c3 >> f.bits[2]) || c1 != ',' || c2 != ',' || c3 != ',')
      throw ParseError("malformed indicator row \"" + line + "\"");
    for (int b : f.bits)
      if (b != 0 && b != 1) throw ParseError("indicator bits must be 0 or 1");
    const int expected = static_cast<int>(seq.frames.size());
    if (f.t != expected) throw ParseError("indicator frames must be numbered 0, 1, 2, ...");
    seq.frames.push_back(f);
  }
  return seq;
}

inline OrderedJson to_json(const DetectionResult& r) {
  OrderedJson post = OrderedJson::array();
  for (const auto& p : r.posterior_trace) {
    OrderedJson row{{"t", p.t}};
    for (std::size_t j = 0; j < kTactics.size(); ++j)
      row[kTactics[j]] = p.p[j] ? OrderedJson(*p.p[j]) : OrderedJson(nullptr);
    post.push_back(row);
  }
  OrderedJson llr = std::isfinite(r.llr) ? OrderedJson(r.llr) : OrderedJson(r.llr > 0 ? "Infinity" : "-Infinity");
  return {{"version", kVersion}, {"label", to_string(r.label)}, {"llr", llr}, {"posterior", post}};
}

}  // namespace acdsim
