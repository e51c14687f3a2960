#pragma once

// Discrete causal graphical models over binary variables: exact queries,
// graph mutilation for interventions, the three tactic sub-graph topologies
// unrolled over time, ancestral sampling and smoothing.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "acdsim/error.hpp"
#include "acdsim/rng.hpp"

namespace acdsim {

struct VarId {
  std::string name;
  std::optional<int> slice;

  VarId() = default;
  VarId(std::string n) : name(std::move(n)) {}  // NOLINT: implicit for terse assignments
  VarId(const char* n) : name(n) {}             // NOLINT
  VarId(std::string n, int s) : name(std::move(n)), slice(s) {}

  /// "X" for slice-less variables, "X@3" for slice 3.
  std::string str() const { return slice ? name + "@" + std::to_string(*slice) : name; }

  static VarId parse(const std::string& s) {
    const auto at = s.find('@');
    if (at == std::string::npos) {
      if (s.empty()) throw SpecError("empty variable name");
      return VarId(s);
    }
    const std::string name = s.substr(0, at);
    const std::string slice = s.substr(at + 1);
    if (name.empty() || slice.empty() || !std::all_of(slice.begin(), slice.end(), ::isdigit))
      throw SpecError("malformed variable id \"" + s + "\"");
    return VarId(name, std::stoi(slice));
  }

  friend auto operator<=>(const VarId&, const VarId&) = default;
  friend bool operator==(const VarId&, const VarId&) = default;
};

using Assignment = std::map<VarId, int>;

/// Merge two assignments; nullopt when they disagree on a shared variable.
inline std::optional<Assignment> merge(const Assignment& a, const Assignment& b) {
  Assignment out = a;
  for (const auto& [k, v] : b) {
    auto [it, inserted] = out.emplace(k, v);
    if (!inserted && it->second != v) return std::nullopt;
  }
  return out;
}

struct VariableSpec {
  VarId id;
  bool latent = false;
  std::vector<VarId> parents;
  std::vector<double> cpt;  // p(var = 1 | parents); first parent is the most significant bit
};

class Cgm {
 public:
  struct Variable {
    VarId id;
    bool latent = false;
    std::vector<int> parents;
    std::vector<double> cpt;
  };

  Cgm() = default;

  explicit Cgm(const std::vector<VariableSpec>& specs) {
    for (const auto& s : specs) {
      if (!index_.emplace(s.id, static_cast<int>(vars_.size())).second)
        throw SpecError("duplicate variable " + s.id.str());
      vars_.push_back({s.id, s.latent, {}, s.cpt});
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto& v = vars_[i];
      for (const auto& p : specs[i].parents) {
        auto it = index_.find(p);
        if (it == index_.end()) throw SpecError("unknown parent " + p.str() + " of " + v.id.str());
        if (std::find(v.parents.begin(), v.parents.end(), it->second) != v.parents.end())
          throw SpecError("duplicate parent " + p.str() + " of " + v.id.str());
        v.parents.push_back(it->second);
      }
      if (v.parents.size() > 20) throw SpecError("too many parents for " + v.id.str());
      if (v.cpt.size() != (std::size_t{1} << v.parents.size()))
        throw SpecError("CPT of " + v.id.str() + " needs " + std::to_string(1u << v.parents.size()) + " rows");
      for (double p : v.cpt)
        if (!(p >= 0.0 && p <= 1.0)) throw SpecError("CPT entry of " + v.id.str() + " outside [0,1]");
    }
    compute_order();
  }

  std::size_t size() const { return vars_.size(); }
  const Variable& var(int i) const { return vars_.at(i); }
  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<int>& topological_order() const { return order_; }

  bool contains(const VarId& id) const { return index_.count(id) > 0; }

  int index_of(const VarId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw SpecError("unknown variable " + id.str());
    return it->second;
  }

  std::vector<VarId> parents_of(const VarId& id) const {
    std::vector<VarId> out;
    for (int p : vars_[index_of(id)].parents) out.push_back(vars_[p].id);
    return out;
  }

  /// All (parent, child) pairs.
  std::set<std::pair<VarId, VarId>> edges() const {
    std::set<std::pair<VarId, VarId>> out;
    for (const auto& v : vars_)
      for (int p : v.parents) out.emplace(vars_[p].id, v.id);
    return out;
  }

  /// p(var i = 1 | parent values read from `values`).
  double p_one(int i, const std::vector<std::int8_t>& values) const {
    const auto& v = vars_[i];
    std::size_t row = 0;
    for (int p : v.parents) row = (row << 1) | static_cast<std::size_t>(values[p]);
    return v.cpt[row];
  }

  double p_value(int i, int value, const std::vector<std::int8_t>& values) const {
    const double p = p_one(i, values);
    return value ? p : 1.0 - p;
  }

  std::vector<VariableSpec> specs() const {
    std::vector<VariableSpec> out;
    for (const auto& v : vars_) {
      VariableSpec s{v.id, v.latent, {}, v.cpt};
      for (int p : v.parents) s.parents.push_back(vars_[p].id);
      out.push_back(std::move(s));
    }
    return out;
  }

  /// Largest slice index present, or -1 for a model without slices.
  int max_slice() const {
    int m = -1;
    for (const auto& v : vars_)
      if (v.id.slice) m = std::max(m, *v.id.slice);
    return m;
  }

 private:
  void compute_order() {
    std::vector<int> indeg(vars_.size(), 0);
    std::vector<std::vector<int>> children(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      indeg[i] = static_cast<int>(vars_[i].parents.size());
      for (int p : vars_[i].parents) children[p].push_back(static_cast<int>(i));
    }
    std::set<int> ready;
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (indeg[i] == 0) ready.insert(static_cast<int>(i));
    while (!ready.empty()) {
      const int i = *ready.begin();
      ready.erase(ready.begin());
      order_.push_back(i);
      for (int c : children[i])
        if (--indeg[c] == 0) ready.insert(c);
    }
    if (order_.size() != vars_.size()) throw SpecError("parent relation contains a cycle");
  }

  std::vector<Variable> vars_;
  std::map<VarId, int> index_;
  std::vector<int> order_;
};

inline constexpr int kMaxFreeVariables = 20;

enum class Method {
  Enumeration,      // literal sum over completions, at most 20 free variables
  ForwardBackward,  // exact recursion over time slices, for unrolled models
};

namespace detail {

inline std::vector<std::int8_t> fixed_values(const Cgm& m, const Assignment& q) {
  std::vector<std::int8_t> vals(m.size(), -1);
  for (const auto& [id, v] : q) {
    if (v != 0 && v != 1) throw SpecError("variable " + id.str() + " assigned a non-binary value");
    vals[m.index_of(id)] = static_cast<std::int8_t>(v);
  }
  return vals;
}

inline double enumerate_from(const Cgm& m, std::size_t pos, std::vector<std::int8_t>& vals,
                             const std::vector<bool>& fixed) {
  const auto& order = m.topological_order();
  if (pos == order.size()) return 1.0;
  const int i = order[pos];
  if (fixed[i]) {
    const double f = m.p_value(i, vals[i], vals);
    return f == 0.0 ? 0.0 : f * enumerate_from(m, pos + 1, vals, fixed);
  }
  double total = 0.0;
  for (std::int8_t v : {std::int8_t{0}, std::int8_t{1}}) {
    vals[i] = v;
    const double f = m.p_value(i, v, vals);
    if (f != 0.0) total += f * enumerate_from(m, pos + 1, vals, fixed);
  }
  vals[i] = -1;
  return total;
}

inline double enumerate_marginal(const Cgm& m, const Assignment& q) {
  auto vals = fixed_values(m, q);
  std::vector<bool> fixed(m.size());
  int free = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    fixed[i] = vals[i] >= 0;
    if (!fixed[i]) ++free;
  }
  if (free > kMaxFreeVariables)
    throw TooLarge(std::to_string(free) + " unassigned variables exceed the enumeration limit of " +
                   std::to_string(kMaxFreeVariables));
  return enumerate_from(m, 0, vals, fixed);
}

/// Exact recursion over time slices. Slice-less variables are treated as
/// global and enumerated outright; every sliced variable may only depend on
/// globals and on variables in its own or the previous slice.
class SliceRecursion {
 public:
  struct Result {
    double evidence = 0.0;           // p(q)
    std::vector<double> posterior;   // p(var = 1 | q) per variable index; fixed vars hold their value
  };

  SliceRecursion(const Cgm& m, const Assignment& q) : m_(m), base_(fixed_values(m, q)) {
    const int T = m.max_slice() + 1;
    slices_.resize(std::max(T, 0));
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto& v = m.var(static_cast<int>(i));
      if (!v.id.slice) {
        for (int p : v.parents)
          if (m.var(p).id.slice) throw SpecError("slice-less " + v.id.str() + " has a sliced parent");
        if (base_[i] < 0) globals_.push_back(static_cast<int>(i));
        else fixed_globals_.push_back(static_cast<int>(i));
        continue;
      }
      const int t = *v.id.slice;
      for (int p : v.parents) {
        const auto& ps = m.var(p).id.slice;
        if (ps && (*ps > t || *ps < t - 1))
          throw SpecError("parent " + m.var(p).id.str() + " of " + v.id.str() + " spans more than one slice");
      }
      slices_[t].members.push_back(static_cast<int>(i));
      if (base_[i] < 0) slices_[t].free.push_back(static_cast<int>(i));
    }
    if (globals_.size() > kMaxFreeVariables) throw TooLarge("too many unassigned slice-less variables");
    for (std::size_t t = 0; t < slices_.size(); ++t) {
      const std::size_t prev = t == 0 ? 0 : slices_[t - 1].free.size();
      if (slices_[t].free.size() + prev > kMaxFreeVariables)
        throw TooLarge("slice " + std::to_string(t) + " has too many unassigned variables");
    }
    // members in topological order so in-slice parents are set first
    std::vector<int> rank(m.size());
    for (std::size_t k = 0; k < m.topological_order().size(); ++k) rank[m.topological_order()[k]] = static_cast<int>(k);
    for (auto& s : slices_)
      std::sort(s.members.begin(), s.members.end(), [&](int a, int b) { return rank[a] < rank[b]; });
  }

  Result run(bool want_posteriors) {
    Result res;
    res.posterior.assign(m_.size(), 0.0);
    const std::size_t G = globals_.size();
    for (std::uint64_t g = 0; g < (std::uint64_t{1} << G); ++g) {
      auto vals = base_;
      for (std::size_t k = 0; k < G; ++k) vals[globals_[k]] = static_cast<std::int8_t>((g >> k) & 1);
      double w = 1.0;
      for (int i : globals_) w *= m_.p_value(i, vals[i], vals);
      for (int i : fixed_globals_) w *= m_.p_value(i, vals[i], vals);
      if (w == 0.0) continue;
      const double z = w * chain(vals, want_posteriors, res.posterior, w);
      res.evidence += z;
      if (want_posteriors)
        for (int i : globals_)
          if (vals[i]) res.posterior[i] += z;
    }
    if (want_posteriors && res.evidence > 0.0) {
      for (std::size_t i = 0; i < m_.size(); ++i) {
        if (base_[i] >= 0) res.posterior[i] = base_[i];
        else res.posterior[i] /= res.evidence;
      }
    }
    return res;
  }

 private:
  struct Slice {
    std::vector<int> members;
    std::vector<int> free;
  };

  static void set_bits(std::vector<std::int8_t>& vals, const std::vector<int>& free, std::uint64_t s) {
    for (std::size_t k = 0; k < free.size(); ++k) vals[free[k]] = static_cast<std::int8_t>((s >> k) & 1);
  }

  double local(int t, std::vector<std::int8_t>& vals) const {
    double f = 1.0;
    for (int i : slices_[t].members) {
      f *= m_.p_value(i, vals[i], vals);
      if (f == 0.0) break;
    }
    return f;
  }

  // Returns the slice-chain likelihood under fixed globals; accumulates
  // weight * alpha * beta into `acc` for free sliced variables.
  double chain(std::vector<std::int8_t>& vals, bool want, std::vector<double>& acc, double weight) {
    const int T = static_cast<int>(slices_.size());
    if (T == 0) return 1.0;
    std::vector<std::vector<double>> alpha(T);
    for (int t = 0; t < T; ++t) {
      const auto& cur = slices_[t].free;
      alpha[t].assign(std::size_t{1} << cur.size(), 0.0);
      for (std::uint64_t s = 0; s < alpha[t].size(); ++s) {
        set_bits(vals, cur, s);
        if (t == 0) {
          alpha[t][s] = local(0, vals);
          continue;
        }
        const auto& prev = slices_[t - 1].free;
        double sum = 0.0;
        for (std::uint64_t r = 0; r < alpha[t - 1].size(); ++r) {
          if (alpha[t - 1][r] == 0.0) continue;
          set_bits(vals, prev, r);
          set_bits(vals, cur, s);
          sum += alpha[t - 1][r] * local(t, vals);
        }
        alpha[t][s] = sum;
      }
    }
    double z = 0.0;
    for (double a : alpha[T - 1]) z += a;
    if (!want || z == 0.0) return z;

    std::vector<double> beta(alpha[T - 1].size(), 1.0);
    for (int t = T - 1; t >= 0; --t) {
      const auto& cur = slices_[t].free;
      for (std::uint64_t s = 0; s < alpha[t].size(); ++s) {
        const double mass = weight * alpha[t][s] * beta[s];
        if (mass == 0.0) continue;
        for (std::size_t k = 0; k < cur.size(); ++k)
          if ((s >> k) & 1) acc[cur[k]] += mass;
      }
      if (t == 0) break;
      const auto& prev = slices_[t - 1].free;
      std::vector<double> next_beta(alpha[t - 1].size(), 0.0);
      for (std::uint64_t r = 0; r < next_beta.size(); ++r) {
        set_bits(vals, prev, r);
        double sum = 0.0;
        for (std::uint64_t s = 0; s < beta.size(); ++s) {
          if (beta[s] == 0.0) continue;
          set_bits(vals, cur, s);
          sum += local(t, vals) * beta[s];
        }
        next_beta[r] = sum;
      }
      beta = std::move(next_beta);
    }
    return z;
  }

  const Cgm& m_;
  std::vector<std::int8_t> base_;
  std::vector<int> globals_;
  std::vector<int> fixed_globals_;
  std::vector<Slice> slices_;
};

}  // namespace detail

/// p(q): sum over all completions of q of the product of CPTs.
inline double marginal(const Cgm& m, const Assignment& q, Method method = Method::Enumeration) {
  if (method == Method::Enumeration) return detail::enumerate_marginal(m, q);
  return detail::SliceRecursion(m, q).run(false).evidence;
}

/// p(target | given) as a ratio of two marginals.
inline double observational(const Cgm& m, const Assignment& target, const Assignment& given,
                            Method method = Method::Enumeration) {
  const double den = marginal(m, given, method);
  if (den <= 0.0) throw ZeroEvidence("conditioning event has probability zero");
  const auto joint = merge(target, given);
  if (!joint) return 0.0;
  return marginal(m, *joint, method) / den;
}

/// Graph mutilation: each forced variable loses its parents and becomes a
/// point mass on the forced value.
inline Cgm do_transform(const Cgm& m, const Assignment& forced) {
  auto specs = m.specs();
  for (const auto& [id, value] : forced) {
    const int i = m.index_of(id);
    if (specs[i].latent) throw LatentIntervention("cannot intervene on latent variable " + id.str());
    if (value != 0 && value != 1) throw SpecError("intervention value must be 0 or 1");
    specs[i].parents.clear();
    specs[i].cpt = {static_cast<double>(value)};
  }
  return Cgm(specs);
}

/// Evidence may only sit on slices strictly before the earliest intervened
/// slice; it is conditioned on in the mutilated model.
inline void check_evidence_ordering(const Assignment& forced, const Assignment& evidence) {
  if (evidence.empty() || forced.empty()) return;
  std::optional<int> earliest;
  for (const auto& [id, _] : forced) {
    if (!id.slice) throw EvidenceOrdering("evidence cannot precede an intervention on slice-less " + id.str());
    earliest = earliest ? std::min(*earliest, *id.slice) : *id.slice;
  }
  for (const auto& [id, _] : evidence) {
    if (!id.slice || *id.slice >= *earliest)
      throw EvidenceOrdering("evidence on " + id.str() + " is not strictly before slice " + std::to_string(*earliest));
  }
}

inline double interventional(const Cgm& m, const Assignment& target, const Assignment& forced,
                             const Assignment& evidence = {}, Method method = Method::Enumeration) {
  check_evidence_ordering(forced, evidence);
  const Cgm mutilated = do_transform(m, forced);
  const auto given = merge(evidence, forced);
  if (!given) throw ZeroEvidence("evidence contradicts the intervention");
  return observational(mutilated, target, *given, method);
}

struct Dataset {
  std::vector<VarId> variables;
  std::vector<bool> latent;
  std::vector<std::vector<std::int8_t>> rows;

  /// Empirical p(var = 1).
  double frequency(const VarId& id) const {
    const auto it = std::find(variables.begin(), variables.end(), id);
    if (it == variables.end()) throw SpecError("unknown variable " + id.str());
    const auto col = static_cast<std::size_t>(it - variables.begin());
    if (rows.empty()) return 0.0;
    std::size_t ones = 0;
    for (const auto& r : rows) ones += r[col] == 1;
    return static_cast<double>(ones) / static_cast<double>(rows.size());
  }
};

/// Ancestral sampling: one uniform draw per variable in topological order.
inline std::vector<std::int8_t> sample_one(const Cgm& m, Rng& rng) {
  std::vector<std::int8_t> vals(m.size(), 0);
  for (int i : m.topological_order()) vals[i] = rng.uniform() < m.p_one(i, vals) ? 1 : 0;
  return vals;
}

inline Dataset sample(const Cgm& m, std::size_t n, std::uint64_t seed) {
  Dataset d;
  for (const auto& v : m.variables()) {
    d.variables.push_back(v.id);
    d.latent.push_back(v.latent);
  }
  Rng rng(seed);
  d.rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) d.rows.push_back(sample_one(m, rng));
  return d;
}

struct Posterior {
  VarId var;
  double p1 = 0.0;
};

inline constexpr int kMaxSmoothingSlices = 16;

/// Exact posterior p(v = 1 | evidence) for every variable not in the evidence.
inline std::vector<Posterior> smooth(const Cgm& m, const Assignment& evidence) {
  if (m.max_slice() + 1 > kMaxSmoothingSlices)
    throw TooLarge("smoothing supports at most " + std::to_string(kMaxSmoothingSlices) + " slices");
  detail::SliceRecursion rec(m, evidence);
  const auto res = rec.run(true);
  if (res.evidence <= 0.0) throw ZeroEvidence("evidence has probability zero");
  std::vector<Posterior> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& v = m.var(static_cast<int>(i));
    if (evidence.count(v.id)) continue;
    out.push_back({v.id, std::clamp(res.posterior[i], 0.0, 1.0)});
  }
  return out;
}

inline std::vector<Posterior> smooth(const Cgm& m, const std::vector<Assignment>& per_slice) {
  Assignment flat;
  for (const auto& a : per_slice) flat.insert(a.begin(), a.end());
  return smooth(m, flat);
}

// ---------------------------------------------------------------------------
// Tactic topologies and their unrolling

enum class Topology { ChainA, ForkB, ConfoundedC };

inline const char* to_string(Topology t) {
  switch (t) {
    case Topology::ChainA: return "ChainA";
    case Topology::ForkB: return "ForkB";
    case Topology::ConfoundedC: return "ConfoundedC";
  }
  return "?";
}

inline Topology topology_from(const std::string& s) {
  if (s == "ChainA" || s == "chainA" || s == "a") return Topology::ChainA;
  if (s == "ForkB" || s == "forkB" || s == "b") return Topology::ForkB;
  if (s == "ConfoundedC" || s == "confoundedC" || s == "c") return Topology::ConfoundedC;
  throw SpecError("unknown topology \"" + s + "\"");
}

/// Tactic variable names per topology. Z: command-and-control, X: lateral
/// movement, Y: collection, U: latent confounder.
inline std::vector<std::string> tactic_names(Topology t) {
  if (t == Topology::ConfoundedC) return {"X", "Y"};
  return {"Z", "X", "Y"};
}

struct DbnSpec {
  Topology topology = Topology::ChainA;
  int T = 1;
  /// Within-slice CPTs keyed by variable. Parent order per topology:
  ///   ChainA:      Z[], X[Z], Y[X]
  ///   ForkB:       Z[], X[], Y[Z,X]
  ///   ConfoundedC: U[], X[U], Y[U,X] (scheduled slices), Y_noX[U] (other slices)
  std::map<std::string, std::vector<double>> cpts;
  double persist_stay = 0.95;
  double persist_spont = 0.02;
  std::vector<bool> schedule;  // ConfoundedC; empty selects alternating true/false from true
  bool confounder_per_slice = false;

  static DbnSpec defaults(Topology t, int T) {
    DbnSpec s;
    s.topology = t;
    s.T = T;
    switch (t) {
      case Topology::ChainA:
        s.cpts = {{"Z", {0.5}}, {"X", {0.1, 0.9}}, {"Y", {0.2, 0.8}}};
        break;
      case Topology::ForkB:
        s.cpts = {{"Z", {0.5}}, {"X", {0.5}}, {"Y", {0.05, 0.6, 0.6, 0.95}}};
        break;
      case Topology::ConfoundedC:
        s.cpts = {{"U", {0.5}}, {"X", {0.1, 0.9}}, {"Y", {0.1, 0.5, 0.6, 0.9}}, {"Y_noX", {0.1, 0.8}}};
        break;
    }
    return s;
  }

  /// Null hypothesis: every tactic variable is clamped inactive.
  static DbnSpec benign(Topology t, int T) {
    DbnSpec s = defaults(t, T);
    for (auto& [name, cpt] : s.cpts)
      if (name != "U") std::fill(cpt.begin(), cpt.end(), 0.0);
    s.persist_stay = 0.0;
    s.persist_spont = 0.0;
    return s;
  }

  std::vector<bool> effective_schedule() const {
    if (!schedule.empty()) return schedule;
    std::vector<bool> out(std::max(T, 0));
    for (int t = 0; t < T; ++t) out[t] = t % 2 == 0;
    return out;
  }
};

namespace detail {

inline const std::vector<double>& cpt_of(const DbnSpec& s, const std::string& name, std::size_t rows) {
  auto it = s.cpts.find(name);
  if (it == s.cpts.end()) throw SpecError("DBN spec lacks a CPT for " + name);
  if (it->second.size() != rows) throw SpecError("CPT for " + name + " needs " + std::to_string(rows) + " rows");
  for (double p : it->second)
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError("CPT entry for " + name + " outside [0,1]");
  return it->second;
}

// Slices after the first combine persistence and the within-slice mechanism
// as a noisy-OR. Variables without within-slice parents persist only.
inline VariableSpec unrolled(const DbnSpec& s, const std::string& name, int t, std::vector<VarId> within,
                             const std::vector<double>& cpt) {
  VariableSpec v{VarId(name, t), false, {}, {}};
  if (t == 0) {
    v.parents = std::move(within);
    v.cpt = cpt;
    return v;
  }
  v.parents.push_back(VarId(name, t - 1));
  const std::size_t k = within.size();
  for (auto& p : within) v.parents.push_back(std::move(p));
  v.cpt.resize(std::size_t{2} << k);
  for (std::size_t prev = 0; prev < 2; ++prev) {
    const double persist = prev ? s.persist_stay : s.persist_spont;
    for (std::size_t row = 0; row < (std::size_t{1} << k); ++row) {
      const double mech = k == 0 ? 0.0 : cpt[row];
      v.cpt[(prev << k) | row] = 1.0 - (1.0 - persist) * (1.0 - mech);
    }
  }
  return v;
}

}  // namespace detail

inline Cgm build_topology(const DbnSpec& s) {
  if (s.T < 1) throw SpecError("DBN needs at least one slice");
  if (!(s.persist_stay >= 0.0 && s.persist_stay <= 1.0) || !(s.persist_spont >= 0.0 && s.persist_spont <= 1.0))
    throw SpecError("persistence probabilities outside [0,1]");
  std::vector<VariableSpec> vars;
  switch (s.topology) {
    case Topology::ChainA: {
      const auto& z = detail::cpt_of(s, "Z", 1);
      const auto& x = detail::cpt_of(s, "X", 2);
      const auto& y = detail::cpt_of(s, "Y", 2);
      for (int t = 0; t < s.T; ++t) {
        vars.push_back(detail::unrolled(s, "Z", t, {}, z));
        vars.push_back(detail::unrolled(s, "X", t, {VarId("Z", t)}, x));
        vars.push_back(detail::unrolled(s, "Y", t, {VarId("X", t)}, y));
      }
      break;
    }
    case Topology::ForkB: {
      const auto& z = detail::cpt_of(s, "Z", 1);
      const auto& x = detail::cpt_of(s, "X", 1);
      const auto& y = detail::cpt_of(s, "Y", 4);
      for (int t = 0; t < s.T; ++t) {
        vars.push_back(detail::unrolled(s, "Z", t, {}, z));
        vars.push_back(detail::unrolled(s, "X", t, {}, x));
        vars.push_back(detail::unrolled(s, "Y", t, {VarId("Z", t), VarId("X", t)}, y));
      }
      break;
    }
    case Topology::ConfoundedC: {
      const auto& u = detail::cpt_of(s, "U", 1);
      const auto& x = detail::cpt_of(s, "X", 2);
      const auto& y = detail::cpt_of(s, "Y", 4);
      const auto& y_nox = detail::cpt_of(s, "Y_noX", 2);
      const auto schedule = s.effective_schedule();
      if (static_cast<int>(schedule.size()) != s.T) throw SpecError("schedule length must equal T");
      if (!s.confounder_per_slice) vars.push_back({VarId("U"), true, {}, u});
      for (int t = 0; t < s.T; ++t) {
        const VarId uid = s.confounder_per_slice ? VarId("U", t) : VarId("U");
        if (s.confounder_per_slice) vars.push_back({uid, true, {}, u});
        vars.push_back(detail::unrolled(s, "X", t, {uid}, x));
        if (schedule[t]) vars.push_back(detail::unrolled(s, "Y", t, {uid, VarId("X", t)}, y));
        else vars.push_back(detail::unrolled(s, "Y", t, {uid}, y_nox));
      }
      break;
    }
  }
  return Cgm(vars);
}

/// Adds one noisy indicator child "<name>_obs" per non-latent sliced
/// variable: p(obs = 1 | v = 0) = false_pos, p(obs = 1 | v = 1) = 1 - miss.
inline Cgm attach_emissions(const Cgm& m, double miss, double false_pos) {
  if (!(miss >= 0.0 && miss <= 1.0) || !(false_pos >= 0.0 && false_pos <= 1.0))
    throw SpecError("emission noise outside [0,1]");
  auto specs = m.specs();
  for (const auto& v : m.variables()) {
    if (v.latent || !v.id.slice) continue;
    specs.push_back({VarId(v.id.name + "_obs", *v.id.slice), false, {v.id}, {false_pos, 1.0 - miss}});
  }
  return Cgm(specs);
}

inline VarId indicator_of(const VarId& v) { return v.slice ? VarId(v.name + "_obs", *v.slice) : VarId(v.name + "_obs"); }

// ---------------------------------------------------------------------------
// JSON forms

inline nlohmann::ordered_json cgm_to_json(const Cgm& m) {
  nlohmann::ordered_json vars = nlohmann::ordered_json::array();
  nlohmann::ordered_json parents = nlohmann::ordered_json::object();
  nlohmann::ordered_json cpts = nlohmann::ordered_json::object();
  for (const auto& v : m.variables()) {
    nlohmann::ordered_json jv{{"name", v.id.name}};
    jv["slice"] = v.id.slice ? nlohmann::ordered_json(*v.id.slice) : nlohmann::ordered_json(nullptr);
    jv["latent"] = v.latent;
    vars.push_back(jv);
    std::vector<std::string> ps;
    for (int p : v.parents) ps.push_back(m.var(p).id.str());
    parents[v.id.str()] = ps;
    cpts[v.id.str()] = v.cpt;
  }
  return {{"variables", vars}, {"parents", parents}, {"cpts", cpts}};
}

inline Cgm cgm_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    std::vector<VariableSpec> specs;
    for (const auto& jv : j.at("variables")) {
      VariableSpec s;
      s.id.name = jv.at("name").get<std::string>();
      if (jv.contains("slice") && !jv.at("slice").is_null()) s.id.slice = jv.at("slice").get<int>();
      s.latent = jv.value("latent", false);
      const std::string key = s.id.str();
      if (j.contains("parents") && j.at("parents").contains(key))
        for (const auto& p : j.at("parents").at(key)) s.parents.push_back(VarId::parse(p.get<std::string>()));
      s.cpt = j.at("cpts").at(key).get<std::vector<double>>();
      specs.push_back(std::move(s));
    }
    return Cgm(specs);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model: ") + e.what());
  }
}

inline nlohmann::ordered_json dbn_spec_to_json(const DbnSpec& s) {
  return {{"topology", to_string(s.topology)},
          {"T", s.T},
          {"cpts", s.cpts},
          {"persistence", {{"stay", s.persist_stay}, {"spont", s.persist_spont}}},
          {"schedule", s.schedule},
          {"confounder_per_slice", s.confounder_per_slice}};
}

/// Missing fields take the topology defaults.
inline DbnSpec dbn_spec_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const Topology topo = topology_from(j.at("topology").get<std::string>());
    DbnSpec s = DbnSpec::defaults(topo, j.value("T", 1));
    if (j.contains("cpts"))
      for (const auto& [k, v] : j.at("cpts").items()) s.cpts[k] = v.get<std::vector<double>>();
    if (j.contains("persistence")) {
      s.persist_stay = j.at("persistence").value("stay", s.persist_stay);
      s.persist_spont = j.at("persistence").value("spont", s.persist_spont);
    }
    if (j.contains("schedule")) s.schedule = j.at("schedule").get<std::vector<bool>>();
    s.confounder_per_slice = j.value("confounder_per_slice", false);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed DBN spec: ") + e.what());
  }
}

/// Parses "X=1" or "X@2=0".
inline std::pair<VarId, int> parse_binding(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ParseError("binding \"" + text + "\" must look like NAME=0|1");
  const std::string value = text.substr(eq + 1);
  if (value != "0" && value != "1") throw ParseError("binding \"" + text + "\" must assign 0 or 1");
  return {VarId::parse(text.substr(0, eq)), value == "1" ? 1 : 0};
}

/// Comma-separated bindings, e.g. "X=1,Z@0=0".
inline Assignment parse_assignment(const std::string& text) {
  Assignment a;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) {
      auto [id, v] = parse_binding(part);
      if (!a.emplace(id, v).second && a[id] != v) throw ParseError("conflicting bindings for " + id.str());
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return a;
}

}  // namespace acdsim
