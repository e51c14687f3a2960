#pragma once

// Independent oracles and fuzz generators shared by the unit and acceptance
// suites. Nothing here calls the library's inference or game code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "acdsim/causal.hpp"
#include "acdsim/agents.hpp"
#include "acdsim/netmodel.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Brute-force joint: enumerates every full assignment of the variable list
// by bit pattern and multiplies CPT entries looked up by hand.

class BruteJoint {
 public:
  explicit BruteJoint(std::vector<acdsim::VariableSpec> vars) : vars_(std::move(vars)) {
    for (std::size_t i = 0; i < vars_.size(); ++i) pos_[vars_[i].id] = static_cast<int>(i);
    const std::size_t n = vars_.size();
    joint_.assign(std::size_t{1} << n, 0.0);
    for (std::size_t bits = 0; bits < joint_.size(); ++bits) {
      double p = 1.0;
      for (std::size_t i = 0; i < n && p > 0.0; ++i) {
        const auto& v = vars_[i];
        std::size_t row = 0;
        for (const auto& parent : v.parents) row = (row << 1) | ((bits >> pos_.at(parent)) & 1u);
        const double p1 = v.cpt[row];
        p *= ((bits >> i) & 1u) ? p1 : 1.0 - p1;
      }
      joint_[bits] = p;
    }
  }

  double prob(const acdsim::Assignment& q) const {
    double s = 0.0;
    for (std::size_t bits = 0; bits < joint_.size(); ++bits)
      if (matches(bits, q)) s += joint_[bits];
    return s;
  }

  double conditional(const acdsim::Assignment& target, const acdsim::Assignment& given) const {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t bits = 0; bits < joint_.size(); ++bits) {
      if (!matches(bits, given)) continue;
      den += joint_[bits];
      if (matches(bits, target)) num += joint_[bits];
    }
    return num / den;
  }

  double total() const {
    double s = 0.0;
    for (double p : joint_) s += p;
    return s;
  }

 private:
  bool matches(std::size_t bits, const acdsim::Assignment& q) const {
    for (const auto& [id, v] : q)
      if (static_cast<int>((bits >> pos_.at(id)) & 1u) != v) return false;
    return true;
  }

  std::vector<acdsim::VariableSpec> vars_;
  std::map<acdsim::VarId, int> pos_;
  std::vector<double> joint_;
};

/// Truncated factorisation by hand: forced variables lose their parents.
inline std::vector<acdsim::VariableSpec> mutilate(std::vector<acdsim::VariableSpec> vars,
                                                  const acdsim::Assignment& forced) {
  for (auto& v : vars) {
    auto it = forced.find(v.id);
    if (it == forced.end()) continue;
    v.parents.clear();
    v.cpt = {static_cast<double>(it->second)};
  }
  return vars;
}

// ---------------------------------------------------------------------------
// Random models

inline std::vector<acdsim::VariableSpec> random_dag(std::mt19937_64& gen, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<acdsim::VariableSpec> vars;
  for (int i = 0; i < n; ++i) {
    acdsim::VariableSpec v;
    v.id = acdsim::VarId("V" + std::to_string(i));
    for (int j = 0; j < i; ++j)
      if (u(gen) < 0.4 && v.parents.size() < 3) v.parents.push_back(vars[j].id);
    v.cpt.resize(std::size_t{1} << v.parents.size());
    for (double& p : v.cpt) p = u(gen);
    vars.push_back(std::move(v));
  }
  std::shuffle(vars.begin(), vars.end(), gen);  // declaration order must not matter
  return vars;
}

inline acdsim::DbnSpec random_dbn(std::mt19937_64& gen, acdsim::Topology topo, int T) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  acdsim::DbnSpec s = acdsim::DbnSpec::defaults(topo, T);
  for (auto& [name, cpt] : s.cpts)
    for (double& p : cpt) p = u(gen);
  s.persist_stay = u(gen);
  s.persist_spont = u(gen);
  if (topo == acdsim::Topology::ConfoundedC) {
    s.schedule.resize(T);
    for (int t = 0; t < T; ++t) s.schedule[t] = u(gen) < 0.5;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Value iteration for a small episodic MDP. done = true ends the episode
// with no continuation value.

struct MdpEdge {
  int next = 0;
  double reward = 0.0;
  bool done = false;
};

struct Mdp {
  std::vector<std::vector<MdpEdge>> table;  // [state][action]
  double gamma = 0.9;
};

inline std::vector<std::vector<double>> value_iteration(const Mdp& m, double tol = 1e-13) {
  const std::size_t S = m.table.size();
  const std::size_t A = m.table[0].size();
  std::vector<double> V(S, 0.0);
  std::vector<std::vector<double>> Q(S, std::vector<double>(A, 0.0));
  for (int iter = 0; iter < 100000; ++iter) {
    double delta = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < A; ++a) {
        const auto& e = m.table[s][a];
        Q[s][a] = e.reward + (e.done ? 0.0 : m.gamma * V[e.next]);
      }
      const double v = *std::max_element(Q[s].begin(), Q[s].end());
      delta = std::max(delta, std::abs(v - V[s]));
      V[s] = v;
    }
    if (delta < tol) break;
  }
  return Q;
}

/// Four states, two actions, deterministic transitions, distinct optimal actions.
inline Mdp four_state_mdp() {
  Mdp m;
  m.gamma = 0.9;
  m.table = {
      {{1, 0.0, false}, {2, 1.0, false}},   // s0
      {{3, 0.0, false}, {0, 2.0, true}},    // s1
      {{3, 0.0, false}, {0, 0.0, false}},   // s2
      {{0, 10.0, true}, {0, 1.0, false}},   // s3
  };
  return m;
}

/// The MDP as a tabular environment; each episode starts in a seeded uniform state.
class MdpEnv {
 public:
  explicit MdpEnv(Mdp m) : m_(std::move(m)) {}
  int num_states() const { return static_cast<int>(m_.table.size()); }
  int num_actions() const { return static_cast<int>(m_.table[0].size()); }
  int reset(std::uint64_t seed) {
    std::mt19937_64 g(seed);
    s_ = static_cast<int>(g() % m_.table.size());
    return s_;
  }
  acdsim::Transition step(int a) {
    const auto& e = m_.table[s_][a];
    s_ = e.next;
    return {e.next, e.reward, e.done};
  }

 private:
  Mdp m_;
  int s_ = 0;
};

// ---------------------------------------------------------------------------
// Statistics

struct MeanCi {
  double mean = 0.0;
  double half = 0.0;  // 95% normal half-width
  double lo() const { return mean - half; }
  double hi() const { return mean + half; }
};

inline MeanCi mean_ci(const std::vector<double>& xs) {
  MeanCi r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  r.half = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  return r;
}

/// Probability that a random positive outscores a random negative; ties count half.
inline double roc_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  double wins = 0.0;
  for (double p : positives)
    for (double n : negatives) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

// ---------------------------------------------------------------------------
// Graph oracle and scenario fuzzing

/// Hop distance by exhaustive relaxation (Bellman-Ford style), independent of BFS.
inline std::map<std::pair<int, int>, int> all_pairs_hops(const acdsim::NetworkTopology& t) {
  const int inf = 1 << 20;
  std::map<std::pair<int, int>, int> d;
  for (const auto& a : t.nodes)
    for (const auto& b : t.nodes) d[{a.id, b.id}] = a.id == b.id ? 0 : inf;
  for (const auto& [a, b] : t.edges) d[{a, b}] = d[{b, a}] = 1;
  for (const auto& k : t.nodes)
    for (const auto& i : t.nodes)
      for (const auto& j : t.nodes)
        d[{i.id, j.id}] = std::min(d[{i.id, j.id}], d[{i.id, k.id}] + d[{k.id, j.id}]);
  return d;
}

struct FuzzOptions {
  int min_nodes = 2;
  int max_nodes = 9;
  bool certain_success = false;  // strength 1, severity 1, defence 0, no credentials
  int horizon = 60;
};

inline acdsim::Scenario random_scenario(std::mt19937_64& gen, const FuzzOptions& o = {}) {
  using namespace acdsim;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = o.min_nodes + static_cast<int>(gen() % static_cast<std::uint64_t>(o.max_nodes - o.min_nodes + 1));
  Scenario s;
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i * 3 + static_cast<int>(gen() % 3);  // sparse, non-contiguous ids
  std::shuffle(ids.begin(), ids.end(), gen);
  const std::vector<std::string> creds{"c0", "c1", "c2", "c3"};
  for (int i = 0; i < n; ++i) {
    NodeSpec node;
    node.id = ids[i];
    if (o.certain_success) {
      node.defence = 0.0;
      node.vulns = {{"v", 1.0}};
    } else {
      node.defence = u(gen) * 0.8;
      const int nv = static_cast<int>(gen() % 3);
      for (int k = 0; k < nv; ++k) node.vulns.push_back({"v" + std::to_string(k), u(gen)});
      for (const auto& c : creds) {
        if (u(gen) < 0.15) node.creds_stored.insert(c);
        if (u(gen) < 0.15) node.unlocks.insert(c);
      }
    }
    s.topology.nodes.push_back(node);
  }
  // random spanning tree then extra edges
  for (int i = 1; i < n; ++i) s.topology.edges.insert(make_edge(ids[i], ids[gen() % static_cast<std::uint64_t>(i)]));
  for (int k = 0; k < n / 2; ++k) {
    const int a = ids[gen() % n];
    const int b = ids[gen() % n];
    if (a != b) s.topology.edges.insert(make_edge(a, b));
  }
  const int target_pos = static_cast<int>(gen() % n);
  s.topology.nodes[target_pos].is_target = true;
  const int target = s.topology.nodes[target_pos].id;
  for (const auto& node : s.topology.nodes)
    if (node.id != target && (s.attacker.entry.empty() || u(gen) < 0.2)) s.attacker.entry.insert(node.id);
  s.attacker.strength = o.certain_success ? 1.0 : 0.3 + 0.7 * u(gen);
  s.attacker.spread = o.certain_success ? n : 1 + static_cast<int>(gen() % 3);
  s.alerts.p_alert_fail = u(gen);
  s.alerts.p_alert_success = u(gen);
  s.alerts.p_false_alert = 0.2 * u(gen);
  s.horizon = o.horizon;
  return s;
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("acdsim-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return ACDSIM_SOURCE_DIR; }

}  // namespace oracle
