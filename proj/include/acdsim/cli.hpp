#pragma once

// Command-line front end. run_cli() is the whole program; tools/acdsim.cpp
// only forwards argv and the standard streams.
//
// Exit codes: 0 success, 2 configuration/parse error, 3 runtime error,
// 4 replay mismatch. Errors are reported as one JSON object on the error
// stream: {"error": kind, "message": text}.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "acdsim/acdloop.hpp"
#include "acdsim/agents.hpp"
#include "acdsim/causal.hpp"
#include "acdsim/detect.hpp"
#include "acdsim/game.hpp"
#include "acdsim/netmodel.hpp"

namespace acdsim::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3, kReplayMismatch = 4 };

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("ConfigError", what) {}
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_output(const std::string& path, const std::string& data, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << data;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write \"" + path + "\"");
  f << data;
  if (!f) throw Error("IoError", "write to \"" + path + "\" failed");
}

/// 12 significant digits, trailing zeros kept.
inline std::string format_probability(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.12g", p);
  return buf;
}

inline EmissionNoise parse_noise(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--noise expects MISS,FALSE_POS");
  try {
    EmissionNoise n{std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
    if (!(n.miss >= 0.0 && n.miss <= 1.0 && n.false_pos >= 0.0 && n.false_pos <= 1.0))
      throw ConfigError("--noise values must lie in [0,1]");
    return n;
  } catch (const std::logic_error&) {
    throw ConfigError("--noise expects two numbers, got \"" + text + "\"");
  }
}

/// Runs `count` independent jobs on up to `workers` threads; results keep job order.
template <typename Result, typename Job>
std::vector<Result> fan_out(std::size_t count, int workers, Job job) {
  std::vector<Result> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= count) return;
        i = next++;
      }
      try {
        results[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  std::vector<std::thread> pool;
  for (int k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct Options {
  std::string scenario = "scenarios/enterprise8.json";
  std::uint64_t seed = 0;
  int episodes = 1;
  std::optional<int> horizon;
  std::string out;
  std::string format = "json";
  bool lenient = false;
  int parallel = 1;

  // simulate
  std::string defender = "nop";
  std::string attacker = "lateral";
  // train
  std::string curve;
  int train_episodes = LearningParams{}.episodes;
  LearningParams learning;
  // evaluate
  std::string qtable;
  // causal
  std::string model;
  std::string spec;
  std::string query;
  std::string target;
  std::string given;
  std::string forced;
  // detect
  std::string log;
  std::string sequence;
  std::string dbn;
  std::string noise = "0.2,0.05";
  double threshold = 0.0;
  int window = kMaxSmoothingSlices;
  std::string indicators_out;
  // loop
  std::string autonomy = "auto";
  double tau = 0.8;
  std::vector<std::string> approve{"never"};
  int loop_window = 8;
};

inline Scenario load_scenario_file(const Options& o) {
  Scenario s = load_scenario(read_file(o.scenario), o.lenient);
  if (o.horizon) {
    s.horizon = *o.horizon;
    validate_scenario(s);
  }
  return s;
}

inline std::unique_ptr<DefenderPolicy> make_defender(const std::string& name) {
  if (name == "nop") return std::make_unique<NopDefender>();
  if (name == "random") return std::make_unique<RandomDefender>();
  if (name.rfind("q:", 0) == 0) return std::make_unique<GreedyQDefender>(qtable_from_json(read_file(name.substr(2))));
  throw ConfigError("unknown defender \"" + name + "\" (expected nop, random or q:FILE)");
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
  if (o.attacker != "lateral") throw ConfigError("unknown attacker \"" + o.attacker + "\" (expected lateral)");
  const Scenario s = load_scenario_file(o);
  auto defender = make_defender(o.defender);
  LateralAttacker attacker;
  const EpisodeLog log = run_episode(s, *defender, attacker, o.seed);
  write_output(o.out, serialize_log(log), out);
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out) {
  const Scenario s = load_scenario_file(o);
  LearningParams p = o.learning;
  p.episodes = o.train_episodes;
  const TrainResult r = train(s, p, o.seed);
  write_output(o.out, qtable_to_json(r.table).dump(2) + "\n", out);
  if (!o.curve.empty()) write_output(o.curve, curve_to_csv(r.curve), out);
  return kOk;
}

struct EpisodeMetrics {
  std::uint64_t seed = 0;
  double ret = 0.0;
  int steps = 0;
  std::string cause;
};

inline std::string metrics_output(const std::vector<EpisodeMetrics>& rows, const std::string& format) {
  if (format == "csv") {
    std::ostringstream csv;
    csv.precision(17);
    csv << "episode,seed,return,steps,cause\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
      csv << i << ',' << rows[i].seed << ',' << rows[i].ret << ',' << rows[i].steps << ',' << rows[i].cause << '\n';
    return csv.str();
  }
  OrderedJson eps = OrderedJson::array();
  double total = 0.0;
  double steps = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    eps.push_back({{"episode", i}, {"seed", rows[i].seed}, {"return", rows[i].ret}, {"steps", rows[i].steps},
                   {"cause", rows[i].cause}});
    total += rows[i].ret;
    steps += rows[i].steps;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  return OrderedJson{{"version", kVersion}, {"mean_return", total / n}, {"mean_steps", steps / n}, {"episodes", eps}}
             .dump(2) + "\n";
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
  const Scenario s = load_scenario_file(o);
  const QTable table = qtable_from_json(read_file(o.qtable));
  GreedyQDefender probe(table);  // shape check before fanning out
  const auto rows = fan_out<EpisodeMetrics>(static_cast<std::size_t>(o.episodes), o.parallel, [&](std::size_t i) {
    GreedyQDefender defender(table);
    LateralAttacker attacker;
    const std::uint64_t seed = o.seed + i;
    const EpisodeLog log = run_episode(s, defender, attacker, seed);
    return EpisodeMetrics{seed, log.total_reward(), log.final_t, log.cause ? to_string(*log.cause) : "none"};
  });
  write_output(o.out, metrics_output(rows, o.format), out);
  return kOk;
}

inline int cmd_causal(const std::string& action, const Options& o, std::ostream& out) {
  if (action == "build") {
    if (o.spec.empty()) throw ConfigError("causal build needs --spec DBN.json");
    const Cgm m = build_topology(dbn_spec_from_json(read_file(o.spec)));
    OrderedJson doc{{"version", kVersion}};
    const OrderedJson body = cgm_to_json(m);
    for (const auto& [k, v] : body.items()) doc[k] = v;
    write_output(o.out, doc.dump(2) + "\n", out);
    return kOk;
  }
  if (o.model.empty()) throw ConfigError("causal " + action + " needs --model FILE");
  const Cgm m = cgm_from_json(read_file(o.model));
  // Unrolled models go through the slice recursion; both engines are exact.
  const Method method = m.max_slice() >= 0 ? Method::ForwardBackward : Method::Enumeration;
  double value = 0.0;
  if (action == "marginal") {
    value = marginal(m, parse_assignment(o.query.empty() ? o.target : o.query), method);
  } else if (action == "observational") {
    value = observational(m, parse_assignment(o.target), parse_assignment(o.given), method);
  } else if (action == "do") {
    value = interventional(m, parse_assignment(o.target), parse_assignment(o.forced), parse_assignment(o.given),
                           method);
  } else {
    throw ConfigError("unknown causal action \"" + action + "\"");
  }
  write_output(o.out, format_probability(value) + "\n", out);
  return kOk;
}

inline int cmd_detect(const Options& o, std::ostream& out) {
  const EmissionNoise noise = parse_noise(o.noise);
  IndicatorSequence seq;
  if (!o.sequence.empty()) seq = sequence_from_csv(read_file(o.sequence));
  else if (!o.log.empty()) seq = extract_indicators(parse_log(read_file(o.log)), noise, o.seed);
  else throw ConfigError("detect needs --log FILE or --sequence CSV");
  if (!o.indicators_out.empty()) write_output(o.indicators_out, sequence_to_csv(seq), out);
  if (o.window < 1 || o.window > kMaxSmoothingSlices) throw ConfigError("--window must be in [1,16]");
  if (seq.size() == 0) throw ConfigError("indicator sequence is empty");
  const IndicatorSequence win = detail::window_of(seq, o.window);
  const DbnSpec spec =
      o.dbn.empty() ? DbnSpec::defaults(Topology::ChainA, 1) : dbn_spec_from_json(read_file(o.dbn));
  const int T = static_cast<int>(win.size());
  const Cgm malign = detail::dbn_with_slices(spec, T);
  const Cgm benign = build_topology(DbnSpec::benign(spec.topology, T));
  const DetectionResult r = classify(win, benign, malign, noise, o.threshold);
  write_output(o.out, to_json(r).dump(2) + "\n", out);
  return kOk;
}

/// Confirm-level approver scripted from the command line.
inline ApprovalHook make_approver(const std::vector<std::string>& spec) {
  if (spec.empty() || spec[0] == "never") return [](const InterventionPlan&) { return false; };
  if (spec[0] == "always") return [](const InterventionPlan&) { return true; };
  std::string path;
  if (spec[0] == "file" && spec.size() == 2) path = spec[1];
  else if (spec[0].rfind("file:", 0) == 0) path = spec[0].substr(5);
  else throw ConfigError("--approve expects always, never or file <decisions.json>");
  std::vector<bool> decisions;
  try {
    decisions = Json::parse(read_file(path)).get<std::vector<bool>>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("decisions file must be a JSON array of booleans: ") + e.what());
  }
  auto cursor = std::make_shared<std::size_t>(0);
  return [decisions, cursor](const InterventionPlan&) {
    const std::size_t i = (*cursor)++;
    return i < decisions.size() && decisions[i];
  };
}

inline int cmd_loop(const Options& o, std::ostream& out) {
  const Scenario s = load_scenario_file(o);
  LoopConfig cfg;
  cfg.autonomy = autonomy_from(o.autonomy);
  cfg.tau = o.tau;
  cfg.window = o.loop_window;
  cfg.noise = parse_noise(o.noise);
  if (!o.dbn.empty()) cfg.dbn = dbn_spec_from_json(read_file(o.dbn));
  cfg.validate();
  make_approver(o.approve);  // reject a bad --approve before running
  const auto reports = fan_out<OrderedJson>(static_cast<std::size_t>(o.episodes), o.parallel, [&](std::size_t i) {
    const ApprovalHook hook = make_approver(o.approve);
    return loop_report_to_json(run_loop(s, cfg, o.seed + i, hook));
  });
  const OrderedJson doc = reports.size() == 1 ? reports.front() : OrderedJson(reports);
  write_output(o.out, doc.dump(2) + "\n", out);
  return kOk;
}

/// Accepts a JSON-lines episode log, a loop report, or an array of reports.
inline int cmd_replay(const Options& o, std::ostream& out) {
  const std::string text = read_file(o.log);
  std::vector<std::string> logs;
  const auto first = text.find_first_not_of(" \t\r\n");
  bool report = false;
  if (first != std::string::npos && text[first] == '[') report = true;
  if (!report && first != std::string::npos) {
    const auto eol = text.find('\n');
    try {
      const Json head = Json::parse(text.substr(0, eol));
      report = head.contains("episode_log");
    } catch (const Json::exception&) {
      report = true;  // a multi-line (pretty-printed) document
    }
  }
  if (report) {
    Json doc;
    try {
      doc = Json::parse(text);
    } catch (const Json::exception& e) {
      throw ParseError(std::string("malformed replay input: ") + e.what());
    }
    if (doc.is_array())
      for (const auto& r : doc) logs.push_back(r.at("episode_log").get<std::string>());
    else
      logs.push_back(doc.at("episode_log").get<std::string>());
  } else {
    logs.push_back(text);
  }
  for (const auto& l : logs) verify_replay(l);
  out << "{\"replay\":\"ok\",\"episodes\":" << logs.size() << "}\n";
  return kOk;
}

inline int error_exit(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  err << OrderedJson{{"error", kind}, {"message", message}, {"exit", code}}.dump() << "\n";
  return code;
}

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"acdsim: lateral-movement defence arena, causal tactic models and the detection/mitigation loop"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto common = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "base seed (default 0)");
    c->add_option("--out", o.out, "output path (default stdout)");
  };
  auto scenario_opts = [&](CLI::App* c) {
    c->add_option("--scenario", o.scenario, "scenario JSON (default scenarios/enterprise8.json)");
    c->add_option("--horizon", o.horizon, "override the scenario horizon");
    c->add_flag("--lenient", o.lenient, "ignore unknown keys in the scenario file");
  };

  auto* sim = app.add_subcommand("simulate", "run one episode and write its JSON-lines log");
  scenario_opts(sim);
  common(sim);
  sim->add_option("--defender", o.defender, "nop | random | q:QTABLE.json");
  sim->add_option("--attacker", o.attacker, "lateral");

  auto* tr = app.add_subcommand("train", "train the tabular Q-learning defender");
  scenario_opts(tr);
  common(tr);
  tr->add_option("--episodes", o.train_episodes, "training episodes (default 10000)");
  tr->add_option("--curve", o.curve, "learning curve CSV (episode,return)");
  tr->add_option("--alpha", o.learning.alpha);
  tr->add_option("--gamma", o.learning.gamma);
  tr->add_option("--eps-start", o.learning.epsilon_start);
  tr->add_option("--eps-end", o.learning.epsilon_end);
  tr->add_option("--eps-decay", o.learning.epsilon_decay);

  auto* ev = app.add_subcommand(
      "evaluate",
      "greedy rollouts of a trained table; episode i uses seed+i.\n"
      "Metrics CSV columns: episode,seed,return,steps,cause");
  scenario_opts(ev);
  common(ev);
  ev->add_option("--qtable", o.qtable, "Q-table JSON")->required();
  ev->add_option("--episodes", o.episodes, "episodes (default 1)");
  ev->add_option("--parallel", o.parallel, "worker threads");
  ev->add_option("--format", o.format, "json | csv")->check(CLI::IsMember({"json", "csv"}));

  auto* ca = app.add_subcommand("causal", "causal model queries");
  std::string causal_action;
  ca->add_option("action", causal_action, "build | marginal | observational | do")->required()
      ->check(CLI::IsMember({"build", "marginal", "observational", "do"}));
  common(ca);
  ca->add_option("--model", o.model, "model JSON");
  ca->add_option("--spec", o.spec, "DBN spec JSON (build)");
  ca->add_option("--query", o.query, "assignment for marginal, e.g. X=1,Y@2=0");
  ca->add_option("--target", o.target, "target assignment");
  ca->add_option("--given", o.given, "conditioning / pre-intervention evidence");
  ca->add_option("--do", o.forced, "intervention assignment");

  auto* de = app.add_subcommand("detect", "classify an episode's indicator sequence as benign or malign");
  common(de);
  de->add_option("--log", o.log, "episode log (JSON lines)");
  de->add_option("--sequence", o.sequence, "indicator CSV t,Z,X,Y (instead of --log)");
  de->add_option("--dbn", o.dbn, "malign DBN spec JSON (default ChainA)");
  de->add_option("--noise", o.noise, "MISS,FALSE_POS (default 0.2,0.05)");
  de->add_option("--threshold", o.threshold, "llr decision threshold (default 0)");
  de->add_option("--window", o.window, "classify the last W frames (1..16, default 16)");
  de->add_option("--indicators-out", o.indicators_out, "write the extracted sequence as CSV");

  auto* lo = app.add_subcommand("loop", "run the detection/mitigation loop");
  scenario_opts(lo);
  common(lo);
  lo->add_option("--dbn", o.dbn, "malign DBN spec JSON (default ChainA)");
  lo->add_option("--autonomy", o.autonomy, "advise | confirm | auto")->check(CLI::IsMember({"advise", "confirm", "auto"}));
  lo->add_option("--tau", o.tau, "posterior threshold (default 0.8)");
  lo->add_option("--approve", o.approve, "always | never | file <decisions.json>")->expected(1, 2);
  lo->add_option("--noise", o.noise, "MISS,FALSE_POS (default 0.2,0.05)");
  lo->add_option("--window", o.loop_window, "evidence window (default 8)");
  lo->add_option("--episodes", o.episodes, "episodes, seeds seed..seed+N-1 (default 1)");
  lo->add_option("--parallel", o.parallel, "worker threads");

  auto* re = app.add_subcommand("replay", "re-run a log and check byte-identical reproduction");
  re->add_option("--log", o.log, "episode log or loop report")->required();

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    return error_exit(err, "UsageError", e.what(), kConfigError);
  }

  try {
    if (o.episodes < 0 || o.train_episodes < 0) throw ConfigError("--episodes must be non-negative");
    if (o.parallel < 1) throw ConfigError("--parallel must be >= 1");
    if (*sim) return cmd_simulate(o, out);
    if (*tr) return cmd_train(o, out);
    if (*ev) return cmd_evaluate(o, out);
    if (*ca) return cmd_causal(causal_action, o, out);
    if (*de) return cmd_detect(o, out);
    if (*lo) return cmd_loop(o, out);
    if (*re) return cmd_replay(o, out);
  } catch (const ReplayMismatch& e) {
    return error_exit(err, e.kind(), e.what(), kReplayMismatch);
  } catch (const Error& e) {
    const bool config = is_config_error(e.kind()) || e.kind() == "ConfigError";
    return error_exit(err, e.kind(), e.what(), config ? kConfigError : kRuntimeError);
  } catch (const std::exception& e) {
    return error_exit(err, "RuntimeError", e.what(), kRuntimeError);
  }
  return kConfigError;
}

inline int run_cli(int argc, char** argv) {
  return run_cli(std::vector<std::string>(argv, argv + argc));
}

}  // namespace acdsim::cli
