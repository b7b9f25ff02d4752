#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pandora/eval.hpp"
#include "pandora/io.hpp"
#include "pandora/mixing.hpp"
#include "pandora/oracles.hpp"

namespace fs = std::filesystem;
using namespace pandora;

namespace {

struct Config {
  std::string instance, trace, costs;
  std::string output_dir = "out";
  std::optional<double> lambda;
  std::string lambda_grid = "0:1:0.05";
  double threshold_step = 0.05;
  double delta = 0.01;
  double alpha = 10.0;
  double pseudocount = 1.0;
  std::size_t samples = 100'000;
  std::size_t bins = 8;
  std::size_t rows = 5000;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  bool verify = false;
  bool rollouts = false;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_out(const Config& c, const std::string& name) {
  fs::create_directories(c.output_dir);
  const auto path = fs::path(c.output_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

void write_json(const Config& c, const std::string& name, const json& j) { open_out(c, name) << j.dump(2) << '\n'; }

ExplorationInstance load_with_lambda(const Config& c) {
  auto inst = load_instance(c.instance);
  if (c.lambda) inst.lambda = *c.lambda;
  return inst;
}

std::vector<double> parse_grid(const std::string& s) {
  double a = 0, b = 0, step = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf:%lf%c", &a, &b, &step, &tail) != 3)
    throw InputError("lambda grid must look like a:b:step, got '" + s + "'");
  return lambda_grid(a, b, step);
}

ExplorationInstance instance_from_trace_files(const Config& c, double lambda, json* summary = nullptr) {
  std::optional<std::vector<double>> costs;
  if (!c.costs.empty()) costs = parse_costs_csv(read_file(c.costs));
  const auto t = parse_trace_csv(read_file(c.trace), costs ? &*costs : nullptr);
  const auto q = quantize_losses(t, c.bins);
  const auto chain = estimate_transitions(q, c.pseudocount);
  if (summary) {
    (*summary)["rows"] = t.rows.size();
    (*summary)["exits"] = t.costs.size();
    (*summary)["support"] = q.support.values();
    (*summary)["boundaries"] = q.boundaries;
  }
  return instance_from_trace(q, chain, lambda);
}

RolloutResult open_all(const Model& m, const Realization& r) {
  RolloutBuilder b(m, r);
  for (int v : m.topological_order()) {
    if (m.topology == Topology::SkipLine)
      b.open(v, m.skip_cost[std::size_t(v)][std::size_t(v) + 1], m.raw_skip_cost[std::size_t(v)][std::size_t(v) + 1]);
    else
      b.open(v, m.cost[v], m.raw_cost[v]);
  }
  return std::move(b).finish();
}

int cmd_solve(const Config& c) {
  const auto inst = load_with_lambda(c);
  const Model m = compile(inst);
  double value = 0.0;
  switch (m.topology) {
    case Topology::Line: {
      const auto t = build_payoff_table(m, m.lines.front());
      value = t.value();
      auto tf = open_out(c, "table.csv");
      write_table_csv(tf, t);
      auto xf = open_out(c, "index.csv");
      write_index_csv(xf, IndexTable(t));
      break;
    }
    case Topology::MultiLine: {
      const MultiLineSolver s(m);
      value = s.value();
      for (std::size_t j = 0; j < s.lines(); ++j) {
        auto tf = open_out(c, "table_" + std::to_string(j + 1) + ".csv");
        write_table_csv(tf, s.table(j));
        auto xf = open_out(c, "index_" + std::to_string(j + 1) + ".csv");
        write_index_csv(xf, s.index(j));
      }
      break;
    }
    case Topology::Tree: {
      const TreeSolver s(m);
      value = s.value();
      auto pf = open_out(c, "policy.csv");
      s.write_policy_csv(pf);
      break;
    }
    case Topology::SkipLine: {
      const auto t = build_skip_table(m);
      value = t.value();
      auto tf = open_out(c, "skip_table.csv");
      write_skip_table_csv(tf, t);
      break;
    }
  }
  json out{{"topology", to_string(m.topology)}, {"lambda", m.lambda}, {"nodes", m.size()}, {"value", value}};
  std::cout << "topology: " << to_string(m.topology) << "\nvalue: " << num(value) << '\n';
  if (c.verify) {
    try {
      const double oracle = brute_force_online_optimal(m).expected_loss;
      out["oracle"] = oracle;
      if (std::abs(value - oracle) >= 1e-9) {
        std::cerr << "verification failed: DP " << num(value) << " vs oracle " << num(oracle) << '\n';
        write_json(c, "value.json", out);
        return 1;
      }
      std::cout << "verified: |DP - oracle| < 1e-9\n";
    } catch (const std::length_error& e) {
      std::cout << "verify skipped: " << e.what() << '\n';
    }
  }
  write_json(c, "value.json", out);
  return 0;
}

int cmd_estimate(const Config& c) {
  json summary;
  const auto inst = instance_from_trace_files(c, c.lambda.value_or(0.5), &summary);
  fs::create_directories(c.output_dir);
  save_instance((fs::path(c.output_dir) / "instance.json").string(), inst);
  write_json(c, "estimate.json", summary);
  std::cout << "rows: " << summary["rows"] << "\nexits: " << summary["exits"] << "\nlevels: " << inst.support.size()
            << "\nwrote " << (fs::path(c.output_dir) / "instance.json").string() << '\n';
  return 0;
}

int cmd_truncate(const Config& c) {
  const auto inst = load_with_lambda(c);
  const auto rep = truncated_solve(inst, c.delta);
  json j{{"tDelta", rep.t_delta},     {"lineTDelta", rep.line_t_delta},
         {"pi", rep.pi.probs()},      {"alpha", rep.alpha},
         {"C", rep.C},                {"delta", rep.delta},
         {"gapBound", rep.gap_bound}, {"fullValue", *rep.full_value},
         {"truncatedValue", rep.truncated_value}};
  write_json(c, "truncate.json", j);
  fs::create_directories(c.output_dir);
  save_instance((fs::path(c.output_dir) / "truncated.json").string(), rep.truncated);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_simulate(const Config& c) {
  const auto inst = load_with_lambda(c);
  const auto s = solve_instance(inst);
  const Model& m = s.model;
  const std::vector<NamedPolicy> policies{{"dynamic_index", s.policy},
                                          {"open_all", [&](const Realization& r) { return open_all(m, r); }}};
  const auto cmp = compare_policies(m, policies, c.samples, c.seed, c.threads);
  auto cf = open_out(c, "compare.csv");
  write_comparison_csv(cf, cmp);
  if (c.rollouts) {
    auto rf = open_out(c, "rollouts.jsonl");
    const auto rs = sample_realizations(m, c.samples, c.seed, c.threads);
    for (const auto& p : policies) write_rollouts_jsonl(rf, m, p.name, run_rollouts(p.run, rs, c.threads));
  }
  std::cout << "dp value: " << num(s.value) << '\n';
  for (const auto& r : cmp.rows)
    std::cout << r.policy << ": mean " << num(r.stats.mean) << " stderr " << num(r.stats.stderr_) << '\n';
  std::cout << "offline mean: " << num(cmp.offline_mean) << '\n';
  return 0;
}

int cmd_pareto(const Config& c) {
  if (c.trace.empty() == c.instance.empty()) throw InputError("pareto needs exactly one of --trace or --instance");
  const auto base = c.trace.empty() ? load_instance(c.instance) : instance_from_trace_files(c, 0.5);
  const auto sw = pareto_sweep(base, {parse_grid(c.lambda_grid), c.threshold_step});
  auto ff = open_out(c, "frontier.csv");
  write_frontier_csv(ff, sw.frontier());
  auto sf = open_out(c, "sweep.csv");
  write_frontier_csv(sf, sw.points);
  std::size_t wins = 0;
  for (std::size_t i = 0; i + 1 < sw.points.size(); i += 2) wins += sw.points[i].objective <= sw.points[i + 1].objective + 1e-12;
  std::cout << "lambda points: " << sw.points.size() / 2 << "\ndynamic index at least as good as best threshold: " << wins
            << "/" << sw.points.size() / 2 << "\nwrote " << (fs::path(c.output_dir) / "frontier.csv").string() << '\n';
  return 0;
}

int cmd_counterexample(const Config& c) {
  const auto inst = inapprox_instance(c.alpha);
  const Model m = compile(inst);
  const double opt = offline_optimal(m).expected_loss;
  const double inf = std::numeric_limits<double>::infinity();
  double best = inf, worst = 0.0;
  for (double th : {-inf, 0.5 * m.levels[1], m.levels[1], m.levels[2], inf}) {
    const double v = no_recall_threshold_policy(m, {th, th}).expected_loss;
    best = std::min(best, v);
    worst = std::max(worst, v);
  }
  const double recall = build_payoff_table(m, m.lines.front()).value();
  json j{{"alpha", c.alpha},        {"noRecallBest", best}, {"noRecallWorst", worst},
         {"offlineOptimal", opt},   {"ratio", best / opt},  {"withRecall", recall}};
  write_json(c, "counterexample.json", j);
  fs::create_directories(c.output_dir);
  save_instance((fs::path(c.output_dir) / "inapprox.json").string(), inst);
  std::cout << "alpha: " << num(c.alpha) << "\nno-recall value (every threshold): " << num(best)
            << "\noffline optimum: " << num(opt) << "\nratio: " << num(best / opt)
            << "\nwith-recall value: " << num(recall) << '\n';
  return 0;
}

int cmd_synth(const Config& c) {
  const auto t = synthetic_ee_trace(c.rows, c.seed);
  auto out = open_out(c, "ee.csv");
  write_trace_csv(out, t);
  std::cout << "wrote " << t.rows.size() << " rows to " << (fs::path(c.output_dir) / "ee.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal stopping and routing for Markovian costly exploration"};
  app.require_subcommand(1);
  Config c;

  auto out_opt = [&](CLI::App* s) {
    s->add_option("--output-dir", c.output_dir, "Directory for artifacts")->envname("PANDORA_OUTPUT_DIR")->capture_default_str();
  };
  auto instance_opt = [&](CLI::App* s, bool required) {
    auto* o = s->add_option("--instance", c.instance, "Instance JSON file")->check(CLI::ExistingFile);
    if (required) o->required();
    return o;
  };
  auto lambda_opt = [&](CLI::App* s) {
    s->add_option("--lambda", c.lambda, "Override the loss weight lambda in [0,1]")
        ->envname("PANDORA_LAMBDA")
        ->check(CLI::Range(0.0, 1.0));
  };
  auto trace_opts = [&](CLI::App* s, bool required) {
    auto* t = s->add_option("--trace", c.trace, "Trace CSV (exit_i_loss columns)")->check(CLI::ExistingFile);
    if (required) t->required();
    s->add_option("--costs", c.costs, "Costs CSV (cost_i header and one row)")->check(CLI::ExistingFile);
    s->add_option("--bins", c.bins, "Quantization bins")->envname("PANDORA_BINS")->check(CLI::Range(2, 1000))->capture_default_str();
    s->add_option("--pseudocount", c.pseudocount, "Transition smoothing")->check(CLI::NonNegativeNumber)->capture_default_str();
    return t;
  };
  auto threads_opt = [&](CLI::App* s) {
    s->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->envname("PANDORA_THREADS")->capture_default_str();
  };

  auto* solve = app.add_subcommand("solve", "Solve an instance and dump its tables");
  instance_opt(solve, true);
  lambda_opt(solve);
  solve->add_flag("--verify", c.verify, "Cross-check against the exhaustive oracle");
  out_opt(solve);

  auto* estimate = app.add_subcommand("estimate", "Quantize a trace and estimate its Markov chain");
  trace_opts(estimate, true);
  lambda_opt(estimate);
  out_opt(estimate);

  auto* truncate = app.add_subcommand("truncate", "Truncated solve of a static-transition line");
  instance_opt(truncate, true);
  lambda_opt(truncate);
  truncate->add_option("--delta", c.delta, "Failure probability in (0,1)")
      ->envname("PANDORA_DELTA")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  out_opt(truncate);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo comparison of the optimal policy");
  instance_opt(simulate, true);
  lambda_opt(simulate);
  simulate->add_option("--samples", c.samples, "Sample count")->envname("PANDORA_SAMPLES")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--seed", c.seed, "Random seed")->envname("PANDORA_SEED")->required();
  simulate->add_flag("--rollouts", c.rollouts, "Also write rollouts.jsonl");
  threads_opt(simulate);
  out_opt(simulate);

  auto* pareto = app.add_subcommand("pareto", "Lambda sweep frontier against fixed thresholds");
  auto* p_trace = trace_opts(pareto, false);
  auto* p_inst = instance_opt(pareto, false);
  p_trace->excludes(p_inst);
  pareto->add_option("--lambda-grid", c.lambda_grid, "Grid a:b:step")->envname("PANDORA_LAMBDA_GRID")->capture_default_str();
  pareto->add_option("--threshold-step", c.threshold_step, "Fixed-threshold grid step")->check(CLI::PositiveNumber)->capture_default_str();
  out_opt(pareto);

  auto* counter = app.add_subcommand("counterexample", "No-recall inapproximability instance and report");
  counter->add_option("--alpha", c.alpha, "Ratio parameter, > 1")->required();
  out_opt(counter);

  auto* synth = app.add_subcommand("synth-trace", "Write a synthetic early-exit trace");
  synth->add_option("--rows", c.rows, "Rows")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--seed", c.seed, "Random seed")->envname("PANDORA_SEED")->required();
  out_opt(synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve) return cmd_solve(c);
    if (*estimate) return cmd_estimate(c);
    if (*truncate) return cmd_truncate(c);
    if (*simulate) return cmd_simulate(c);
    if (*pareto) return cmd_pareto(c);
    if (*counter) return cmd_counterexample(c);
    if (*synth) return cmd_synth(c);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
