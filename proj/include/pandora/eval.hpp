#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "pandora/io.hpp"
#include "pandora/line_index.hpp"
#include "pandora/multiline_index.hpp"
#include "pandora/oracles.hpp"
#include "pandora/rollout.hpp"
#include "pandora/skip_index.hpp"
#include "pandora/tree_index.hpp"

namespace pandora {

using PolicyFn = std::function<RolloutResult(const Realization&)>;

struct NamedPolicy {
  std::string name;
  PolicyFn run;
};

/// Optimal policy for any topology, with the solver kept alive by the closure.
struct SolvedInstance {
  Model model;
  double value = 0.0;
  PolicyFn policy;
};

inline SolvedInstance solve_instance(const ExplorationInstance& inst) {
  SolvedInstance out;
  out.model = compile(inst);
  const Model& m = out.model;
  switch (m.topology) {
    case Topology::Line: {
      auto t = std::make_shared<PayoffTable>(build_payoff_table(m, m.lines.front()));
      auto mm = std::make_shared<Model>(m);
      out.value = t->value();
      out.policy = [t, mm](const Realization& r) { return run_policy(*t, *mm, mm->lines.front(), r); };
      break;
    }
    case Topology::MultiLine: {
      auto s = std::make_shared<MultiLineSolver>(m);
      out.value = s->value();
      out.policy = [s](const Realization& r) { return s->run(r); };
      break;
    }
    case Topology::Tree: {
      auto s = std::make_shared<TreeSolver>(m);
      out.value = s->value();
      out.policy = [s](const Realization& r) { return s->run(r); };
      break;
    }
    case Topology::SkipLine: {
      auto t = std::make_shared<SkipTable>(build_skip_table(m));
      auto mm = std::make_shared<Model>(m);
      out.value = t->value();
      out.policy = [t, mm](const Realization& r) { return run_skip_policy(*t, *mm, r); };
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Monte Carlo

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::size_t> counts;
};

struct McStats {
  std::size_t samples = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  double mean_loss = 0.0, mean_cost = 0.0;
  double mean_raw_loss = 0.0, mean_raw_cost = 0.0;
  Histogram histogram;
};

namespace detail {

inline std::size_t resolve_threads(std::size_t threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  return threads;
}

/// Runs body(i) for i in [0, n) on up to `threads` workers, in contiguous blocks.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F body) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t block = (n + threads - 1) / threads;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w * block; i < std::min(n, (w + 1) * block); ++i) body(i);
    });
  for (auto& t : pool) t.join();
}

/// Neumaier compensated sum.
class CompensatedSum {
public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0, comp_ = 0.0;
};

inline McStats summarize(const std::vector<RolloutResult>& rs, std::size_t bins) {
  McStats s;
  s.samples = rs.size();
  if (rs.empty()) return s;
  const double n = double(rs.size());
  double lo = kInf, hi = -kInf;
  CompensatedSum obj, loss, cost, raw_loss, raw_cost;
  for (const auto& r : rs) {
    const double o = r.objective();
    obj.add(o);
    loss.add(r.loss);
    cost.add(r.cost);
    raw_loss.add(r.raw_loss);
    raw_cost.add(r.raw_cost);
    lo = std::min(lo, o);
    hi = std::max(hi, o);
  }
  s.mean = obj.value() / n;
  s.mean_loss = loss.value() / n;
  s.mean_cost = cost.value() / n;
  s.mean_raw_loss = raw_loss.value() / n;
  s.mean_raw_cost = raw_cost.value() / n;
  CompensatedSum ss;
  for (const auto& r : rs) ss.add((r.objective() - s.mean) * (r.objective() - s.mean));
  s.stderr_ = rs.size() > 1 ? std::sqrt(ss.value() / (n - 1.0) / n) : 0.0;
  s.histogram.lo = lo;
  s.histogram.hi = hi;
  s.histogram.counts.assign(std::max<std::size_t>(bins, 1), 0);
  for (const auto& r : rs) {
    std::size_t b = 0;
    if (hi > lo) b = std::min(s.histogram.counts.size() - 1, std::size_t((r.objective() - lo) / (hi - lo) * double(bins)));
    ++s.histogram.counts[b];
  }
  return s;
}

}  // namespace detail

/// Samples realization i from stream_for(seed, i), so results do not depend on `threads`.
inline std::vector<Realization> sample_realizations(const Model& m, std::size_t samples, std::uint64_t seed,
                                                    std::size_t threads = 1) {
  std::vector<Realization> out(samples);
  detail::parallel_for(samples, threads, [&](std::size_t i) {
    auto rng = stream_for(seed, i);
    out[i] = sample_realization(m, rng);
  });
  return out;
}

inline std::vector<RolloutResult> run_rollouts(const PolicyFn& policy, const std::vector<Realization>& rs,
                                               std::size_t threads = 1) {
  std::vector<RolloutResult> out(rs.size());
  detail::parallel_for(rs.size(), threads, [&](std::size_t i) { out[i] = policy(rs[i]); });
  return out;
}

inline McStats monte_carlo_eval(const Model& m, const PolicyFn& policy, std::size_t samples, std::uint64_t seed,
                                std::size_t threads = 1, std::size_t bins = 20) {
  if (samples == 0) throw InputError("samples must be >= 1");
  return detail::summarize(run_rollouts(policy, sample_realizations(m, samples, seed, threads), threads), bins);
}

inline void write_rollouts_jsonl(std::ostream& os, const Model& m, const std::string& policy,
                                 const std::vector<RolloutResult>& rs) {
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& r = rs[i];
    json j;
    j["sample"] = i;
    j["policy"] = policy;
    j["exit"] = r.exit_node < 0 ? json(nullptr) : json(m.ids[std::size_t(r.exit_node)]);
    std::vector<std::string> ins;
    for (int v : r.inspected) ins.push_back(m.ids[std::size_t(v)]);
    j["inspected"] = ins;
    j["loss"] = r.raw_loss;
    j["cost"] = r.raw_cost;
    j["objective"] = r.objective();
    os << j.dump() << '\n';
  }
}

struct ComparisonRow {
  std::string policy;
  McStats stats;
  double diff = 0.0;         // paired mean of (policy - first policy)
  double diff_stderr = 0.0;
  double ratio_offline = 0.0;  // mean / prophet mean on the same realizations
};

struct Comparison {
  double offline_mean = 0.0;
  std::vector<ComparisonRow> rows;
};

/// Every policy sees the same realizations (common random numbers).
inline Comparison compare_policies(const Model& m, const std::vector<NamedPolicy>& policies, std::size_t samples,
                                   std::uint64_t seed, std::size_t threads = 1) {
  if (policies.empty()) throw InputError("no policies to compare");
  if (samples == 0) throw InputError("samples must be >= 1");
  const auto rs = sample_realizations(m, samples, seed, threads);
  Comparison out;
  detail::CompensatedSum off;
  for (const auto& r : rs) {
    double best = kInf;
    for (int l : r) best = std::min(best, m.levels[std::size_t(l)]);
    off.add(best);
  }
  out.offline_mean = off.value();
  out.offline_mean /= double(samples);

  std::vector<double> base;
  for (const auto& p : policies) {
    const auto res = run_rollouts(p.run, rs, threads);
    ComparisonRow row;
    row.policy = p.name;
    row.stats = detail::summarize(res, 20);
    if (base.empty())
      for (const auto& r : res) base.push_back(r.objective());
    detail::CompensatedSum sd, ss;
    for (std::size_t i = 0; i < res.size(); ++i) sd.add(res[i].objective() - base[i]);
    const double md = sd.value() / double(samples);
    for (std::size_t i = 0; i < res.size(); ++i) {
      const double d = res[i].objective() - base[i] - md;
      ss.add(d * d);
    }
    row.diff = md;
    row.diff_stderr = samples > 1 ? std::sqrt(ss.value() / double(samples - 1) / double(samples)) : 0.0;
    row.ratio_offline = out.offline_mean > 0.0 ? row.stats.mean / out.offline_mean : kInf;
    out.rows.push_back(std::move(row));
  }
  return out;
}

namespace detail {
inline std::string fmt(double x) { return format_double(x); }
}  // namespace detail

inline void write_comparison_csv(std::ostream& os, const Comparison& c) {
  os << "policy,mean,stderr,diff_vs_first,diff_stderr,offline_mean,ratio_vs_offline\n";
  for (const auto& r : c.rows)
    os << r.policy << ',' << detail::fmt(r.stats.mean) << ',' << detail::fmt(r.stats.stderr_) << ','
       << detail::fmt(r.diff) << ',' << detail::fmt(r.diff_stderr) << ',' << detail::fmt(c.offline_mean) << ','
       << detail::fmt(r.ratio_offline) << '\n';
}

// ---------------------------------------------------------------------------------------
// Exact line evaluation

struct ExactOutcome {
  double loss = 0.0, cost = 0.0;  // effective
  double raw_loss = 0.0, raw_cost = 0.0;
  double objective() const { return loss + cost; }
};

/// Exact outcome of the table's with-recall policy, by propagating the law of (min, last).
inline ExactOutcome evaluate_line_policy_exact(const PayoffTable& t, const Model& m, const std::vector<int>& line) {
  const std::size_t k = m.k();
  ExactOutcome out;
  std::vector<double> mass((k + 1) * (k + 1), 0.0), next;
  auto at = [&](std::size_t x, std::size_t s) { return x * (k + 1) + s; };
  mass[at(k, k)] = 1.0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    next.assign(mass.size(), 0.0);
    for (std::size_t x = 0; x <= k; ++x)
      for (std::size_t s = 0; s <= k; ++s) {
        const double p = mass[at(x, s)];
        if (p == 0.0) continue;
        if (t.stop(int(x), int(s), i)) {
          out.loss += p * m.levels[x];
          out.raw_loss += p * m.raw_levels[x];
          continue;
        }
        out.cost += p * m.cost[v];
        out.raw_cost += p * m.raw_cost[v];
        const auto& law = m.law(v, s == k ? 0 : int(s));
        for (std::size_t y = 0; y < k; ++y)
          if (law[y] > 0.0) next[at(std::min(x, y), y)] += p * law[y];
      }
    mass.swap(next);
  }
  for (std::size_t x = 0; x < k; ++x)
    for (std::size_t s = 0; s <= k; ++s) {
      out.loss += mass[at(x, s)] * m.levels[x];
      out.raw_loss += mass[at(x, s)] * m.raw_levels[x];
    }
  return out;
}

/// Exact outcome of the fixed-threshold exit rule: serve the first exit whose raw loss is at
/// most `threshold` (the last exit if none is).
inline ExactOutcome evaluate_fixed_threshold_exact(const Model& m, double threshold) {
  const auto& line = m.lines.front();
  const std::size_t k = m.k();
  ExactOutcome out;
  std::vector<double> alive;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    std::vector<double> here(k, 0.0);
    if (i == 0) here = m.root_pmf[v].probs();
    else
      for (std::size_t s = 0; s < k; ++s)
        for (std::size_t y = 0; y < k; ++y) here[y] += alive[s] * m.kernel[v](s, y);
    double reach = 0.0;
    for (double p : here) reach += p;
    out.cost += reach * m.cost[v];
    out.raw_cost += reach * m.raw_cost[v];
    for (std::size_t y = 0; y < k; ++y)
      if (i + 1 == line.size() || m.raw_levels[y] <= threshold) {
        out.loss += here[y] * m.levels[y];
        out.raw_loss += here[y] * m.raw_levels[y];
        here[y] = 0.0;
      }
    alive = std::move(here);
  }
  return out;
}

inline RolloutResult run_fixed_threshold(const Model& m, double threshold, const Realization& r) {
  const auto& line = m.lines.front();
  RolloutResult out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    const int y = r[std::size_t(v)];
    out.inspected.push_back(v);
    out.cost += m.cost[v];
    out.raw_cost += m.raw_cost[v];
    if (i + 1 == line.size() || m.raw_levels[std::size_t(y)] <= threshold) {
      out.exit_node = v;
      out.loss_level = y;
      out.loss = m.levels[std::size_t(y)];
      out.raw_loss = m.raw_levels[std::size_t(y)];
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Pareto sweep

struct ParetoPoint {
  double lambda = 0.0;
  std::string policy;
  double error = 0.0;    // mean raw loss of the served exit
  double latency = 0.0;  // mean raw cost over the cost of running every exit
  double objective = 0.0;
  double threshold = 0.0;  // fixed_threshold only
};

struct SweepOptions {
  std::vector<double> lambdas;
  double threshold_step = 0.05;
};

struct ParetoSweep {
  std::vector<ParetoPoint> points;  // one per (lambda, policy)
  std::vector<ParetoPoint> thresholds;  // every grid threshold, lambda-free

  /// Points of one policy not dominated by another point of that policy.
  std::vector<ParetoPoint> frontier(const std::string& policy) const {
    std::vector<ParetoPoint> mine, out;
    for (const auto& p : points)
      if (p.policy == policy) mine.push_back(p);
    for (std::size_t a = 0; a < mine.size(); ++a) {
      bool dominated = false;
      for (std::size_t b = 0; b < mine.size() && !dominated; ++b) {
        if (a == b) continue;
        const bool le = mine[b].error <= mine[a].error && mine[b].latency <= mine[a].latency;
        const bool lt = mine[b].error < mine[a].error || mine[b].latency < mine[a].latency;
        const bool dup = !lt && b < a;
        dominated = le && (lt || dup);
      }
      if (!dominated) out.push_back(mine[a]);
    }
    return out;
  }
  std::vector<ParetoPoint> frontier() const {
    auto a = frontier("dynamic_index");
    const auto b = frontier("fixed_threshold");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
};

inline std::vector<double> lambda_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || lo > hi || lo < 0.0 || hi > 1.0) throw InputError("lambda grid must satisfy 0 <= a <= b <= 1, step > 0");
  std::vector<double> out;
  const auto n = std::size_t(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) out.push_back(std::min(hi, std::round((lo + double(i) * step) * 1e12) / 1e12));
  return out;
}

/// For each lambda: reweight, re-solve the line, and evaluate the optimal policy exactly. The
/// fixed-threshold baseline reports, per lambda, its best threshold on the grid.
inline ParetoSweep pareto_sweep(const ExplorationInstance& base, const SweepOptions& opt) {
  if (base.topology != Topology::Line) throw InputError("pareto sweep expects a line instance");
  if (!(opt.threshold_step > 0.0)) throw InputError("threshold step must be > 0");
  ParetoSweep out;
  double total_cost = 0.0;
  for (const auto& n : base.nodes) total_cost += n.cost;
  const double norm = total_cost > 0.0 ? total_cost : 1.0;

  {
    auto inst = base;
    inst.lambda = 0.5;
    const Model m = compile(inst);
    const double top = base.support.max();
    for (std::size_t i = 0;; ++i) {
      const double th = double(i) * opt.threshold_step;
      const auto e = evaluate_fixed_threshold_exact(m, th);
      out.thresholds.push_back({0.0, "fixed_threshold", e.raw_loss, e.raw_cost / norm, 0.0, th});
      if (th >= top) break;
    }
  }
  for (double lambda : opt.lambdas) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda outside [0,1]");
    auto inst = base;
    inst.lambda = lambda;
    const Model m = compile(inst);
    const auto t = build_payoff_table(m, m.lines.front());
    const auto e = evaluate_line_policy_exact(t, m, m.lines.front());
    out.points.push_back({lambda, "dynamic_index", e.raw_loss, e.raw_cost / norm, e.objective(), 0.0});

    ParetoPoint best;
    best.objective = kInf;
    for (const auto& p : out.thresholds) {
      const double obj = lambda * p.error + (1.0 - lambda) * p.latency * norm;
      if (obj < best.objective) {
        best = p;
        best.objective = obj;
      }
    }
    best.lambda = lambda;
    out.points.push_back(best);
  }
  return out;
}

inline void write_frontier_csv(std::ostream& os, const std::vector<ParetoPoint>& pts) {
  os << "lambda,policy,error,latency,objective,threshold\n";
  for (const auto& p : pts)
    os << detail::fmt(p.lambda) << ',' << p.policy << ',' << detail::fmt(p.error) << ',' << detail::fmt(p.latency)
       << ',' << detail::fmt(p.objective) << ',' << (p.policy == "fixed_threshold" ? detail::fmt(p.threshold) : "")
       << '\n';
}

// ---------------------------------------------------------------------------------------
// Synthetic early-exit traces

/// Generator for cascaded-exit style traces: per-exit losses follow one static Markov chain
/// over quantized "1 - confidence" levels that drifts towards lower loss with depth.
struct SyntheticEeConfig {
  std::vector<double> levels{0.02, 0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8};
  std::vector<double> costs{0.10, 0.12, 0.15, 0.18, 0.20, 0.25};  // per-exit FLOPs over backbone FLOPs
  double drift = 1.0;  // expected level decrease per exit
  double spread = 0.9; // kernel width in levels
};

inline TransitionMatrix synthetic_ee_kernel(const SyntheticEeConfig& c) {
  const std::size_t k = c.levels.size();
  std::vector<std::vector<double>> rows(k, std::vector<double>(k));
  for (std::size_t a = 0; a < k; ++a) {
    double z = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      rows[a][b] = std::exp(-std::abs(double(b) - (double(a) - c.drift)) / c.spread);
      z += rows[a][b];
    }
    for (auto& x : rows[a]) x /= z;
  }
  return TransitionMatrix(std::move(rows));
}

inline Pmf synthetic_ee_root(const SyntheticEeConfig& c) {
  const std::size_t k = c.levels.size();
  std::vector<double> p(k);
  double z = 0.0;
  for (std::size_t a = 0; a < k; ++a) z += (p[a] = 1.0 + double(a));
  for (auto& x : p) x /= z;
  return Pmf(std::move(p));
}

inline ExplorationInstance synthetic_ee_instance(const SyntheticEeConfig& c = {}, double lambda = 0.5) {
  std::vector<TransitionMatrix> ks(c.costs.size() - 1, synthetic_ee_kernel(c));
  return make_line(Support(c.levels), lambda, synthetic_ee_root(c), std::move(ks), c.costs);
}

inline TraceDataset synthetic_ee_trace(std::size_t rows, std::uint64_t seed, const SyntheticEeConfig& c = {}) {
  const Model m = compile(synthetic_ee_instance(c));
  TraceDataset t;
  t.costs = c.costs;
  for (std::size_t i = 0; i < rows; ++i) {
    auto rng = stream_for(seed, i);
    const auto r = sample_realization(m, rng);
    std::vector<double> row;
    for (int l : r) row.push_back(c.levels[std::size_t(l)]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace pandora
