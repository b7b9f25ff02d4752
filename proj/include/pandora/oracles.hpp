#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "pandora/instance.hpp"
#include "pandora/line_index.hpp"
#include "pandora/rollout.hpp"

namespace pandora {

struct PolicyTrace {
  Realization realization;
  double prob;
  std::vector<int> actions;  // opened nodes, in order
  double objective;
};

struct PolicyValue {
  double expected_loss = 0.0;
  std::optional<std::vector<PolicyTrace>> traces;
};

/// Prophet benchmark E[min_i R_i]: knows every realization, pays nothing.
inline PolicyValue offline_optimal(const Model& m) {
  PolicyValue out;
  for (const auto& a : enumerate_joint(m)) {
    int best = 0;
    for (std::size_t v = 1; v < m.size(); ++v)
      if (a.levels[v] < a.levels[best]) best = int(v);
    out.expected_loss += a.prob * m.levels[a.levels[best]];
  }
  return out;
}
inline PolicyValue offline_optimal(const ExplorationInstance& inst) { return offline_optimal(compile(inst)); }

/// Sampled prophet value, for instances whose outcome space is too large to enumerate.
inline PolicyValue offline_optimal_sampled(const Model& m, std::size_t samples, std::uint64_t seed) {
  PolicyValue out;
  for (std::size_t t = 0; t < samples; ++t) {
    auto rng = stream_for(seed, t);
    const auto r = sample_realization(m, rng);
    double best = kInf;
    for (int l : r) best = std::min(best, m.levels[l]);
    out.expected_loss += best;
  }
  out.expected_loss /= double(samples);
  return out;
}

/// Exact value of an arbitrary policy by enumerating every joint realization.
inline PolicyValue evaluate_policy_exact(const Model& m,
                                         const std::function<RolloutResult(const Realization&)>& policy,
                                         bool keep_traces = false) {
  PolicyValue out;
  if (keep_traces) out.traces.emplace();
  for (const auto& a : enumerate_joint(m)) {
    const auto r = policy(a.levels);
    out.expected_loss += a.prob * r.objective();
    if (keep_traces) out.traces->push_back({a.levels, a.prob, r.inspected, r.objective()});
  }
  return out;
}

struct BruteForceOptions {
  /// Competing minimum available before anything is opened (+inf: none).
  double initial_min = kInf;
  std::size_t max_nodes = 10;
  std::size_t max_atoms = 1'000'000;
};

namespace detail {

/// Exhaustive search over every adaptive route/stop policy. States are full histories
/// (which nodes are open, what each showed, which was opened last); conditional laws come
/// from filtering the joint outcome atoms, so no Markov structure is assumed.
class HistorySearch {
public:
  HistorySearch(const Model& m, const BruteForceOptions& opt) : m_(m), opt_(opt) {
    if (m.size() > opt.max_nodes || m.size() > 10)
      throw std::length_error("brute force: too many nodes");
    if (m.k() > 15) throw std::length_error("brute force: too many levels");
    atoms_ = enumerate_joint(m, opt.max_atoms);
  }

  double solve() {
    std::vector<int> all(atoms_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = int(i);
    std::vector<int> values(m_.size(), -1);
    return value(0u, -1, values, all);
  }

private:
  bool available(std::uint32_t mask, int last, int v) const {
    if (mask & (1u << v)) return false;
    if (m_.topology == Topology::SkipLine) return v > last;
    return m_.parent[v] < 0 || (mask & (1u << m_.parent[v]));
  }
  double step_cost(int last, int v) const {
    if (m_.topology == Topology::SkipLine) return m_.skip_cost[std::size_t(last + 1)][std::size_t(v + 1)];
    return m_.cost[v];
  }

  double value(std::uint32_t mask, int last, std::vector<int>& values, const std::vector<int>& atoms) {
    std::uint64_t key = mask | (std::uint64_t(last + 1) << 10);
    for (std::size_t v = 0; v < m_.size(); ++v)
      key |= std::uint64_t(values[v] + 1) << (14 + 4 * v);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    double x = opt_.initial_min;
    for (std::size_t v = 0; v < m_.size(); ++v)
      if (values[v] >= 0) x = std::min(x, m_.levels[values[v]]);
    double best = x;

    double mass = 0.0;
    for (int a : atoms) mass += atoms_[a].prob;
    for (int v = 0; v < int(m_.size()); ++v) {
      if (!available(mask, last, v)) continue;
      std::vector<std::vector<int>> parts(m_.k());
      std::vector<double> w(m_.k(), 0.0);
      for (int a : atoms) {
        const int y = atoms_[a].levels[v];
        parts[y].push_back(a);
        w[y] += atoms_[a].prob;
      }
      double cont = step_cost(last, v);
      for (std::size_t y = 0; y < m_.k(); ++y) {
        if (parts[y].empty()) continue;
        values[v] = int(y);
        cont += (w[y] / mass) * value(mask | (1u << v), v, values, parts[y]);
        values[v] = -1;
      }
      best = std::min(best, cont);
    }
    memo_.emplace(key, best);
    return best;
  }

  const Model& m_;
  BruteForceOptions opt_;
  std::vector<JointAtom> atoms_;
  std::unordered_map<std::uint64_t, double> memo_;
};

}  // namespace detail

/// Online optimum over every adaptive policy, by exhaustive search over full histories.
inline PolicyValue brute_force_online_optimal(const Model& m, BruteForceOptions opt = {}) {
  detail::HistorySearch search(m, opt);
  return {search.solve(), std::nullopt};
}
inline PolicyValue brute_force_online_optimal(const ExplorationInstance& inst, BruteForceOptions opt = {}) {
  return brute_force_online_optimal(compile(inst), opt);
}

/// No-recall rule on a line: stop at the first node whose (effective) loss is at most its
/// threshold and serve that node; the last node is always served if reached.
inline RolloutResult run_no_recall(const Model& m, const std::vector<double>& thresholds,
                                   const Realization& r) {
  const auto& line = m.lines.front();
  RolloutResult out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    const int y = r[v];
    out.inspected.push_back(v);
    out.cost += m.cost[v];
    out.raw_cost += m.raw_cost[v];
    if (i + 1 == line.size() || m.levels[y] <= thresholds[i]) {
      out.exit_node = v;
      out.loss_level = y;
      out.loss = m.levels[y];
      out.raw_loss = m.raw_levels[y];
      break;
    }
  }
  return out;
}

/// Exact value of the no-recall threshold rule by forward propagation.
inline PolicyValue no_recall_threshold_policy(const Model& m, const std::vector<double>& thresholds) {
  if (m.topology != Topology::Line) throw InputError("no-recall policy expects a line");
  const auto& line = m.lines.front();
  if (thresholds.size() != line.size()) throw InputError("need one threshold per node");
  const std::size_t k = m.k();
  PolicyValue out;
  std::vector<double> alive;  // law of the current node's level, restricted to "not stopped"
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    std::vector<double> here(k, 0.0);
    if (i == 0) here = m.root_pmf[v].probs();
    else
      for (std::size_t s = 0; s < k; ++s)
        for (std::size_t y = 0; y < k; ++y) here[y] += alive[s] * m.kernel[v](s, y);
    double reach = 0.0;
    for (double p : here) reach += p;
    out.expected_loss += reach * m.cost[v];
    const bool last = i + 1 == line.size();
    for (std::size_t y = 0; y < k; ++y)
      if (last || m.levels[y] <= thresholds[i]) {
        out.expected_loss += here[y] * m.levels[y];
        here[y] = 0.0;
      }
    alive = std::move(here);
  }
  return out;
}

/// Two-node line on which every no-recall rule earns 1/alpha^2 while the prophet earns
/// 1/alpha^3: R1 = 1/alpha^2 surely; R2 = 0 w.p. 1 - 1/alpha, else 1/alpha. Inspection is
/// free and lambda = 1.
inline ExplorationInstance inapprox_instance(double alpha) {
  if (!(alpha > 1.0)) throw InputError("alpha must be > 1");
  const double a2 = 1.0 / (alpha * alpha), a1 = 1.0 / alpha;
  Support sup({0.0, a2, a1});
  const std::vector<double> r2{1.0 - a1, 0.0, a1};
  return make_line(sup, 1.0, Pmf::point_mass(3, 1),
                   {TransitionMatrix(std::vector<std::vector<double>>(3, r2))}, {0.0, 0.0});
}

}  // namespace pandora
