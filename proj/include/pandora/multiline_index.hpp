#pragma once

#include <map>
#include <random>
#include <vector>

#include "pandora/line_index.hpp"
#include "pandora/piecewise.hpp"

namespace pandora {

/// A node whose loss and cost are random and possibly correlated. loss_level == k means the
/// contracted component ended without inspecting anything (loss +inf).
struct EquivalentNode {
  struct Atom {
    int loss_level;
    double cost;
    double prob;
  };
  std::vector<Atom> atoms;

  double total_probability() const {
    double p = 0.0;
    for (const auto& a : atoms) p += a.prob;
    return p;
  }
  /// E[min{x, loss}] + E[cost].
  double expected(double x, const std::vector<double>& levels) const {
    double e = 0.0;
    for (const auto& a : atoms) {
      const double l = a.loss_level < int(levels.size()) ? levels[a.loss_level] : kInf;
      e += a.prob * (std::min(x, l) + a.cost);
    }
    return e;
  }
  /// Marginal of the loss, with index k for "nothing inspected".
  std::vector<double> loss_marginal(std::size_t k) const {
    std::vector<double> p(k + 1, 0.0);
    for (const auto& a : atoms) p[a.loss_level] += a.prob;
    return p;
  }
};

/// Index of a random-cost node opened in isolation: the largest x with
/// E[(x - loss)+] <= E[cost], i.e. where stopping at x is still optimal.
inline double equivalent_node_index(const EquivalentNode& g, const std::vector<double>& levels) {
  double ec = 0.0;
  std::vector<std::pair<double, double>> pts;  // (loss, prob), finite losses only
  for (const auto& a : g.atoms) {
    ec += a.prob * a.cost;
    if (a.loss_level < int(levels.size())) pts.push_back({levels[a.loss_level], a.prob});
  }
  std::sort(pts.begin(), pts.end());
  // E[(x - L)+] is piecewise linear increasing in x; walk its segments.
  double mass = 0.0, gain_at = 0.0, x0 = 0.0;
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const double x1 = pts[j].first;
    const double gain1 = gain_at + mass * (x1 - x0);
    if (gain1 > ec) return x0 + (ec - gain_at) / mass;
    gain_at = gain1;
    x0 = x1;
    mass += pts[j].second;
  }
  if (mass <= 0.0) return kInf;
  return x0 + (ec - gain_at) / mass;
}

/// Contracts a line, started in state (stop_level, s, i), into the joint law of
/// (minimum loss inspected, cost paid) under the line's optimal policy.
inline EquivalentNode contract_line(const PayoffTable& t, int s, std::size_t i, double stop_level) {
  const auto f = future_outcome(t, stop_level, s, i);
  std::map<std::pair<int, double>, double> merged;
  for (const auto& a : f.atoms) merged[{a.min_level, a.cost}] += a.prob;
  EquivalentNode g;
  for (const auto& [key, p] : merged) g.atoms.push_back({key.first, key.second, p});
  return g;
}

/// Equivalent-loss function of node v given its parent level s:
///   Phi_v(x | s) = min{ x, c_v + sum_l P(l | s) Psi_v(min{x, v_l}, l) },
/// where Psi_v(., l) is the equivalent-loss function of everything below v once v shows l.
inline PiecewiseLinear node_equivalent_loss(const Model& m, int v, const std::vector<double>& law,
                                            const std::vector<PiecewiseLinear>& psi_by_level) {
  PiecewiseLinear z = PiecewiseLinear::constant(m.cost[v]);
  for (std::size_t l = 0; l < m.k(); ++l) {
    if (law[l] == 0.0) continue;
    auto g = psi_by_level[l].clamped(m.levels[l]);
    g *= law[l];
    z = z + g;
  }
  return z.min_with_identity();
}

/// Equivalent-loss functions along one line, bottom-up. phi[i][s] is Phi of the i-th line
/// node given parent level s; head nodes carry a single entry (their root pmf).
/// `below_last[l]` is Psi of whatever hangs below the last node (identity for a true leaf).
struct LineFunctions {
  std::vector<std::vector<PiecewiseLinear>> phi;
};

inline LineFunctions line_functions(const Model& m, const std::vector<int>& line,
                                    const std::vector<PiecewiseLinear>* below_last = nullptr) {
  const std::size_t k = m.k();
  LineFunctions out;
  out.phi.resize(line.size());
  std::vector<PiecewiseLinear> psi = below_last ? *below_last
                                                : std::vector<PiecewiseLinear>(k, PiecewiseLinear::identity());
  for (std::size_t i = line.size(); i-- > 0;) {
    const int v = line[i];
    if (m.parent[v] < 0) {
      out.phi[i] = {node_equivalent_loss(m, v, m.root_pmf[v].probs(), psi)};
    } else {
      for (std::size_t s = 0; s < k; ++s)
        out.phi[i].push_back(node_equivalent_loss(m, v, m.law(v, int(s)), psi));
    }
    psi = out.phi[i].size() == 1 ? std::vector<PiecewiseLinear>(k, out.phi[i][0]) : out.phi[i];
  }
  return out;
}

/// Optimal policy for disjoint directed lines: open the front with the smallest dynamic
/// index while it is below the current minimum.
class MultiLineSolver {
public:
  explicit MultiLineSolver(Model m) : m_(std::move(m)) {
    if (m_.topology != Topology::MultiLine && m_.topology != Topology::Line)
      throw InputError("multiline solver expects line or multiline topology");
    for (const auto& line : m_.lines) {
      tables_.push_back(build_payoff_table(m_, line));
      index_.emplace_back(tables_.back());
      heads_.push_back(line_functions(m_, line).phi.front().front());
    }
  }
  explicit MultiLineSolver(const ExplorationInstance& inst) : MultiLineSolver(compile(inst)) {}

  const Model& model() const { return m_; }
  std::size_t lines() const { return tables_.size(); }
  const PayoffTable& table(std::size_t j) const { return tables_[j]; }
  const IndexTable& index(std::size_t j) const { return index_[j]; }
  /// Equivalent-loss function of line j explored alone from scratch.
  const PiecewiseLinear& head_function(std::size_t j) const { return heads_[j]; }

  /// Optimal expected loss plus cost, from the product of the per-line slopes.
  double value() const { return combined_function().limit(); }
  /// Equivalent-loss function of the whole collection as a function of an outside option.
  PiecewiseLinear combined_function() const {
    std::vector<const PiecewiseLinear*> fs;
    for (const auto& h : heads_) fs.push_back(&h);
    return integrate_slope_product(fs);
  }

  /// Index of line j's front after its previous node showed level s (none() before the head).
  double front_index(std::size_t j, int s, std::size_t pos) const { return index_[j](s, pos); }

  RolloutResult run(const Realization& r) const {
    RolloutBuilder b(m_, r);
    const int none = int(m_.k());
    std::vector<int> prev(lines(), none);
    std::vector<std::size_t> pos(lines(), 0);
    for (;;) {
      int best = -1;
      double best_sigma = kInf;
      for (std::size_t j = 0; j < lines(); ++j) {
        if (pos[j] >= m_.lines[j].size()) continue;
        const double sg = front_index(j, prev[j], pos[j]);
        if (best < 0 || sg < best_sigma) {
          best = int(j);
          best_sigma = sg;
        }
      }
      if (best < 0 || !(b.current_min() > best_sigma)) break;
      const int v = m_.lines[best][pos[best]];
      prev[best] = b.open(v, m_.cost[v], m_.raw_cost[v]);
      ++pos[best];
    }
    return std::move(b).finish();
  }

private:
  Model m_;
  std::vector<PayoffTable> tables_;
  std::vector<IndexTable> index_;
  std::vector<PiecewiseLinear> heads_;
};

inline RolloutResult run_multiline_policy(const MultiLineSolver& s, const Realization& r) {
  return s.run(r);
}

// ---------------------------------------------------------------------------------------
// Three-node ordering check: A, B independent random-cost nodes with index(A) <= index(B),
// and C (opened only after both) whose law depends on the realizations of A and B.

struct ThreeNodeInstance {
  EquivalentNode a, b;
  std::vector<std::vector<EquivalentNode>> c;  // c[ia][ib], indexed by atoms of a and b
};

struct OrderingReport {
  int trials = 0;
  int skipped = 0;
  int violations = 0;
  int ties = 0;
  double worst_gap = 0.0;  // max of value(A,B,C) - value(B,A,C)
};

namespace detail {

inline double ev_atom_loss(const EquivalentNode::Atom& a, const std::vector<double>& levels) {
  return a.loss_level < int(levels.size()) ? levels[a.loss_level] : kInf;
}

/// Optimal stopping along a fixed order first, second, C with recall.
inline double order_value(const ThreeNodeInstance& t, bool a_first, const std::vector<double>& lv) {
  const auto& first = a_first ? t.a : t.b;
  const auto& second = a_first ? t.b : t.a;
  double total = 0.0;
  for (std::size_t i = 0; i < first.atoms.size(); ++i) {
    const auto& f = first.atoms[i];
    const double x1 = ev_atom_loss(f, lv);
    // continue value after the first node: open second, then decide on C
    double cont1 = 0.0;
    for (std::size_t j = 0; j < second.atoms.size(); ++j) {
      const auto& s = second.atoms[j];
      const double x2 = std::min(x1, ev_atom_loss(s, lv));
      const auto& c = a_first ? t.c[i][j] : t.c[j][i];
      const double cont2 = c.expected(x2, lv);
      cont1 += s.prob * (s.cost + std::min(x2, cont2));
    }
    total += f.prob * (f.cost + std::min(x1, cont1));
  }
  return total;
}

template <class Rng>
EquivalentNode random_equivalent_node(Rng& rng, std::size_t k, std::size_t max_atoms,
                                      double cost_scale) {
  std::uniform_int_distribution<std::size_t> na(1, max_atoms);
  std::uniform_int_distribution<int> lvl(0, int(k) - 1);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  EquivalentNode g;
  const std::size_t count = na(rng);
  double z = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    const double w = u(rng);
    g.atoms.push_back({lvl(rng), cost_scale * u(rng), w});
    z += w;
  }
  for (auto& a : g.atoms) a.prob /= z;
  return g;
}

}  // namespace detail

/// Brute-force comparison of the two precedence-respecting orders on instances that satisfy
/// index(A) <= index(B) <= index(C | a, b) for every realization (a, b).
template <class Rng>
OrderingReport verify_three_node_ordering(Rng& rng, const std::vector<double>& levels, int trials,
                                          std::size_t max_atoms = 3) {
  OrderingReport rep;
  const std::size_t k = levels.size();
  for (int t = 0; t < trials; ++t) {
    ThreeNodeInstance ins;
    ins.a = detail::random_equivalent_node(rng, k, max_atoms, 0.3);
    ins.b = detail::random_equivalent_node(rng, k, max_atoms, 0.3);
    double sa = equivalent_node_index(ins.a, levels), sb = equivalent_node_index(ins.b, levels);
    if (sa > sb) {
      std::swap(ins.a, ins.b);
      std::swap(sa, sb);
    }
    ins.c.assign(ins.a.atoms.size(), std::vector<EquivalentNode>(ins.b.atoms.size()));
    bool ok = true;
    for (auto& row : ins.c)
      for (auto& c : row) {
        c = detail::random_equivalent_node(rng, k, max_atoms, 0.3);
        if (equivalent_node_index(c, levels) < sb) ok = false;
      }
    if (!ok) {
      ++rep.skipped;
      --t;
      if (rep.skipped > 1000 * std::max(trials, 1)) break;
      continue;
    }
    ++rep.trials;
    const double gap = detail::order_value(ins, true, levels) - detail::order_value(ins, false, levels);
    rep.worst_gap = std::max(rep.worst_gap, gap);
    if (gap > 1e-12) ++rep.violations;
    else if (std::abs(gap) <= 1e-12) ++rep.ties;
  }
  return rep;
}

inline double three_node_order_value(const ThreeNodeInstance& t, bool a_first,
                                     const std::vector<double>& levels) {
  return detail::order_value(t, a_first, levels);
}

}  // namespace pandora
