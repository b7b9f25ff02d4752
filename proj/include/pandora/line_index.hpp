#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

#include "pandora/instance.hpp"
#include "pandora/piecewise.hpp"
#include "pandora/rollout.hpp"

namespace pandora {

/// Slack for the stop test x <= z, so indifference resolves to stopping despite rounding.
inline constexpr double kTieTol = 1e-12;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Backward-induction table for a single directed line.
///
/// Entries are indexed by (x, s, i): x is the current minimum as a level index or top()
/// (nothing inspected yet), s is the previous node's level or none() (before node 1, or
/// unconditioned), and i is the next node to open. phi is the optimal expected remaining
/// loss plus cost, stop the optimal decision. Exactly (k+1)^2 * n entries.
class PayoffTable {
public:
  PayoffTable() = default;

  std::size_t nodes() const { return n_; }
  std::size_t k() const { return k_; }
  int top() const { return int(k_); }
  int none() const { return int(k_); }
  std::size_t entries() const { return phi_.size(); }

  double phi(int x, int s, std::size_t i) const { return phi_[at(x, s, i)]; }
  bool stop(int x, int s, std::size_t i) const { return stop_[at(x, s, i)] != 0; }

  /// Value of the whole line: nothing inspected, before node 1.
  double value() const { return n_ == 0 ? 0.0 : phi(top(), none(), 0); }

  double level(int x) const { return levels_[x]; }
  const std::vector<double>& levels() const { return levels_; }
  double cost(std::size_t i) const { return cost_[i]; }
  /// Law of node i given s (s = none() gives the unconditional marginal).
  const std::vector<double>& law(std::size_t i, int s) const { return law_[i][s]; }

private:
  std::size_t at(int x, int s, std::size_t i) const {
    return (i * (k_ + 1) + std::size_t(s)) * (k_ + 1) + std::size_t(x);
  }

  std::size_t n_ = 0, k_ = 0;
  std::vector<double> levels_;
  std::vector<double> cost_;
  std::vector<std::vector<std::vector<double>>> law_;  // [i][s][y]
  std::vector<double> phi_;
  std::vector<std::uint8_t> stop_;

  friend PayoffTable build_payoff_table(std::vector<double>, std::vector<double>,
                                        std::vector<std::vector<std::vector<double>>>);
};

/// Fills the table from the last node backwards. law[i][s] for s in [0, k] (k = none).
inline PayoffTable build_payoff_table(std::vector<double> levels, std::vector<double> costs,
                                      std::vector<std::vector<std::vector<double>>> law) {
  PayoffTable t;
  t.n_ = costs.size();
  t.k_ = levels.size();
  t.levels_ = std::move(levels);
  t.cost_ = std::move(costs);
  t.law_ = std::move(law);
  const std::size_t n = t.n_, k = t.k_;
  t.phi_.assign((k + 1) * (k + 1) * n, 0.0);
  t.stop_.assign((k + 1) * (k + 1) * n, 0);

  for (std::size_t i = n; i-- > 0;) {
    const bool last = (i + 1 == n);
    for (std::size_t s = 0; s <= k; ++s) {
      const auto& row = t.law_[i][s];
      for (std::size_t x = 0; x <= k; ++x) {
        double z = t.cost_[i];
        for (std::size_t y = 0; y < k; ++y) {
          if (row[y] == 0.0) continue;
          const int m = (x == k) ? int(y) : int(std::min(x, y));
          z += row[y] * (last ? t.levels_[m] : t.phi(m, int(y), i + 1));
        }
        const std::size_t a = t.at(int(x), int(s), i);
        if (x < k && t.levels_[x] <= z + kTieTol) {
          t.stop_[a] = 1;
          t.phi_[a] = t.levels_[x];
        } else {
          t.phi_[a] = z;
        }
      }
    }
  }
  return t;
}

inline PayoffTable build_payoff_table(const Model& m, const std::vector<int>& line) {
  const std::size_t k = m.k();
  std::vector<double> costs;
  std::vector<std::vector<std::vector<double>>> law;
  const auto marg = m.marginals();
  for (std::size_t i = 0; i < line.size(); ++i) {
    const int v = line[i];
    costs.push_back(m.cost[v]);
    std::vector<std::vector<double>> rows(k + 1);
    for (std::size_t s = 0; s < k; ++s) rows[s] = m.law(v, int(s));
    rows[k] = marg[v].probs();
    law.push_back(std::move(rows));
  }
  return build_payoff_table(m.levels, std::move(costs), std::move(law));
}

inline PayoffTable build_payoff_table(const ExplorationInstance& inst) {
  if (inst.topology != Topology::Line) throw InputError("build_payoff_table expects a line");
  const Model m = compile(inst);
  return build_payoff_table(m, m.lines.front());
}

/// phi and stop at one real-valued current minimum x, for every (s, i).
struct OffGridColumn {
  double x = 0.0;
  std::vector<std::vector<double>> phi;   // [i][s]
  std::vector<std::vector<double>> cont;  // continuation value z(x, s, i)
  std::vector<std::vector<std::uint8_t>> stop;
};

/// Re-runs the backward recursion at a real x; grid entries below x come from the table.
/// Rows below `from` are left empty. O((n - from) k^2).
inline OffGridColumn evaluate_column(const PayoffTable& t, double x, std::size_t from = 0) {
  const std::size_t n = t.nodes(), k = t.k();
  OffGridColumn c;
  c.x = x;
  c.phi.assign(n, std::vector<double>(k + 1, 0.0));
  c.cont = c.phi;
  c.stop.assign(n, std::vector<std::uint8_t>(k + 1, 0));
  for (std::size_t i = n; i-- > from;) {
    const bool last = (i + 1 == n);
    for (std::size_t s = 0; s <= k; ++s) {
      const auto& row = t.law(i, int(s));
      double z = t.cost(i);
      for (std::size_t y = 0; y < k; ++y) {
        if (row[y] == 0.0) continue;
        double next;
        if (t.level(int(y)) <= x) next = last ? t.level(int(y)) : t.phi(int(y), int(y), i + 1);
        else next = last ? x : c.phi[i + 1][y];
        z += row[y] * next;
      }
      c.cont[i][s] = z;
      if (x <= z + kTieTol) {
        c.stop[i][s] = 1;
        c.phi[i][s] = x;
      } else {
        c.phi[i][s] = z;
      }
    }
  }
  return c;
}

/// Continuation value z(x, s, i) at real x: pay c_i, open node i, then act optimally.
inline double continuation_value(const PayoffTable& t, double x, int s, std::size_t i) {
  return evaluate_column(t, x, i).cont[i][s];
}

/// Dynamic index: the largest x at which stopping is optimal in state (x, s, i). The stop
/// set in x is an interval [0, sigma]; sigma is bracketed by the grid stop column and then
/// located by bisection on z(x) - x, which is piecewise linear in x.
inline double dynamic_index(const PayoffTable& t, int s, std::size_t i) {
  if (i >= t.nodes()) return kNegInf;
  const int k = int(t.k());
  int last_stop = -1;
  for (int x = 0; x < k; ++x)
    if (t.stop(x, s, i)) last_stop = x;
  if (last_stop == k - 1) return t.phi(t.top(), s, i);  // z is constant above v_k

  double lo = last_stop < 0 ? std::min(0.0, t.level(0)) : t.level(last_stop);
  double hi = t.level(last_stop + 1);
  const double lo0 = lo, hi0 = hi;
  auto h = [&](double x) { return continuation_value(t, x, s, i) - x; };
  double hlo = h(lo), hhi = h(hi);
  for (int it = 0; it < 60 && hi - lo > 1e-9 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double hm = h(mid);
    if (hm >= 0.0) {
      lo = mid;
      hlo = hm;
    } else {
      hi = mid;
      hhi = hm;
    }
  }
  // The bracket now sits on one linear piece of h; finish with a secant step.
  double sigma = lo;
  if (hlo > 0.0 && hhi < 0.0) sigma = lo + hlo * (hi - lo) / (hlo - hhi);
  return std::clamp(sigma, lo0, hi0);
}

/// Phi(., s, i) of every state as an exact piecewise-linear function of the current minimum:
///   Phi_i(x | s) = min{ x, c_i + sum_y P_i(y | s) Phi_{i+1}(min{x, v_y} | y) },  Phi_n(x) = x.
inline std::vector<std::vector<PiecewiseLinear>> table_functions(const PayoffTable& t) {
  const std::size_t n = t.nodes(), k = t.k();
  std::vector<std::vector<PiecewiseLinear>> out(n);
  std::vector<PiecewiseLinear> next(k, PiecewiseLinear::identity());
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t s = 0; s <= k; ++s) {
      PiecewiseLinear z = PiecewiseLinear::constant(t.cost(i));
      const auto& row = t.law(i, int(s));
      for (std::size_t y = 0; y < k; ++y) {
        if (row[y] == 0.0) continue;
        auto g = next[y].clamped(t.level(int(y)));
        g *= row[y];
        z = z + g;
      }
      out[i].push_back(z.min_with_identity());
    }
    next.assign(out[i].begin(), out[i].begin() + std::ptrdiff_t(k));
  }
  return out;
}

/// sigma(s, i) for every previous level s (or none) and next node i; sigma(., n) = -inf.
/// Read off as the last fixed point of the exact Phi functions.
class IndexTable {
public:
  IndexTable() = default;
  explicit IndexTable(const PayoffTable& t)
      : k_(t.k()), sigma_((t.nodes() + 1) * (t.k() + 1), kNegInf) {
    const auto fns = table_functions(t);
    for (std::size_t i = 0; i < t.nodes(); ++i)
      for (std::size_t s = 0; s <= k_; ++s) sigma_[i * (k_ + 1) + s] = fns[i][s].last_fixed_point(kTieTol);
  }
  double operator()(int s, std::size_t i) const { return sigma_[i * (k_ + 1) + std::size_t(s)]; }
  std::size_t nodes() const { return sigma_.size() / (k_ + 1) - 1; }
  std::size_t k() const { return k_; }

private:
  std::size_t k_ = 0;
  std::vector<double> sigma_;
};

/// Joint law of (last opened node, minimum among opened nodes) from a state onwards.
/// last == i-1 means nothing was opened; min_level == k then stands for "none".
struct FutureAtom {
  int last;
  int min_level;
  double cost;
  double prob;
};

struct FutureOutcome {
  std::vector<FutureAtom> atoms;

  /// E[min{x, futureMin} + futureCost]; x = +inf stands for the top sentinel.
  double expectation(double x, const std::vector<double>& levels) const {
    double e = 0.0;
    for (const auto& a : atoms) {
      const double fm = a.min_level < int(levels.size()) ? levels[a.min_level] : kInf;
      e += a.prob * (std::min(x, fm) + a.cost);
    }
    return e;
  }
  double total_probability() const {
    double p = 0.0;
    for (const auto& a : atoms) p += a.prob;
    return p;
  }
};

namespace detail {

/// Forward propagation of the optimal policy started at (x, s, i); x = +inf is top.
inline FutureOutcome propagate_future(const PayoffTable& t, double x, int s, std::size_t i,
                                      bool force_open) {
  const std::size_t n = t.nodes(), k = t.k();
  const bool top = !(x < kInf);
  OffGridColumn col;
  if (!top) col = evaluate_column(t, x, i);
  auto stops = [&](int omin, int prev, std::size_t j) {
    // Current minimum is min(x, level(omin)); use the grid column when it is a grid value.
    if (omin < int(k) && (top || t.level(omin) <= x)) return t.stop(omin, prev, j);
    if (top) return t.stop(t.top(), prev, j);
    return col.stop[j][prev] != 0;
  };
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) prefix[j + 1] = prefix[j] + t.cost(j);

  std::map<std::pair<int, int>, double> out;
  // mass[omin][prev], omin in [0, k] (k = none opened)
  std::vector<std::vector<double>> mass(k + 1, std::vector<double>(k + 1, 0.0));
  mass[k][s] = 1.0;
  for (std::size_t j = i; j <= n; ++j) {
    std::vector<std::vector<double>> next(k + 1, std::vector<double>(k + 1, 0.0));
    for (std::size_t om = 0; om <= k; ++om)
      for (std::size_t pv = 0; pv <= k; ++pv) {
        const double w = mass[om][pv];
        if (w == 0.0) continue;
        const bool forced = force_open && j == i;
        if (j == n || (!forced && stops(int(om), int(pv), j))) {
          out[{int(j) - 1, int(om)}] += w;
          continue;
        }
        const auto& row = t.law(j, int(pv));
        for (std::size_t y = 0; y < k; ++y)
          if (row[y] != 0.0) next[std::min(om, y)][y] += w * row[y];
      }
    mass = std::move(next);
  }
  FutureOutcome f;
  for (const auto& [key, p] : out)
    f.atoms.push_back({key.first, key.second, prefix[std::size_t(key.first + 1)] - prefix[i], p});
  return f;
}

}  // namespace detail

/// Outcome law of the optimal policy from state (x, s, i). x may be off-grid; +inf is top.
inline FutureOutcome future_outcome(const PayoffTable& t, double x, int s, std::size_t i) {
  return detail::propagate_future(t, x, s, i, false);
}
/// Same, but node i is opened unconditionally first (the continuation branch).
inline FutureOutcome continuation_outcome(const PayoffTable& t, double x, int s, std::size_t i) {
  return detail::propagate_future(t, x, s, i, true);
}

/// Executes the stop table on one realization of the line's nodes.
inline RolloutResult run_policy(const PayoffTable& t, const Model& m, const std::vector<int>& line,
                                const Realization& r) {
  RolloutBuilder b(m, r);
  int x = t.top(), s = t.none();
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (t.stop(x, s, i)) break;
    const int v = line[i];
    const int y = b.open(v, m.cost[v], m.raw_cost[v]);
    x = (x == t.top()) ? y : std::min(x, y);
    s = y;
  }
  return std::move(b).finish();
}

inline void write_table_csv(std::ostream& os, const PayoffTable& t) {
  os << "i,s,x,phi,stop\n";
  auto lab = [&](int v) { return v == int(t.k()) ? std::string("-") : std::to_string(v); };
  char buf[64];
  for (std::size_t i = 0; i < t.nodes(); ++i)
    for (int s = 0; s <= int(t.k()); ++s)
      for (int x = 0; x <= int(t.k()); ++x) {
        std::snprintf(buf, sizeof buf, "%.17g", t.phi(x, s, i));
        os << i + 1 << ',' << (s == t.none() ? "none" : lab(s)) << ','
           << (x == t.top() ? "top" : lab(x)) << ',' << buf << ',' << int(t.stop(x, s, i)) << '\n';
      }
}

inline void write_index_csv(std::ostream& os, const IndexTable& idx) {
  os << "i,s,sigma\n";
  char buf[64];
  for (std::size_t i = 0; i < idx.nodes(); ++i)
    for (int s = 0; s <= int(idx.k()); ++s) {
      std::snprintf(buf, sizeof buf, "%.17g", idx(s, i));
      os << i + 1 << ',' << (s == int(idx.k()) ? std::string("none") : std::to_string(s)) << ','
         << buf << '\n';
    }
}

}  // namespace pandora
