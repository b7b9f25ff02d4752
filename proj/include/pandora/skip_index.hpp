#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "pandora/line_index.hpp"
#include "pandora/rollout.hpp"

namespace pandora {

/// Payoff table over the transitive closure of a line. Position p = 0 is the start (nothing
/// opened, state `none`); position p >= 1 means line node p - 1 was the last one opened.
class SkipTable {
public:
  std::size_t nodes() const { return n_; }
  std::size_t k() const { return k_; }
  int top() const { return int(k_); }
  int none() const { return int(k_); }
  double level(int x) const { return x == top() ? kInf : levels_[std::size_t(x)]; }
  const std::vector<double>& levels() const { return levels_; }

  double phi(int x, int r, std::size_t p) const { return phi_[at(x, r, p)]; }
  bool stop(int x, int r, std::size_t p) const { return next_[at(x, r, p)] < 0; }
  /// Line position of the node to open next, or -1 to stop.
  int next(int x, int r, std::size_t p) const { return next_[at(x, r, p)]; }
  double value() const { return phi(top(), none(), 0); }

private:
  friend SkipTable build_skip_table(const Model& m);
  std::size_t at(int x, int r, std::size_t p) const {
    return (p * (k_ + 1) + std::size_t(r)) * (k_ + 1) + std::size_t(x);
  }

  std::size_t n_ = 0, k_ = 0;
  std::vector<double> levels_;
  std::vector<double> phi_;
  std::vector<int> next_;
};

/// Law of line node j given line node i < j, as the product of the step kernels in between.
/// Row r is the law of node j when node i showed level r.
inline std::vector<std::vector<double>> skip_kernel(const Model& m, std::size_t i, std::size_t j) {
  const auto& line = m.lines.front();
  const std::size_t k = m.k();
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t r = 0; r < k; ++r) {
    std::vector<double> d(k, 0.0);
    d[r] = 1.0;
    for (std::size_t q = i + 1; q <= j; ++q) d = m.kernel[line[q]].propagate(Pmf(d)).probs();
    out[r] = d;
  }
  return out;
}

/// Phi(x, r, p) = min{ x, min_{j >= p} c(p, j + 1) + sum_y K(r, y) Phi(min{x, y}, y, j + 1) },
/// with skip kernels built on the fly as products of step kernels.
inline SkipTable build_skip_table(const Model& m) {
  if (m.topology != Topology::SkipLine) throw InputError("skip table expects a skipline instance");
  const auto& line = m.lines.front();
  const std::size_t n = line.size(), k = m.k();
  SkipTable t;
  t.n_ = n;
  t.k_ = k;
  t.levels_ = m.levels;
  t.phi_.assign((n + 1) * (k + 1) * (k + 1), 0.0);
  t.next_.assign(t.phi_.size(), -1);

  for (std::size_t p = n + 1; p-- > 0;) {
    for (std::size_t r = 0; r <= k; ++r) {
      if ((p == 0) != (r == k)) continue;
      std::vector<double> best(k + 1, kInf);
      std::vector<int> arg(k + 1, -1);
      std::vector<double> law;
      for (std::size_t j = p; j < n; ++j) {
        if (j == p) {
          law = p == 0 ? m.root_pmf[line[0]].probs() : m.kernel[line[j]].row(r);
        } else {
          law = m.kernel[line[j]].propagate(Pmf(law)).probs();
        }
        const double c = m.skip_cost[p][j + 1];
        for (std::size_t x = 0; x <= k; ++x) {
          double z = c;
          for (std::size_t y = 0; y < k; ++y)
            if (law[y] > 0.0) z += law[y] * t.phi(int(std::min(x, y)), int(y), j + 1);
          if (z < best[x] - kTieTol) {
            best[x] = z;
            arg[x] = int(j);
          }
        }
      }
      for (std::size_t x = 0; x <= k; ++x) {
        const double xv = t.level(int(x));
        const std::size_t a = t.at(int(x), int(r), p);
        if (arg[x] < 0 || xv <= best[x] + kTieTol) {
          t.phi_[a] = xv;
          t.next_[a] = -1;
        } else {
          t.phi_[a] = best[x];
          t.next_[a] = arg[x];
        }
      }
    }
  }
  return t;
}
inline SkipTable build_skip_table(const ExplorationInstance& inst) { return build_skip_table(compile(inst)); }

/// Follows the table's stop/next pointers, paying the edge cost of each jump.
inline RolloutResult run_skip_policy(const SkipTable& t, const Model& m, const Realization& r) {
  const auto& line = m.lines.front();
  RolloutBuilder b(m, r);
  int x = t.top(), s = t.none();
  std::size_t p = 0;
  for (;;) {
    const int j = t.next(x, s, p);
    if (j < 0) break;
    const int v = line[std::size_t(j)];
    s = b.open(v, m.skip_cost[p][std::size_t(j) + 1], m.raw_skip_cost[p][std::size_t(j) + 1]);
    x = std::min(x, s);
    p = std::size_t(j) + 1;
  }
  return std::move(b).finish();
}

inline void write_skip_table_csv(std::ostream& os, const SkipTable& t) {
  os << "i,s,x,phi,stop,next\n";
  char buf[64];
  for (std::size_t p = 0; p <= t.nodes(); ++p)
    for (int s = 0; s <= int(t.k()); ++s) {
      if ((p == 0) != (s == t.none())) continue;
      for (int x = 0; x <= int(t.k()); ++x) {
        std::snprintf(buf, sizeof buf, "%.17g", t.phi(x, s, p));
        const int j = t.next(x, s, p);
        os << p << ',' << (s == t.none() ? std::string("none") : std::to_string(s)) << ','
           << (x == t.top() ? std::string("top") : std::to_string(x)) << ',' << buf << ',' << int(j < 0) << ','
           << (j < 0 ? std::string("-") : std::to_string(j + 1)) << '\n';
      }
    }
}

}  // namespace pandora
