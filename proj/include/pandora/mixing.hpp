#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "pandora/instance.hpp"
#include "pandora/multiline_index.hpp"

namespace pandora {

/// Which end of the support a tail event targets. Lower: the running minimum reaches a level
/// at or below j (good outcomes for losses). Upper: the running maximum reaches j or above.
enum class TailDirection { Lower, Upper };

struct MixingProfile {
  Pmf pi;
  double alpha = 0.0;
  double C = 1.0;
  std::size_t horizon_probe = 0;
};

namespace detail {

inline Eigen::MatrixXd to_eigen(const TransitionMatrix& P) {
  const std::size_t k = P.size();
  Eigen::MatrixXd M(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) M(Eigen::Index(a), Eigen::Index(b)) = P(a, b);
  return M;
}

/// Some power P^m, m <= k^2, has every entry positive.
inline bool is_primitive(const TransitionMatrix& P) {
  const auto k = Eigen::Index(P.size());
  Eigen::MatrixXd A = (to_eigen(P).array() > 0.0).cast<double>().matrix();
  Eigen::MatrixXd M = A;
  for (Eigen::Index m = 1; m <= k * k; ++m) {
    if ((M.array() > 0.0).all()) return true;
    M = ((M * A).array() > 0.0).cast<double>().matrix();
  }
  return false;
}

inline double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace detail

/// Unique stationary law of an irreducible aperiodic chain, by power iteration.
inline Pmf stationary_distribution(const TransitionMatrix& P) {
  if (!detail::is_primitive(P)) throw InputError("no unique stationary distribution");
  const std::size_t k = P.size();
  Pmf v = Pmf::uniform(k);
  for (int it = 0; it < 10'000'000; ++it) {
    Pmf w = P.propagate(v);
    double z = 0.0;
    for (double x : w.probs()) z += x;
    std::vector<double> p = w.probs();
    for (auto& x : p) x /= z;
    const double res = detail::tv(p, v.probs());
    v = Pmf(std::move(p));
    if (res <= 1e-14) break;
  }
  return v;
}

/// Geometric mixing envelope max_i TV(P^t(i, .), pi) <= C alpha^t, certified for t <= probe.
/// alpha is the second-largest eigenvalue modulus; a probe of 0 picks 10 * ceil(1 / (1 - alpha)).
inline MixingProfile mixing_constants(const TransitionMatrix& P, std::size_t horizon_probe = 0) {
  MixingProfile out;
  out.pi = stationary_distribution(P);
  const std::size_t k = P.size();
  Eigen::EigenSolver<Eigen::MatrixXd> es(detail::to_eigen(P), false);
  std::vector<double> mods;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) mods.push_back(std::abs(es.eigenvalues()[i]));
  std::sort(mods.rbegin(), mods.rend());
  const double second = mods.size() > 1 ? mods[1] : 0.0;
  out.alpha = std::clamp(second, 1e-9, 1.0 - 1e-9);
  out.horizon_probe = horizon_probe ? horizon_probe : 10 * std::size_t(std::ceil(1.0 / (1.0 - out.alpha)));

  std::vector<std::vector<double>> rows(k);
  for (std::size_t i = 0; i < k; ++i) {
    rows[i].assign(k, 0.0);
    rows[i][i] = 1.0;
  }
  double C = 1.0;
  for (std::size_t t = 1; t <= out.horizon_probe; ++t) {
    double worst = 0.0;
    for (auto& r : rows) {
      r = P.propagate(Pmf(r)).probs();
      worst = std::max(worst, detail::tv(r, out.pi.probs()));
    }
    if (worst <= 1e-15) break;  // mixed to rounding
    C = std::max(C, worst / std::pow(out.alpha, double(t)));
  }
  out.C = C;
  return out;
}

/// Stationary mass of the target tail at level j.
inline double tail_mass(const Pmf& pi, std::size_t j, TailDirection dir) {
  double s = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i)
    if (dir == TailDirection::Upper ? i >= j : i <= j) s += pi[i];
  return s;
}

/// t_delta = ceil(max{ 2C / (m (1 - alpha)), log(delta) / log(1 - m / 2) }), m the
/// stationary mass of the target tail.
inline std::size_t truncation_horizon(const MixingProfile& prof, std::size_t j, double delta,
                                      TailDirection dir = TailDirection::Lower) {
  if (!(delta > 0.0 && delta < 1.0)) throw InputError("delta must lie in (0, 1)");
  const double m = tail_mass(prof.pi, j, dir);
  if (!(m > 0.0)) throw InputError("target level has zero stationary mass");
  const double first = 2.0 * prof.C / (m * (1.0 - prof.alpha));
  const double second = std::log(delta) / std::log1p(-m / 2.0);
  return std::size_t(std::ceil(std::max(first, second) - 1e-12));
}

/// Exact probability that the chain started from `root` hits the target tail at level j
/// within its first t values, by propagating the not-yet-hit mass.
inline double max_tail_probability(const TransitionMatrix& P, const Pmf& root, std::size_t j, std::size_t t,
                                   TailDirection dir = TailDirection::Upper) {
  if (t == 0) return 0.0;
  const std::size_t k = P.size();
  auto hit = [&](std::size_t i) { return dir == TailDirection::Upper ? i >= j : i <= j; };
  std::vector<double> u = root.probs();
  for (std::size_t i = 0; i < k; ++i)
    if (hit(i)) u[i] = 0.0;
  for (std::size_t s = 1; s < t; ++s) {
    u = P.propagate(Pmf(u)).probs();
    for (std::size_t i = 0; i < k; ++i)
      if (hit(i)) u[i] = 0.0;
  }
  double alive = 0.0;
  for (double x : u) alive += x;
  return 1.0 - alive;
}

struct TruncationReport {
  std::size_t t_delta = 0;
  std::vector<std::size_t> line_t_delta;
  Pmf pi;  // stationary law of the line that set t_delta
  double alpha = 0.0;
  double C = 1.0;
  double delta = 0.0;
  double gap_bound = 0.0;
  std::optional<double> full_value;
  double truncated_value = 0.0;
  ExplorationInstance truncated;
};

/// The kernel shared by every non-head node of a line, if there is one.
inline std::optional<TransitionMatrix> static_kernel(const Model& m, const std::vector<int>& line) {
  if (line.size() < 2) return std::nullopt;
  const auto& P = m.kernel[line[1]];
  for (std::size_t i = 2; i < line.size(); ++i) {
    const auto& Q = m.kernel[line[i]];
    for (std::size_t a = 0; a < m.k(); ++a)
      for (std::size_t b = 0; b < m.k(); ++b)
        if (std::abs(P(a, b) - Q(a, b)) > kProbTol) return std::nullopt;
  }
  return P;
}

/// Keeps the first t_delta nodes of every line, with t_delta the largest per-line horizon
/// for reaching the lowest loss level, and solves the shortened instance.
inline TruncationReport truncated_solve(const ExplorationInstance& inst, double delta, bool solve_full = true,
                                        std::size_t horizon_probe = 0) {
  if (inst.topology != Topology::Line && inst.topology != Topology::MultiLine)
    throw InputError("truncation expects a line or multiline instance");
  const Model m = compile(inst);
  TruncationReport rep;
  rep.delta = delta;
  for (const auto& line : m.lines) {
    std::size_t td = 1;
    if (const auto P = static_kernel(m, line)) {
      const auto prof = mixing_constants(*P, horizon_probe);
      td = truncation_horizon(prof, 0, delta, TailDirection::Lower);
      if (rep.line_t_delta.empty() || td > rep.t_delta) {
        rep.pi = prof.pi;
        rep.alpha = prof.alpha;
        rep.C = prof.C;
      }
    } else if (line.size() >= 2) {
      throw InputError("requires static transition");
    }
    rep.line_t_delta.push_back(td);
    rep.t_delta = std::max(rep.t_delta, td);
  }
  const double vmax = m.levels.back();
  rep.gap_bound = 2.0 * double(m.lines.size()) * delta * vmax;

  rep.truncated = inst;
  rep.truncated.nodes.clear();
  for (const auto& line : m.lines)
    for (std::size_t i = 0; i < line.size() && i < rep.t_delta; ++i) rep.truncated.nodes.push_back(inst.nodes[line[i]]);
  rep.truncated_value = MultiLineSolver(rep.truncated).value();
  if (solve_full) rep.full_value = MultiLineSolver(m).value();
  return rep;
}

}  // namespace pandora
