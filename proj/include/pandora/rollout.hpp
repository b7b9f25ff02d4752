#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "pandora/instance.hpp"

namespace pandora {

/// Level index of every node for one input; policies only read the nodes they open.
using Realization = std::vector<int>;

struct RolloutResult {
  int exit_node = -1;            // node whose loss is served
  std::vector<int> inspected;    // opening order
  int loss_level = -1;
  double loss = 0.0;             // effective (lambda-weighted) loss of exit_node
  double cost = 0.0;             // effective cost paid
  double raw_loss = 0.0;
  double raw_cost = 0.0;
  double objective() const { return loss + cost; }
};

/// Records each opening and keeps the running minimum (first node attaining it wins).
class RolloutBuilder {
public:
  RolloutBuilder(const Model& m, const Realization& r) : m_(m), r_(r) {
    if (r.size() != m.size()) throw std::invalid_argument("realization length != node count");
  }

  /// Opens node v paying the given (effective, raw) cost; returns the observed level.
  int open(int v, double cost, double raw_cost) {
    const int lvl = r_[v];
    if (lvl < 0 || std::size_t(lvl) >= m_.k()) throw std::out_of_range("unknown loss level");
    out_.inspected.push_back(v);
    out_.cost += cost;
    out_.raw_cost += raw_cost;
    if (out_.exit_node < 0 || m_.levels[lvl] < out_.loss ||
        (m_.levels[lvl] == out_.loss && lvl < out_.loss_level)) {
      out_.exit_node = v;
      out_.loss_level = lvl;
      out_.loss = m_.levels[lvl];
      out_.raw_loss = m_.raw_levels[lvl];
    }
    return lvl;
  }
  /// Effective running minimum, +inf before the first opening.
  double current_min() const {
    return out_.exit_node < 0 ? std::numeric_limits<double>::infinity() : out_.loss;
  }
  int current_min_level() const { return out_.loss_level; }
  RolloutResult finish() && { return std::move(out_); }

private:
  const Model& m_;
  const Realization& r_;
  RolloutResult out_;
};

inline int sample_index(const std::vector<double>& p, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return int(i);
  }
  for (std::size_t i = p.size(); i-- > 0;)
    if (p[i] > 0.0) return int(i);
  return 0;
}

/// Draws a joint realization following the parent-to-child kernels.
template <class Rng>
Realization sample_realization(const Model& m, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Realization r(m.size(), -1);
  for (int v : m.topological_order()) r[v] = sample_index(m.law(v, m.parent[v] < 0 ? 0 : r[m.parent[v]]), unif(rng));
  return r;
}

/// Counter-based seed splitting so sample i sees the same stream regardless of threading.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
inline std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

/// Enumerates the joint outcome space as (realization, probability) atoms.
struct JointAtom {
  Realization levels;
  double prob;
};

inline std::vector<JointAtom> enumerate_joint(const Model& m, std::size_t max_atoms = 1'000'000) {
  const auto order = m.topological_order();
  std::vector<JointAtom> atoms{{Realization(m.size(), -1), 1.0}};
  for (int v : order) {
    std::vector<JointAtom> next;
    for (const auto& a : atoms) {
      const auto& p = m.law(v, m.parent[v] < 0 ? 0 : a.levels[m.parent[v]]);
      for (std::size_t y = 0; y < p.size(); ++y) {
        if (p[y] == 0.0) continue;
        JointAtom b = a;
        b.levels[v] = int(y);
        b.prob *= p[y];
        next.push_back(std::move(b));
      }
    }
    atoms = std::move(next);
    if (atoms.size() > max_atoms)
      throw std::length_error("joint outcome space exceeds " + std::to_string(max_atoms) + " atoms");
  }
  return atoms;
}

}  // namespace pandora
