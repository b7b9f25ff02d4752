#pragma once

#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "pandora/instance.hpp"

namespace pandora::gen {

template <class Rng>
Pmf random_pmf(Rng& rng, std::size_t k, double sparsity = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(k);
  double z = 0.0;
  for (auto& x : p) {
    x = (u(rng) < sparsity) ? 0.0 : u(rng) + 0.01;
    z += x;
  }
  if (z == 0.0) {
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    z = 1.0;
  }
  for (auto& x : p) x /= z;
  return Pmf(std::move(p));
}

template <class Rng>
TransitionMatrix random_kernel(Rng& rng, std::size_t k, double sparsity = 0.0) {
  std::vector<std::vector<double>> rows;
  for (std::size_t a = 0; a < k; ++a) rows.push_back(random_pmf(rng, k, sparsity).probs());
  return TransitionMatrix(std::move(rows));
}

template <class Rng>
Support random_support(Rng& rng, std::size_t k, double lo = 0.05, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::set<double> vals;
  while (vals.size() < k) vals.insert(u(rng));
  return Support(std::vector<double>(vals.begin(), vals.end()));
}

struct Shape {
  double lambda = 0.5;
  double cost_lo = 0.01;
  double cost_hi = 0.5;
  double sparsity = 0.2;
};

template <class Rng>
NodeSpec random_node(Rng& rng, const std::string& id, std::size_t k, bool root, const Shape& sh) {
  std::uniform_real_distribution<double> uc(sh.cost_lo, sh.cost_hi);
  NodeSpec n;
  n.id = id;
  n.cost = uc(rng);
  if (root) n.loss = random_pmf(rng, k, sh.sparsity);
  else n.loss = random_kernel(rng, k, sh.sparsity);
  return n;
}

template <class Rng>
ExplorationInstance random_line(Rng& rng, std::size_t n, std::size_t k, const Shape& sh = {}) {
  ExplorationInstance inst;
  inst.topology = Topology::Line;
  inst.support = random_support(rng, k);
  inst.lambda = sh.lambda;
  for (std::size_t i = 0; i < n; ++i) inst.nodes.push_back(random_node(rng, "n" + std::to_string(i + 1), k, i == 0, sh));
  return inst;
}

/// `n` nodes split over `q` nonempty lines.
template <class Rng>
ExplorationInstance random_multiline(Rng& rng, std::size_t n, std::size_t q, std::size_t k,
                                     const Shape& sh = {}) {
  ExplorationInstance inst;
  inst.topology = Topology::MultiLine;
  inst.support = random_support(rng, k);
  inst.lambda = sh.lambda;
  std::vector<int> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = int(i < q ? i : std::uniform_int_distribution<std::size_t>(0, q - 1)(rng));
  std::shuffle(label.begin(), label.end(), rng);
  std::set<int> seen;
  for (std::size_t i = 0; i < n; ++i) {
    auto node = random_node(rng, "n" + std::to_string(i + 1), k, seen.insert(label[i]).second, sh);
    node.line = label[i];
    inst.nodes.push_back(std::move(node));
  }
  return inst;
}

/// Random forest: node i > 0 attaches to a uniformly chosen earlier node, or becomes a new
/// root with probability `root_prob`.
template <class Rng>
ExplorationInstance random_tree(Rng& rng, std::size_t n, std::size_t k, const Shape& sh = {},
                                double root_prob = 0.15) {
  ExplorationInstance inst;
  inst.topology = Topology::Tree;
  inst.support = random_support(rng, k);
  inst.lambda = sh.lambda;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool root = (i == 0) || u(rng) < root_prob;
    auto node = random_node(rng, "n" + std::to_string(i + 1), k, root, sh);
    if (!root) {
      const std::size_t p = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      node.parents = {inst.nodes[p].id};
    }
    inst.nodes.push_back(std::move(node));
  }
  return inst;
}

enum class SkipCosts { Random, PathSum, Affine };

template <class Rng>
ExplorationInstance random_skipline(Rng& rng, std::size_t n, std::size_t k, SkipCosts mode,
                                    const Shape& sh = {}) {
  auto inst = random_line(rng, n, k, sh);
  inst.topology = Topology::SkipLine;
  std::vector<double> step;
  for (const auto& node : inst.nodes) step.push_back(node.cost);
  std::uniform_real_distribution<double> uc(sh.cost_lo, sh.cost_hi);
  switch (mode) {
    case SkipCosts::PathSum: inst.skip_costs = SkipCostTable::path_sum(step); break;
    case SkipCosts::Affine: inst.skip_costs = SkipCostTable::affine(n, uc(rng), uc(rng) * 0.5); break;
    case SkipCosts::Random: {
      std::vector<std::vector<double>> m(n + 1, std::vector<double>(n + 1, 0.0));
      for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = i + 1; j <= n; ++j) m[i][j] = uc(rng);
      inst.skip_costs = SkipCostTable(std::move(m));
      break;
    }
  }
  return inst;
}

/// Line whose every non-head node shares one kernel.
inline ExplorationInstance static_line(const Support& sup, double lambda, const Pmf& root,
                                       const TransitionMatrix& kernel, std::size_t n, double cost) {
  std::vector<TransitionMatrix> ks(n - 1, kernel);
  return make_line(sup, lambda, root, std::move(ks), std::vector<double>(n, cost));
}

/// Kernel that mixes fast: rows are (1 - w) * noise + w * a common target pmf.
template <class Rng>
TransitionMatrix fast_mixing_kernel(Rng& rng, std::size_t k, double w = 0.7) {
  const auto target = random_pmf(rng, k);
  std::vector<std::vector<double>> rows;
  for (std::size_t a = 0; a < k; ++a) {
    auto noise = random_pmf(rng, k);
    std::vector<double> r(k);
    for (std::size_t b = 0; b < k; ++b) r[b] = (1 - w) * noise[b] + w * target[b];
    rows.push_back(r);
  }
  return TransitionMatrix(std::move(rows));
}

}  // namespace pandora::gen
