#pragma once

#include <vector>

#include "pandora/instance.hpp"

namespace pandora::testing {

/// Line whose effective losses and costs equal the given numbers (lambda = 1/2, raw values
/// doubled), so worked examples can be stated directly in solver units.
inline ExplorationInstance effective_line(std::vector<double> levels, Pmf root,
                                          std::vector<TransitionMatrix> kernels,
                                          std::vector<double> costs) {
  for (auto& v : levels) v *= 2.0;
  for (auto& c : costs) c *= 2.0;
  return make_line(Support(levels), 0.5, std::move(root), std::move(kernels), std::move(costs));
}

/// Two nodes over {0, 1}, both uniform and independent, cost 0.1 each (effective).
inline ExplorationInstance two_node_uniform() {
  return effective_line({0.0, 1.0}, Pmf::uniform(2), {TransitionMatrix::independent(Pmf::uniform(2))},
                        {0.1, 0.1});
}

/// Tree in solver units. parents[i] is the index of node i's parent, or -1 for a root.
inline ExplorationInstance effective_tree(std::vector<double> levels, const std::vector<int>& parents,
                                          const std::vector<LossModel>& laws, std::vector<double> costs) {
  for (auto& v : levels) v *= 2.0;
  ExplorationInstance inst;
  inst.topology = Topology::Tree;
  inst.support = Support(levels);
  inst.lambda = 0.5;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    NodeSpec n;
    n.id = "n" + std::to_string(i + 1);
    n.cost = 2.0 * costs[i];
    n.loss = laws[i];
    if (parents[i] >= 0) n.parents = {"n" + std::to_string(parents[i] + 1)};
    inst.nodes.push_back(std::move(n));
  }
  return inst;
}

/// The subtree of node v (by model index) as a standalone tree whose root follows its law
/// given parent level s.
inline ExplorationInstance subtree_instance(const ExplorationInstance& inst, const Model& m, int v, int s) {
  ExplorationInstance out;
  out.topology = Topology::Tree;
  out.support = inst.support;
  out.lambda = inst.lambda;
  std::vector<int> stack{v};
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    NodeSpec n = inst.nodes[u];
    if (u == v) {
      n.parents.clear();
      n.loss = Pmf(m.law(v, s));
    }
    out.nodes.push_back(std::move(n));
    for (int c : m.children[u]) stack.push_back(c);
  }
  return out;
}

}  // namespace pandora::testing
