#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "pandora/multiline_index.hpp"

namespace pandora {

/// Rooted forest over graph nodes. Ids below the model's node count are original nodes,
/// larger ids are replacement nodes created by contraction (always leaves).
struct TreeTopology {
  std::vector<int> parent;
  std::vector<std::vector<int>> children;
  std::vector<int> roots;
  std::size_t originals = 0;

  static TreeTopology from(const Model& m) {
    return {m.parent, m.children, m.roots, m.size()};
  }
  std::size_t size() const { return parent.size(); }
  bool is_original(int v) const { return v >= 0 && std::size_t(v) < originals; }
  bool is_branch(int v) const { return children[v].size() >= 2; }

  int add_leaf(int parent_id) {
    const int id = int(parent.size());
    parent.push_back(parent_id);
    children.emplace_back();
    children[parent_id].push_back(id);
    return id;
  }
};

/// A branch vertex with no branch vertex strictly below it; its children head plain chains.
/// A chain may end in a replacement node.
struct MinimalTree {
  int root = -1;
  std::vector<std::vector<int>> chains;
};

/// Follows single-child links from v down to the end of its chain.
inline std::vector<int> chain_from(const TreeTopology& g, int v) {
  std::vector<int> out{v};
  while (g.children[out.back()].size() == 1) out.push_back(g.children[out.back()].front());
  if (g.children[out.back()].size() > 1) throw InputError("chain from node " + std::to_string(v) + " branches");
  return out;
}

/// Every minimal tree, in increasing root id. A forest of chains yields none.
inline std::vector<MinimalTree> find_minimal_trees(const TreeTopology& g) {
  std::vector<char> branch_below(g.size(), 0);  // some strict descendant is a branch vertex
  std::vector<int> order;
  std::vector<int> stack(g.roots.begin(), g.roots.end());
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int c : g.children[v]) stack.push_back(c);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    for (int c : g.children[*it])
      if (g.is_branch(c) || branch_below[c]) branch_below[*it] = 1;

  std::vector<MinimalTree> out;
  for (int v = 0; v < int(g.size()); ++v) {
    if (!g.is_branch(v) || branch_below[v]) continue;
    MinimalTree t{v, {}};
    for (int c : g.children[v]) t.chains.push_back(chain_from(g, c));
    out.push_back(std::move(t));
  }
  return out;
}

/// Result of replacing a minimal tree minus its root by one node hanging off the root.
struct ContractionStep {
  int root = -1;
  int replacement = -1;
  std::vector<int> contracted;  // original nodes now inside the replacement
  /// psi[l](x): optimal expected loss plus cost of exploring the contracted part with
  /// outside option x, given that the root showed level l.
  std::vector<PiecewiseLinear> psi;
};

/// Equivalent-loss functions of graph nodes, filled in as chains are solved.
/// node[v][s] = Phi_v(. | parent level s); one entry for nodes without a parent.
struct TreeFunctions {
  std::vector<std::vector<PiecewiseLinear>> node;
  std::map<int, std::vector<PiecewiseLinear>> replacement;  // psi by root level
  std::map<int, std::vector<int>> replaced;                 // original nodes inside each replacement
};

namespace detail {

/// Solves one chain bottom-up and records the functions of its original nodes.
/// Returns the head's functions by parent level.
inline std::vector<PiecewiseLinear> solve_chain(const Model& m, const TreeTopology& g,
                                                const std::vector<int>& chain, TreeFunctions& f) {
  std::vector<int> nodes;
  const std::vector<PiecewiseLinear>* below = nullptr;
  for (int v : chain) {
    if (g.is_original(v)) nodes.push_back(v);
    else below = &f.replacement.at(v);
  }
  if (nodes.empty()) return *below;
  const auto lf = line_functions(m, nodes, below);
  for (std::size_t i = 0; i < nodes.size(); ++i) f.node[nodes[i]] = lf.phi[i];
  const auto& head = lf.phi.front();
  return head.size() == 1 ? std::vector<PiecewiseLinear>(m.k(), head.front()) : head;
}

}  // namespace detail

/// Contracts the given minimal tree: for every root level l, the children's chains are
/// solved as independent lines and combined into psi[l]. Rewrites `g` so the root keeps a
/// single replacement child.
inline ContractionStep contract_minimal_tree(const Model& m, TreeTopology& g, const MinimalTree& t,
                                             TreeFunctions& f) {
  if (t.root < 0 || !g.is_original(t.root) || !g.is_branch(t.root)) throw InputError("not a minimal tree");
  for (const auto& chain : t.chains)
    for (int v : chain)
      if (g.is_branch(v)) throw InputError("not a minimal tree: node " + std::to_string(v) + " branches");

  ContractionStep step;
  step.root = t.root;
  std::vector<std::vector<PiecewiseLinear>> heads;
  for (const auto& chain : t.chains) {
    heads.push_back(detail::solve_chain(m, g, chain, f));
    for (int v : chain) {
      if (g.is_original(v)) step.contracted.push_back(v);
      else
        for (int u : f.replaced.at(v)) step.contracted.push_back(u);
    }
  }
  for (std::size_t l = 0; l < m.k(); ++l) {
    std::vector<const PiecewiseLinear*> fs;
    for (const auto& h : heads) fs.push_back(&h[l]);
    step.psi.push_back(integrate_slope_product(fs));
  }
  std::sort(step.contracted.begin(), step.contracted.end());

  for (int c : g.children[t.root]) g.parent[c] = -2;  // detached
  g.children[t.root].clear();
  step.replacement = g.add_leaf(t.root);
  f.replacement[step.replacement] = step.psi;
  f.replaced[step.replacement] = step.contracted;
  return step;
}

/// Optimal policy on a directed forest: contract minimal trees until only chains remain,
/// then treat the chains as independent lines.
class TreeSolver {
public:
  explicit TreeSolver(Model m) : m_(std::move(m)) {
    if (m_.topology == Topology::SkipLine) throw InputError("tree solver does not handle skip lines");
    const std::size_t n = m_.size();
    g_ = TreeTopology::from(m_);
    f_.node.resize(n);
    for (;;) {
      const auto minimal = find_minimal_trees(g_);
      if (minimal.empty()) break;
      for (const auto& t : minimal) steps_.push_back(contract_minimal_tree(m_, g_, t, f_));
      ++iterations_;
      if (iterations_ > n) throw std::logic_error("contraction did not terminate");
    }
    for (int r : g_.roots) heads_.push_back(detail::solve_chain(m_, g_, chain_from(g_, r), f_).front());

    index_.assign(n, {});
    for (std::size_t v = 0; v < n; ++v)
      for (const auto& fn : f_.node[v]) index_[v].push_back(fn.last_fixed_point());
  }
  explicit TreeSolver(const ExplorationInstance& inst) : TreeSolver(compile(inst)) {}

  const Model& model() const { return m_; }
  const std::vector<ContractionStep>& contractions() const { return steps_; }
  std::size_t iterations() const { return iterations_; }
  /// Graph after all contractions: chains hanging off the forest roots.
  const TreeTopology& reduced_graph() const { return g_; }

  /// Phi of node v's subtree given its parent level (ignored for forest roots).
  const PiecewiseLinear& node_function(int v, int parent_level) const {
    const auto& fs = f_.node[v];
    return fs.size() == 1 ? fs.front() : fs[std::size_t(parent_level)];
  }
  /// Dynamic index of node v given its parent level.
  double index(int v, int parent_level) const {
    const auto& ix = index_[v];
    return ix.size() == 1 ? ix.front() : ix[std::size_t(parent_level)];
  }

  PiecewiseLinear combined_function() const {
    std::vector<const PiecewiseLinear*> fs;
    for (const auto& h : heads_) fs.push_back(&h);
    return integrate_slope_product(fs);
  }
  double value() const { return combined_function().limit(); }

  /// Index rule: open the available node of smallest index (ties: smallest node number)
  /// while the current minimum exceeds that index.
  RolloutResult run(const Realization& r) const {
    RolloutBuilder b(m_, r);
    explore(b, r, m_.roots, kInf);
    return std::move(b).finish();
  }

  /// Explores below an already opened node `root` (which showed level r[root]) with outside
  /// option `outside`; only costs and losses of the nodes below are recorded.
  RolloutResult run_below(const Realization& r, int root, double outside) const {
    RolloutBuilder b(m_, r);
    explore(b, r, m_.children[root], outside);
    return std::move(b).finish();
  }

  /// Joint law of (minimum loss, cost) of exploring what contraction `step` replaced,
  /// given that its root showed level l, with outside option equal to the root's loss.
  const EquivalentNode& equivalent_node(std::size_t step, int l) const {
    const auto key = std::make_pair(step, l);
    if (auto it = gamma_.find(key); it != gamma_.end()) return it->second;
    const auto& s = steps_.at(step);
    std::map<std::pair<int, double>, double> merged;
    for (const auto& a : enumerate_below(s.root, l)) {
      const auto res = run_below(a.levels, s.root, m_.levels[l]);
      merged[{res.exit_node < 0 ? int(m_.k()) : res.loss_level, res.cost}] += a.prob;
    }
    EquivalentNode g;
    for (const auto& [kc, p] : merged) g.atoms.push_back({kc.first, kc.second, p});
    return gamma_.emplace(key, std::move(g)).first->second;
  }

  /// Joint outcomes of the strict descendants of `root`, conditioned on root level l.
  std::vector<JointAtom> enumerate_below(int root, int l, std::size_t max_atoms = 1'000'000) const {
    std::vector<JointAtom> atoms{{Realization(m_.size(), 0), 1.0}};
    atoms[0].levels[root] = l;
    std::vector<int> stack(m_.children[root].rbegin(), m_.children[root].rend());
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      std::vector<JointAtom> next;
      for (const auto& a : atoms) {
        const auto& p = m_.law(v, a.levels[m_.parent[v]]);
        for (std::size_t y = 0; y < p.size(); ++y) {
          if (p[y] == 0.0) continue;
          JointAtom b = a;
          b.levels[v] = int(y);
          b.prob *= p[y];
          next.push_back(std::move(b));
        }
      }
      atoms = std::move(next);
      if (atoms.size() > max_atoms) throw std::length_error("subtree outcome space too large");
      for (auto it = m_.children[v].rbegin(); it != m_.children[v].rend(); ++it) stack.push_back(*it);
    }
    return atoms;
  }

  /// Local decision table: for every node, its level and the current minimum level, the
  /// child to open next when only its own subtree is considered.
  void write_policy_csv(std::ostream& os) const {
    os << "node,value,current_min,action\n";
    for (std::size_t v = 0; v < m_.size(); ++v)
      for (std::size_t l = 0; l < m_.k(); ++l)
        for (std::size_t c = 0; c <= l; ++c) {
          int best = -1;
          double bs = kInf;
          for (int w : m_.children[v])
            if (best < 0 || index(w, int(l)) < bs) {
              best = w;
              bs = index(w, int(l));
            }
          os << m_.ids[v] << ',' << l << ',' << c << ',';
          if (best >= 0 && m_.levels[c] > bs) os << "open:" << m_.ids[best] << '\n';
          else os << "stop\n";
        }
  }

private:
  void explore(RolloutBuilder& b, const Realization& r, const std::vector<int>& start, double outside) const {
    std::vector<int> avail = start;
    for (;;) {
      int best = -1;
      double bs = kInf;
      std::size_t pos = 0;
      for (std::size_t j = 0; j < avail.size(); ++j) {
        const int w = avail[j];
        const double s = index(w, m_.parent[w] < 0 ? 0 : r[m_.parent[w]]);
        if (best < 0 || s < bs || (s == bs && w < best)) {
          best = w;
          bs = s;
          pos = j;
        }
      }
      if (best < 0 || !(std::min(outside, b.current_min()) > bs)) break;
      b.open(best, m_.cost[best], m_.raw_cost[best]);
      avail.erase(avail.begin() + std::ptrdiff_t(pos));
      avail.insert(avail.end(), m_.children[best].begin(), m_.children[best].end());
    }
  }

  Model m_;
  TreeTopology g_;
  TreeFunctions f_;
  std::vector<ContractionStep> steps_;
  std::size_t iterations_ = 0;
  std::vector<PiecewiseLinear> heads_;
  std::vector<std::vector<double>> index_;
  mutable std::map<std::pair<std::size_t, int>, EquivalentNode> gamma_;
};

inline TreeSolver solve_tree(const ExplorationInstance& inst) { return TreeSolver(inst); }
inline RolloutResult run_tree_policy(const TreeSolver& s, const Realization& r) { return s.run(r); }

}  // namespace pandora
