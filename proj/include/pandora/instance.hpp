#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "pandora/probability.hpp"

namespace pandora {

enum class Topology { Line, MultiLine, Tree, SkipLine };

inline std::string to_string(Topology t) {
  switch (t) {
    case Topology::Line: return "line";
    case Topology::MultiLine: return "multiline";
    case Topology::Tree: return "tree";
    case Topology::SkipLine: return "skipline";
  }
  return "?";
}

inline Topology parse_topology(const std::string& s) {
  if (s == "line") return Topology::Line;
  if (s == "multiline") return Topology::MultiLine;
  if (s == "tree") return Topology::Tree;
  if (s == "skipline") return Topology::SkipLine;
  throw InputError("unknown topology '" + s + "'");
}

using LossModel = std::variant<Pmf, TransitionMatrix>;

struct NodeSpec {
  std::string id;
  double cost = 0.0;
  /// Pmf for nodes hanging off the dummy root, otherwise the kernel from the parent.
  LossModel loss;
  /// Tree topology only. More than one entry is representable so validation can reject it.
  std::vector<std::string> parents;
  /// MultiLine topology only.
  std::optional<int> line;

  bool is_root_node() const { return std::holds_alternative<Pmf>(loss); }
  bool operator==(const NodeSpec&) const = default;
};

/// Pairwise skip costs c(i, j), 0 <= i < j <= n, where i = 0 is the dummy root.
class SkipCostTable {
public:
  SkipCostTable() = default;
  explicit SkipCostTable(std::vector<std::vector<double>> m) : m_(std::move(m)) {}

  static SkipCostTable affine(std::size_t n, double base, double rate_per_step) {
    std::vector<std::vector<double>> m(n + 1, std::vector<double>(n + 1, 0.0));
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t j = i + 1; j <= n; ++j) m[i][j] = base + rate_per_step * double(j - i);
    return SkipCostTable(std::move(m));
  }
  /// c(i, j) = sum of the per-step costs step[i], ..., step[j-1] (step[l] is c(l, l+1)).
  static SkipCostTable path_sum(const std::vector<double>& step) {
    const std::size_t n = step.size();
    std::vector<std::vector<double>> m(n + 1, std::vector<double>(n + 1, 0.0));
    for (std::size_t i = 0; i <= n; ++i) {
      double acc = 0.0;
      for (std::size_t j = i + 1; j <= n; ++j) {
        acc += step[j - 1];
        m[i][j] = acc;
      }
    }
    return SkipCostTable(std::move(m));
  }

  std::size_t nodes() const { return m_.empty() ? 0 : m_.size() - 1; }
  double operator()(std::size_t i, std::size_t j) const { return m_[i][j]; }
  const std::vector<std::vector<double>>& matrix() const { return m_; }
  bool operator==(const SkipCostTable&) const = default;

private:
  std::vector<std::vector<double>> m_;
};

struct ExplorationInstance {
  Topology topology = Topology::Line;
  Support support;
  double lambda = 0.5;
  std::vector<NodeSpec> nodes;
  std::optional<SkipCostTable> skip_costs;

  std::size_t size() const { return nodes.size(); }
  std::size_t levels() const { return support.size(); }
  bool operator==(const ExplorationInstance&) const = default;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const {
    std::string s;
    for (const auto& v : violations) s += (s.empty() ? "" : "; ") + v;
    return s;
  }
};

namespace detail {

inline std::map<std::string, std::size_t> index_ids(const ExplorationInstance& inst,
                                                    ValidationReport& rep) {
  std::map<std::string, std::size_t> ids;
  for (std::size_t i = 0; i < inst.nodes.size(); ++i)
    if (!ids.emplace(inst.nodes[i].id, i).second)
      rep.violations.push_back("duplicate node id '" + inst.nodes[i].id + "'");
  return ids;
}

inline void check_loss_model(const NodeSpec& n, std::size_t k, ValidationReport& rep) {
  if (const auto* p = std::get_if<Pmf>(&n.loss)) {
    if (p->size() != k) rep.violations.push_back("node '" + n.id + "': pmf length != support size");
    else if (!p->valid()) rep.violations.push_back("node '" + n.id + "': pmf not stochastic");
  } else {
    const auto& t = std::get<TransitionMatrix>(n.loss);
    if (t.size() != k || !t.square())
      rep.violations.push_back("node '" + n.id + "': transition shape != support size");
    else if (!t.stochastic())
      rep.violations.push_back("node '" + n.id + "': row not stochastic");
  }
}

}  // namespace detail

/// Structural and probabilistic checks; never throws.
inline ValidationReport validate_instance(const ExplorationInstance& inst) {
  ValidationReport rep;
  const std::size_t k = inst.support.size();
  if (k == 0) rep.violations.push_back("support is empty");
  if (!(inst.lambda >= 0.0 && inst.lambda <= 1.0)) rep.violations.push_back("lambda outside [0,1]");
  if (inst.nodes.empty()) rep.violations.push_back("instance has no nodes");
  const auto ids = detail::index_ids(inst, rep);

  for (const auto& n : inst.nodes) {
    if (!(n.cost >= 0.0) || !std::isfinite(n.cost))
      rep.violations.push_back("node '" + n.id + "': cost must be finite and >= 0");
    if (k > 0) detail::check_loss_model(n, k, rep);
  }

  switch (inst.topology) {
    case Topology::Line:
    case Topology::SkipLine: {
      for (std::size_t i = 0; i < inst.nodes.size(); ++i) {
        const bool want_root = (i == 0);
        if (inst.nodes[i].is_root_node() != want_root)
          rep.violations.push_back("node '" + inst.nodes[i].id +
                                   (want_root ? "': first node needs rootPmf"
                                              : "': non-first node needs transition"));
        if (!inst.nodes[i].parents.empty() || inst.nodes[i].line)
          rep.violations.push_back("node '" + inst.nodes[i].id + "': parent/line not allowed on a line");
      }
      if (inst.topology == Topology::SkipLine) {
        const auto n = inst.nodes.size();
        if (!inst.skip_costs || inst.skip_costs->nodes() != n) {
          rep.violations.push_back("skipCosts missing or wrong size");
        } else {
          for (std::size_t i = 0; i <= n; ++i) {
            if (inst.skip_costs->matrix()[i].size() != n + 1) {
              rep.violations.push_back("skipCosts row has wrong length");
              break;
            }
            for (std::size_t j = i + 1; j <= n; ++j) {
              const double c = (*inst.skip_costs)(i, j);
              if (!std::isfinite(c) || c < 0.0)
                rep.violations.push_back("skipCosts entry (" + std::to_string(i) + "," +
                                         std::to_string(j) + ") must be finite and >= 0");
            }
          }
        }
      } else if (inst.skip_costs) {
        rep.violations.push_back("skipCosts only allowed for skipline");
      }
      break;
    }
    case Topology::MultiLine: {
      std::map<int, std::size_t> seen;
      for (const auto& n : inst.nodes) {
        if (!n.line) {
          rep.violations.push_back("node '" + n.id + "': multiline node needs a line label");
          continue;
        }
        if (!n.parents.empty()) rep.violations.push_back("node '" + n.id + "': parent not allowed on multiline");
        const bool first = seen[*n.line]++ == 0;
        if (n.is_root_node() != first)
          rep.violations.push_back("node '" + n.id + (first ? "': line head needs rootPmf"
                                                           : "': non-head node needs transition"));
      }
      if (inst.skip_costs) rep.violations.push_back("skipCosts only allowed for skipline");
      break;
    }
    case Topology::Tree: {
      bool tree_ok = true;
      for (const auto& n : inst.nodes) {
        if (n.parents.size() > 1) tree_ok = false;
        if (n.line) rep.violations.push_back("node '" + n.id + "': line label not allowed on tree");
        for (const auto& p : n.parents)
          if (!ids.count(p)) rep.violations.push_back("node '" + n.id + "': unknown parent '" + p + "'");
        if (n.is_root_node() != n.parents.empty())
          rep.violations.push_back("node '" + n.id + "': rootPmf iff no parent");
      }
      // Acyclicity: walk up from every node.
      if (tree_ok) {
        for (const auto& n : inst.nodes) {
          std::set<std::string> path{n.id};
          const NodeSpec* cur = &n;
          while (!cur->parents.empty()) {
            auto it = ids.find(cur->parents.front());
            if (it == ids.end()) break;
            cur = &inst.nodes[it->second];
            if (!path.insert(cur->id).second) {
              tree_ok = false;
              break;
            }
          }
          if (!tree_ok) break;
        }
      }
      if (!tree_ok) rep.violations.push_back("not a tree");
      if (inst.skip_costs) rep.violations.push_back("skipCosts only allowed for skipline");
      break;
    }
  }
  return rep;
}

/// Solver-facing view of a validated instance: node parents resolved to indices and the
/// tradeoff weight applied (loss level v -> lambda * v, cost c -> (1 - lambda) * c).
struct Model {
  Topology topology = Topology::Line;
  double lambda = 0.5;
  std::vector<double> raw_levels;
  std::vector<double> levels;       // effective loss per level index
  std::vector<int> parent;          // -1 for nodes below the dummy root
  std::vector<std::vector<int>> children;
  std::vector<int> roots;
  std::vector<double> raw_cost;
  std::vector<double> cost;         // effective
  std::vector<Pmf> root_pmf;        // meaningful where parent == -1
  std::vector<TransitionMatrix> kernel;  // meaningful where parent != -1
  std::vector<std::vector<int>> lines;   // Line/SkipLine: one; MultiLine: one per label; Tree: empty
  std::vector<std::vector<double>> skip_cost;  // effective, (n+1) x (n+1)
  std::vector<std::vector<double>> raw_skip_cost;
  std::vector<std::string> ids;

  std::size_t size() const { return parent.size(); }
  std::size_t k() const { return levels.size(); }

  /// Conditional law of node v given its parent's level (ignored for root nodes).
  const std::vector<double>& law(int v, int parent_level) const {
    if (parent[v] < 0) return root_pmf[v].probs();
    return kernel[v].row(static_cast<std::size_t>(parent_level));
  }

  /// Unconditional marginal of every node.
  std::vector<Pmf> marginals() const {
    std::vector<Pmf> m(size());
    std::vector<int> order = topological_order();
    for (int v : order) m[v] = parent[v] < 0 ? root_pmf[v] : kernel[v].propagate(m[parent[v]]);
    return m;
  }

  std::vector<int> topological_order() const {
    std::vector<int> order;
    std::vector<int> stack(roots.rbegin(), roots.rend());
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      order.push_back(v);
      for (auto it = children[v].rbegin(); it != children[v].rend(); ++it) stack.push_back(*it);
    }
    return order;
  }
};

/// Validate and compile. Throws InputError listing every violation.
inline Model compile(const ExplorationInstance& inst) {
  const auto rep = validate_instance(inst);
  if (!rep.ok()) throw InputError(rep.summary());

  Model m;
  m.topology = inst.topology;
  m.lambda = inst.lambda;
  m.raw_levels = inst.support.values();
  for (double v : m.raw_levels) m.levels.push_back(inst.lambda * v);
  const std::size_t n = inst.nodes.size();
  m.parent.assign(n, -1);
  m.children.assign(n, {});
  m.root_pmf.resize(n);
  m.kernel.resize(n);
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = inst.nodes[i];
    ids[node.id] = int(i);
    m.ids.push_back(node.id);
    m.raw_cost.push_back(node.cost);
    m.cost.push_back((1.0 - inst.lambda) * node.cost);
    if (node.is_root_node()) m.root_pmf[i] = std::get<Pmf>(node.loss);
    else m.kernel[i] = std::get<TransitionMatrix>(node.loss);
  }

  switch (inst.topology) {
    case Topology::Line:
    case Topology::SkipLine: {
      std::vector<int> line;
      for (std::size_t i = 0; i < n; ++i) {
        m.parent[i] = int(i) - 1;
        line.push_back(int(i));
      }
      m.lines.push_back(line);
      break;
    }
    case Topology::MultiLine: {
      std::map<int, std::vector<int>> by_label;
      for (std::size_t i = 0; i < n; ++i) {
        auto& l = by_label[*inst.nodes[i].line];
        m.parent[i] = l.empty() ? -1 : l.back();
        l.push_back(int(i));
      }
      for (auto& [label, l] : by_label) m.lines.push_back(l);
      break;
    }
    case Topology::Tree:
      for (std::size_t i = 0; i < n; ++i)
        if (!inst.nodes[i].parents.empty()) m.parent[i] = ids.at(inst.nodes[i].parents.front());
      break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (m.parent[i] < 0) m.roots.push_back(int(i));
    else m.children[m.parent[i]].push_back(int(i));
  }

  if (inst.topology == Topology::SkipLine) {
    m.raw_skip_cost = inst.skip_costs->matrix();
    m.skip_cost = m.raw_skip_cost;
    for (auto& row : m.skip_cost)
      for (auto& c : row) c *= (1.0 - inst.lambda);
  }
  return m;
}

/// Convenience constructor for a single directed line.
inline ExplorationInstance make_line(Support support, double lambda, Pmf root,
                                     std::vector<TransitionMatrix> kernels,
                                     std::vector<double> costs) {
  ExplorationInstance inst;
  inst.topology = Topology::Line;
  inst.support = std::move(support);
  inst.lambda = lambda;
  if (costs.size() != kernels.size() + 1) throw InputError("make_line: need one cost per node");
  for (std::size_t i = 0; i < costs.size(); ++i) {
    NodeSpec n;
    n.id = "n" + std::to_string(i + 1);
    n.cost = costs[i];
    if (i == 0) n.loss = root;
    else n.loss = kernels[i - 1];
    inst.nodes.push_back(std::move(n));
  }
  return inst;
}

}  // namespace pandora
