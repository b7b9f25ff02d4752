#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "pandora/generators.hpp"
#include "pandora/oracles.hpp"
#include "pandora/tree_index.hpp"
#include "test_util.hpp"

using namespace pandora;
using pandora::testing::effective_tree;
using pandora::testing::subtree_instance;

namespace {

TreeTopology topology(const std::vector<int>& parents) {
  TreeTopology g;
  g.parent = parents;
  g.children.assign(parents.size(), {});
  g.originals = parents.size();
  for (std::size_t v = 0; v < parents.size(); ++v) {
    if (parents[v] < 0) g.roots.push_back(int(v));
    else g.children[parents[v]].push_back(int(v));
  }
  return g;
}

/// Exhaustive scan: branch vertices none of whose strict descendants branch.
std::vector<int> minimal_roots_by_scan(const TreeTopology& g) {
  std::vector<int> out;
  for (int v = 0; v < int(g.size()); ++v) {
    if (g.children[v].size() < 2) continue;
    bool ok = true;
    for (int u = 0; u < int(g.size()); ++u) {
      if (u == v || g.children[u].size() < 2) continue;
      for (int a = g.parent[u]; a >= 0; a = g.parent[a])
        if (a == v) ok = false;
    }
    if (ok) out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(MinimalTrees, PathHasNone) { EXPECT_TRUE(find_minimal_trees(topology({-1, 0, 1, 2})).empty()); }

TEST(MinimalTrees, CherryIsWholeTree) {
  const auto t = find_minimal_trees(topology({-1, 0, 0}));
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].root, 0);
  EXPECT_EQ(t[0].chains.size(), 2u);
}

TEST(MinimalTrees, BinaryDepthTwo) {
  const auto t = find_minimal_trees(topology({-1, 0, 0, 1, 1, 2, 2}));
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].root, 1);
  EXPECT_EQ(t[1].root, 2);
  EXPECT_EQ(t[0].chains, (std::vector<std::vector<int>>{{3}, {4}}));
}

TEST(MinimalTrees, MatchesExhaustiveScan) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 12;
    std::vector<int> par(n, -1);
    for (std::size_t v = 1; v < n; ++v)
      par[v] = std::uniform_real_distribution<double>(0, 1)(rng) < 0.1
                   ? -1
                   : int(std::uniform_int_distribution<std::size_t>(0, v - 1)(rng));
    const auto g = topology(par);
    std::vector<int> got;
    for (const auto& t : find_minimal_trees(g)) got.push_back(t.root);
    EXPECT_EQ(got, minimal_roots_by_scan(g));
  }
}

TEST(ContractMinimalTree, RejectsNonMinimal) {
  const auto inst = effective_tree({0.1, 0.5}, {-1, 0, 0, 1, 1}, std::vector<LossModel>(5, Pmf::uniform(2)),
                                   std::vector<double>(5, 0.1));
  auto fixed = inst;
  for (std::size_t i = 1; i < 5; ++i) fixed.nodes[i].loss = TransitionMatrix::independent(Pmf::uniform(2));
  const auto m = compile(fixed);
  auto g = TreeTopology::from(m);
  TreeFunctions f;
  f.node.resize(m.size());
  MinimalTree whole{0, {{1, 3}, {2}}};
  EXPECT_THROW(contract_minimal_tree(m, g, whole, f), InputError);
  MinimalTree leaf{3, {}};
  EXPECT_THROW(contract_minimal_tree(m, g, leaf, f), InputError);
}

TEST(ContractMinimalTree, WorkedCherry) {
  // Root: deterministic 0.6 at cost 0.1; children deterministic 0.2 and 0.9 at cost 0.05.
  const std::vector<double> lv{0.2, 0.6, 0.9};
  const auto det = [](int l) { return TransitionMatrix::independent(Pmf::point_mass(3, std::size_t(l))); };
  const auto inst = effective_tree(lv, {-1, 0, 0}, {Pmf::point_mass(3, 1), det(0), det(2)}, {0.1, 0.05, 0.05});
  const TreeSolver s(inst);
  ASSERT_EQ(s.contractions().size(), 1u);
  EXPECT_EQ(s.contractions()[0].contracted, (std::vector<int>{1, 2}));
  EXPECT_NEAR(s.value(), 0.35, 1e-12);
  EXPECT_NEAR(brute_force_online_optimal(inst).expected_loss, 0.35, 1e-12);
  const auto r = s.run({1, 0, 2});
  EXPECT_EQ(r.inspected, (std::vector<int>{0, 1}));
  const auto& g = s.equivalent_node(0, 1);
  ASSERT_EQ(g.atoms.size(), 1u);
  EXPECT_EQ(g.atoms[0].loss_level, 0);
  EXPECT_NEAR(g.atoms[0].cost, 0.05, 1e-12);
}

TEST(ContractMinimalTree, SingleChildIsLine) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    auto line = gen::random_line(rng, 2, 3);
    auto tree = line;
    tree.topology = Topology::Tree;
    tree.nodes[1].parents = {"n1"};
    const TreeSolver s(tree);
    const auto t = build_payoff_table(line);
    EXPECT_TRUE(s.contractions().empty());
    const auto& f = s.node_function(0, 0);
    for (std::size_t x = 0; x < 3; ++x) EXPECT_NEAR(f(t.level(int(x))), t.phi(int(x), t.none(), 0), 1e-12);
    EXPECT_NEAR(s.value(), t.value(), 1e-12);
  }
}

TEST(ContractMinimalTree, FreeSubtreeGivesMinimum) {
  std::mt19937_64 rng(12);
  gen::Shape free;
  free.cost_lo = free.cost_hi = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    auto inst = gen::random_tree(rng, 5, 3, free, 0.0);
    for (std::size_t i = 1; i < 5; ++i) inst.nodes[i].parents = {i < 3 ? "n1" : "n2"};
    const TreeSolver s(inst);
    const auto& m = s.model();
    for (std::size_t j = 0; j < s.contractions().size(); ++j) {
      const auto& st = s.contractions()[j];
      for (int l = 0; l < 3; ++l) {
        std::vector<double> want(4, 0.0);
        for (const auto& a : s.enumerate_below(st.root, l)) {
          int best = l;
          for (int v : st.contracted) best = std::min(best, a.levels[v]);
          want[best] += a.prob;
        }
        // The outside option is the root's own level, so losses at or above it never matter.
        const auto got = s.equivalent_node(j, l).loss_marginal(3);
        for (int y = 0; y < l; ++y) EXPECT_NEAR(got[y], want[y], 1e-12);
      }
    }
    EXPECT_NEAR(s.value(), offline_optimal(m).expected_loss, 1e-12);
  }
}

TEST(TreeSolver, LineReducesToLineIndex) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    auto line = gen::random_line(rng, 4, 3);
    auto tree = line;
    tree.topology = Topology::Tree;
    for (std::size_t i = 1; i < 4; ++i) tree.nodes[i].parents = {"n" + std::to_string(i)};
    const TreeSolver s(tree);
    const auto m = compile(line);
    const auto t = build_payoff_table(m, m.lines[0]);
    EXPECT_NEAR(s.value(), t.value(), 1e-12);
    for (const auto& a : enumerate_joint(m))
      EXPECT_EQ(s.run(a.levels).inspected, run_policy(t, m, m.lines[0], a.levels).inspected);
  }
}

TEST(TreeSolver, ForestOfIsolatedNodesIsMultiLine) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    auto ml = gen::random_multiline(rng, 2, 2, 3);
    auto forest = ml;
    forest.topology = Topology::Tree;
    for (auto& n : forest.nodes) n.line.reset();
    const TreeSolver s(forest);
    const MultiLineSolver ms(ml);
    EXPECT_NEAR(s.value(), ms.value(), 1e-12);
    for (const auto& a : enumerate_joint(s.model())) EXPECT_EQ(s.run(a.levels).inspected, ms.run(a.levels).inspected);
  }
}

TEST(TreeSolver, PolicyCsvShape) {
  const auto inst = effective_tree({0.1, 0.5}, {-1, 0, 0}, {Pmf::uniform(2), TransitionMatrix::independent(Pmf::uniform(2)),
                                                           TransitionMatrix::independent(Pmf::uniform(2))},
                                   {0.1, 0.1, 0.1});
  const TreeSolver s(inst);
  std::ostringstream os;
  s.write_policy_csv(os);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("node,value,current_min,action\n", 0), 0u);
  // 3 nodes x (1 + 2) (value, current_min) pairs
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 3);
  EXPECT_NE(csv.find("n1,1,1,open:n2"), std::string::npos);
  EXPECT_NE(csv.find("n1,0,0,stop"), std::string::npos);
}

class TreeOptimality : public ::testing::TestWithParam<int> {};

TEST_P(TreeOptimality, MatchesBruteForceAndPreservesAncestors) {
  std::mt19937_64 rng(900 + GetParam());
  const std::size_t n = 3 + GetParam() % 5, k = 2 + GetParam() % 2;
  const auto inst = gen::random_tree(rng, n, k);
  const TreeSolver s(inst);
  const auto& m = s.model();
  const double oracle = brute_force_online_optimal(m).expected_loss;
  EXPECT_NEAR(s.value(), oracle, 1e-9);
  const auto pv = evaluate_policy_exact(m, [&](const Realization& r) { return s.run(r); });
  EXPECT_NEAR(pv.expected_loss, oracle, 1e-9);
  EXPECT_LE(s.iterations(), n);

  // Every node's subtree function, after all contractions, against a search on that subtree
  // with the outside option fixed in advance.
  for (int v = 0; v < int(n); ++v) {
    if (m.children[v].empty()) continue;
    for (int ps = 0; ps < (m.parent[v] < 0 ? 1 : int(k)); ++ps) {
      const auto sub = subtree_instance(inst, m, v, ps);
      for (int x = 0; x <= int(k); ++x) {
        BruteForceOptions opt;
        opt.initial_min = x < int(k) ? m.levels[x] : kInf;
        const double want = brute_force_online_optimal(sub, opt).expected_loss;
        const double got = x < int(k) ? s.node_function(v, ps)(m.levels[x]) : s.node_function(v, ps).limit();
        EXPECT_NEAR(got, want, 1e-9) << "node " << v << " parent level " << ps << " x " << x;
      }
    }
  }
  // Equivalent nodes reproduce their contraction functions at the root's own level.
  for (std::size_t j = 0; j < s.contractions().size(); ++j)
    for (int l = 0; l < int(k); ++l)
      EXPECT_NEAR(s.equivalent_node(j, l).expected(m.levels[l], m.levels), s.contractions()[j].psi[l](m.levels[l]),
                  1e-9);
}

INSTANTIATE_TEST_SUITE_P(Random, TreeOptimality, ::testing::Range(0, 60));
