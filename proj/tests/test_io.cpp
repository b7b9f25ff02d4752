#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "pandora/generators.hpp"
#include "pandora/io.hpp"
#include "pandora/rollout.hpp"
#include "test_util.hpp"

using namespace pandora;

TEST(Json, RoundTripIsExact) {
  std::mt19937_64 rng(4);
  std::vector<ExplorationInstance> all{gen::random_line(rng, 4, 3), gen::random_multiline(rng, 5, 2, 3),
                                       gen::random_tree(rng, 6, 4),
                                       gen::random_skipline(rng, 3, 3, gen::SkipCosts::Random)};
  for (const auto& inst : all) {
    const auto text = instance_to_json(inst).dump();
    EXPECT_EQ(parse_instance(text), inst);
  }
}

TEST(Json, RejectsUnknownFields) {
  EXPECT_THROW(parse_instance(R"({"topology":"line","support":[1],"nodes":[],"extra":1})"), InputError);
  EXPECT_THROW(parse_instance(R"({"topology":"line","support":[1],"nodes":[{"id":"a","cost":1,"rootPmf":[1],"colour":2}]})"),
               InputError);
  EXPECT_THROW(parse_instance(R"({"topology":"ring","support":[1],"nodes":[]})"), InputError);
  EXPECT_THROW(parse_instance(R"({"topology":"line","support":[1],)"), InputError);
  EXPECT_THROW(parse_instance(R"({"topology":"line","support":[1],"nodes":[{"id":"a","cost":1}]})"), InputError);
}

TEST(Json, SkipCostShorthands) {
  const std::string head = R"({"topology":"skipline","support":[0.1,0.5],"nodes":[
    {"id":"a","cost":0.2,"rootPmf":[0.5,0.5]},{"id":"b","cost":0.3,"transition":[[1,0],[0,1]]}],"skipCosts":)";
  const auto ps = parse_instance(head + R"({"pathSum":true}})");
  EXPECT_DOUBLE_EQ((*ps.skip_costs)(0, 2), 0.5);
  const auto af = parse_instance(head + R"({"affine":{"base":0.1,"ratePerStep":0.05}}})");
  EXPECT_DOUBLE_EQ((*af.skip_costs)(0, 2), 0.2);
  EXPECT_THROW(parse_instance(head + R"({"pathSum":true,"affine":{"base":0.1,"ratePerStep":0.05}}})"), InputError);
  EXPECT_TRUE(validate_instance(ps).ok());
}

TEST(Trace, ParseWithCostBlockAndRoundTrip) {
  const std::string text = "cost_1,cost_2\n0.1,0.25\nexit_1_loss,exit_2_loss\n0.5,0.2\n0.7,0.9\n";
  const auto t = parse_trace_csv(text);
  EXPECT_EQ(t.costs, (std::vector<double>{0.1, 0.25}));
  EXPECT_EQ(t.rows.size(), 2u);
  std::ostringstream os;
  write_trace_csv(os, t);
  const auto back = parse_trace_csv(os.str());
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.costs, t.costs);
}

TEST(Trace, Errors) {
  EXPECT_THROW(parse_trace_csv("exit_1_loss\n0.5\n"), InputError);  // no costs
  const std::vector<double> c{0.1};
  EXPECT_THROW(parse_trace_csv("exit_1_loss\n", &c), InputError);
  EXPECT_THROW(parse_trace_csv("exit_2_loss\n0.5\n", &c), InputError);
  EXPECT_THROW(parse_trace_csv("exit_1_loss\nabc\n", &c), InputError);
  EXPECT_EQ(parse_costs_csv("cost_1,cost_2\n1,2\n"), (std::vector<double>{1, 2}));
}

TEST(Quantize, TwoBinsSplitGrid) {
  TraceDataset t;
  t.costs = {1.0};
  for (int i = 0; i <= 100; ++i) t.rows.push_back({i / 100.0});
  const auto q = quantize_losses(t, 2);
  ASSERT_EQ(q.support.size(), 2u);
  for (int i = 0; i <= 100; ++i) EXPECT_EQ(q.levels[i][0], i <= 50 ? 0 : 1) << i;
}

TEST(Quantize, ConstantTraceHasOneLevel) {
  TraceDataset t;
  t.costs = {1.0, 1.0};
  for (int i = 0; i < 20; ++i) t.rows.push_back({0.3, 0.3});
  const auto q = quantize_losses(t, 4);
  EXPECT_EQ(q.support.values(), (std::vector<double>{0.3}));
}

TEST(Quantize, MatchesSortAndIndexQuantiles) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> a(1.0, 0.2), b(3.0, 0.5);
  std::bernoulli_distribution pick(0.3);
  TraceDataset t;
  t.costs = {1.0, 1.0};
  for (int i = 0; i < 500; ++i) t.rows.push_back({std::abs(pick(rng) ? a(rng) : b(rng)), std::abs(a(rng))});
  const auto q = quantize_losses(t, 8);
  std::vector<double> all;
  for (const auto& r : t.rows) all.insert(all.end(), r.begin(), r.end());
  std::sort(all.begin(), all.end());
  ASSERT_EQ(q.boundaries.size(), 7u);
  for (std::size_t j = 1; j < 8; ++j) EXPECT_EQ(q.boundaries[j - 1], all[j * all.size() / 8]);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(q.support.values()[j], all[(2 * j + 1) * all.size() / 16]);
  // monotone mapping
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t s = 0; s < t.rows.size(); ++s)
      if (t.rows[r][0] < t.rows[s][0]) {
        EXPECT_LE(q.levels[r][0], q.levels[s][0]);
      }
}

TEST(Estimate, IdentityChain) {
  QuantizedTrace q;
  q.support = Support({0.1, 0.2, 0.3});
  q.costs = {1, 1};
  for (int i = 0; i < 300; ++i) q.levels.push_back({i % 3, i % 3});
  const auto c = estimate_transitions(q, 0.0);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(c.kernels[0](a, a), 1.0);
  const auto s = estimate_transitions(q, 1.0);
  EXPECT_NEAR(s.kernels[0](0, 0), 101.0 / 103.0, 1e-12);
  EXPECT_TRUE(s.kernels[0].stochastic());
  EXPECT_THROW(estimate_transitions(QuantizedTrace{}), InputError);
}

TEST(Estimate, RecoversKnownKernel) {
  std::mt19937_64 rng(12);
  const auto P = gen::random_kernel(rng, 3);
  const auto root = Pmf::uniform(3);
  QuantizedTrace q;
  q.support = Support({0.1, 0.2, 0.3});
  q.costs = {1, 1};
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 500; ++i) {
    const int a = sample_index(root.probs(), u(rng));
    q.levels.push_back({a, sample_index(P.row(std::size_t(a)), u(rng))});
  }
  const auto c = estimate_transitions(q, 1.0);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_LT(std::abs(c.kernels[0](a, b) - P(a, b)), 0.1);
  const auto inst = instance_from_trace(q, c, 0.5);
  EXPECT_TRUE(validate_instance(inst).ok());
}

TEST(Estimate, SmoothedOutputAlwaysValid) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    QuantizedTrace q;
    q.support = Support({0.1, 0.2, 0.3, 0.4});
    q.costs = {1, 1, 1};
    for (int i = 0; i < 5; ++i) q.levels.push_back({int(rng() % 4), int(rng() % 4), int(rng() % 4)});
    const auto c = estimate_transitions(q, 0.5);
    EXPECT_TRUE(validate_instance(instance_from_trace(q, c, 0.5)).ok());
  }
}
