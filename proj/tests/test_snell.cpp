#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "nlstop/errors.hpp"
#include "nlstop/oracle.hpp"
#include "nlstop/snell.hpp"
#include "support.hpp"

namespace nlstop {
namespace {

using testing::Rng;

RewardSpec put_reward(const ModelPtr& m, double strike) {
  RewardSpec r{AdaptedProcess::generate(m, [&](int, std::size_t, double x) { return std::max(strike - x, 0.0); }),
               {}, -1.0, -1.0};
  return r;
}

RewardSpec random_reward(const ModelPtr& m, Rng& rng, std::size_t base, bool with_running) {
  RewardSpec r{testing::random_process(m, rng, -0.5, 1.0), {}, -1.0, -1.0};
  if (with_running)
    for (std::size_t i = 0; i < base; ++i) r.running.push_back(testing::random_process(m, rng, -0.5, 0.5));
  return r;
}

TEST(UpperSnell, ConstantRewardStopsImmediately) {
  auto m = build_binomial_lattice(5, 0.2, 0.0);
  StableFamily fam(m, {Generator::linear_drift(1.0), Generator::abs_drift(2.0)});
  RewardSpec r{AdaptedProcess(m, 0.75), {}, -1.0, -1.0};
  auto res = upper_snell_envelope(fam, r);
  for (int t = 0; t <= 5; ++t)
    for (std::size_t j = 0; j < m->slice_size(t); ++j) {
      EXPECT_DOUBLE_EQ(res.envelope(t, j), 0.75);
      EXPECT_TRUE(res.tau_bar.stops(t, j));
    }
}

TEST(UpperSnell, AmericanPutMatchesTextbookPricer) {
  const int n = 50;
  const double dt = 1.0 / n, x0 = 1.0, strike = 1.1;
  auto m = build_binomial_lattice(n, dt, x0);
  StableFamily fam(m, {Generator::zero()});
  auto res = upper_snell_envelope(fam, put_reward(m, strike));
  auto table = testing::american_put_table(n, dt, x0, strike);
  for (int t = 0; t <= n; ++t)
    for (std::size_t j = 0; j <= static_cast<std::size_t>(t); ++j)
      ASSERT_NEAR(res.envelope(t, j), table[t][j], 1e-12) << t << "," << j;
  EXPECT_GT(res.value_at_0, 0.1);
}

TEST(UpperSnell, DominatingGeneratorDecidesTheFamily) {
  Rng rng(40);
  auto m = build_path_tree(4, 2, {0.5, 0.5}, 0.25);
  StableFamily pair(m, {Generator::zero(), Generator::abs_drift(2.0)});
  StableFamily single(m, {Generator::abs_drift(2.0)});
  for (int trial = 0; trial < 10; ++trial) {
    RewardSpec r{testing::random_process(m, rng, -0.5, 1.0), {}, -1.0, -1.0};
    auto a = upper_snell_envelope(pair, r);
    auto b = upper_snell_envelope(single, r);
    EXPECT_LT(a.envelope.max_abs_difference(b.envelope), 1e-12);
  }
}

TEST(UpperSnell, MatchesBruteForceOnDepthThree) {
  Rng rng(41);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  StableFamily fam(m, {Generator::linear_drift(-1.5), Generator::abs_drift(1.0)});
  for (int trial = 0; trial < 5; ++trial) {
    auto r = random_reward(m, rng, 2, true);
    auto res = upper_snell_envelope(fam, r);
    auto oracle = oracle::brute_force_upper_value(fam, r);
    EXPECT_NEAR(res.value_at_0, oracle.value, 1e-10);
  }
}

TEST(UpperSnell, BellmanConsistency) {
  Rng rng(42);
  auto m = build_path_tree(3, 3, {0.3, 0.3, 0.4}, 0.2);
  StableFamily fam(m, {Generator::linear_drift(0.5), Generator::abs_drift(1.0), Generator::zero()});
  auto r = random_reward(m, rng, 3, true);
  auto res = upper_snell_envelope(fam, r);
  const auto probs = m->probabilities();
  const auto w = m->projection_weights();
  for (int t = 0; t < 3; ++t)
    for (std::size_t j = 0; j < m->slice_size(t); ++j) {
      double mean = 0.0, theta = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double v = res.envelope(t + 1, m->child(t, j, k));
        mean += probs[k] * v;
        theta += w[k] * v;
      }
      double best = r.reward(t, j);
      for (std::size_t i = 0; i < 3; ++i)
        best = std::max(best, mean + m->dt() * fam.generator(i)(t, j, theta) + r.density(i, t, j) * m->dt());
      EXPECT_NEAR(res.envelope(t, j), best, 1e-12);
    }
  for (std::size_t j = 0; j < m->slice_size(3); ++j) EXPECT_EQ(res.envelope(3, j), r.reward(3, j));
}

TEST(UpperSnell, TauBarIsOptimal) {
  Rng rng(43);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  StableFamily fam(m, {Generator::zero(), Generator::abs_drift(1.5)});
  oracle::EnumerationBudget budget;
  for (int trial = 0; trial < 5; ++trial) {
    auto r = random_reward(m, rng, 2, true);
    auto res = upper_snell_envelope(fam, r);
    // Best selection for the fixed rule tau_bar.
    double best = -1e300;
    oracle::for_each_index_map(m, 2, budget, [&](const AdaptedSelection::Indices& idx) {
      AdaptedSelection sel(m, idx);
      auto e = selection_expectation(fam, sel);
      auto h = selected_density(sel, r.running);
      best = std::max(best, evaluate_rule(*e, r.reward, res.tau_bar, &h)(0, 0));
    });
    EXPECT_NEAR(best, res.value_at_0, 1e-10);
    // No rule beats the envelope.
    auto brute = oracle::brute_force_upper_value(fam, r);
    EXPECT_LE(brute.value, res.value_at_0 + 1e-10);
  }
}

TEST(UpperSnellProperty, ScalingUnderHomogeneousGenerators) {
  Rng rng(44);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  StableFamily fam(m, {Generator::abs_drift(1.0), Generator::abs_drift(2.0)});
  for (int trial = 0; trial < 20; ++trial) {
    auto r = random_reward(m, rng, 2, true);
    const double alpha = testing::uniform(rng, 0.2, 3.0);
    RewardSpec scaled = r;
    scaled.c_y = alpha * r.c_y;
    scaled.c_h = alpha * r.c_h;
    scaled.reward = AdaptedProcess::generate(m, [&](int t, std::size_t j, double) { return alpha * r.reward(t, j); });
    for (std::size_t i = 0; i < 2; ++i)
      scaled.running[i] =
          AdaptedProcess::generate(m, [&](int t, std::size_t j, double) { return alpha * r.running[i](t, j); });
    auto a = upper_snell_envelope(fam, r);
    auto b = upper_snell_envelope(fam, scaled);
    EXPECT_NEAR(b.value_at_0, alpha * a.value_at_0, 1e-9);
  }
}

TEST(ApproximateStopping, Examples) {
  const int n = 20;
  auto m = build_binomial_lattice(n, 1.0 / n, 1.0);
  StableFamily fam(m, {Generator::zero()});
  auto r = put_reward(m, 1.1);
  r.c_y = -50.0;
  r.c_h = -50.0;
  auto res = upper_snell_envelope(fam, r);
  auto early = approximate_stopping_time(res, r, 0.01);
  for (int t = 0; t <= n; ++t)
    for (std::size_t j = 0; j < m->slice_size(t); ++j) EXPECT_TRUE(early.stops(t, j));
}

TEST(ApproximateStopping, NestedAndConvergingToTauBar) {
  const int n = 30;
  auto m = build_binomial_lattice(n, 1.0 / n, 1.0);
  StableFamily fam(m, {Generator::zero()});
  auto r = put_reward(m, 1.1);
  auto res = upper_snell_envelope(fam, r);
  std::vector<StoppingRule> rules;
  for (double d : {0.5, 0.9, 0.99, 1 - 1e-12}) rules.push_back(approximate_stopping_time(res, r, d));
  for (std::size_t k = 1; k < rules.size(); ++k) EXPECT_TRUE(rules[k].stop_set_within(rules[k - 1]));
  EXPECT_EQ(rules.back().flags(), res.tau_bar.flags());
  EXPECT_THROW(approximate_stopping_time(res, r, 0.0), ArgumentError);
  EXPECT_THROW(approximate_stopping_time(res, r, 1.0), ArgumentError);
}

TEST(JDelta, EqualsEnvelope) {
  Rng rng(45);
  auto lat = build_binomial_lattice(20, 0.05, 1.0);
  StableFamily single(lat, {Generator::zero()});
  auto put = put_reward(lat, 1.1);
  auto res = upper_snell_envelope(single, put);
  for (double d : {0.3, 0.7, 0.95}) {
    auto j = j_delta_process(res, single, put, d);
    EXPECT_LT(j.max_abs_difference(res.envelope), 1e-12) << d;
  }

  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  StableFamily fam(m, {Generator::zero(), Generator::abs_drift(1.0)});
  auto r = random_reward(m, rng, 2, true);
  auto res2 = upper_snell_envelope(fam, r);
  auto j = j_delta_process(res2, fam, r, 1 - 1e-12);
  EXPECT_LT(j.max_abs_difference(res2.envelope), 1e-12);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_EQ(j(3, k), r.reward(3, k));
}

TEST(SnellCharacterization, SelfCheckAndCandidates) {
  Rng rng(46);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  StableFamily fam(m, {Generator::linear_drift(1.0), Generator::abs_drift(0.5)});
  auto r = random_reward(m, rng, 2, true);
  auto res = upper_snell_envelope(fam, r);
  auto report = verify_snell_characterization(res, fam, r);
  EXPECT_TRUE(report.all_passed()) << report.to_string();
  for (const char* name : {"supermartingale", "domination", "minimality", "optional sampling",
                           "tau_bar attains envelope"})
    EXPECT_NE(report.find(name), nullptr) << name;

  auto shifted = AdaptedProcess::generate(m, [&](int t, std::size_t j, double) { return res.envelope(t, j) + 1.0; });
  EXPECT_TRUE(check_supermartingale(fam, shifted, r).all_passed());
  auto with_candidate = verify_snell_characterization(res, fam, r, {.candidate = &shifted});
  EXPECT_TRUE(with_candidate.all_passed()) << with_candidate.to_string();
}

TEST(SnellCharacterization, RewardItselfIsNotASupermartingale) {
  auto m = build_binomial_lattice(6, 1.0 / 6, 0.0);
  StableFamily fam(m, {Generator::zero()});
  // Y = x^2 has a strict one-step submartingale drift of dt.
  RewardSpec r{AdaptedProcess::generate(m, [](int, std::size_t, double x) { return x * x; }), {}, -1.0, -1.0};
  auto report = check_supermartingale(fam, r.reward, r);
  const auto* entry = report.find("supermartingale");
  ASSERT_NE(entry, nullptr);
  EXPECT_FALSE(entry->passed);
  EXPECT_FALSE(entry->witness.empty());
}

TEST(RewardAssumptions, Guards) {
  auto m = build_path_tree(2, 2, {0.5, 0.5}, 0.5);
  RewardSpec ok{AdaptedProcess(m, 0.0), {AdaptedProcess(m, -0.5)}, -1.0, -1.0};
  auto diag = check_reward_assumptions(ok, 1);
  EXPECT_DOUBLE_EQ(diag.min_density, -0.5);
  EXPECT_NEAR(diag.min_increment, -0.5, 1e-15);

  RewardSpec bad_cy = ok;
  bad_cy.c_y = 0.0;
  EXPECT_THROW(check_reward_assumptions(bad_cy, 1), ConfigError);
  RewardSpec low_y = ok;
  low_y.reward = AdaptedProcess(m, -2.0);
  EXPECT_THROW(check_reward_assumptions(low_y, 1), ConfigError);
  RewardSpec low_h = ok;
  low_h.running = {AdaptedProcess(m, -5.0)};
  EXPECT_THROW(check_reward_assumptions(low_h, 1), ConfigError);
  EXPECT_THROW(check_reward_assumptions(ok, 2), ConfigError);

  StableFamily fam(m, {Generator::zero()});
  EXPECT_THROW(upper_snell_envelope(fam, low_y), ConfigError);
}

}  // namespace
}  // namespace nlstop
