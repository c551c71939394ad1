#include "nlstop/robust.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

namespace {

std::string witness(int t, std::size_t node, double lhs, double rhs) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t << " node=" << node << " lhs=" << lhs << " rhs=" << rhs;
  return os.str();
}

/// Forward reachability of nodes where `rule` has not stopped strictly
/// before; works on both model kinds.
std::vector<std::vector<std::uint8_t>> reachable_before_stop(const StoppingRule& rule) {
  const FilteredModel& m = rule.model();
  std::vector<std::vector<std::uint8_t>> alive(m.n_steps() + 1);
  alive[0] = {1};
  for (int t = 0; t < m.n_steps(); ++t) {
    alive[t + 1].assign(m.slice_size(t + 1), 0);
    for (std::size_t node = 0; node < alive[t].size(); ++node)
      if (alive[t][node] && !rule.stops(t, node))
        for (std::size_t k = 0; k < m.branching(); ++k) alive[t + 1][m.child(t, node, k)] = 1;
  }
  return alive;
}

RewardSpec single_reward(const RewardSpec& reward, std::size_t i) {
  RewardSpec r{reward.reward, {}, reward.c_y, reward.c_h};
  if (!reward.running.empty()) r.running.push_back(reward.running.at(i));
  return r;
}

}  // namespace

SinglePriorEnvelope single_prior_envelope(const StableFamily& family, std::size_t i,
                                          const RewardSpec& reward) {
  SnellResult r = envelope_sweep({family.expectation_ptr(i)}, single_reward(reward, i),
                                 Aggregate::max);
  return {std::move(r.envelope), std::move(r.tau_bar)};
}

RobustResult robust_values(const StableFamily& family, const RewardSpec& reward) {
  check_reward_assumptions(reward, family.size());
  std::vector<AdaptedProcess> envelopes;
  std::vector<StoppingRule> taus;
  std::vector<std::shared_ptr<const GExpectation>> priors;
  for (std::size_t i = 0; i < family.size(); ++i) {
    SinglePriorEnvelope e = single_prior_envelope(family, i, reward);
    envelopes.push_back(std::move(e.envelope));
    taus.push_back(std::move(e.tau));
    priors.push_back(family.expectation_ptr(i));
  }
  SnellResult lower = envelope_sweep(priors, reward, Aggregate::min);
  // The lower envelope and V coincide in discrete time, so tau_V is the
  // first hit of the same set as tau_lower.
  StoppingRule tau_v = lower.tau_bar;
  auto region = reachable_before_stop(lower.tau_bar);
  return RobustResult{std::move(envelopes), std::move(taus),      std::move(lower.tau_bar),
                      std::move(lower.envelope), std::move(tau_v), std::move(lower.argmax),
                      std::move(region),         lower.value_at_0};
}

AdaptedProcess lower_rule_value(const StableFamily& family, const RewardSpec& reward,
                                const StoppingRule& rule) {
  const ModelPtr& model = family.model();
  const int n = model->n_steps();
  AdaptedProcess w(model);
  for (int t = n; t >= 0; --t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      if (rule.stops(t, node)) {
        w(t, node) = reward.reward(t, node);
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < family.size(); ++i)
        best = std::min(best, family.expectation(i).step(t, node, w.slice(t + 1)).value +
                                  reward.density(i, t, node) * model->dt());
      w(t, node) = best;
    }
  return w;
}

Report verify_robust_structure(const RobustResult& result, const StableFamily& family,
                               const RewardSpec& reward, double tol) {
  const ModelPtr& model = family.model();
  const int n = model->n_steps();
  const AdaptedProcess& v = result.lower;
  const auto region = reachable_before_stop(result.tau_lower);
  Report report;

  report.entry("submartingale up to tau_lower");
  for (std::size_t i = 0; i < family.size(); ++i)
    for (int t = 0; t < n; ++t)
      for (std::size_t node = 0; node < model->slice_size(t); ++node) {
        if (!region[t][node] || result.tau_lower.stops(t, node)) continue;
        const double lhs = family.expectation(i).step(t, node, v.slice(t + 1)).value +
                           reward.density(i, t, node) * model->dt();
        const bool ok = lhs >= v(t, node) - tol;
        report.record("submartingale up to tau_lower", ok,
                      ok ? "" : "base " + std::to_string(i) + " " + witness(t, node, lhs, v(t, node)));
      }

  const auto v_region = reachable_before_stop(result.tau_v);
  report.entry("value meets reward at tau_V");
  for (int t = 0; t <= n; ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      if (!v_region[t][node] || !result.tau_v.stops(t, node)) continue;
      const bool ok = std::abs(v(t, node) - reward.reward(t, node)) <= tol;
      report.record("value meets reward at tau_V", ok,
                    ok ? "" : witness(t, node, v(t, node), reward.reward(t, node)));
    }

  report.record("tau_V <= tau_lower", result.tau_v.precedes(result.tau_lower),
                "tau_V stops after tau_lower on some path");

  {
    const double got = lower_rule_value(family, reward, result.tau_v)(0, 0);
    const bool ok = std::abs(got - result.value_at_0) <= tol;
    report.record("tau_V attains robust value", ok, ok ? "" : witness(0, 0, got, result.value_at_0));
  }

  for (int t = 0; t <= n; ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      double lowest = std::numeric_limits<double>::infinity();
      for (const auto& r : result.envelopes) lowest = std::min(lowest, r(t, node));
      const bool ok = reward.reward(t, node) <= v(t, node) + tol && v(t, node) <= lowest + tol;
      report.record("ordering Y <= V <= min R", ok, ok ? "" : witness(t, node, v(t, node), lowest));
    }
  return report;
}

}  // namespace nlstop
