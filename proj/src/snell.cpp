#include "nlstop/snell.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

namespace {

std::string node_witness(int t, std::size_t node, double lhs, double rhs) {
  std::ostringstream os;
  os.precision(17);
  os << "t=" << t << " node=" << node << " lhs=" << lhs << " rhs=" << rhs;
  return os.str();
}

void require_model(const RewardSpec& reward, const ModelPtr& model) {
  if (reward.reward.model_ptr() != model)
    throw ArgumentError("reward lives on a different model");
  for (const auto& h : reward.running)
    if (h.model_ptr() != model) throw ArgumentError("running reward lives on a different model");
}

}  // namespace

RewardDiagnostics check_reward_assumptions(const RewardSpec& reward, std::size_t base_size) {
  if (!reward.running.empty() && reward.running.size() != base_size) {
    std::ostringstream os;
    os << "expected " << base_size << " running-reward densities, got " << reward.running.size();
    throw ConfigError(os.str());
  }
  if (!(reward.c_y < 0.0)) throw ConfigError("C_Y must be negative");
  if (!(reward.c_h < 0.0)) throw ConfigError("C_H must be negative");

  const FilteredModel& m = reward.reward.model();
  const int n = m.n_steps();
  RewardDiagnostics d;
  d.min_reward = std::numeric_limits<double>::infinity();
  for (int t = 0; t <= n; ++t)
    for (double y : reward.reward.slice(t)) {
      d.min_reward = std::min(d.min_reward, y);
      d.max_abs_reward = std::max(d.max_abs_reward, std::abs(y));
    }
  if (d.min_reward < reward.c_y) {
    std::ostringstream os;
    os << "reward falls below C_Y: min Y = " << d.min_reward << " < " << reward.c_y;
    throw ConfigError(os.str());
  }

  // worst(t, node): smallest H increment over windows starting at (t, node),
  // with every node free to pick any base density.
  std::vector<double> worst(m.slice_size(n), 0.0);
  for (int t = n - 1; t >= 0; --t) {
    std::vector<double> cur(m.slice_size(t));
    for (std::size_t node = 0; node < cur.size(); ++node) {
      double h = base_size == 0 || reward.running.empty() ? 0.0
                                                          : std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < reward.running.size(); ++i) h = std::min(h, reward.density(i, t, node));
      d.min_density = std::min(d.min_density, h);
      double child = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < m.branching(); ++k) child = std::min(child, worst[m.child(t, node, k)]);
      cur[node] = std::min(0.0, h * m.dt() + child);
      d.min_increment = std::min(d.min_increment, cur[node]);
    }
    worst = std::move(cur);
  }
  if (d.min_increment < reward.c_h) {
    std::ostringstream os;
    os << "running reward increment " << d.min_increment << " falls below C_H = " << reward.c_h;
    throw ConfigError(os.str());
  }
  return d;
}

SnellResult envelope_sweep(const std::vector<std::shared_ptr<const GExpectation>>& priors,
                           const RewardSpec& reward, Aggregate aggregate) {
  if (priors.empty()) throw ArgumentError("envelope needs at least one prior");
  const ModelPtr& model = priors.front()->model();
  require_model(reward, model);
  if (!reward.running.empty() && reward.running.size() != priors.size())
    throw ArgumentError("one running-reward density per prior is required");

  const int n = model->n_steps();
  const double dt = model->dt();
  AdaptedProcess z(model);
  std::vector<std::vector<std::size_t>> arg(n);
  std::copy(reward.reward.slice(n).begin(), reward.reward.slice(n).end(), z.slice(n).begin());
  for (int t = n - 1; t >= 0; --t) {
    const auto next = z.slice(t + 1);
    arg[t].assign(model->slice_size(t), 0);
    for (std::size_t node = 0; node < arg[t].size(); ++node) {
      double best = 0.0;
      for (std::size_t i = 0; i < priors.size(); ++i) {
        const double v = priors[i]->step(t, node, next).value + reward.density(i, t, node) * dt;
        const bool better = aggregate == Aggregate::max ? v > best : v < best;
        if (i == 0 || better) {
          best = v;
          arg[t][node] = i;
        }
      }
      z(t, node) = std::max(reward.reward(t, node), best);
    }
  }
  auto tau = StoppingRule::first_hitting(model, [&](int t, std::size_t node) {
    return z(t, node) - reward.reward(t, node) <= kStopTolerance;
  });
  const double v0 = z(0, 0);
  return SnellResult{std::move(z), std::move(tau), std::move(arg), v0};
}

SnellResult upper_snell_envelope(const StableFamily& family, const RewardSpec& reward) {
  check_reward_assumptions(reward, family.size());
  std::vector<std::shared_ptr<const GExpectation>> priors;
  for (std::size_t i = 0; i < family.size(); ++i) priors.push_back(family.expectation_ptr(i));
  return envelope_sweep(priors, reward, Aggregate::max);
}

StoppingRule approximate_stopping_time(const SnellResult& result, const RewardSpec& reward,
                                       double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  const double floor = (1.0 - delta) * (reward.c_y + 2.0 * reward.c_h);
  return StoppingRule::first_hitting(result.envelope.model_ptr(), [&](int t, std::size_t node) {
    return reward.reward(t, node) >= delta * result.envelope(t, node) + floor;
  });
}

AdaptedProcess j_delta_process(const SnellResult& result, const StableFamily& family,
                               const RewardSpec& reward, double delta) {
  const StoppingRule tau = approximate_stopping_time(result, reward, delta);
  const ModelPtr& model = family.model();
  const int n = model->n_steps();
  AdaptedProcess j(model);
  for (int t = n; t >= 0; --t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      if (tau.stops(t, node)) {
        j(t, node) = result.envelope(t, node);
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < family.size(); ++i)
        best = std::max(best, family.expectation(i).step(t, node, j.slice(t + 1)).value +
                                  reward.density(i, t, node) * model->dt());
      j(t, node) = best;
    }
  return j;
}

Report check_supermartingale(const StableFamily& family, const AdaptedProcess& process,
                             const RewardSpec& reward, double tolerance) {
  const FilteredModel& m = *family.model();
  Report report;
  report.entry("supermartingale");
  for (std::size_t i = 0; i < family.size(); ++i)
    for (int t = 0; t < m.n_steps(); ++t)
      for (std::size_t node = 0; node < m.slice_size(t); ++node) {
        const double lhs = family.expectation(i).step(t, node, process.slice(t + 1)).value +
                           reward.density(i, t, node) * m.dt();
        const bool ok = lhs <= process(t, node) + tolerance;
        report.record("supermartingale", ok,
                      ok ? "" : "base " + std::to_string(i) + " " +
                                    node_witness(t, node, lhs, process(t, node)));
      }
  return report;
}

Report verify_snell_characterization(const SnellResult& result, const StableFamily& family,
                                     const RewardSpec& reward, const SnellCheckOptions& opt) {
  const ModelPtr& model = family.model();
  const int n = model->n_steps();
  const AdaptedProcess& z = result.envelope;
  Report report = check_supermartingale(family, z, reward, opt.tolerance);

  for (int t = 0; t <= n; ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      const bool ok = z(t, node) >= reward.reward(t, node) - opt.tolerance;
      report.record("domination", ok, ok ? "" : node_witness(t, node, z(t, node), reward.reward(t, node)));
    }

  std::mt19937_64 rng(opt.seed);
  {
    AdaptedProcess shifted(model);
    const AdaptedProcess* x = opt.candidate;
    if (!x) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double c = u(rng), r = u(rng);
      for (int t = 0; t <= n; ++t)
        for (std::size_t node = 0; node < model->slice_size(t); ++node)
          shifted(t, node) = z(t, node) + c * (1.0 + r * (n - t));
      x = &shifted;
    }
    const Report super = check_supermartingale(family, *x, reward, opt.tolerance);
    bool dominates = true;
    for (int t = 0; t <= n && dominates; ++t)
      for (std::size_t node = 0; node < model->slice_size(t); ++node)
        if ((*x)(t, node) < reward.reward(t, node) - opt.tolerance) dominates = false;
    if (!super.all_passed() || !dominates) {
      report.record("minimality", false,
                    "candidate is not a dominating supermartingale: " +
                        (super.all_passed() ? std::string("domination fails")
                                            : super.entries().front().witness));
    } else {
      for (int t = 0; t <= n; ++t)
        for (std::size_t node = 0; node < model->slice_size(t); ++node) {
          const bool ok = (*x)(t, node) >= z(t, node) - opt.tolerance;
          report.record("minimality", ok, ok ? "" : node_witness(t, node, (*x)(t, node), z(t, node)));
        }
    }
  }

  // Optional sampling: restarting a random rule anywhere never beats Z.
  std::bernoulli_distribution flip(0.3);
  for (std::size_t s = 0; s < opt.sampled_rules; ++s) {
    const auto rule =
        StoppingRule::first_hitting(model, [&](int, std::size_t) { return flip(rng); });
    for (std::size_t i = 0; i < family.size(); ++i) {
      const AdaptedProcess* h = reward.running.empty() ? nullptr : &reward.running[i];
      const AdaptedProcess v = evaluate_rule(family.expectation(i), z, rule, h);
      std::string witness;
      bool ok = true;
      for (int t = 0; t <= n && ok; ++t)
        for (std::size_t node = 0; node < model->slice_size(t) && ok; ++node)
          if (v(t, node) > z(t, node) + opt.tolerance) {
            ok = false;
            witness = "base " + std::to_string(i) + " " + node_witness(t, node, v(t, node), z(t, node));
          }
      report.record("optional sampling", ok, witness);
    }
  }

  // The argmax selection stopped at tau_bar attains Z from every node.
  {
    AdaptedSelection sel(model, result.argmax);
    const AdaptedProcess h = selected_density(sel, reward.running);
    const AdaptedProcess v =
        evaluate_rule(*selection_expectation(family, sel), reward.reward, result.tau_bar, &h);
    for (int t = 0; t <= n; ++t)
      for (std::size_t node = 0; node < model->slice_size(t); ++node) {
        const bool ok = std::abs(v(t, node) - z(t, node)) <= opt.tolerance;
        report.record("tau_bar attains envelope", ok,
                      ok ? "" : node_witness(t, node, v(t, node), z(t, node)));
      }
  }
  return report;
}

}  // namespace nlstop
