#include "nlstop/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop::oracle {

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kSaturated / a) return kSaturated;
  return a * b;
}

void require_tree(const FilteredModel& m, const char* what) {
  if (!m.is_tree()) throw ArgumentError(std::string(what) + " needs a path tree");
}

void check_budget(std::uint64_t count, std::uint64_t limit, const char* what) {
  if (count > limit) {
    std::ostringstream os;
    os << what << " enumeration needs " << count << " candidates, budget is " << limit;
    throw BudgetError(os.str());
  }
}

}  // namespace

EnumerationBudget EnumerationBudget::from_environment() {
  EnumerationBudget b;
  if (const char* env = std::getenv("NLSTOP_MAX_BUDGET")) {
    std::uint64_t v = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc{} || ptr != end || v == 0)
      throw ConfigError(std::string("NLSTOP_MAX_BUDGET must be a positive integer, got '") + env + "'");
    b.max_rules = b.max_selections = v;
  }
  return b;
}

std::uint64_t count_stopping_rules(const FilteredModel& tree) {
  require_tree(tree, "stopping-rule count");
  std::uint64_t s = 1;
  for (int d = 1; d <= tree.n_steps(); ++d) {
    std::uint64_t prod = 1;
    for (std::size_t k = 0; k < tree.branching(); ++k) prod = saturating_mul(prod, s);
    s = prod == kSaturated ? kSaturated : prod + 1;
  }
  return s;
}

std::uint64_t count_selections(const FilteredModel& model, std::size_t choices) {
  std::uint64_t c = 1;
  for (int t = 0; t < model.n_steps(); ++t)
    for (std::size_t node = 0; node < model.slice_size(t); ++node) c = saturating_mul(c, choices);
  return c;
}

void for_each_stopping_rule(const ModelPtr& tree, const EnumerationBudget& budget,
                            const std::function<void(const StoppingRule&)>& visit) {
  check_budget(count_stopping_rules(*tree), budget.max_rules, "stopping-rule");
  const int n = tree->n_steps();
  StoppingRule::Flags flags(n + 1);
  for (int t = 0; t <= n; ++t) flags[t].assign(tree->slice_size(t), 0);

  // Each pending node either stops or hands its children to the stack.
  std::vector<std::pair<int, std::size_t>> pending{{0, 0}};
  std::function<void()> rec = [&] {
    if (pending.empty()) {
      visit(StoppingRule(tree, flags));
      return;
    }
    const auto [t, node] = pending.back();
    pending.pop_back();
    flags[t][node] = 1;
    rec();
    flags[t][node] = 0;
    if (t < n) {
      for (std::size_t k = 0; k < tree->branching(); ++k)
        pending.emplace_back(t + 1, tree->child(t, node, k));
      rec();
      pending.resize(pending.size() - tree->branching());
    }
    pending.emplace_back(t, node);
  };
  rec();
}

std::vector<StoppingRule> enumerate_stopping_rules(const ModelPtr& tree,
                                                   const EnumerationBudget& budget) {
  std::vector<StoppingRule> rules;
  for_each_stopping_rule(tree, budget, [&](const StoppingRule& r) { rules.push_back(r); });
  return rules;
}

void for_each_index_map(const ModelPtr& model, std::size_t choices, const EnumerationBudget& budget,
                        const std::function<void(const AdaptedSelection::Indices&)>& visit) {
  if (choices == 0) throw ArgumentError("index maps need at least one choice");
  check_budget(count_selections(*model, choices), budget.max_selections, "selection");
  const int n = model->n_steps();
  AdaptedSelection::Indices idx(n);
  for (int t = 0; t < n; ++t) idx[t].assign(model->slice_size(t), 0);
  while (true) {
    visit(idx);
    // Odometer increment over all non-terminal nodes.
    bool carried = true;
    for (int t = 0; t < n && carried; ++t)
      for (std::size_t node = 0; node < idx[t].size() && carried; ++node) {
        if (++idx[t][node] < choices) {
          carried = false;
        } else {
          idx[t][node] = 0;
        }
      }
    if (carried) return;
  }
}

std::vector<double> stopped_payoff(const StoppingRule& rule, const AdaptedProcess& reward,
                                   const AdaptedProcess* running) {
  const FilteredModel& m = rule.model();
  require_tree(m, "stopped_payoff");
  const int n = m.n_steps();
  std::vector<double> out(m.slice_size(n));
  for (std::size_t leaf = 0; leaf < out.size(); ++leaf) {
    const int tau = rule.time_on_path(leaf);
    double v = reward(tau, m.ancestor(n, leaf, tau));
    if (running)
      for (int s = 0; s < tau; ++s) v += (*running)(s, m.ancestor(n, leaf, s)) * m.dt();
    out[leaf] = v;
  }
  return out;
}

UpperOracleResult brute_force_upper_value(const StableFamily& family, const RewardSpec& reward,
                                          const EnumerationBudget& budget, double tol) {
  const ModelPtr& model = family.model();
  require_tree(*model, "brute_force_upper_value");
  const int n = model->n_steps();
  const std::vector<StoppingRule> rules = enumerate_stopping_rules(model, budget);

  double best = -std::numeric_limits<double>::infinity();
  AdaptedSelection::Indices best_sel;
  std::size_t best_rule = 0, evaluations = 0;
  std::vector<double> canonical_values;
  for_each_index_map(model, family.size(), budget, [&](const AdaptedSelection::Indices& idx) {
    const AdaptedSelection sel(model, idx);
    const auto gexp = selection_expectation(family, sel);
    const AdaptedProcess h = selected_density(sel, reward.running);
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const double v = gexp->evaluate(stopped_payoff(rules[r], reward.reward, &h))(0, 0);
      ++evaluations;
      if (v > best) {
        best = v;
        best_sel = idx;
        best_rule = r;
      }
      bool canonical = true;
      for (int t = 0; t < n && canonical; ++t)
        for (std::size_t node = 0; node < idx[t].size() && canonical; ++node)
          if (idx[t][node] != 0 && rules[r].stopped_by(t, node)) canonical = false;
      if (canonical) canonical_values.push_back(v);
    }
  });
  const auto multiplicity = static_cast<std::size_t>(std::count_if(
      canonical_values.begin(), canonical_values.end(), [&](double v) { return v >= best - tol; }));
  return UpperOracleResult{best, AdaptedSelection(model, best_sel), rules[best_rule], multiplicity,
                           evaluations};
}

RobustOracleResult brute_force_robust_value(const StableFamily& family, const RewardSpec& reward,
                                            const EnumerationBudget& budget, double tol) {
  const ModelPtr& model = family.model();
  require_tree(*model, "brute_force_robust_value");
  const std::vector<StoppingRule> rules = enumerate_stopping_rules(model, budget);

  std::vector<AdaptedSelection::Indices> selections;
  std::vector<std::vector<double>> values;  // [selection][rule]
  for_each_index_map(model, family.size(), budget, [&](const AdaptedSelection::Indices& idx) {
    const AdaptedSelection sel(model, idx);
    const auto gexp = selection_expectation(family, sel);
    const AdaptedProcess h = selected_density(sel, reward.running);
    std::vector<double> row(rules.size());
    for (std::size_t r = 0; r < rules.size(); ++r)
      row[r] = gexp->evaluate(stopped_payoff(rules[r], reward.reward, &h))(0, 0);
    selections.push_back(idx);
    values.push_back(std::move(row));
  });

  RobustOracleResult out;
  std::vector<double> worst_by_rule(rules.size(), std::numeric_limits<double>::infinity());
  std::vector<double> best_by_sel(selections.size(), -std::numeric_limits<double>::infinity());
  for (std::size_t s = 0; s < selections.size(); ++s)
    for (std::size_t r = 0; r < rules.size(); ++r) {
      worst_by_rule[r] = std::min(worst_by_rule[r], values[s][r]);
      best_by_sel[s] = std::max(best_by_sel[s], values[s][r]);
    }
  out.sup_inf = *std::max_element(worst_by_rule.begin(), worst_by_rule.end());
  out.inf_sup = *std::min_element(best_by_sel.begin(), best_by_sel.end());
  for (std::size_t r = 0; r < rules.size(); ++r)
    if (worst_by_rule[r] >= out.sup_inf - tol) out.optimal_rules.push_back(rules[r]);
  for (std::size_t s = 0; s < selections.size(); ++s) {
    if (best_by_sel[s] > out.inf_sup + tol) continue;
    out.minimizing_selections.emplace_back(model, selections[s]);
    for (const auto& slice : selections[s])
      for (std::size_t k : slice)
        if (k != selections[s][0][0]) out.non_constant_minimizer = true;
  }
  return out;
}

AdaptedProcess entropic_process(double kappa, std::span<const double> terminal,
                                const ModelPtr& model) {
  if (!(kappa > 0.0)) throw ArgumentError("entropic oracle needs kappa > 0");
  const int n = model->n_steps();
  if (terminal.size() != model->slice_size(n)) throw ArgumentError("terminal size mismatch");
  const auto probs = model->probabilities();
  AdaptedProcess v(model);
  std::copy(terminal.begin(), terminal.end(), v.slice(n).begin());
  for (int t = n - 1; t >= 0; --t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) {
      double shift = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < probs.size(); ++k)
        shift = std::max(shift, kappa * v(t + 1, model->child(t, node, k)));
      double sum = 0.0;
      for (std::size_t k = 0; k < probs.size(); ++k)
        sum += probs[k] * std::exp(kappa * v(t + 1, model->child(t, node, k)) - shift);
      v(t, node) = (shift + std::log(sum)) / kappa;
    }
  return v;
}

double entropic_oracle(double kappa, std::span<const double> terminal, const ModelPtr& model) {
  return entropic_process(kappa, terminal, model)(0, 0);
}

std::vector<ConvergenceRow> convergence_harness(const std::function<double(double)>& solve,
                                                std::span<const double> dts,
                                                const std::function<double(double)>& reference) {
  for (std::size_t i = 1; i < dts.size(); ++i)
    if (!(dts[i] < dts[i - 1])) throw ArgumentError("dt sequence must be strictly decreasing");
  std::vector<ConvergenceRow> rows;
  for (double dt : dts) {
    ConvergenceRow row{dt, solve(dt), 0.0, std::numeric_limits<double>::quiet_NaN()};
    row.error = std::abs(row.value - reference(dt));
    if (!rows.empty()) row.order = std::log2(rows.back().error / row.error);
    rows.push_back(row);
  }
  return rows;
}

std::vector<ConvergenceRow> convergence_harness(const std::function<double(double)>& solve,
                                                std::span<const double> dts) {
  if (dts.size() < 2) throw ArgumentError("extrapolation needs at least two dt levels");
  std::vector<double> values;
  for (double dt : dts) values.push_back(solve(dt));
  const double ref = 2.0 * values.back() - values[values.size() - 2];
  std::size_t i = 0;
  return convergence_harness([&](double) { return values[i++]; }, dts,
                             [ref](double) { return ref; });
}

std::string format_convergence_table(const std::vector<ConvergenceRow>& rows) {
  std::string out = "dt,value,error,order\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.dt, r.value, r.error, r.order);
    out += buf;
  }
  return out;
}

double p_u_expectation(const ControlledSpec& spec, const ModelPtr& tree, const ControlMap& u,
                       const StoppingRule& rule) {
  const FilteredModel& m = *tree;
  require_tree(m, "p_u_expectation");
  const int n = m.n_steps();
  const auto probs = m.probabilities();
  const auto eps = m.increments();
  const std::size_t b = m.branching();
  double total = 0.0;
  for (std::size_t leaf = 0; leaf < m.slice_size(n); ++leaf) {
    const int tau = rule.time_on_path(leaf);
    double prob = 1.0;
    double payoff = spec.terminal(m.state(tau, m.ancestor(n, leaf, tau)));
    for (int s = 0; s < n; ++s) {
      const std::size_t node = m.ancestor(n, leaf, s);
      const std::size_t branch = m.ancestor(n, leaf, s + 1) % b;
      const double ctl = spec.controls.at(u.at(s).at(node));
      const double x = m.state(s, node);
      const double theta = spec.drift(s * m.dt(), x, ctl) / spec.sigma(s * m.dt(), x);
      prob *= probs[branch] * (1.0 + theta * eps[branch]);
      if (s < tau) payoff += spec.running(s * m.dt(), x, ctl) * m.dt();
    }
    total += prob * payoff;
  }
  return total;
}

ControlOracleResult brute_force_controller_stopper(const ControlledSpec& spec, const ModelPtr& tree,
                                                   const EnumerationBudget& budget) {
  require_tree(*tree, "brute_force_controller_stopper");
  const std::vector<StoppingRule> rules = enumerate_stopping_rules(tree, budget);
  double best = -std::numeric_limits<double>::infinity();
  ControlMap best_u;
  std::size_t best_rule = 0, evaluations = 0;
  for_each_index_map(tree, spec.controls.size(), budget, [&](const AdaptedSelection::Indices& u) {
    for (std::size_t r = 0; r < rules.size(); ++r) {
      const double v = p_u_expectation(spec, tree, u, rules[r]);
      ++evaluations;
      if (v > best) {
        best = v;
        best_u = u;
        best_rule = r;
      }
    }
  });
  return {best, std::move(best_u), rules[best_rule], evaluations};
}

}  // namespace nlstop::oracle
