#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nlstop/controlstop.hpp"
#include "nlstop/lattice.hpp"
#include "nlstop/pasting.hpp"
#include "nlstop/snell.hpp"

/// Exact brute-force references. Everything here enumerates; nothing reuses
/// the dynamic programs it is meant to check.
namespace nlstop::oracle {

struct EnumerationBudget {
  std::uint64_t max_rules = 1'000'000;
  std::uint64_t max_selections = 1'000'000;

  /// Defaults, with both limits replaced by NLSTOP_MAX_BUDGET when set.
  static EnumerationBudget from_environment();
};

/// s(leaf) = 1, s(node) = 1 + prod_children s; saturates at UINT64_MAX.
std::uint64_t count_stopping_rules(const FilteredModel& tree);
/// |choices|^(number of non-terminal nodes); saturates at UINT64_MAX.
std::uint64_t count_selections(const FilteredModel& model, std::size_t choices);

/// Visits every stopping rule of a path tree once, in canonical form (only
/// the first stopping node of each path is flagged). Throws BudgetError when
/// the count exceeds the budget.
void for_each_stopping_rule(const ModelPtr& tree, const EnumerationBudget& budget,
                            const std::function<void(const StoppingRule&)>& visit);
std::vector<StoppingRule> enumerate_stopping_rules(const ModelPtr& tree,
                                                   const EnumerationBudget& budget = {});

/// Visits every map from non-terminal nodes to {0, ..., choices - 1}.
void for_each_index_map(const ModelPtr& model, std::size_t choices, const EnumerationBudget& budget,
                        const std::function<void(const AdaptedSelection::Indices&)>& visit);

/// Y at the stopping node plus the accumulated running reward, path by path.
std::vector<double> stopped_payoff(const StoppingRule& rule, const AdaptedProcess& reward,
                                   const AdaptedProcess* running);

struct UpperOracleResult {
  double value = 0.0;
  AdaptedSelection selection;
  StoppingRule rule;
  /// Number of optimal (selection, rule) pairs, counting a selection only
  /// through its values at nodes where the rule has not stopped.
  std::size_t multiplicity = 0;
  std::size_t evaluations = 0;
};

/// max over (selection, rule) of E_sel[Y_rho + H^sel_rho].
UpperOracleResult brute_force_upper_value(const StableFamily& family, const RewardSpec& reward,
                                          const EnumerationBudget& budget = {},
                                          double tie_tolerance = 1e-10);

struct RobustOracleResult {
  double sup_inf = 0.0;
  double inf_sup = 0.0;
  /// Rules attaining sup_inf within the tie tolerance.
  std::vector<StoppingRule> optimal_rules;
  /// Selections attaining inf_sup within the tie tolerance.
  std::vector<AdaptedSelection> minimizing_selections;
  bool non_constant_minimizer = false;
};

RobustOracleResult brute_force_robust_value(const StableFamily& family, const RewardSpec& reward,
                                            const EnumerationBudget& budget = {},
                                            double tie_tolerance = 1e-10);

/// V(T) = xi; V = (1/kappa) ln sum_k p_k exp(kappa V_child), via log-sum-exp.
AdaptedProcess entropic_process(double kappa, std::span<const double> terminal,
                                const ModelPtr& model);
double entropic_oracle(double kappa, std::span<const double> terminal, const ModelPtr& model);

struct ConvergenceRow {
  double dt = 0.0;
  double value = 0.0;
  double error = 0.0;
  /// log2(err(previous dt) / err(dt)); NaN on the first row.
  double order = 0.0;
};

/// `solve(dt)` and `reference(dt)` are evaluated for every dt, which must be
/// strictly decreasing.
std::vector<ConvergenceRow> convergence_harness(const std::function<double(double)>& solve,
                                                std::span<const double> dts,
                                                const std::function<double(double)>& reference);
/// Reference extrapolated from the last two levels assuming first order:
/// 2 v(h/2) - v(h).
std::vector<ConvergenceRow> convergence_harness(const std::function<double(double)>& solve,
                                                std::span<const double> dts);
std::string format_convergence_table(const std::vector<ConvergenceRow>& rows);

/// E_U[phi(X_rho) + sum_{s < rho} h(U_s) dt] summed leaf by leaf with the
/// changed branch probabilities p_k (1 + theta eps_k). Path-tree only.
double p_u_expectation(const ControlledSpec& spec, const ModelPtr& tree, const ControlMap& u,
                       const StoppingRule& rule);

struct ControlOracleResult {
  double value = 0.0;
  ControlMap controls;
  StoppingRule rule;
  std::size_t evaluations = 0;
};

ControlOracleResult brute_force_controller_stopper(const ControlledSpec& spec, const ModelPtr& tree,
                                                   const EnumerationBudget& budget = {});

}  // namespace nlstop::oracle
