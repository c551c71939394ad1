#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "nlstop/gexp.hpp"
#include "nlstop/lattice.hpp"

namespace nlstop {

/// Controlled diffusion dX = sigma dB with drift f(t, x, u) entering through
/// a change of measure, running reward h(t, x, u) and terminal reward phi(x).
struct ControlledSpec {
  std::function<double(double t, double x)> sigma;
  std::function<double(double t, double x, double u)> drift;
  std::function<double(double t, double x, double u)> running;
  std::function<double(double x)> terminal;
  std::vector<double> controls;
  double k_bound = 1.0;
};

/// Grid index of the control applied at every non-terminal node.
using ControlMap = std::vector<std::vector<std::size_t>>;

/// X(t + dt) = X(t) -+ sigma(t, X(t)) sqrt(dt) with probability 1/2 each.
/// Returns a lattice when the children recombine (within 1e-12), otherwise a
/// path tree subject to `max_depth` (BudgetError). Validates the spec on the
/// resulting states.
ModelPtr build_state_lattice(const ControlledSpec& spec, int n_steps, double dt, double x0,
                             int max_depth = kDefaultMaxDepth);

/// Throws ConfigError when sigma, f, h or phi break their bounds on the
/// model's states and StabilityError when |theta| max|increment| >= 1.
void validate_controlled_spec(const ControlledSpec& spec, const FilteredModel& model);

/// theta(t, node, u) = f / sigma at the node state.
double control_slope(const ControlledSpec& spec, const FilteredModel& model, int t,
                     std::size_t node, double u);

/// Linear generator with node-dependent slope theta(t, node, U(t, node)).
Generator control_generator(const ControlledSpec& spec, const ModelPtr& model, const ControlMap& u);

struct HamiltonianChoice {
  std::size_t index = 0;
  double control = 0.0;
  double value = 0.0;
};

/// argmax over the grid of theta(u) z + h(u); lowest index on ties.
HamiltonianChoice hamiltonian_argmax(const ControlledSpec& spec, const FilteredModel& model, int t,
                                     std::size_t node, double z);

/// phi at every node and h(U) at every non-terminal node.
AdaptedProcess terminal_reward_process(const ControlledSpec& spec, const ModelPtr& model);
AdaptedProcess control_running_process(const ControlledSpec& spec, const ModelPtr& model,
                                       const ControlMap& u);

struct ControllerStopperResult {
  ModelPtr model;
  AdaptedProcess value;
  StoppingRule tau_bar;
  ControlMap u_star;
  double value_at_0 = 0.0;
  /// E_{g_U*}[phi(X_tau_bar) + sum h(U*) dt], recomputed from the outputs.
  double attained_value = 0.0;
};

ControllerStopperResult solve_controller_stopper(const ControlledSpec& spec, const ModelPtr& model);
ControllerStopperResult solve_controller_stopper(const ControlledSpec& spec, int n_steps, double dt,
                                                 double x0, int max_depth = kDefaultMaxDepth);

}  // namespace nlstop
