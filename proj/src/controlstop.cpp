#include "nlstop/controlstop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

namespace {

constexpr double kRecombineTolerance = 1e-12;

double time_of(const FilteredModel& m, int t) { return t * m.dt(); }

std::string at(int t, std::size_t node, double x) {
  std::ostringstream os;
  os << " at t=" << t << " node=" << node << " x=" << x;
  return os.str();
}

/// Per node, the smallest sup_s |X_s| over full paths through the node.
std::vector<std::vector<double>> min_path_sup(const FilteredModel& m) {
  const int n = m.n_steps();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> fwd(n + 1), bwd(n + 1);
  fwd[0] = {std::abs(m.state(0, 0))};
  for (int t = 0; t < n; ++t) {
    fwd[t + 1].assign(m.slice_size(t + 1), inf);
    for (std::size_t node = 0; node < fwd[t].size(); ++node)
      for (std::size_t k = 0; k < m.branching(); ++k) {
        const std::size_t c = m.child(t, node, k);
        fwd[t + 1][c] = std::min(fwd[t + 1][c], fwd[t][node]);
      }
    for (std::size_t c = 0; c < fwd[t + 1].size(); ++c)
      fwd[t + 1][c] = std::max(fwd[t + 1][c], std::abs(m.state(t + 1, c)));
  }
  bwd[n].resize(m.slice_size(n));
  for (std::size_t c = 0; c < bwd[n].size(); ++c) bwd[n][c] = std::abs(m.state(n, c));
  for (int t = n - 1; t >= 0; --t) {
    bwd[t].resize(m.slice_size(t));
    for (std::size_t node = 0; node < bwd[t].size(); ++node) {
      double best = inf;
      for (std::size_t k = 0; k < m.branching(); ++k) best = std::min(best, bwd[t + 1][m.child(t, node, k)]);
      bwd[t][node] = std::max(best, std::abs(m.state(t, node)));
    }
  }
  for (int t = 0; t <= n; ++t)
    for (std::size_t node = 0; node < fwd[t].size(); ++node)
      fwd[t][node] = std::max(fwd[t][node], bwd[t][node]);
  return fwd;
}

}  // namespace

ModelPtr build_state_lattice(const ControlledSpec& spec, int n_steps, double dt, double x0,
                             int max_depth) {
  const TimeGrid grid(n_steps, dt);
  if (!spec.sigma) throw ConfigError("controlled spec needs sigma");
  const double sq = std::sqrt(dt);
  auto vol = [&](int t, double x) {
    const double s = spec.sigma(t * dt, x);
    if (!(s > 0.0)) throw ConfigError("sigma must be positive" + at(t, 0, x));
    return s;
  };

  std::vector<std::vector<double>> states{{x0}};
  bool recombines = true;
  for (int t = 0; t < n_steps && recombines; ++t) {
    const auto& cur = states.back();
    std::vector<double> next(cur.size() + 1);
    for (std::size_t j = 0; j < cur.size(); ++j) {
      const double s = vol(t, cur[j]);
      const double down = cur[j] - s * sq;
      if (j > 0 && std::abs(next[j] - down) > kRecombineTolerance) {
        recombines = false;
        break;
      }
      next[j] = down;
      next[j + 1] = cur[j] + s * sq;
    }
    if (recombines) states.push_back(std::move(next));
  }

  ModelPtr model;
  if (recombines) {
    model = FilteredModel::lattice(grid, {0.5, 0.5}, std::move(states));
  } else {
    if (n_steps > max_depth) {
      std::ostringstream os;
      os << "state tree depth " << n_steps << " exceeds the cap of " << max_depth;
      throw BudgetError(os.str());
    }
    std::vector<std::vector<double>> tree{{x0}};
    for (int t = 0; t < n_steps; ++t) {
      std::vector<double> next(tree.back().size() * 2);
      for (std::size_t node = 0; node < tree.back().size(); ++node) {
        const double x = tree.back()[node];
        const double s = vol(t, x);
        next[2 * node] = x - s * sq;
        next[2 * node + 1] = x + s * sq;
      }
      tree.push_back(std::move(next));
    }
    model = FilteredModel::tree(grid, {0.5, 0.5}, std::move(tree));
  }
  validate_controlled_spec(spec, *model);
  return model;
}

void validate_controlled_spec(const ControlledSpec& spec, const FilteredModel& m) {
  if (!spec.sigma || !spec.drift || !spec.running || !spec.terminal)
    throw ConfigError("controlled spec needs sigma, drift, running and terminal functions");
  if (spec.controls.empty()) throw ConfigError("control grid is empty");
  if (!(spec.k_bound > 0.0)) throw ConfigError("K_bound must be positive");
  const double k = spec.k_bound;
  const auto sup = min_path_sup(m);

  for (int t = 0; t <= m.n_steps(); ++t)
    for (std::size_t node = 0; node < m.slice_size(t); ++node) {
      const double x = m.state(t, node);
      const double phi = spec.terminal(x);
      if (phi < -k || phi > k * std::abs(x)) {
        std::ostringstream os;
        os << "terminal reward " << phi << " outside [-K, K|x|]" << at(t, node, x);
        throw ConfigError(os.str());
      }
      if (t == m.n_steps()) continue;

      const double s = spec.sigma(time_of(m, t), x);
      if (!(s > 0.0) || 1.0 / s > k) {
        std::ostringstream os;
        os << "sigma " << s << " violates 1/sigma <= K = " << k << at(t, node, x);
        throw ConfigError(os.str());
      }
      for (double u : spec.controls) {
        const double f = spec.drift(time_of(m, t), x, u);
        if (std::abs(f) > k) {
          std::ostringstream os;
          os << "drift " << f << " exceeds K = " << k << " for u=" << u << at(t, node, x);
          throw ConfigError(os.str());
        }
        const double product = std::abs(f / s) * m.max_abs_increment();
        if (product >= 1.0) {
          std::ostringstream os;
          os << "monotone-scheme condition K_g*sqrt(dt) <= 1 violated by the control drift: "
             << "|f/sigma|*sqrt(dt) = " << product << " for u=" << u << at(t, node, x);
          throw StabilityError(os.str());
        }
        const double h = spec.running(time_of(m, t), x, u);
        if (h < -k || h > k * sup[t][node]) {
          std::ostringstream os;
          os << "running reward " << h << " outside [-K, K sup|X|] for u=" << u << at(t, node, x);
          throw ConfigError(os.str());
        }
      }
    }
}

double control_slope(const ControlledSpec& spec, const FilteredModel& m, int t, std::size_t node,
                     double u) {
  const double x = m.state(t, node);
  return spec.drift(time_of(m, t), x, u) / spec.sigma(time_of(m, t), x);
}

Generator control_generator(const ControlledSpec& spec, const ModelPtr& model,
                            const ControlMap& u) {
  const int n = model->n_steps();
  if (u.size() != static_cast<std::size_t>(n)) throw ArgumentError("control map has the wrong depth");
  auto slopes = std::make_shared<std::vector<std::vector<double>>>(n);
  double k = 0.0;
  bool uniform = true;
  for (int t = 0; t < n; ++t) {
    if (u[t].size() != model->slice_size(t)) throw ArgumentError("control map slice has the wrong size");
    (*slopes)[t].resize(u[t].size());
    for (std::size_t node = 0; node < u[t].size(); ++node) {
      if (u[t][node] >= spec.controls.size()) {
        std::ostringstream os;
        os << "control index " << u[t][node] << " outside the grid at t=" << t << " node=" << node;
        throw ArgumentError(os.str());
      }
      const double theta = control_slope(spec, *model, t, node, spec.controls[u[t][node]]);
      (*slopes)[t][node] = theta;
      k = std::max(k, std::abs(theta));
      uniform = uniform && theta == (*slopes)[0][0];
    }
  }
  if (n > 0 && uniform) {
    const double mu = (*slopes)[0][0];
    return mu == 0.0 ? Generator::zero() : Generator::linear_drift(mu);
  }
  Generator::Fn fn = [slopes, n](int t, std::size_t node, double z) {
    return t < n ? (*slopes)[t][node] * z : 0.0;
  };
  return Generator::custom(GeneratorFamily::control_indexed, std::move(fn), k, true, model,
                           "control_indexed");
}

HamiltonianChoice hamiltonian_argmax(const ControlledSpec& spec, const FilteredModel& model, int t,
                                     std::size_t node, double z) {
  if (spec.controls.empty()) throw ArgumentError("control grid is empty");
  const double x = model.state(t, node);
  HamiltonianChoice best;
  for (std::size_t i = 0; i < spec.controls.size(); ++i) {
    const double u = spec.controls[i];
    const double v = control_slope(spec, model, t, node, u) * z + spec.running(time_of(model, t), x, u);
    if (i == 0 || v > best.value) best = {i, u, v};
  }
  return best;
}

AdaptedProcess terminal_reward_process(const ControlledSpec& spec, const ModelPtr& model) {
  return AdaptedProcess::generate(model, [&](int, std::size_t, double x) { return spec.terminal(x); });
}

AdaptedProcess control_running_process(const ControlledSpec& spec, const ModelPtr& model,
                                       const ControlMap& u) {
  AdaptedProcess h(model, 0.0);
  for (int t = 0; t < model->n_steps(); ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node)
      h(t, node) = spec.running(time_of(*model, t), model->state(t, node),
                                spec.controls.at(u.at(t).at(node)));
  return h;
}

ControllerStopperResult solve_controller_stopper(const ControlledSpec& spec, const ModelPtr& model) {
  validate_controlled_spec(spec, *model);
  const int n = model->n_steps();
  const double dt = model->dt();
  const auto probs = model->probabilities();
  const auto w = model->projection_weights();
  const AdaptedProcess phi = terminal_reward_process(spec, model);

  AdaptedProcess value(model);
  ControlMap u_star(n);
  std::copy(phi.slice(n).begin(), phi.slice(n).end(), value.slice(n).begin());
  for (int t = n - 1; t >= 0; --t) {
    u_star[t].resize(model->slice_size(t));
    for (std::size_t node = 0; node < u_star[t].size(); ++node) {
      double mean = 0.0, theta = 0.0;
      for (std::size_t k = 0; k < probs.size(); ++k) {
        const double v = value(t + 1, model->child(t, node, k));
        mean += probs[k] * v;
        theta += w[k] * v;
      }
      const HamiltonianChoice c = hamiltonian_argmax(spec, *model, t, node, theta);
      u_star[t][node] = c.index;
      value(t, node) = std::max(phi(t, node), mean + dt * c.value);
    }
  }
  auto tau = StoppingRule::first_hitting(
      model, [&](int t, std::size_t node) { return value(t, node) - phi(t, node) <= 1e-9; });

  const GExpectation gexp(model, control_generator(spec, model, u_star));
  const AdaptedProcess h = control_running_process(spec, model, u_star);
  const double attained = evaluate_rule(gexp, phi, tau, &h)(0, 0);
  const double v0 = value(0, 0);
  return {model, std::move(value), std::move(tau), std::move(u_star), v0, attained};
}

ControllerStopperResult solve_controller_stopper(const ControlledSpec& spec, int n_steps, double dt,
                                                 double x0, int max_depth) {
  return solve_controller_stopper(spec, build_state_lattice(spec, n_steps, dt, x0, max_depth));
}

}  // namespace nlstop
