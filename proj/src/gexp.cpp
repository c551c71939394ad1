#include "nlstop/gexp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

Generator::Generator(GeneratorFamily family, Fn fn, double lipschitz, bool convex,
                     std::string description)
    : family_(family),
      fn_(std::move(fn)),
      lipschitz_(lipschitz),
      convex_(convex),
      description_(std::move(description)) {}

Generator Generator::zero() {
  return Generator(GeneratorFamily::zero, [](int, std::size_t, double) { return 0.0; }, 0.0, true,
                   "zero");
}

Generator Generator::linear_drift(double mu) {
  std::ostringstream os;
  os << "linear_drift(" << mu << ")";
  Generator g(GeneratorFamily::linear_drift, [mu](int, std::size_t, double z) { return mu * z; },
              std::abs(mu), true, os.str());
  g.drift_ = mu;
  return g;
}

Generator Generator::abs_drift(double k) {
  if (!(k >= 0.0)) throw ConfigError("abs_drift requires K >= 0");
  std::ostringstream os;
  os << "abs_drift(" << k << ")";
  return Generator(GeneratorFamily::abs_drift,
                   [k](int, std::size_t, double z) { return k * std::abs(z); }, k, true, os.str());
}

Generator Generator::quadratic(double kappa) {
  if (!(kappa > 0.0)) throw ConfigError("quadratic generator requires kappa > 0");
  std::ostringstream os;
  os << "quadratic(" << kappa << ")";
  Generator g(GeneratorFamily::quadratic,
              [kappa](int, std::size_t, double z) { return 0.5 * kappa * z * z; },
              std::numeric_limits<double>::infinity(), true, os.str());
  g.kappa_ = kappa;
  return g;
}

Generator Generator::piecewise_linear(std::vector<double> breakpoints, std::vector<double> slopes) {
  if (slopes.size() != breakpoints.size() + 1)
    throw ConfigError("piecewise_linear needs exactly one more slope than breakpoints");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i] > breakpoints[i - 1]))
      throw ConfigError("piecewise_linear breakpoints must be strictly increasing");

  // Antiderivative of the slope function anchored at the first breakpoint.
  std::vector<double> at_break(breakpoints.size(), 0.0);
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    at_break[i] = at_break[i - 1] + slopes[i] * (breakpoints[i] - breakpoints[i - 1]);
  auto anti = [breakpoints, slopes, at_break](double x) {
    if (breakpoints.empty()) return slopes[0] * x;
    if (x < breakpoints[0]) return slopes[0] * (x - breakpoints[0]);
    const auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - breakpoints.begin()) - 1;
    return at_break[i] + slopes[i + 1] * (x - breakpoints[i]);
  };
  const double offset = anti(0.0);

  double k = 0.0;
  for (double s : slopes) k = std::max(k, std::abs(s));
  const bool convex = std::is_sorted(slopes.begin(), slopes.end());
  std::ostringstream os;
  os << "piecewise_linear(" << breakpoints.size() << " breakpoints)";
  return Generator(GeneratorFamily::piecewise_linear,
                   [anti, offset](int, std::size_t, double z) { return anti(z) - offset; }, k,
                   convex, os.str());
}

Generator Generator::custom(GeneratorFamily family, Fn fn, double lipschitz, bool convex,
                            ModelPtr bound_model, std::string description) {
  Generator g(family, std::move(fn), lipschitz, convex, std::move(description));
  g.bound_model_ = std::move(bound_model);
  return g;
}

Generator reflect_generator(const Generator& g) {
  if (g.family() == GeneratorFamily::zero || g.family() == GeneratorFamily::linear_drift)
    return g;
  // A convex driver reflects to a concave one; only odd drivers stay convex.
  Generator::Fn fn = [g](int t, std::size_t node, double z) { return -g(t, node, -z); };
  return Generator::custom(GeneratorFamily::reflected, std::move(fn), g.lipschitz(), false,
                           g.bound_model(), "reflected(" + g.description() + ")");
}

// ---------------------------------------------------------------------------

std::vector<double> ConditionalExpectation::at(std::span<const double> terminal, int t) const {
  const AdaptedProcess p = evaluate(terminal);
  const auto s = p.slice(t);
  return {s.begin(), s.end()};
}

AdaptedProcess LinearExpectation::evaluate(std::span<const double> terminal) const {
  return linear_expectation_process(model_, terminal);
}

GExpectation::GExpectation(ModelPtr model, Generator generator)
    : model_(std::move(model)), generator_(std::move(generator)) {
  if (generator_.bound_model() && generator_.bound_model() != model_)
    throw ArgumentError("generator " + generator_.description() + " is bound to another model");
  if (generator_.has_finite_lipschitz()) {
    const double product = generator_.lipschitz() * model_->max_abs_increment();
    if (product > 1.0 + 1e-12) {
      std::ostringstream os;
      os << "monotone-scheme condition K_g*sqrt(dt) <= 1 violated for " << generator_.description()
         << ": K_g=" << generator_.lipschitz() << ", max increment=" << model_->max_abs_increment()
         << ", product=" << product;
      throw StabilityError(os.str());
    }
  }
}

StepResult GExpectation::step(int t, std::size_t node, std::span<const double> next) const {
  const auto probs = model_->probabilities();
  const auto w = model_->projection_weights();
  double mean = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double v = next[model_->child(t, node, k)];
    mean += probs[k] * v;
    theta += w[k] * v;
  }
  return {mean + model_->dt() * generator_(t, node, theta), theta};
}

BsdeSolution GExpectation::solve(std::span<const double> terminal) const {
  const int n = model_->n_steps();
  if (terminal.size() != model_->slice_size(n)) throw ArgumentError("terminal size mismatch");
  BsdeSolution sol{AdaptedProcess(model_), AdaptedProcess(model_, 0.0), 0.0, false, {}};
  std::copy(terminal.begin(), terminal.end(), sol.gamma.slice(n).begin());
  for (int t = n - 1; t >= 0; --t) {
    const auto next = sol.gamma.slice(t + 1);
    auto cur = sol.gamma.slice(t);
    auto th = sol.theta.slice(t);
    for (std::size_t node = 0; node < cur.size(); ++node) {
      const StepResult r = step(t, node, next);
      cur[node] = r.value;
      th[node] = r.theta;
      sol.max_abs_theta = std::max(sol.max_abs_theta, std::abs(r.theta));
    }
  }
  if (generator_.family() == GeneratorFamily::quadratic) {
    const double bound = generator_.kappa() * sol.max_abs_theta * model_->max_abs_increment();
    if (bound > 1.0) {
      sol.stability_warning = true;
      std::ostringstream os;
      os << "quadratic scheme bound kappa*max|Theta|*sqrt(dt) = " << bound << " exceeds 1";
      sol.warning = os.str();
    }
  }
  return sol;
}

AdaptedProcess GExpectation::evaluate(std::span<const double> terminal) const {
  return solve(terminal).gamma;
}

BsdeSolution solve_discrete_bsde(const GExpectation& gexp, std::span<const double> terminal) {
  return gexp.solve(terminal);
}

std::vector<double> conditional_g_expectation(const GExpectation& gexp,
                                              std::span<const double> terminal, int t) {
  return gexp.at(terminal, t);
}

std::vector<double> conditional_g_expectation(const GExpectation& gexp,
                                              std::span<const double> terminal,
                                              const StoppingRule& rule) {
  if (&rule.model() != gexp.model().get())
    throw ArgumentError("stopping rule lives on a different model");
  return value_at_rule(gexp.evaluate(terminal), rule);
}

AdaptedProcess evaluate_rule(const GExpectation& gexp, const AdaptedProcess& reward,
                             const StoppingRule& rule, const AdaptedProcess* running) {
  const ModelPtr& model = gexp.model();
  if (&reward.model() != model.get() || &rule.model() != model.get() ||
      (running && &running->model() != model.get()))
    throw ArgumentError("evaluate_rule inputs live on different models");
  const int n = model->n_steps();
  AdaptedProcess v(model);
  std::copy(reward.slice(n).begin(), reward.slice(n).end(), v.slice(n).begin());
  for (int t = n - 1; t >= 0; --t) {
    const auto next = v.slice(t + 1);
    auto cur = v.slice(t);
    for (std::size_t node = 0; node < cur.size(); ++node) {
      if (rule.stops(t, node)) {
        cur[node] = reward(t, node);
      } else {
        cur[node] = gexp.step(t, node, next).value;
        if (running) cur[node] += (*running)(t, node) * model->dt();
      }
    }
  }
  return v;
}

}  // namespace nlstop
