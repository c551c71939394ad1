#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nlstop/lattice.hpp"
#include "nlstop/report.hpp"

namespace nlstop {

enum class GeneratorFamily {
  zero,
  linear_drift,
  abs_drift,
  quadratic,
  piecewise_linear,
  pasted,
  control_indexed,
  selected,
  reflected,
  custom,
};

/// A driver g(t, node, z) together with its declared regularity.
///
/// Node-independent families can be used on any model. Node-dependent ones
/// (pasted, control_indexed, selected) are bound to the model whose node
/// indices they read; `bound_model()` returns it.
class Generator {
 public:
  using Fn = std::function<double(int, std::size_t, double)>;

  static Generator zero();
  static Generator linear_drift(double mu);
  static Generator abs_drift(double k);
  /// g(z) = kappa z^2 / 2. Lipschitz bound is infinite.
  static Generator quadratic(double kappa);
  /// Continuous piecewise-linear g with g(0) = 0. slopes[i] applies on the
  /// i-th interval delimited by the strictly increasing breakpoints.
  static Generator piecewise_linear(std::vector<double> breakpoints, std::vector<double> slopes);
  static Generator custom(GeneratorFamily family, Fn fn, double lipschitz, bool convex,
                          ModelPtr bound_model, std::string description);

  double operator()(int t, std::size_t node, double z) const { return fn_(t, node, z); }

  [[nodiscard]] GeneratorFamily family() const noexcept { return family_; }
  [[nodiscard]] double lipschitz() const noexcept { return lipschitz_; }
  [[nodiscard]] double kappa() const noexcept { return kappa_; }
  [[nodiscard]] bool convex() const noexcept { return convex_; }
  [[nodiscard]] bool has_finite_lipschitz() const noexcept {
    return lipschitz_ < std::numeric_limits<double>::infinity();
  }
  [[nodiscard]] const ModelPtr& bound_model() const noexcept { return bound_model_; }
  [[nodiscard]] const std::string& description() const noexcept { return description_; }
  /// Slope of a linear_drift generator.
  [[nodiscard]] double drift() const noexcept { return drift_; }

 private:
  Generator(GeneratorFamily family, Fn fn, double lipschitz, bool convex, std::string description);

  GeneratorFamily family_;
  Fn fn_;
  double lipschitz_;
  double kappa_ = 0.0;
  double drift_ = 0.0;
  bool convex_;
  ModelPtr bound_model_;
  std::string description_;
};

/// g^-(t, node, z) = -g(t, node, -z).
Generator reflect_generator(const Generator& g);

/// Nonlinear conditional expectation on a fixed model: maps a terminal random
/// variable to the adapted process t -> E[xi | F_t].
class ConditionalExpectation {
 public:
  virtual ~ConditionalExpectation() = default;

  [[nodiscard]] virtual const ModelPtr& model() const = 0;
  [[nodiscard]] virtual AdaptedProcess evaluate(std::span<const double> terminal) const = 0;
  [[nodiscard]] virtual bool declared_convex() const = 0;

  [[nodiscard]] std::vector<double> at(std::span<const double> terminal, int t) const;
};

using ExpectationPtr = std::shared_ptr<const ConditionalExpectation>;

class LinearExpectation final : public ConditionalExpectation {
 public:
  explicit LinearExpectation(ModelPtr model) : model_(std::move(model)) {}
  [[nodiscard]] const ModelPtr& model() const override { return model_; }
  [[nodiscard]] AdaptedProcess evaluate(std::span<const double> terminal) const override;
  [[nodiscard]] bool declared_convex() const override { return true; }

 private:
  ModelPtr model_;
};

struct StepResult {
  double value = 0.0;
  double theta = 0.0;
};

struct BsdeSolution {
  AdaptedProcess gamma;
  AdaptedProcess theta;
  double max_abs_theta = 0.0;
  /// Set for quadratic drivers when kappa * max|theta| * max|increment| > 1.
  bool stability_warning = false;
  std::string warning;
};

/// Discrete g-expectation: explicit backward scheme
///   Theta = sum_k w_k Gamma_child_k,  Gamma = mean(Gamma_child) + dt g(Theta).
class GExpectation final : public ConditionalExpectation {
 public:
  /// Throws StabilityError unless K_g * max|increment| <= 1 (K_g sqrt(dt) on
  /// the symmetric binomial), and ArgumentError when the generator is bound
  /// to another model.
  GExpectation(ModelPtr model, Generator generator);

  [[nodiscard]] const ModelPtr& model() const override { return model_; }
  [[nodiscard]] const Generator& generator() const noexcept { return generator_; }
  [[nodiscard]] AdaptedProcess evaluate(std::span<const double> terminal) const override;
  [[nodiscard]] bool declared_convex() const override { return generator_.convex(); }

  [[nodiscard]] BsdeSolution solve(std::span<const double> terminal) const;

  /// One backward step at (t, node) from the values on slice t + 1.
  [[nodiscard]] StepResult step(int t, std::size_t node, std::span<const double> next) const;

 private:
  ModelPtr model_;
  Generator generator_;
};

BsdeSolution solve_discrete_bsde(const GExpectation& gexp, std::span<const double> terminal);

/// E_g[xi | F_t] on slice t.
std::vector<double> conditional_g_expectation(const GExpectation& gexp,
                                              std::span<const double> terminal, int t);
/// Path-tree only: E_g[xi | F_rho] as a terminal random variable.
std::vector<double> conditional_g_expectation(const GExpectation& gexp,
                                              std::span<const double> terminal,
                                              const StoppingRule& rule);

/// Backward evaluation of a stopping rule restarted at every node:
///   V = X where the rule stops, otherwise V = step(V_next) + running * dt.
/// V(t, node) is E_g[X_rho(t) + sum_{t <= s < rho(t)} running_s dt | F_t].
AdaptedProcess evaluate_rule(const GExpectation& gexp, const AdaptedProcess& reward,
                             const StoppingRule& rule, const AdaptedProcess* running = nullptr);

// ---------------------------------------------------------------------------
// Axiom and comparison checks

struct AxiomOptions {
  std::size_t samples = 200;
  std::uint64_t seed = 20240607;
  double tolerance = 1e-10;
  /// Random terminal values are drawn uniformly from [value_lo, value_hi].
  double value_lo = 0.0;
  double value_hi = 1.0;
};

/// Randomized check of monotonicity (both clauses), time consistency, the
/// zero-one law, translation invariance, the local property, constant
/// preservation and, when declared, convexity.
///
/// The model must be a path tree so that F_t-measurable variables and
/// indicators of F_t events are representable; use expand_to_path_tree for
/// a lattice.
Report axiom_suite(const ConditionalExpectation& expectation, const AxiomOptions& options = {});

struct ComparisonOptions {
  std::size_t samples = 200;
  std::uint64_t seed = 97;
  double tolerance = 1e-12;
};

/// Checks E_{g1} <= E_{g2} node-wise for the given xi, then strict
/// comparison under g1 for randomly dominated terminals. Throws
/// ArgumentError when g1 <= g2 fails on sampled z.
Report check_comparison(const ModelPtr& model, const Generator& g1, const Generator& g2,
                        std::span<const double> terminal, const ComparisonOptions& options = {});

}  // namespace nlstop
