#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "nlstop/gexp.hpp"
#include "nlstop/lattice.hpp"
#include "nlstop/report.hpp"

namespace nlstop {

/// g^nu = 1_{nu <= t} g2 + 1_{nu > t} g1. Path-tree only, since {nu <= t}
/// depends on the path.
Generator paste_generators(const Generator& g1, const Generator& g2, const StoppingRule& nu);

/// E^nu_{i,j}[xi | F_t] = 1_{nu <= t} E_j[xi | F_t] + 1_{nu > t} E_i[E_j[xi | F_nu] | F_t].
class PastedExpectation final : public ConditionalExpectation {
 public:
  PastedExpectation(ExpectationPtr first, ExpectationPtr second, StoppingRule nu);

  [[nodiscard]] const ModelPtr& model() const override { return first_->model(); }
  [[nodiscard]] AdaptedProcess evaluate(std::span<const double> terminal) const override;
  [[nodiscard]] bool declared_convex() const override {
    return first_->declared_convex() && second_->declared_convex();
  }

 private:
  ExpectationPtr first_;
  ExpectationPtr second_;
  StoppingRule nu_;
};

std::shared_ptr<const PastedExpectation> paste_expectations(ExpectationPtr first,
                                                            ExpectationPtr second,
                                                            const StoppingRule& nu);

/// Pasting closure of a finite base of convex, monotone-stable generators on
/// one model. Members of the closure are addressed by AdaptedSelection.
class StableFamily {
 public:
  StableFamily(ModelPtr model, std::vector<Generator> base);

  [[nodiscard]] const ModelPtr& model() const noexcept { return model_; }
  [[nodiscard]] std::size_t size() const noexcept { return base_.size(); }
  [[nodiscard]] const Generator& generator(std::size_t i) const { return base_.at(i); }
  [[nodiscard]] const GExpectation& expectation(std::size_t i) const { return *members_.at(i); }
  [[nodiscard]] std::shared_ptr<const GExpectation> expectation_ptr(std::size_t i) const {
    return members_.at(i);
  }

 private:
  ModelPtr model_;
  std::vector<Generator> base_;
  std::vector<std::shared_ptr<const GExpectation>> members_;
};

/// Base index chosen at every non-terminal node.
class AdaptedSelection {
 public:
  using Indices = std::vector<std::vector<std::size_t>>;

  /// `indices` covers slices 0..n-1.
  AdaptedSelection(ModelPtr model, Indices indices);

  static AdaptedSelection constant(ModelPtr model, std::size_t k);
  /// Index i before nu and j from nu on. Path-tree only.
  static AdaptedSelection switching(ModelPtr model, std::size_t i, std::size_t j,
                                    const StoppingRule& nu);

  [[nodiscard]] std::size_t operator()(int t, std::size_t node) const {
    return indices_[t][node];
  }
  [[nodiscard]] const Indices& indices() const noexcept { return indices_; }
  [[nodiscard]] const ModelPtr& model() const noexcept { return model_; }
  [[nodiscard]] std::size_t max_index() const;

 private:
  ModelPtr model_;
  Indices indices_;
};

/// `first` before nu, `second` from nu on. Path-tree only.
AdaptedSelection paste_selections(const AdaptedSelection& first, const AdaptedSelection& second,
                                  const StoppingRule& nu);

/// g(t, node, z) = base[sel(t, node)](t, node, z).
Generator selection_generator(const StableFamily& family, const AdaptedSelection& sel);
std::shared_ptr<const GExpectation> selection_expectation(const StableFamily& family,
                                                          const AdaptedSelection& sel);

/// Running-reward density of a selection: h^sel(t, node) = h[sel(t, node)](t, node).
/// An empty `running` means h = 0.
AdaptedProcess selected_density(const AdaptedSelection& sel,
                                const std::vector<AdaptedProcess>& running);

/// E_sel[X(rho v nu) + sum_{nu <= s < rho v nu} h^sel_s dt | F_nu] on every
/// path, as a terminal random variable. Path-tree only.
std::vector<double> value_at_nu(const StableFamily& family, const AdaptedSelection& sel,
                                const StoppingRule& rho, const StoppingRule& nu,
                                const AdaptedProcess& reward,
                                const std::vector<AdaptedProcess>& running);

struct Candidate {
  AdaptedSelection selection;
  StoppingRule rule;
};

/// For every ordered pair of candidates, builds the pair (k, rho) obtained by
/// switching on A = {value_1 >= value_2} (and on its reverse for the
/// minimum) and checks that it attains the pointwise max and min at nu.
Report pairwise_lattice_check(const StableFamily& family, const StoppingRule& nu,
                              const AdaptedProcess& reward,
                              const std::vector<AdaptedProcess>& running,
                              const std::vector<Candidate>& candidates, double tolerance = 1e-12);

}  // namespace nlstop
