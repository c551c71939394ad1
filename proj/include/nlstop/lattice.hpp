#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace nlstop {

enum class ModelKind { markov_lattice, path_tree };

/// Uniform time grid {0, dt, ..., n_steps*dt}.
class TimeGrid {
 public:
  TimeGrid(int n_steps, double dt);

  [[nodiscard]] int n_steps() const noexcept { return n_steps_; }
  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] double horizon() const noexcept { return n_steps_ * dt_; }

 private:
  int n_steps_;
  double dt_;
};

class FilteredModel;
using ModelPtr = std::shared_ptr<const FilteredModel>;

inline constexpr int kDefaultMaxDepth = 12;

/// A finite filtered probability space driven by a random walk.
///
/// Every node has the same ordered branch set: branch k is taken with
/// probability `probabilities()[k]` and moves the driving walk by
/// `increments()[k]`. The increments are the standardized branch labels
/// scaled to variance dt, so for the symmetric binomial they are +-sqrt(dt).
/// Branch 0 is the lowest increment ("down").
///
/// On a markov_lattice the child of node j along branch k is j + k, which
/// makes slices recombine. On a path_tree the child is node*b + k and every
/// node identifies its full path from the root.
class FilteredModel {
 public:
  /// Lattice with caller-supplied node states; states[t] must have
  /// t*(b-1)+1 entries.
  static ModelPtr lattice(TimeGrid grid, std::vector<double> probs,
                          std::vector<std::vector<double>> states);
  /// Path tree with caller-supplied node states; states[t] must have b^t entries.
  static ModelPtr tree(TimeGrid grid, std::vector<double> probs,
                       std::vector<std::vector<double>> states);

  [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
  [[nodiscard]] bool is_tree() const noexcept { return kind_ == ModelKind::path_tree; }
  [[nodiscard]] const TimeGrid& grid() const noexcept { return grid_; }
  [[nodiscard]] int n_steps() const noexcept { return grid_.n_steps(); }
  [[nodiscard]] double dt() const noexcept { return grid_.dt(); }
  [[nodiscard]] std::size_t branching() const noexcept { return probs_.size(); }

  [[nodiscard]] std::span<const double> probabilities() const noexcept { return probs_; }
  [[nodiscard]] std::span<const double> increments() const noexcept { return increments_; }
  /// Weights w_k with sum_k w_k v_k equal to the least-squares slope of the
  /// child values v against the increments.
  [[nodiscard]] std::span<const double> projection_weights() const noexcept {
    return projection_;
  }
  [[nodiscard]] double max_abs_increment() const noexcept { return max_abs_increment_; }

  [[nodiscard]] std::size_t slice_size(int t) const;
  [[nodiscard]] std::size_t node_count() const;
  [[nodiscard]] std::size_t child(int t, std::size_t node, std::size_t k) const;

  /// Path-tree only.
  [[nodiscard]] std::size_t parent(int t, std::size_t node) const;
  /// Path-tree only: ancestor at slice s of `node` living at slice t (s <= t).
  [[nodiscard]] std::size_t ancestor(int t, std::size_t node, int s) const;
  /// Path-tree only: probability of reaching `node` from the root.
  [[nodiscard]] double path_probability(int t, std::size_t node) const;

  [[nodiscard]] double state(int t, std::size_t node) const { return states_.at(t).at(node); }
  [[nodiscard]] std::span<const double> states(int t) const { return states_.at(t); }

 private:
  FilteredModel(ModelKind kind, TimeGrid grid, std::vector<double> probs,
                std::vector<std::vector<double>> states);

  ModelKind kind_;
  TimeGrid grid_;
  std::vector<double> probs_;
  std::vector<double> increments_;
  std::vector<double> projection_;
  double max_abs_increment_ = 0.0;
  std::vector<std::size_t> powers_;  // b^t, path trees only
  std::vector<std::vector<double>> states_;
};

/// Symmetric binomial lattice with state(t, j) = x0 + (2j - t) sqrt(dt).
ModelPtr build_binomial_lattice(int n_steps, double dt, double x0);

/// Recombining lattice with arbitrary branch probabilities.
ModelPtr build_lattice(int n_steps, double dt, double x0, std::vector<double> probs);

/// Full path tree. Throws BudgetError when depth exceeds `max_depth`.
ModelPtr build_path_tree(int depth, std::size_t branching, std::vector<double> probs,
                         double dt = 1.0, double x0 = 0.0, int max_depth = kDefaultMaxDepth);

/// Path tree carrying the same transitions and states as a lattice, so that
/// path-dependent random variables can be represented.
ModelPtr expand_to_path_tree(const FilteredModel& lattice, int max_depth = kDefaultMaxDepth);

/// A real value on every node of every slice.
class AdaptedProcess {
 public:
  explicit AdaptedProcess(ModelPtr model, double fill = 0.0);

  /// Fills every node with f(t, node, state).
  static AdaptedProcess generate(ModelPtr model,
                                 const std::function<double(int, std::size_t, double)>& f);

  [[nodiscard]] double operator()(int t, std::size_t node) const { return values_[t][node]; }
  double& operator()(int t, std::size_t node) { return values_[t][node]; }

  [[nodiscard]] std::span<const double> slice(int t) const { return values_.at(t); }
  std::span<double> slice(int t) { return values_.at(t); }
  [[nodiscard]] std::span<const double> terminal() const { return values_.back(); }

  [[nodiscard]] const FilteredModel& model() const { return *model_; }
  [[nodiscard]] const ModelPtr& model_ptr() const { return model_; }

  [[nodiscard]] double max_abs_difference(const AdaptedProcess& other) const;

 private:
  ModelPtr model_;
  std::vector<std::vector<double>> values_;
};

/// Node-based stop/continue flags. The induced stopping time along a path is
/// the first slice whose node carries a stop flag; the terminal slice always
/// stops.
class StoppingRule {
 public:
  using Flags = std::vector<std::vector<std::uint8_t>>;

  StoppingRule(ModelPtr model, Flags flags);

  static StoppingRule first_hitting(ModelPtr model,
                                    const std::function<bool(int, std::size_t)>& hit);
  static StoppingRule at_time(ModelPtr model, int t);

  [[nodiscard]] bool stops(int t, std::size_t node) const { return stop_[t][node] != 0; }
  [[nodiscard]] const Flags& flags() const noexcept { return stop_; }
  [[nodiscard]] const FilteredModel& model() const { return *model_; }
  [[nodiscard]] const ModelPtr& model_ptr() const { return model_; }

  /// Path-tree only: true when the rule has stopped at or before slice t on
  /// the path leading to `node`.
  [[nodiscard]] bool stopped_by(int t, std::size_t node) const;
  /// Path-tree only: stopping slice along the path ending at `leaf`.
  [[nodiscard]] int time_on_path(std::size_t leaf) const;
  /// Path-tree only: node (at slice time_on_path) where the path stops.
  [[nodiscard]] std::size_t node_on_path(std::size_t leaf) const;

  /// rho ^ sigma: first hit of the union of stop sets.
  [[nodiscard]] StoppingRule earliest(const StoppingRule& other) const;
  /// Path-tree only: rho v sigma.
  [[nodiscard]] StoppingRule latest(const StoppingRule& other) const;
  /// Path-tree only: flags below a stopping node set to true, so equal
  /// stopping times have equal flags.
  [[nodiscard]] StoppingRule canonical() const;

  /// Pathwise rho <= other on every path.
  [[nodiscard]] bool precedes(const StoppingRule& other) const;
  [[nodiscard]] bool same_time(const StoppingRule& other) const;
  /// Node-set inclusion of the raw stop flags.
  [[nodiscard]] bool stop_set_within(const StoppingRule& other) const;

 private:
  ModelPtr model_;
  Flags stop_;
  Flags reached_;  // path trees: 1_{rho <= t}
};

/// E[xi | F_t] under the model's transition probabilities.
std::vector<double> linear_conditional_expectation(const FilteredModel& model,
                                                   std::span<const double> terminal, int t);
AdaptedProcess linear_expectation_process(const ModelPtr& model,
                                          std::span<const double> terminal);

/// Path-tree only: the slice-t values carried forward to every leaf.
std::vector<double> lift_to_terminal(const FilteredModel& tree, int t,
                                     std::span<const double> slice_values);

/// Path-tree only: X evaluated at the stopping node of every path.
std::vector<double> value_at_rule(const AdaptedProcess& process, const StoppingRule& rule);

/// Number of upcrossings of [a, b] by the sampled path. The horizon lies
/// after the last sample, so a crossing completed at the last sample counts.
std::size_t upcrossings(std::span<const double> path, double a, double b);

}  // namespace nlstop
