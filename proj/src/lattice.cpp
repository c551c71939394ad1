#include "nlstop/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

void validate_probabilities(const std::vector<double>& probs) {
  if (probs.size() < 2) throw ConfigError("branching must be at least 2");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p > 0.0)) throw ConfigError("transition probabilities must be strictly positive");
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance) {
    std::ostringstream os;
    os << "transition probabilities must sum to 1 (got " << sum << ")";
    throw ConfigError(os.str());
  }
}

void require_tree(const FilteredModel& m, const char* what) {
  if (!m.is_tree()) throw ArgumentError(std::string(what) + " requires a path tree");
}

}  // namespace

TimeGrid::TimeGrid(int n_steps, double dt) : n_steps_(n_steps), dt_(dt) {
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be a positive finite number");
}

FilteredModel::FilteredModel(ModelKind kind, TimeGrid grid, std::vector<double> probs,
                             std::vector<std::vector<double>> states)
    : kind_(kind), grid_(grid), probs_(std::move(probs)), states_(std::move(states)) {
  validate_probabilities(probs_);
  const std::size_t b = probs_.size();

  // Standardize the branch labels 0..b-1 to mean 0 and variance dt.
  double mean = 0.0;
  for (std::size_t k = 0; k < b; ++k) mean += probs_[k] * static_cast<double>(k);
  double var = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    const double d = static_cast<double>(k) - mean;
    var += probs_[k] * d * d;
  }
  const double scale = std::sqrt(grid_.dt()) / std::sqrt(var);
  increments_.resize(b);
  for (std::size_t k = 0; k < b; ++k) {
    increments_[k] = (static_cast<double>(k) - mean) * scale;
    max_abs_increment_ = std::max(max_abs_increment_, std::abs(increments_[k]));
  }
  double second_moment = 0.0;
  for (std::size_t k = 0; k < b; ++k) second_moment += probs_[k] * increments_[k] * increments_[k];
  projection_.resize(b);
  for (std::size_t k = 0; k < b; ++k) projection_[k] = probs_[k] * increments_[k] / second_moment;

  const int n = grid_.n_steps();
  if (states_.size() != static_cast<std::size_t>(n) + 1)
    throw ConfigError("state table must have n_steps + 1 slices");
  if (kind_ == ModelKind::path_tree) {
    powers_.resize(n + 1);
    powers_[0] = 1;
    for (int t = 1; t <= n; ++t) {
      if (powers_[t - 1] > std::numeric_limits<std::size_t>::max() / b)
        throw BudgetError("path tree too large");
      powers_[t] = powers_[t - 1] * b;
    }
  }
  for (int t = 0; t <= n; ++t) {
    if (states_[t].size() != slice_size(t)) throw ConfigError("state slice has the wrong size");
  }
}

ModelPtr FilteredModel::lattice(TimeGrid grid, std::vector<double> probs,
                                std::vector<std::vector<double>> states) {
  return ModelPtr(new FilteredModel(ModelKind::markov_lattice, grid, std::move(probs),
                                    std::move(states)));
}

ModelPtr FilteredModel::tree(TimeGrid grid, std::vector<double> probs,
                             std::vector<std::vector<double>> states) {
  return ModelPtr(
      new FilteredModel(ModelKind::path_tree, grid, std::move(probs), std::move(states)));
}

std::size_t FilteredModel::slice_size(int t) const {
  if (t < 0 || t > n_steps()) throw ArgumentError("slice index out of range");
  if (kind_ == ModelKind::markov_lattice)
    return static_cast<std::size_t>(t) * (branching() - 1) + 1;
  return powers_[t];
}

std::size_t FilteredModel::node_count() const {
  std::size_t total = 0;
  for (int t = 0; t <= n_steps(); ++t) total += slice_size(t);
  return total;
}

std::size_t FilteredModel::child(int /*t*/, std::size_t node, std::size_t k) const {
  if (kind_ == ModelKind::markov_lattice) return node + k;
  return node * branching() + k;
}

std::size_t FilteredModel::parent(int t, std::size_t node) const {
  require_tree(*this, "parent");
  if (t < 1) throw ArgumentError("root has no parent");
  return node / branching();
}

std::size_t FilteredModel::ancestor(int t, std::size_t node, int s) const {
  require_tree(*this, "ancestor");
  if (s < 0 || s > t) throw ArgumentError("ancestor slice out of range");
  return node / powers_[t - s];
}

double FilteredModel::path_probability(int t, std::size_t node) const {
  require_tree(*this, "path_probability");
  double p = 1.0;
  const std::size_t b = branching();
  for (int s = t; s > 0; --s) {
    p *= probs_[node % b];
    node /= b;
  }
  return p;
}

ModelPtr build_lattice(int n_steps, double dt, double x0, std::vector<double> probs) {
  TimeGrid grid(n_steps, dt);
  validate_probabilities(probs);
  const std::size_t b = probs.size();
  double mean = 0.0, var = 0.0;
  for (std::size_t k = 0; k < b; ++k) mean += probs[k] * static_cast<double>(k);
  for (std::size_t k = 0; k < b; ++k) {
    const double d = static_cast<double>(k) - mean;
    var += probs[k] * d * d;
  }
  const double sd = std::sqrt(var);
  const double sqdt = std::sqrt(dt);
  std::vector<std::vector<double>> states(n_steps + 1);
  for (int t = 0; t <= n_steps; ++t) {
    states[t].resize(static_cast<std::size_t>(t) * (b - 1) + 1);
    for (std::size_t j = 0; j < states[t].size(); ++j)
      states[t][j] = x0 + (static_cast<double>(j) - t * mean) / sd * sqdt;
  }
  return FilteredModel::lattice(grid, std::move(probs), std::move(states));
}

ModelPtr build_binomial_lattice(int n_steps, double dt, double x0) {
  TimeGrid grid(n_steps, dt);
  const double sqdt = std::sqrt(dt);
  std::vector<std::vector<double>> states(n_steps + 1);
  for (int t = 0; t <= n_steps; ++t) {
    states[t].resize(t + 1);
    for (int j = 0; j <= t; ++j) states[t][j] = x0 + (2.0 * j - t) * sqdt;
  }
  return FilteredModel::lattice(grid, {0.5, 0.5}, std::move(states));
}

ModelPtr build_path_tree(int depth, std::size_t branching, std::vector<double> probs, double dt,
                         double x0, int max_depth) {
  if (depth < 1) throw ConfigError("depth must be >= 1");
  if (depth > max_depth) {
    std::ostringstream os;
    os << "path tree depth " << depth << " exceeds the cap of " << max_depth;
    throw BudgetError(os.str());
  }
  if (probs.size() != branching)
    throw ConfigError("probability list length must equal the branching factor");
  TimeGrid grid(depth, dt);
  validate_probabilities(probs);

  // Increments are recomputed by the model; build states from a throwaway
  // one-slice model so both agree exactly.
  auto probe = FilteredModel::tree(TimeGrid(1, dt), probs,
                                   {{x0}, std::vector<double>(branching, x0)});
  const auto inc = probe->increments();
  std::vector<std::vector<double>> states(depth + 1);
  states[0] = {x0};
  for (int t = 1; t <= depth; ++t) {
    states[t].resize(states[t - 1].size() * branching);
    for (std::size_t n = 0; n < states[t - 1].size(); ++n)
      for (std::size_t k = 0; k < branching; ++k)
        states[t][n * branching + k] = states[t - 1][n] + inc[k];
  }
  return FilteredModel::tree(grid, std::move(probs), std::move(states));
}

ModelPtr expand_to_path_tree(const FilteredModel& lattice, int max_depth) {
  if (lattice.is_tree()) throw ArgumentError("model is already a path tree");
  const int n = lattice.n_steps();
  if (n > max_depth) {
    std::ostringstream os;
    os << "path tree depth " << n << " exceeds the cap of " << max_depth;
    throw BudgetError(os.str());
  }
  const std::size_t b = lattice.branching();
  std::vector<std::vector<double>> states(n + 1);
  std::vector<std::size_t> lattice_node{0};
  states[0] = {lattice.state(0, 0)};
  for (int t = 1; t <= n; ++t) {
    std::vector<std::size_t> next(lattice_node.size() * b);
    states[t].resize(next.size());
    for (std::size_t i = 0; i < lattice_node.size(); ++i)
      for (std::size_t k = 0; k < b; ++k) {
        next[i * b + k] = lattice.child(t - 1, lattice_node[i], k);
        states[t][i * b + k] = lattice.state(t, next[i * b + k]);
      }
    lattice_node = std::move(next);
  }
  const auto probs = lattice.probabilities();
  return FilteredModel::tree(lattice.grid(), std::vector<double>(probs.begin(), probs.end()),
                             std::move(states));
}

// ---------------------------------------------------------------------------

AdaptedProcess::AdaptedProcess(ModelPtr model, double fill) : model_(std::move(model)) {
  values_.resize(model_->n_steps() + 1);
  for (int t = 0; t <= model_->n_steps(); ++t) values_[t].assign(model_->slice_size(t), fill);
}

AdaptedProcess AdaptedProcess::generate(
    ModelPtr model, const std::function<double(int, std::size_t, double)>& f) {
  AdaptedProcess p(std::move(model));
  for (int t = 0; t <= p.model().n_steps(); ++t)
    for (std::size_t n = 0; n < p.values_[t].size(); ++n)
      p.values_[t][n] = f(t, n, p.model().state(t, n));
  return p;
}

double AdaptedProcess::max_abs_difference(const AdaptedProcess& other) const {
  if (other.values_.size() != values_.size()) throw ArgumentError("process shape mismatch");
  double worst = 0.0;
  for (std::size_t t = 0; t < values_.size(); ++t) {
    if (values_[t].size() != other.values_[t].size())
      throw ArgumentError("process shape mismatch");
    for (std::size_t n = 0; n < values_[t].size(); ++n)
      worst = std::max(worst, std::abs(values_[t][n] - other.values_[t][n]));
  }
  return worst;
}

// ---------------------------------------------------------------------------

StoppingRule::StoppingRule(ModelPtr model, Flags flags)
    : model_(std::move(model)), stop_(std::move(flags)) {
  const int n = model_->n_steps();
  if (stop_.size() != static_cast<std::size_t>(n) + 1)
    throw ArgumentError("stopping rule has the wrong number of slices");
  for (int t = 0; t <= n; ++t)
    if (stop_[t].size() != model_->slice_size(t))
      throw ArgumentError("stopping rule slice has the wrong size");
  std::fill(stop_[n].begin(), stop_[n].end(), std::uint8_t{1});

  if (model_->is_tree()) {
    reached_.resize(n + 1);
    reached_[0] = stop_[0];
    for (int t = 1; t <= n; ++t) {
      reached_[t].resize(stop_[t].size());
      for (std::size_t node = 0; node < stop_[t].size(); ++node)
        reached_[t][node] = stop_[t][node] | reached_[t - 1][model_->parent(t, node)];
    }
  }
}

StoppingRule StoppingRule::first_hitting(ModelPtr model,
                                         const std::function<bool(int, std::size_t)>& hit) {
  Flags flags(model->n_steps() + 1);
  for (int t = 0; t <= model->n_steps(); ++t) {
    flags[t].resize(model->slice_size(t));
    for (std::size_t n = 0; n < flags[t].size(); ++n) flags[t][n] = hit(t, n) ? 1 : 0;
  }
  return StoppingRule(std::move(model), std::move(flags));
}

StoppingRule StoppingRule::at_time(ModelPtr model, int t) {
  if (t < 0 || t > model->n_steps()) throw ArgumentError("stopping time out of range");
  return first_hitting(std::move(model), [t](int s, std::size_t) { return s == t; });
}

bool StoppingRule::stopped_by(int t, std::size_t node) const {
  require_tree(*model_, "stopped_by");
  return reached_[t][node] != 0;
}

int StoppingRule::time_on_path(std::size_t leaf) const {
  require_tree(*model_, "time_on_path");
  const int n = model_->n_steps();
  for (int t = 0; t <= n; ++t)
    if (stop_[t][model_->ancestor(n, leaf, t)]) return t;
  return n;
}

std::size_t StoppingRule::node_on_path(std::size_t leaf) const {
  const int t = time_on_path(leaf);
  return model_->ancestor(model_->n_steps(), leaf, t);
}

StoppingRule StoppingRule::earliest(const StoppingRule& other) const {
  if (model_ != other.model_) throw ArgumentError("stopping rules live on different models");
  Flags f = stop_;
  for (std::size_t t = 0; t < f.size(); ++t)
    for (std::size_t n = 0; n < f[t].size(); ++n) f[t][n] |= other.stop_[t][n];
  return StoppingRule(model_, std::move(f));
}

StoppingRule StoppingRule::latest(const StoppingRule& other) const {
  require_tree(*model_, "latest");
  if (model_ != other.model_) throw ArgumentError("stopping rules live on different models");
  Flags f = reached_;
  for (std::size_t t = 0; t < f.size(); ++t)
    for (std::size_t n = 0; n < f[t].size(); ++n) f[t][n] &= other.reached_[t][n];
  return StoppingRule(model_, std::move(f));
}

StoppingRule StoppingRule::canonical() const {
  require_tree(*model_, "canonical");
  return StoppingRule(model_, reached_);
}

bool StoppingRule::precedes(const StoppingRule& other) const {
  if (model_ != other.model_) throw ArgumentError("stopping rules live on different models");
  // Forward reachability of nodes where neither rule has stopped yet; a
  // violation is a reachable node where `other` stops but this rule does not.
  const int n = model_->n_steps();
  std::vector<std::uint8_t> alive{1};
  for (int t = 0; t <= n; ++t) {
    std::vector<std::uint8_t> next(t < n ? model_->slice_size(t + 1) : 0, 0);
    for (std::size_t node = 0; node < alive.size(); ++node) {
      if (!alive[node]) continue;
      const bool mine = stop_[t][node] != 0;
      const bool theirs = other.stop_[t][node] != 0;
      if (theirs && !mine) return false;
      if (mine || theirs || t == n) continue;
      for (std::size_t k = 0; k < model_->branching(); ++k) next[model_->child(t, node, k)] = 1;
    }
    alive = std::move(next);
  }
  return true;
}

bool StoppingRule::same_time(const StoppingRule& other) const {
  return precedes(other) && other.precedes(*this);
}

bool StoppingRule::stop_set_within(const StoppingRule& other) const {
  if (model_ != other.model_) throw ArgumentError("stopping rules live on different models");
  for (std::size_t t = 0; t < stop_.size(); ++t)
    for (std::size_t n = 0; n < stop_[t].size(); ++n)
      if (stop_[t][n] && !other.stop_[t][n]) return false;
  return true;
}

// ---------------------------------------------------------------------------

AdaptedProcess linear_expectation_process(const ModelPtr& model,
                                          std::span<const double> terminal) {
  const int n = model->n_steps();
  if (terminal.size() != model->slice_size(n)) throw ArgumentError("terminal size mismatch");
  AdaptedProcess out(model);
  std::copy(terminal.begin(), terminal.end(), out.slice(n).begin());
  const auto probs = model->probabilities();
  for (int t = n - 1; t >= 0; --t) {
    auto next = out.slice(t + 1);
    auto cur = out.slice(t);
    for (std::size_t node = 0; node < cur.size(); ++node) {
      double m = 0.0;
      for (std::size_t k = 0; k < probs.size(); ++k) m += probs[k] * next[model->child(t, node, k)];
      cur[node] = m;
    }
  }
  return out;
}

std::vector<double> linear_conditional_expectation(const FilteredModel& model,
                                                   std::span<const double> terminal, int t) {
  const int n = model.n_steps();
  if (t < 0 || t > n) throw ArgumentError("slice index out of range");
  if (terminal.size() != model.slice_size(n)) throw ArgumentError("terminal size mismatch");
  std::vector<double> next(terminal.begin(), terminal.end());
  const auto probs = model.probabilities();
  for (int s = n - 1; s >= t; --s) {
    std::vector<double> cur(model.slice_size(s));
    for (std::size_t node = 0; node < cur.size(); ++node) {
      double m = 0.0;
      for (std::size_t k = 0; k < probs.size(); ++k) m += probs[k] * next[model.child(s, node, k)];
      cur[node] = m;
    }
    next = std::move(cur);
  }
  return next;
}

std::vector<double> lift_to_terminal(const FilteredModel& tree, int t,
                                     std::span<const double> slice_values) {
  require_tree(tree, "lift_to_terminal");
  if (slice_values.size() != tree.slice_size(t)) throw ArgumentError("slice size mismatch");
  const int n = tree.n_steps();
  std::vector<double> out(tree.slice_size(n));
  for (std::size_t leaf = 0; leaf < out.size(); ++leaf)
    out[leaf] = slice_values[tree.ancestor(n, leaf, t)];
  return out;
}

std::vector<double> value_at_rule(const AdaptedProcess& process, const StoppingRule& rule) {
  const FilteredModel& m = process.model();
  require_tree(m, "value_at_rule");
  if (&m != &rule.model()) throw ArgumentError("process and rule live on different models");
  const int n = m.n_steps();
  std::vector<double> out(m.slice_size(n));
  for (std::size_t leaf = 0; leaf < out.size(); ++leaf) {
    const int t = rule.time_on_path(leaf);
    out[leaf] = process(t, m.ancestor(n, leaf, t));
  }
  return out;
}

std::size_t upcrossings(std::span<const double> path, double a, double b) {
  if (!(a < b)) throw ArgumentError("upcrossings requires a < b");
  if (path.empty()) throw ArgumentError("upcrossings requires a non-empty path");
  // nu_{2j-1}: first index after nu_{2j-2} with X < a; nu_{2j}: first index
  // after nu_{2j-1} with X > b. Index path.size() plays the role of T.
  std::size_t count = 0;
  std::size_t i = 0;
  const std::size_t horizon = path.size();
  while (true) {
    while (i < horizon && !(path[i] < a)) ++i;
    if (i >= horizon) break;
    ++i;
    while (i < horizon && !(path[i] > b)) ++i;
    if (i >= horizon) break;
    ++count;
    ++i;
  }
  return count;
}

}  // namespace nlstop
