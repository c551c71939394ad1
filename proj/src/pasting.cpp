#include "nlstop/pasting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlstop/errors.hpp"

namespace nlstop {

namespace {

void require_stable(const Generator& g, const FilteredModel& model) {
  if (!g.has_finite_lipschitz())
    throw StabilityError("generator " + g.description() +
                         " has no finite Lipschitz constant; monotone-scheme condition "
                         "K_g*sqrt(dt) <= 1 cannot hold");
  const double product = g.lipschitz() * model.max_abs_increment();
  if (product > 1.0 + 1e-12) {
    std::ostringstream os;
    os << "monotone-scheme condition K_g*sqrt(dt) <= 1 violated for " << g.description()
       << ": product=" << product;
    throw StabilityError(os.str());
  }
}

void require_same_model(const Generator& g, const ModelPtr& model) {
  if (g.bound_model() && g.bound_model() != model)
    throw ArgumentError("generator " + g.description() + " is bound to another model");
}

}  // namespace

Generator paste_generators(const Generator& g1, const Generator& g2, const StoppingRule& nu) {
  const ModelPtr& model = nu.model_ptr();
  if (!model->is_tree()) throw ArgumentError("generator pasting needs a path tree");
  require_same_model(g1, model);
  require_same_model(g2, model);
  require_stable(g1, *model);
  require_stable(g2, *model);
  Generator::Fn fn = [g1, g2, nu](int t, std::size_t node, double z) {
    return nu.stopped_by(t, node) ? g2(t, node, z) : g1(t, node, z);
  };
  return Generator::custom(GeneratorFamily::pasted, std::move(fn),
                           std::max(g1.lipschitz(), g2.lipschitz()), g1.convex() && g2.convex(),
                           model, "pasted(" + g1.description() + ", " + g2.description() + ")");
}

PastedExpectation::PastedExpectation(ExpectationPtr first, ExpectationPtr second, StoppingRule nu)
    : first_(std::move(first)), second_(std::move(second)), nu_(std::move(nu)) {
  if (first_->model() != second_->model() || nu_.model_ptr() != first_->model())
    throw ArgumentError("pasted expectations must share one model");
  if (!first_->model()->is_tree()) throw ArgumentError("expectation pasting needs a path tree");
}

AdaptedProcess PastedExpectation::evaluate(std::span<const double> terminal) const {
  AdaptedProcess out = second_->evaluate(terminal);
  const std::vector<double> at_nu = value_at_rule(out, nu_);
  const AdaptedProcess before = first_->evaluate(at_nu);
  const FilteredModel& m = *model();
  for (int t = 0; t <= m.n_steps(); ++t)
    for (std::size_t node = 0; node < m.slice_size(t); ++node)
      if (!nu_.stopped_by(t, node)) out(t, node) = before(t, node);
  return out;
}

std::shared_ptr<const PastedExpectation> paste_expectations(ExpectationPtr first,
                                                            ExpectationPtr second,
                                                            const StoppingRule& nu) {
  return std::make_shared<const PastedExpectation>(std::move(first), std::move(second), nu);
}

// ---------------------------------------------------------------------------

StableFamily::StableFamily(ModelPtr model, std::vector<Generator> base)
    : model_(std::move(model)), base_(std::move(base)) {
  if (!model_) throw ArgumentError("stable family needs a model");
  if (base_.empty()) throw ConfigError("stable family needs at least one base generator");
  for (const Generator& g : base_) {
    require_same_model(g, model_);
    require_stable(g, *model_);
    if (!g.convex())
      throw ConfigError("base generator " + g.description() + " is not declared convex");
    members_.push_back(std::make_shared<const GExpectation>(model_, g));
  }
}

AdaptedSelection::AdaptedSelection(ModelPtr model, Indices indices)
    : model_(std::move(model)), indices_(std::move(indices)) {
  if (indices_.size() != static_cast<std::size_t>(model_->n_steps()))
    throw ArgumentError("selection must cover every non-terminal slice");
  for (int t = 0; t < model_->n_steps(); ++t)
    if (indices_[t].size() != model_->slice_size(t))
      throw ArgumentError("selection slice has the wrong size");
}

AdaptedSelection AdaptedSelection::constant(ModelPtr model, std::size_t k) {
  Indices idx(model->n_steps());
  for (int t = 0; t < model->n_steps(); ++t) idx[t].assign(model->slice_size(t), k);
  return AdaptedSelection(std::move(model), std::move(idx));
}

AdaptedSelection AdaptedSelection::switching(ModelPtr model, std::size_t i, std::size_t j,
                                             const StoppingRule& nu) {
  return paste_selections(constant(model, i), constant(model, j), nu);
}

std::size_t AdaptedSelection::max_index() const {
  std::size_t m = 0;
  for (const auto& slice : indices_)
    for (std::size_t k : slice) m = std::max(m, k);
  return m;
}

AdaptedSelection paste_selections(const AdaptedSelection& first, const AdaptedSelection& second,
                                  const StoppingRule& nu) {
  const ModelPtr& model = nu.model_ptr();
  if (first.model() != model || second.model() != model)
    throw ArgumentError("selections and stopping rule live on different models");
  AdaptedSelection::Indices idx = first.indices();
  for (int t = 0; t < model->n_steps(); ++t)
    for (std::size_t node = 0; node < idx[t].size(); ++node)
      if (nu.stopped_by(t, node)) idx[t][node] = second(t, node);
  return AdaptedSelection(model, std::move(idx));
}

Generator selection_generator(const StableFamily& family, const AdaptedSelection& sel) {
  if (sel.model() != family.model())
    throw ArgumentError("selection lives on a different model than the family");
  if (family.model()->n_steps() > 0 && sel.max_index() >= family.size())
    throw ArgumentError("selection index out of range");
  std::vector<Generator> base;
  double k = 0.0;
  for (std::size_t i = 0; i < family.size(); ++i) {
    base.push_back(family.generator(i));
    k = std::max(k, family.generator(i).lipschitz());
  }
  auto indices = std::make_shared<const AdaptedSelection::Indices>(sel.indices());
  const int n = family.model()->n_steps();
  Generator::Fn fn = [base, indices, n](int t, std::size_t node, double z) {
    return t < n ? base[(*indices)[t][node]](t, node, z) : 0.0;
  };
  return Generator::custom(GeneratorFamily::selected, std::move(fn), k, true, family.model(),
                           "selection");
}

std::shared_ptr<const GExpectation> selection_expectation(const StableFamily& family,
                                                          const AdaptedSelection& sel) {
  return std::make_shared<const GExpectation>(family.model(), selection_generator(family, sel));
}

AdaptedProcess selected_density(const AdaptedSelection& sel,
                                const std::vector<AdaptedProcess>& running) {
  AdaptedProcess h(sel.model(), 0.0);
  if (running.empty()) return h;
  for (int t = 0; t < sel.model()->n_steps(); ++t)
    for (std::size_t node = 0; node < sel.model()->slice_size(t); ++node)
      h(t, node) = running.at(sel(t, node))(t, node);
  return h;
}

std::vector<double> value_at_nu(const StableFamily& family, const AdaptedSelection& sel,
                                const StoppingRule& rho, const StoppingRule& nu,
                                const AdaptedProcess& reward,
                                const std::vector<AdaptedProcess>& running) {
  const auto gexp = selection_expectation(family, sel);
  const AdaptedProcess h = selected_density(sel, running);
  const AdaptedProcess v = evaluate_rule(*gexp, reward, rho.latest(nu), &h);
  return value_at_rule(v, nu);
}

Report pairwise_lattice_check(const StableFamily& family, const StoppingRule& nu,
                              const AdaptedProcess& reward,
                              const std::vector<AdaptedProcess>& running,
                              const std::vector<Candidate>& candidates, double tolerance) {
  const ModelPtr& model = family.model();
  if (!model->is_tree()) throw ArgumentError("pairwise lattice check needs a path tree");
  const int n = model->n_steps();

  std::vector<std::vector<double>> values;
  for (const Candidate& c : candidates)
    values.push_back(value_at_nu(family, c.selection, c.rule, nu, reward, running));

  // Event membership of a node after nu, read off its first descendant leaf.
  auto node_event = [&](const std::vector<std::uint8_t>& leaf_event) {
    std::vector<std::vector<std::uint8_t>> ev(n + 1);
    ev[n] = leaf_event;
    for (int t = n - 1; t >= 0; --t) {
      ev[t].resize(model->slice_size(t));
      for (std::size_t node = 0; node < ev[t].size(); ++node)
        ev[t][node] = ev[t + 1][model->child(t, node, 0)];
    }
    return ev;
  };

  Report report;
  for (std::size_t a = 0; a < candidates.size(); ++a)
    for (std::size_t b = 0; b < candidates.size(); ++b) {
      const StoppingRule r1 = candidates[a].rule.latest(nu);
      const StoppingRule r2 = candidates[b].rule.latest(nu);
      for (bool want_max : {true, false}) {
        std::vector<std::uint8_t> leaf_event(values[a].size());
        for (std::size_t l = 0; l < leaf_event.size(); ++l)
          leaf_event[l] = want_max ? values[a][l] >= values[b][l] : values[a][l] <= values[b][l];
        const auto ev = node_event(leaf_event);

        AdaptedSelection::Indices idx = candidates[a].selection.indices();
        StoppingRule::Flags flags(n + 1);
        for (int t = 0; t <= n; ++t) {
          flags[t].assign(model->slice_size(t), 0);
          for (std::size_t node = 0; node < flags[t].size(); ++node) {
            if (!nu.stopped_by(t, node)) continue;
            const bool in_a = ev[t][node] != 0;
            flags[t][node] = in_a ? r1.stops(t, node) : r2.stops(t, node);
            if (t < n && !in_a) idx[t][node] = candidates[b].selection(t, node);
          }
        }
        const AdaptedSelection k(model, std::move(idx));
        const StoppingRule rho(model, std::move(flags));
        const auto got = value_at_nu(family, k, rho, nu, reward, running);

        std::string witness;
        bool ok = true;
        for (std::size_t l = 0; l < got.size() && ok; ++l) {
          const double want = want_max ? std::max(values[a][l], values[b][l])
                                       : std::min(values[a][l], values[b][l]);
          if (std::abs(got[l] - want) > tolerance) {
            ok = false;
            std::ostringstream os;
            os.precision(17);
            os << "pair (" << a << ", " << b << ") leaf " << l << ": constructed " << got[l]
               << " expected " << want;
            witness = os.str();
          }
        }
        report.record(want_max ? "pairwise maximum" : "pairwise minimum", ok, witness);
      }
    }
  return report;
}

}  // namespace nlstop
