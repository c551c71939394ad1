#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <sstream>

#include "nlstop/errors.hpp"
#include "nlstop/gexp.hpp"

namespace nlstop {

namespace {

using Vec = std::vector<double>;

std::optional<std::string> compare(std::span<const double> lhs, std::span<const double> rhs,
                                   double tol, bool inequality, int t) {
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const bool ok = inequality ? lhs[i] <= rhs[i] + tol : std::abs(lhs[i] - rhs[i]) <= tol;
    if (!ok) {
      std::ostringstream os;
      os.precision(17);
      os << "t=" << t << " node=" << i << " lhs=" << lhs[i] << " rhs=" << rhs[i];
      return os.str();
    }
  }
  return std::nullopt;
}

class Sampler {
 public:
  Sampler(const FilteredModel& model, const AxiomOptions& opt)
      : model_(model), opt_(opt), rng_(opt.seed) {}

  Vec terminal() { return slice(model_.n_steps()); }

  Vec slice(int t) {
    std::uniform_real_distribution<double> u(opt_.value_lo, opt_.value_hi);
    Vec v(model_.slice_size(t));
    for (double& x : v) x = u(rng_);
    return v;
  }

  /// Non-negative perturbation, positive on at least one leaf.
  Vec bump() {
    std::uniform_real_distribution<double> size(0.05, 0.5);
    std::bernoulli_distribution on(0.5);
    Vec v(model_.slice_size(model_.n_steps()), 0.0);
    for (double& x : v)
      if (on(rng_)) x = size(rng_);
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    v[pick(rng_)] = size(rng_);
    return v;
  }

  std::vector<std::uint8_t> event(int t) {
    std::bernoulli_distribution in(0.5);
    std::vector<std::uint8_t> a(model_.slice_size(t));
    for (auto& x : a) x = in(rng_) ? 1 : 0;
    return a;
  }

  int time(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

 private:
  const FilteredModel& model_;
  const AxiomOptions& opt_;
  std::mt19937_64 rng_;
};

}  // namespace

Report axiom_suite(const ConditionalExpectation& expectation, const AxiomOptions& opt) {
  const FilteredModel& m = *expectation.model();
  if (!m.is_tree())
    throw ArgumentError("axiom_suite needs a path tree; expand the lattice first");
  const int n = m.n_steps();
  const std::size_t leaves = m.slice_size(n);
  const double tol = opt.tolerance;
  Sampler sample(m, opt);
  Report report;

  auto record = [&](const std::string& name, const std::optional<std::string>& w) {
    report.record(name, !w.has_value(), w.value_or(""));
  };

  for (std::size_t iter = 0; iter < opt.samples; ++iter) {
    const Vec xi = sample.terminal();
    const int t = sample.time(0, n);
    const int s = sample.time(0, t);
    const AdaptedProcess e_xi = expectation.evaluate(xi);

    // (A1) monotonicity, then the strict clause for 0 <= xi0 <= eta0.
    {
      const Vec b = sample.bump();
      Vec eta(leaves), xi0(leaves), eta0(leaves);
      const double shift = std::min(0.0, opt.value_lo);
      for (std::size_t i = 0; i < leaves; ++i) {
        eta[i] = xi[i] + b[i];
        xi0[i] = xi[i] - shift;
        eta0[i] = xi0[i] + b[i];
      }
      const AdaptedProcess e_eta = expectation.evaluate(eta);
      std::optional<std::string> w;
      for (int u = 0; u <= n && !w; ++u) w = compare(e_xi.slice(u), e_eta.slice(u), tol, true, u);
      record("A1 monotonicity", w);

      const double lo = expectation.evaluate(xi0)(0, 0);
      const double hi = expectation.evaluate(eta0)(0, 0);
      std::optional<std::string> strict;
      if (!(hi - lo > tol)) {
        std::ostringstream os;
        os.precision(17);
        os << "E[xi]=" << lo << " E[eta]=" << hi << " with xi <= eta, xi != eta";
        strict = os.str();
      }
      record("A1 strict monotonicity", strict);
    }

    // (A2) time consistency for s <= t.
    {
      const Vec inner = lift_to_terminal(m, t, e_xi.slice(t));
      const AdaptedProcess outer = expectation.evaluate(inner);
      record("A2 time consistency", compare(outer.slice(s), e_xi.slice(s), tol, false, s));
    }

    // (A3) zero-one law.
    const auto a = sample.event(t);
    const Vec a_leaf = lift_to_terminal(m, t, Vec(a.begin(), a.end()));
    {
      Vec masked(leaves);
      for (std::size_t i = 0; i < leaves; ++i) masked[i] = a_leaf[i] * xi[i];
      const Vec lhs = expectation.at(masked, t);
      Vec rhs(lhs.size());
      for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = a[j] * e_xi(t, j);
      record("A3 zero-one law", compare(lhs, rhs, tol, false, t));
    }

    // (A4) translation by an F_t-measurable variable.
    {
      const Vec eta_t = sample.slice(t);
      const Vec lifted = lift_to_terminal(m, t, eta_t);
      Vec shifted(leaves);
      for (std::size_t i = 0; i < leaves; ++i) shifted[i] = xi[i] + lifted[i];
      const Vec lhs = expectation.at(shifted, t);
      Vec rhs(lhs.size());
      for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = e_xi(t, j) + eta_t[j];
      record("A4 translation invariance", compare(lhs, rhs, tol, false, t));
    }

    const Vec eta = sample.terminal();
    const AdaptedProcess e_eta = expectation.evaluate(eta);

    // Local property.
    {
      Vec mixed(leaves);
      for (std::size_t i = 0; i < leaves; ++i)
        mixed[i] = a_leaf[i] != 0.0 ? xi[i] : eta[i];
      const Vec lhs = expectation.at(mixed, t);
      Vec rhs(lhs.size());
      for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] = a[j] ? e_xi(t, j) : e_eta(t, j);
      record("local property", compare(lhs, rhs, tol, false, t));
    }

    // Constant preservation: an F_t-measurable variable is its own
    // conditional expectation on every later slice.
    {
      const Vec zeta = sample.slice(t);
      const AdaptedProcess e_zeta = expectation.evaluate(lift_to_terminal(m, t, zeta));
      std::optional<std::string> w = compare(e_zeta.slice(t), zeta, tol, false, t);
      for (int u = t + 1; u <= n && !w; ++u) {
        Vec expect(m.slice_size(u));
        for (std::size_t j = 0; j < expect.size(); ++j) expect[j] = zeta[m.ancestor(u, j, t)];
        w = compare(e_zeta.slice(u), expect, tol, false, u);
      }
      record("constant preserving", w);
    }

    if (expectation.declared_convex()) {
      std::optional<std::string> w;
      for (double lambda : {0.25, 0.5, 0.75}) {
        Vec mix(leaves);
        for (std::size_t i = 0; i < leaves; ++i) mix[i] = lambda * xi[i] + (1 - lambda) * eta[i];
        const AdaptedProcess e_mix = expectation.evaluate(mix);
        for (int u = 0; u <= n && !w; ++u) {
          Vec rhs(m.slice_size(u));
          for (std::size_t j = 0; j < rhs.size(); ++j)
            rhs[j] = lambda * e_xi(u, j) + (1 - lambda) * e_eta(u, j);
          w = compare(e_mix.slice(u), rhs, tol, true, u);
        }
        if (w) {
          *w += " lambda=" + std::to_string(lambda);
          break;
        }
      }
      record("convexity", w);
    }
  }
  return report;
}

namespace {

/// Terminal indices reachable from (t, node): a contiguous block on both
/// model kinds.
std::pair<std::size_t, std::size_t> successor_leaves(const FilteredModel& m, int t,
                                                     std::size_t node) {
  std::size_t lo = node, hi = node;
  for (int s = t; s < m.n_steps(); ++s) {
    lo = m.child(s, lo, 0);
    hi = m.child(s, hi, m.branching() - 1);
  }
  return {lo, hi};
}

}  // namespace

Report check_comparison(const ModelPtr& model, const Generator& g1, const Generator& g2,
                        std::span<const double> terminal, const ComparisonOptions& opt) {
  const int n = model->n_steps();
  for (int t = 0; t < n; ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node)
      for (int i = -20; i <= 20; ++i) {
        const double z = 0.25 * i;
        if (g1(t, node, z) > g2(t, node, z)) {
          std::ostringstream os;
          os << "comparison precondition g1 <= g2 fails at t=" << t << " node=" << node
             << " z=" << z;
          throw ArgumentError(os.str());
        }
      }

  const GExpectation e1(model, g1);
  const GExpectation e2(model, g2);
  Report report;
  {
    const AdaptedProcess lo = e1.evaluate(terminal);
    const AdaptedProcess hi = e2.evaluate(terminal);
    std::optional<std::string> w;
    for (int t = 0; t <= n && !w; ++t) w = compare(lo.slice(t), hi.slice(t), opt.tolerance, true, t);
    report.record("generator ordering", !w, w.value_or(""));
  }

  std::mt19937_64 rng(opt.seed);
  std::bernoulli_distribution on(0.5);
  std::uniform_real_distribution<double> size(0.05, 0.5);
  const AdaptedProcess base = e1.evaluate(terminal);
  for (std::size_t iter = 0; iter < opt.samples; ++iter) {
    std::vector<double> eta(terminal.begin(), terminal.end());
    for (double& x : eta)
      if (on(rng)) x += size(rng);
    const AdaptedProcess upper = e1.evaluate(eta);
    std::optional<std::string> order, strict;
    for (int t = 0; t <= n; ++t)
      for (std::size_t node = 0; node < model->slice_size(t); ++node) {
        const double gap = upper(t, node) - base(t, node);
        if (!order && gap < -opt.tolerance) {
          std::ostringstream os;
          os << "t=" << t << " node=" << node << " gap=" << gap;
          order = os.str();
        }
        if (!strict && gap <= opt.tolerance) {
          const auto [lo, hi] = successor_leaves(*model, t, node);
          for (std::size_t leaf = lo; leaf <= hi; ++leaf)
            if (eta[leaf] != terminal[leaf]) {
              std::ostringstream os;
              os << "equal values at t=" << t << " node=" << node << " but leaf " << leaf
                 << " differs";
              strict = os.str();
              break;
            }
        }
      }
    report.record("terminal ordering", !order, order.value_or(""));
    report.record("strict comparison", !strict, strict.value_or(""));
  }
  return report;
}

}  // namespace nlstop
