// Acceptance runner: one line per criterion with its measured runtime.
// Exit status is non-zero when any criterion fails or exceeds its limit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nlstop/cli.hpp"
#include "nlstop/controlstop.hpp"
#include "nlstop/errors.hpp"
#include "nlstop/gexp.hpp"
#include "nlstop/oracle.hpp"
#include "nlstop/pasting.hpp"
#include "nlstop/robust.hpp"
#include "nlstop/snell.hpp"
#include "support.hpp"

namespace {

using namespace nlstop;
using testing::Rng;

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && passed) {
      passed = false;
      detail = what;
    }
  }
};

struct Criterion {
  int id;
  std::string title;
  double limit_seconds;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Random node-independent generator with K * sqrt(dt) <= 1.
Generator random_generator(Rng& rng, double dt) {
  const double kmax = 1.0 / std::sqrt(dt);
  switch (rng() % 4) {
    case 0: return Generator::zero();
    case 1: return Generator::linear_drift(testing::uniform(rng, -kmax, kmax));
    case 2: return Generator::abs_drift(testing::uniform(rng, 0.0, kmax));
    default: {
      const double a = testing::uniform(rng, -kmax, 0.0), b = testing::uniform(rng, a, kmax);
      return Generator::piecewise_linear({0.0}, {a, b});
    }
  }
}

RewardSpec random_reward(const ModelPtr& m, Rng& rng, std::size_t base) {
  RewardSpec r{testing::random_process(m, rng, -0.5, 1.0), {}, -1.0, -1.0};
  for (std::size_t i = 0; i < base; ++i) r.running.push_back(testing::random_process(m, rng, -0.5, 0.5));
  return r;
}

class ShiftedAtOne final : public ConditionalExpectation {
 public:
  explicit ShiftedAtOne(ExpectationPtr inner) : inner_(std::move(inner)) {}
  [[nodiscard]] const ModelPtr& model() const override { return inner_->model(); }
  [[nodiscard]] AdaptedProcess evaluate(std::span<const double> xi) const override {
    auto p = inner_->evaluate(xi);
    for (double& v : p.slice(1)) v += 1.0;
    return p;
  }
  [[nodiscard]] bool declared_convex() const override { return false; }

 private:
  ExpectationPtr inner_;
};

Outcome axioms() {
  Outcome o;
  auto tree = expand_to_path_tree(*build_binomial_lattice(4, 0.25, 0.0));
  const std::vector<std::pair<std::string, ExpectationPtr>> ops{
      {"linear", std::make_shared<LinearExpectation>(tree)},
      {"mu z", std::make_shared<GExpectation>(tree, Generator::linear_drift(1.5))},
      {"K|z|", std::make_shared<GExpectation>(tree, Generator::abs_drift(1.5))},
      {"quadratic", std::make_shared<GExpectation>(tree, Generator::quadratic(1.0))},
  };
  std::size_t evaluations = 0;
  for (const auto& [name, op] : ops) {
    auto report = axiom_suite(*op, {.samples = 200, .tolerance = 1e-10});
    for (const auto& e : report.entries()) evaluations += e.evaluations;
    o.require(report.all_passed(), name + ": " + report.to_string());
  }
  ShiftedAtOne broken(std::make_shared<GExpectation>(tree, Generator::abs_drift(1.0)));
  auto fault = axiom_suite(broken, {.samples = 200, .tolerance = 1e-10});
  const auto* a2 = fault.find("A2 time consistency");
  o.require(a2 && !a2->passed && !a2->witness.empty(), "fault-injected operator was not caught by A2");
  if (o.passed) o.detail = std::to_string(evaluations) + " axiom evaluations; fault witness: " + a2->witness;
  return o;
}

Outcome pasting() {
  Outcome o;
  Rng rng(2001);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto g1 = random_generator(rng, 0.25);
    auto g2 = random_generator(rng, 0.25);
    auto nu = testing::random_rule(m, rng, 0.4);
    auto xi = testing::random_vector(rng, 8, -2, 2);
    const int t = static_cast<int>(rng() % 4);
    auto op = paste_expectations(std::make_shared<GExpectation>(m, g1), std::make_shared<GExpectation>(m, g2), nu);
    auto a = op->at(xi, t);
    auto b = GExpectation(m, paste_generators(g1, g2, nu)).at(xi, t);
    for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
  }
  o.require(worst <= 1e-12, "max deviation " + fmt(worst));
  auto nu = testing::random_rule(m, rng, 0.4);
  auto op = paste_expectations(std::make_shared<GExpectation>(m, Generator::linear_drift(-1.0)),
                               std::make_shared<GExpectation>(m, Generator::abs_drift(1.5)), nu);
  auto report = axiom_suite(*op, {.samples = 200});
  o.require(report.all_passed(), "pasted operator axioms: " + report.to_string());
  if (o.passed) o.detail = "max deviation " + fmt(worst) + "; pasted operator passes the axiom suite";
  return o;
}

Outcome cooperative() {
  Outcome o;
  Rng rng(2002);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  double worst = 0.0, worst_attain = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    StableFamily fam(m, {random_generator(rng, 0.25), random_generator(rng, 0.25)});
    auto r = random_reward(m, rng, 2);
    auto res = upper_snell_envelope(fam, r);
    auto brute = oracle::brute_force_upper_value(fam, r);
    worst = std::max(worst, std::abs(res.value_at_0 - brute.value));
    AdaptedSelection sel(m, res.argmax);
    auto h = selected_density(sel, r.running);
    const double attained = evaluate_rule(*selection_expectation(fam, sel), r.reward, res.tau_bar, &h)(0, 0);
    worst_attain = std::max(worst_attain, std::abs(attained - res.value_at_0));
  }
  o.require(worst <= 1e-10, "envelope vs brute force " + fmt(worst));
  o.require(worst_attain <= 1e-10, "tau_bar attainment gap " + fmt(worst_attain));
  if (o.passed) o.detail = "max |DP - brute force| " + fmt(worst) + ", tau_bar gap " + fmt(worst_attain);
  return o;
}

Outcome classical() {
  Outcome o;
  const int n = 50;
  const double dt = 1.0 / n, x0 = 1.0, strike = 1.05;
  auto m = build_binomial_lattice(n, dt, x0);
  StableFamily fam(m, {Generator::zero()});
  RewardSpec r{AdaptedProcess::generate(m, [&](int, std::size_t, double x) { return std::max(strike - x, 0.0); }),
               {}, -1.0, -1.0};
  auto res = upper_snell_envelope(fam, r);
  auto table = testing::american_put_table(n, dt, x0, strike);
  double worst = 0.0;
  for (int t = 0; t <= n; ++t)
    for (int j = 0; j <= t; ++j) worst = std::max(worst, std::abs(res.envelope(t, j) - table[t][j]));
  o.require(worst <= 1e-12, "max node deviation " + fmt(worst));
  if (o.passed) o.detail = "value " + fmt(res.value_at_0) + ", max node deviation " + fmt(worst);
  return o;
}

Outcome robust() {
  Outcome o;
  Rng rng(2005);
  auto m = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  double gap = 0.0, dp = 0.0, attain = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    StableFamily fam(m, {random_generator(rng, 0.25), random_generator(rng, 0.25)});
    auto r = random_reward(m, rng, 2);
    auto res = robust_values(fam, r);
    auto brute = oracle::brute_force_robust_value(fam, r);
    gap = std::max(gap, std::abs(brute.sup_inf - brute.inf_sup));
    dp = std::max(dp, std::abs(brute.sup_inf - res.value_at_0));
    attain = std::max(attain, std::abs(lower_rule_value(fam, r, res.tau_v)(0, 0) - res.value_at_0));
  }
  o.require(gap <= 1e-10, "minimax gap " + fmt(gap));
  o.require(dp <= 1e-10, "robust value vs oracle " + fmt(dp));
  o.require(attain <= 1e-10, "tau_V attainment gap " + fmt(attain));
  if (o.passed) o.detail = "minimax gap " + fmt(gap) + ", DP gap " + fmt(dp) + ", tau_V gap " + fmt(attain);
  return o;
}

Outcome structure() {
  Outcome o;
  Rng rng(2006);
  const std::vector<double> deltas{0.5, 0.9, 0.99, 1 - 1e-12};
  auto check_deltas = [&](const SnellResult& res, const RewardSpec& r, const std::string& label) {
    std::vector<StoppingRule> rules;
    for (double d : deltas) rules.push_back(approximate_stopping_time(res, r, d));
    for (std::size_t k = 1; k < rules.size(); ++k)
      o.require(rules[k].stop_set_within(rules[k - 1]), label + ": tau_delta stop sets not nested");
    o.require(rules.back().flags() == res.tau_bar.flags(), label + ": tau_delta does not converge to tau_bar");
  };

  auto tree = build_path_tree(3, 2, {0.5, 0.5}, 0.25);
  for (int trial = 0; trial < 20; ++trial) {
    StableFamily fam(tree, {random_generator(rng, 0.25), random_generator(rng, 0.25)});
    auto r = random_reward(tree, rng, 2);
    auto snell = upper_snell_envelope(fam, r);
    auto sup = check_supermartingale(fam, snell.envelope, r, 1e-9);
    o.require(sup.all_passed(), "Z + H^i supermartingale: " + sup.to_string());
    check_deltas(snell, r, "tree instance " + std::to_string(trial));

    auto rv = robust_values(fam, r);
    auto report = verify_robust_structure(rv, fam, r, 1e-9);
    for (const char* name : {"submartingale up to tau_lower", "value meets reward at tau_V"}) {
      const auto* e = report.find(name);
      o.require(e && e->passed, std::string(name) + ": " + (e ? e->witness : "missing"));
    }
    for (int t = 0; t <= 3; ++t)
      for (std::size_t j = 0; j < tree->slice_size(t); ++j)
        if (rv.stopped_region[t][j] && rv.tau_lower.stops(t, j))
          o.require(std::abs(rv.lower(t, j) - r.reward(t, j)) <= 1e-9, "V(tau_lower) != Y(tau_lower)");
  }

  const int n = 40;
  auto lat = build_binomial_lattice(n, 1.0 / n, 1.0);
  StableFamily single(lat, {Generator::zero()});
  RewardSpec put{AdaptedProcess::generate(lat, [](int, std::size_t, double x) { return std::max(1.1 - x, 0.0); }),
                 {}, -1.0, -1.0};
  auto snell = upper_snell_envelope(single, put);
  o.require(check_supermartingale(single, snell.envelope, put, 1e-9).all_passed(), "put envelope supermartingale");
  check_deltas(snell, put, "American put");
  if (o.passed) o.detail = "20 tree instances and the American put; deltas {0.5, 0.9, 0.99, 1-1e-12}";
  return o;
}

Outcome exact_drift() {
  Outcome o;
  const double mu = 0.8, k = 1.0;
  double worst = 0.0;
  for (auto [n, dt] : {std::pair{4, 0.25}, std::pair{16, 1.0 / 16}, std::pair{64, 1.0 / 64}}) {
    auto m = build_binomial_lattice(n, dt, 0.0);
    std::vector<double> xi(m->states(n).begin(), m->states(n).end());
    const double horizon = n * dt;
    worst = std::max(worst, std::abs(GExpectation(m, Generator::linear_drift(mu)).evaluate(xi)(0, 0) - mu * horizon));
    worst = std::max(worst, std::abs(GExpectation(m, Generator::abs_drift(k)).evaluate(xi)(0, 0) - k * horizon));
  }
  o.require(worst <= 1e-12, "max deviation " + fmt(worst));
  if (o.passed) o.detail = "max deviation " + fmt(worst);
  return o;
}

Outcome quadratic() {
  Outcome o;
  const std::vector<double> dts{1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64};
  std::string orders;
  double closed_gap = 0.0;
  for (double kappa : {0.5, 1.0}) {
    auto walk = [](double dt) {
      const int n = static_cast<int>(std::lround(1.0 / dt));
      auto m = build_binomial_lattice(n, dt, 0.0);
      return std::pair{m, std::vector<double>(m->states(n).begin(), m->states(n).end())};
    };
    auto rows = oracle::convergence_harness(
        [&](double dt) {
          auto [m, xi] = walk(dt);
          return GExpectation(m, Generator::quadratic(kappa)).evaluate(xi)(0, 0);
        },
        dts,
        [&](double dt) {
          auto [m, xi] = walk(dt);
          const double v = oracle::entropic_oracle(kappa, xi, m);
          const double closed = m->n_steps() / kappa * std::log(std::cosh(kappa * std::sqrt(dt)));
          closed_gap = std::max(closed_gap, std::abs(v - closed));
          return v;
        });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      o.require(std::abs(rows[i].order - 1.0) <= 0.3, "order " + fmt(rows[i].order) + " at kappa " + fmt(kappa));
      orders += (orders.empty() ? "" : " ") + fmt(rows[i].order);
    }
  }
  o.require(closed_gap <= 1e-12, "entropic closed form gap " + fmt(closed_gap));
  if (o.passed) o.detail = "orders " + orders + "; closed form gap " + fmt(closed_gap);
  return o;
}

double value_for_map(const ControlledSpec& spec, const ModelPtr& m, const ControlMap& u) {
  StableFamily fam(m, {control_generator(spec, m, u)});
  RewardSpec r{terminal_reward_process(spec, m), {control_running_process(spec, m, u)}, -10.0, -10.0};
  return upper_snell_envelope(fam, r).value_at_0;
}

Outcome controller() {
  Outcome o;
  Rng rng(2009);
  double worst = 0.0, pair_gap = 0.0, deviation = 0.0, measure = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto spec = testing::random_control_spec(rng);
    auto res = solve_controller_stopper(spec, 3, 0.25, 1.0);
    auto brute = oracle::brute_force_controller_stopper(spec, res.model);
    worst = std::max(worst, std::abs(res.value_at_0 - brute.value));
    pair_gap = std::max(pair_gap,
                        std::abs(oracle::p_u_expectation(spec, res.model, res.u_star, res.tau_bar) - res.value_at_0));
    const auto& m = *res.model;
    for (int t = 0; t < 3; ++t)
      for (std::size_t j = 0; j < m.slice_size(t); ++j)
        for (std::size_t k = 0; k < spec.controls.size(); ++k) {
          auto u = res.u_star;
          u[t][j] = k;
          deviation = std::max(deviation, value_for_map(spec, res.model, u) - res.value_at_0);
        }
    for (int s = 0; s < 10; ++s) {
      ControlMap u(3);
      for (int t = 0; t < 3; ++t)
        for (std::size_t j = 0; j < m.slice_size(t); ++j) u[t].push_back(rng() % spec.controls.size());
      auto rule = testing::random_rule(res.model, rng, 0.3);
      auto running = control_running_process(spec, res.model, u);
      GExpectation e(res.model, control_generator(spec, res.model, u));
      const double bsde = evaluate_rule(e, terminal_reward_process(spec, res.model), rule, &running)(0, 0);
      measure = std::max(measure, std::abs(bsde - oracle::p_u_expectation(spec, res.model, u, rule)));
    }
  }
  o.require(worst <= 1e-10, "DP vs brute force " + fmt(worst));
  o.require(pair_gap <= 1e-10, "(U*, tau_bar) attainment gap " + fmt(pair_gap));
  o.require(deviation <= 1e-12, "one-node deviation improved the value by " + fmt(deviation));
  o.require(measure <= 1e-12, "E_gU vs P_U gap " + fmt(measure));
  if (o.passed)
    o.detail = "DP gap " + fmt(worst) + ", pair gap " + fmt(pair_gap) + ", measure gap " + fmt(measure);
  return o;
}

Outcome cli_guards() {
  namespace fs = std::filesystem;
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "nlstop_acceptance";
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream((dir / name).string()) << text;
    return (dir / name).string();
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::ostringstream out, err;
  const auto cfg = write("verify.json", R"({"seed": 5, "model": {"kind": "tree", "n_steps": 3, "dt": 0.25},
    "generators": [{"type": "zero"}, {"type": "abs", "k": 1.0}],
    "reward": {"payoff": {"type": "abs"}, "running": [0.0, -0.1]}, "verify": {"samples": 10}})");
  const auto a = (dir / "a.json").string(), b = (dir / "b.json").string();
  const int first = cli::run_cli({"verify", "--config", cfg, "--format", "json", "--out", a}, out, err);
  const int second = cli::run_cli({"verify", "--config", cfg, "--format", "json", "--out", b}, out, err);
  o.require(first == 0 && second == 0, "verify exited " + std::to_string(first) + "/" + std::to_string(second));
  o.require(slurp(a) == slurp(b) && !slurp(a).empty(), "JSON outputs differ");

  const auto unstable = write("unstable.json", R"({"model": {"n_steps": 4, "dt": 1.0},
    "generators": [{"type": "abs", "k": 2.0}], "reward": {"payoff": {"type": "abs"}}})");
  const int code3 = cli::run_cli({"snell", "--config", unstable}, out, err);
  o.require(code3 == 3, "K sqrt(dt) = 2 exited " + std::to_string(code3));
  const auto deep = write("deep.json", R"({"model": {"kind": "tree", "n_steps": 13, "dt": 0.01},
    "reward": {"payoff": {"type": "abs"}}})");
  const int code4 = cli::run_cli({"snell", "--config", deep}, out, err);
  o.require(code4 == 4, "depth-13 tree exited " + std::to_string(code4));
  fs::remove_all(dir);
  if (o.passed) o.detail = "byte-identical JSON; exit codes 3 and 4";
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "axioms", 2.0, axioms},
      {2, "pasting equivalence", 2.0, pasting},
      {3, "cooperative optimality", 10.0, cooperative},
      {4, "classical reduction", 1.0, classical},
      {5, "robust minimax", 20.0, robust},
      {6, "structure checks", 2.0, structure},
      {7, "exact drift values", 1.0, exact_drift},
      {8, "quadratic convergence", 2.0, quadratic},
      {9, "controller-stopper", 30.0, controller},
      {10, "CLI determinism and guards", 1.0, cli_guards},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.passed && seconds > c.limit_seconds) {
      o.passed = false;
      o.detail = "runtime limit exceeded; " + o.detail;
    }
    failures += !o.passed;
    std::printf("[%s] %2d %-28s %7.3f s (limit %g s)  %s\n", o.passed ? "PASS" : "FAIL", c.id, c.title.c_str(),
                seconds, c.limit_seconds, o.detail.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
