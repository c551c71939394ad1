#include "nlstop/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#include "nlstop/errors.hpp"
#include "nlstop/oracle.hpp"
#include "nlstop/pasting.hpp"
#include "nlstop/robust.hpp"

namespace nlstop::cli {

using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Schema access with field paths in every diagnostic.

class Field {
 public:
  Field(const json& value, std::string path) : value_(&value), path_(std::move(path)) {}

  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] const json& raw() const { return *value_; }
  [[nodiscard]] bool has(const std::string& key) const {
    return value_->is_object() && value_->contains(key);
  }

  [[nodiscard]] Field at(const std::string& key) const {
    require_object();
    if (!value_->contains(key)) fail("missing field '" + join(key) + "'");
    return Field(value_->at(key), join(key));
  }
  [[nodiscard]] Field at(std::size_t i) const {
    return Field(value_->at(i), path_ + "[" + std::to_string(i) + "]");
  }
  [[nodiscard]] std::size_t size() const {
    require_array();
    return value_->size();
  }

  [[nodiscard]] double number() const {
    if (!value_->is_number()) fail("field '" + path_ + "': expected a number");
    return value_->get<double>();
  }
  [[nodiscard]] double number(const std::string& key, double fallback) const {
    return has(key) ? at(key).number() : fallback;
  }
  [[nodiscard]] long long integer() const {
    if (!value_->is_number_integer()) fail("field '" + path_ + "': expected an integer");
    return value_->get<long long>();
  }
  [[nodiscard]] std::string string() const {
    if (!value_->is_string()) fail("field '" + path_ + "': expected a string");
    return value_->get<std::string>();
  }
  [[nodiscard]] std::vector<double> numbers() const {
    require_array();
    std::vector<double> v;
    for (std::size_t i = 0; i < value_->size(); ++i) v.push_back(at(i).number());
    return v;
  }

  void require_object() const {
    if (!value_->is_object()) fail("field '" + path_ + "': expected an object");
  }
  void require_array() const {
    if (!value_->is_array()) fail("field '" + path_ + "': expected an array");
  }
  /// Rejects keys outside `allowed`.
  void only(std::initializer_list<const char*> allowed) const {
    require_object();
    for (const auto& [key, _] : value_->items())
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
        fail("unknown field '" + join(key) + "'");
  }

  [[noreturn]] void fail(const std::string& message) const { throw ConfigError(message); }

 private:
  [[nodiscard]] std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* value_;
  std::string path_;
};

using StateFn = std::function<double(double)>;

StateFn parse_state_payoff(const Field& f) {
  if (f.raw().is_number()) {
    const double c = f.number();
    return [c](double) { return c; };
  }
  const std::string type = f.at("type").string();
  if (type == "put") {
    const double k = f.at("strike").number();
    return [k](double x) { return std::max(k - x, 0.0); };
  }
  if (type == "call") {
    const double k = f.at("strike").number();
    return [k](double x) { return std::max(x - k, 0.0); };
  }
  if (type == "abs") {
    const double scale = f.number("scale", 1.0);
    return [scale](double x) { return scale * std::abs(x); };
  }
  if (type == "linear") {
    const double a = f.number("a", 0.0), b = f.number("b", 0.0);
    return [a, b](double x) { return a + b * x; };
  }
  if (type == "constant") {
    const double c = f.at("value").number();
    return [c](double) { return c; };
  }
  f.fail("field '" + f.path() + ".type': unknown payoff type '" + type + "'");
}

/// Tabulated process: `values` per slice or `rows` of {t, node_index, field}.
AdaptedProcess parse_tabulated(const Field& f, const ModelPtr& model, int slices) {
  AdaptedProcess p(model, 0.0);
  if (f.has("values")) {
    const Field values = f.at("values");
    if (values.size() < static_cast<std::size_t>(slices))
      values.fail("field '" + values.path() + "': expected " + std::to_string(slices) + " slices");
    for (int t = 0; t < slices; ++t) {
      const auto row = values.at(t).numbers();
      if (row.size() != model->slice_size(t))
        values.fail("field '" + values.at(t).path() + "': expected " +
                    std::to_string(model->slice_size(t)) + " entries, got " + std::to_string(row.size()));
      std::copy(row.begin(), row.end(), p.slice(t).begin());
    }
    return p;
  }
  const Field rows = f.at("rows");
  const std::string key = f.has("field") ? f.at("field").string() : "reward";
  std::vector<std::vector<std::uint8_t>> seen(slices);
  for (int t = 0; t < slices; ++t) seen[t].assign(model->slice_size(t), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Field row = rows.at(i);
    const long long t = row.at("t").integer();
    const long long node = row.at("node_index").integer();
    if (t < 0 || t >= slices || node < 0 || static_cast<std::size_t>(node) >= model->slice_size(t))
      row.fail("field '" + row.path() + "': node (" + std::to_string(t) + ", " +
               std::to_string(node) + ") is not on the model");
    p(static_cast<int>(t), node) = row.at(key).number();
    seen[t][node] = 1;
  }
  for (int t = 0; t < slices; ++t)
    for (std::size_t node = 0; node < seen[t].size(); ++node)
      if (!seen[t][node])
        rows.fail("field '" + rows.path() + "': tabulated grid does not cover t=" +
                  std::to_string(t) + " node=" + std::to_string(node));
  return p;
}

AdaptedProcess parse_process(const Field& f, const ModelPtr& model, int slices) {
  if (!f.raw().is_number() && f.raw().is_object() && f.at("type").string() == "tabulated")
    return parse_tabulated(f, model, slices);
  const StateFn fn = parse_state_payoff(f);
  AdaptedProcess p(model, 0.0);
  for (int t = 0; t < slices; ++t)
    for (std::size_t node = 0; node < model->slice_size(t); ++node) p(t, node) = fn(model->state(t, node));
  return p;
}

Generator parse_generator(const Field& f) {
  const std::string type = f.at("type").string();
  if (type == "zero") return Generator::zero();
  if (type == "linear") return Generator::linear_drift(f.at("mu").number());
  if (type == "abs") return Generator::abs_drift(f.at("k").number());
  if (type == "quadratic") return Generator::quadratic(f.at("kappa").number());
  if (type == "piecewise_linear")
    return Generator::piecewise_linear(f.at("breakpoints").numbers(), f.at("slopes").numbers());
  f.fail("field '" + f.path() + ".type': unknown generator type '" + type + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Command results.

struct Outcome {
  json summary = json::object();
  json payload = json::object();
  std::string csv;
  std::string text;
  bool passed = true;
};

void add_surface(Outcome& o, const AdaptedProcess& value, const StoppingRule& rule,
                 const std::vector<std::vector<std::size_t>>& arg, const AdaptedProcess& reward) {
  const FilteredModel& m = value.model();
  std::string csv = "t,node_index,state,value,is_stop,argmax_index\n";
  json rows = json::array();
  for (int t = 0; t <= m.n_steps(); ++t)
    for (std::size_t node = 0; node < m.slice_size(t); ++node) {
      const long long a = t < m.n_steps() ? static_cast<long long>(arg[t][node]) : -1;
      const bool stop = rule.stops(t, node);
      csv += std::to_string(t) + "," + std::to_string(node) + "," + fmt(m.state(t, node)) + "," +
             fmt(value(t, node)) + "," + (stop ? "1" : "0") + "," + std::to_string(a) + "\n";
      rows.push_back({{"t", t},
                      {"node_index", node},
                      {"state", m.state(t, node)},
                      {"value", value(t, node)},
                      {"is_stop", stop},
                      {"argmax_index", a},
                      {"reward", reward(t, node)}});
    }
  o.csv = std::move(csv);
  o.payload["surface"] = std::move(rows);
  o.summary["rows"] = o.payload["surface"].size();
}

/// E[tau] under the reference probabilities.
double expected_stopping_time(const StoppingRule& rule) {
  const ModelPtr& model = rule.model_ptr();
  const GExpectation linear(model, Generator::zero());
  const AdaptedProcess time =
      AdaptedProcess::generate(model, [&](int t, std::size_t, double) { return t * model->dt(); });
  return evaluate_rule(linear, time, rule)(0, 0);
}

std::size_t stop_nodes(const StoppingRule& rule) {
  std::size_t c = 0;
  for (const auto& slice : rule.flags()) c += static_cast<std::size_t>(std::count(slice.begin(), slice.end(), 1));
  return c;
}

ModelPtr require_model(const RunConfig& cfg) {
  if (!cfg.raw.contains("model")) throw ConfigError("missing field 'model'");
  return build_model(cfg.model);
}

Outcome cmd_snell(const RunConfig& cfg) {
  const ModelPtr model = require_model(cfg);
  const StableFamily family(model, build_generators(cfg));
  const RewardSpec reward = build_reward(cfg, model, family.size());
  const SnellResult r = upper_snell_envelope(family, reward);
  Outcome o;
  add_surface(o, r.envelope, r.tau_bar, r.argmax, reward.reward);
  o.summary["value_at_0"] = r.value_at_0;
  o.summary["expected_stopping_time"] = expected_stopping_time(r.tau_bar);
  o.summary["stop_nodes"] = stop_nodes(r.tau_bar);
  o.summary["c_y"] = reward.c_y;
  o.summary["c_h"] = reward.c_h;
  return o;
}

Outcome cmd_robust(const RunConfig& cfg) {
  const ModelPtr model = require_model(cfg);
  const StableFamily family(model, build_generators(cfg));
  const RewardSpec reward = build_reward(cfg, model, family.size());
  const RobustResult r = robust_values(family, reward);
  Outcome o;
  add_surface(o, r.lower, r.tau_v, r.argmin, reward.reward);
  json priors = json::array();
  for (std::size_t i = 0; i < r.envelopes.size(); ++i) {
    priors.push_back(r.envelopes[i](0, 0));
    for (auto& row : o.payload["surface"])
      row["prior_envelopes"].push_back(r.envelopes[i](row["t"].get<int>(), row["node_index"].get<std::size_t>()));
  }
  for (auto& row : o.payload["surface"])
    row["diagnostic_only"] =
        r.stopped_region[row["t"].get<int>()][row["node_index"].get<std::size_t>()] == 0;
  o.summary["value_at_0"] = r.value_at_0;
  o.summary["prior_values_at_0"] = priors;
  o.summary["expected_stopping_time"] = expected_stopping_time(r.tau_v);
  o.summary["stop_nodes"] = stop_nodes(r.tau_v);
  return o;
}

Outcome cmd_control(const RunConfig& cfg) {
  if (!cfg.raw.contains("model")) throw ConfigError("missing field 'model'");
  const ControlledSpec spec = build_control_spec(cfg);
  const ControllerStopperResult r = solve_controller_stopper(
      spec, cfg.model.n_steps, cfg.model.dt, cfg.model.x0, cfg.model.max_depth);
  Outcome o;
  add_surface(o, r.value, r.tau_bar, r.u_star, terminal_reward_process(spec, r.model));
  for (auto& row : o.payload["surface"]) {
    const int t = row["t"].get<int>();
    if (t < r.model->n_steps())
      row["control"] = spec.controls[r.u_star[t][row["node_index"].get<std::size_t>()]];
  }
  o.summary["value_at_0"] = r.value_at_0;
  o.summary["attained_value"] = r.attained_value;
  o.summary["model_kind"] = r.model->is_tree() ? "tree" : "lattice";
  o.summary["expected_stopping_time"] = expected_stopping_time(r.tau_bar);
  return o;
}

Outcome cmd_converge(const RunConfig& cfg) {
  const Field c(cfg.converge, "converge");
  c.only({"problem", "horizon", "dts", "kappa", "mu", "k", "strike", "x0"});
  const std::string problem = c.at("problem").string();
  const double horizon = c.number("horizon", 1.0);
  const std::vector<double> dts = c.at("dts").numbers();
  const double x0 = c.number("x0", 0.0);

  auto lattice = [&](double dt) {
    const double steps = horizon / dt;
    if (!(dt > 0.0) || std::abs(steps - std::round(steps)) > 1e-9)
      throw ConfigError("field 'converge.dts': dt=" + fmt(dt) + " does not divide the horizon");
    return build_binomial_lattice(static_cast<int>(std::round(steps)), dt, x0);
  };
  auto brownian = [&](const ModelPtr& m) {
    std::vector<double> xi(m->states(m->n_steps()).begin(), m->states(m->n_steps()).end());
    for (double& v : xi) v -= x0;
    return xi;
  };

  std::vector<oracle::ConvergenceRow> rows;
  if (problem == "quadratic") {
    const double kappa = c.at("kappa").number();
    rows = oracle::convergence_harness(
        [&](double dt) {
          const ModelPtr m = lattice(dt);
          return GExpectation(m, Generator::quadratic(kappa)).evaluate(brownian(m))(0, 0);
        },
        dts, [&](double dt) { const ModelPtr m = lattice(dt); return oracle::entropic_oracle(kappa, brownian(m), m); });
  } else if (problem == "linear" || problem == "abs") {
    const double slope = problem == "linear" ? c.at("mu").number() : c.at("k").number();
    const Generator g = problem == "linear" ? Generator::linear_drift(slope) : Generator::abs_drift(slope);
    rows = oracle::convergence_harness(
        [&](double dt) { const ModelPtr m = lattice(dt); return GExpectation(m, g).evaluate(brownian(m))(0, 0); },
        dts, [&](double) { return slope * horizon; });
  } else if (problem == "american_put") {
    const double strike = c.at("strike").number();
    rows = oracle::convergence_harness(
        [&](double dt) {
          const ModelPtr m = lattice(dt);
          const StableFamily family(m, {Generator::zero()});
          const AdaptedProcess y = AdaptedProcess::generate(
              m, [&](int, std::size_t, double x) { return std::max(strike - x, 0.0); });
          return upper_snell_envelope(family, RewardSpec{y, {}, -1.0, -1.0}).value_at_0;
        },
        dts);
  } else {
    c.fail("field 'converge.problem': unknown problem '" + problem + "'");
  }

  Outcome o;
  o.csv = oracle::format_convergence_table(rows);
  json table = json::array();
  for (const auto& r : rows)
    table.push_back({{"dt", r.dt}, {"value", r.value}, {"error", r.error},
                     {"order", std::isnan(r.order) ? json(nullptr) : json(r.order)}});
  o.payload["table"] = std::move(table);
  o.summary["levels"] = rows.size();
  o.summary["last_error"] = rows.empty() ? 0.0 : rows.back().error;
  if (rows.size() >= 2 && !std::isnan(rows.back().order)) o.summary["last_order"] = rows.back().order;
  return o;
}

Outcome cmd_verify(const RunConfig& cfg) {
  const Field v(cfg.verify, "verify");
  v.only({"samples", "deltas", "oracle"});
  const ModelPtr model = require_model(cfg);
  const std::vector<Generator> gens = build_generators(cfg);
  const StableFamily family(model, gens);
  const RewardSpec reward = build_reward(cfg, model, family.size());
  const auto samples = static_cast<std::size_t>(v.has("samples") ? v.at("samples").integer() : 50);
  const bool run_oracle = !v.has("oracle") || v.raw().at("oracle").get<bool>();
  const oracle::EnumerationBudget budget = oracle::EnumerationBudget::from_environment();
  Report report;

  const ModelPtr tree = model->is_tree() ? model : expand_to_path_tree(*model, cfg.model.max_depth);
  for (std::size_t i = 0; i < gens.size(); ++i) {
    AxiomOptions opt;
    opt.samples = samples;
    opt.seed = cfg.seed + i;
    report.merge(axiom_suite(GExpectation(tree, gens[i]), opt), "axioms[" + std::to_string(i) + "] ");
  }

  const SnellResult snell = upper_snell_envelope(family, reward);
  SnellCheckOptions sopt;
  sopt.seed = cfg.seed;
  report.merge(verify_snell_characterization(snell, family, reward, sopt), "snell ");

  std::vector<double> deltas{0.5, 0.9, 0.99, 1.0 - 1e-12};
  if (v.has("deltas")) deltas = v.at("deltas").numbers();
  std::sort(deltas.begin(), deltas.end());
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const StoppingRule tau = approximate_stopping_time(snell, reward, deltas[k]);
    if (k > 0)
      report.record("tau_delta stop sets nested",
                    tau.stop_set_within(approximate_stopping_time(snell, reward, deltas[k - 1])),
                    "delta=" + fmt(deltas[k]));
    const double gap = j_delta_process(snell, family, reward, deltas[k]).max_abs_difference(snell.envelope);
    report.record("J_delta equals envelope", gap <= kStopTolerance, "delta=" + fmt(deltas[k]) + " gap=" + fmt(gap));
  }
  if (!deltas.empty() && deltas.back() > 1.0 - 1e-9)
    report.record("tau_delta converges to tau_bar",
                  approximate_stopping_time(snell, reward, deltas.back()).same_time(snell.tau_bar));

  const RobustResult robust = robust_values(family, reward);
  report.merge(verify_robust_structure(robust, family, reward), "robust ");

  if (run_oracle && model->is_tree()) {
    const auto upper = oracle::brute_force_upper_value(family, reward, budget);
    report.record("oracle upper value", std::abs(upper.value - snell.value_at_0) <= 1e-10,
                  "oracle=" + fmt(upper.value) + " envelope=" + fmt(snell.value_at_0));
    const auto rob = oracle::brute_force_robust_value(family, reward, budget);
    report.record("oracle sup-inf", std::abs(rob.sup_inf - robust.value_at_0) <= 1e-10,
                  "oracle=" + fmt(rob.sup_inf) + " robust=" + fmt(robust.value_at_0));
    report.record("oracle minimax", std::abs(rob.sup_inf - rob.inf_sup) <= 1e-10,
                  "sup_inf=" + fmt(rob.sup_inf) + " inf_sup=" + fmt(rob.inf_sup));
  }

  if (cfg.raw.contains("control")) {
    const ControlledSpec spec = build_control_spec(cfg);
    const auto cs = solve_controller_stopper(spec, cfg.model.n_steps, cfg.model.dt, cfg.model.x0,
                                             cfg.model.max_depth);
    report.record("controller attains value", std::abs(cs.attained_value - cs.value_at_0) <= 1e-10,
                  "attained=" + fmt(cs.attained_value) + " value=" + fmt(cs.value_at_0));
    if (run_oracle) {
      const ModelPtr ctree = cs.model->is_tree() ? cs.model : expand_to_path_tree(*cs.model, cfg.model.max_depth);
      const auto best = oracle::brute_force_controller_stopper(spec, ctree, budget);
      report.record("oracle controller value", std::abs(best.value - cs.value_at_0) <= 1e-10,
                    "oracle=" + fmt(best.value) + " dp=" + fmt(cs.value_at_0));
    }
  }

  Outcome o;
  o.passed = report.all_passed();
  o.text = report.to_string();
  o.csv = "check,status,evaluations,witness\n";
  json checks = json::array();
  for (const auto& e : report.entries()) {
    std::string w = e.witness;
    std::replace(w.begin(), w.end(), ',', ';');
    o.csv += e.name + "," + (e.passed ? "pass" : "fail") + "," + std::to_string(e.evaluations) + "," +
             w + "\n";
    checks.push_back({{"name", e.name}, {"passed", e.passed}, {"evaluations", e.evaluations},
                      {"witness", e.witness}});
  }
  o.payload["checks"] = std::move(checks);
  o.summary["passed"] = o.passed;
  o.summary["checks"] = report.entries().size();
  return o;
}

std::string summary_text(const json& summary, const std::string& prefix) {
  std::string s;
  for (const auto& [key, value] : summary.items()) {
    std::string v = value.is_string() ? value.get<std::string>()
                    : value.is_number_float() ? fmt(value.get<double>())
                                              : value.dump();
    s += prefix + key + ": " + v + "\n";
  }
  return s;
}

std::string prefix_lines(const std::string& text, const std::string& prefix) {
  std::string out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out += prefix + line + "\n";
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_config(const std::string& text) {
  json raw;
  try {
    raw = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  const Field root(raw, "");
  root.only({"command", "seed", "model", "generators", "reward", "control", "verify", "converge", "output"});

  RunConfig cfg;
  cfg.raw = raw;
  if (root.has("command")) cfg.command = root.at("command").string();
  if (root.has("seed")) {
    const long long s = root.at("seed").integer();
    if (s < 0) root.fail("field 'seed': expected a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(s);
  }
  if (root.has("model")) {
    const Field m = root.at("model");
    m.only({"kind", "n_steps", "dt", "x0", "branching", "probabilities", "max_depth"});
    ModelConfig& mc = cfg.model;
    if (m.has("kind")) {
      mc.kind = m.at("kind").string();
      if (mc.kind != "lattice" && mc.kind != "tree")
        m.fail("field 'model.kind': expected 'lattice' or 'tree'");
    }
    const long long n = m.at("n_steps").integer();
    if (n < 0) m.fail("field 'model.n_steps': expected a non-negative integer");
    mc.n_steps = static_cast<int>(n);
    mc.dt = m.at("dt").number();
    if (!(mc.dt > 0.0)) m.fail("field 'model.dt': expected a positive number");
    mc.x0 = m.number("x0", 0.0);
    if (m.has("branching")) {
      const long long b = m.at("branching").integer();
      if (b < 2) m.fail("field 'model.branching': expected an integer >= 2");
      mc.branching = static_cast<std::size_t>(b);
    }
    if (m.has("probabilities")) {
      mc.probabilities = m.at("probabilities").numbers();
      if (mc.probabilities.size() != mc.branching)
        m.fail("field 'model.probabilities': expected " + std::to_string(mc.branching) + " entries");
    }
    if (m.has("max_depth")) mc.max_depth = static_cast<int>(m.at("max_depth").integer());
  }
  if (root.has("generators")) {
    root.at("generators").require_array();
    cfg.generators = raw.at("generators");
  }
  if (root.has("reward")) {
    root.at("reward").only({"payoff", "running", "c_y", "c_h"});
    cfg.reward = raw.at("reward");
  }
  if (root.has("control")) {
    root.at("control").only({"sigma", "drift", "running", "terminal", "grid", "k_bound"});
    cfg.control = raw.at("control");
  }
  if (root.has("verify")) cfg.verify = raw.at("verify");
  if (root.has("converge")) cfg.converge = raw.at("converge");
  if (root.has("output")) {
    const Field o = root.at("output");
    o.only({"format", "path"});
    if (o.has("format")) cfg.format = o.at("format").string();
    if (o.has("path")) cfg.out_path = o.at("path").string();
  }
  if (cfg.format != "csv" && cfg.format != "json")
    throw ConfigError("field 'output.format': expected 'csv' or 'json'");
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

ModelPtr build_model(const ModelConfig& c) {
  std::vector<double> probs = c.probabilities;
  if (probs.empty()) probs.assign(c.branching, 1.0 / static_cast<double>(c.branching));
  if (c.kind == "tree") return build_path_tree(c.n_steps, c.branching, probs, c.dt, c.x0, c.max_depth);
  if (c.branching == 2 && c.probabilities.empty()) return build_binomial_lattice(c.n_steps, c.dt, c.x0);
  return build_lattice(c.n_steps, c.dt, c.x0, probs);
}

std::vector<Generator> build_generators(const RunConfig& cfg) {
  std::vector<Generator> gens;
  const Field list(cfg.generators, "generators");
  for (std::size_t i = 0; i < list.size(); ++i) gens.push_back(parse_generator(list.at(i)));
  if (gens.empty()) gens.push_back(Generator::zero());
  return gens;
}

RewardSpec build_reward(const RunConfig& cfg, const ModelPtr& model, std::size_t n_generators) {
  if (cfg.reward.is_null()) throw ConfigError("missing field 'reward'");
  const Field r(cfg.reward, "reward");
  const int n = model->n_steps();
  RewardSpec spec{parse_process(r.at("payoff"), model, n + 1), {}, 0.0, 0.0};
  if (r.has("running")) {
    const Field running = r.at("running");
    if (running.size() != n_generators)
      running.fail("field 'reward.running': expected " + std::to_string(n_generators) +
                   " entries (one per generator), got " + std::to_string(running.size()));
    for (std::size_t i = 0; i < n_generators; ++i) spec.running.push_back(parse_process(running.at(i), model, n));
  }
  const double inf = std::numeric_limits<double>::infinity();
  spec.c_y = spec.c_h = -inf;
  const RewardDiagnostics d = check_reward_assumptions(spec, n_generators);
  spec.c_y = r.has("c_y") ? r.at("c_y").number() : std::min(-1.0, d.min_reward);
  spec.c_h = r.has("c_h") ? r.at("c_h").number() : std::min(-1.0, d.min_increment);
  check_reward_assumptions(spec, n_generators);
  return spec;
}

ControlledSpec build_control_spec(const RunConfig& cfg) {
  if (cfg.control.is_null()) throw ConfigError("missing field 'control'");
  const Field c(cfg.control, "control");
  ControlledSpec spec;

  const Field sigma = c.at("sigma");
  if (sigma.raw().is_number()) {
    const double s = sigma.number();
    spec.sigma = [s](double, double) { return s; };
  } else {
    const std::string type = sigma.at("type").string();
    if (type == "constant") {
      const double s = sigma.at("value").number();
      spec.sigma = [s](double, double) { return s; };
    } else if (type == "affine_abs") {
      const double a = sigma.at("a").number(), b = sigma.at("b").number();
      spec.sigma = [a, b](double, double x) { return a + b * std::abs(x); };
    } else {
      sigma.fail("field 'control.sigma.type': unknown volatility type '" + type + "'");
    }
  }

  const Field drift = c.at("drift");
  if (drift.raw().is_number()) {
    const double f = drift.number();
    spec.drift = [f](double, double, double) { return f; };
  } else {
    if (drift.at("type").string() != "linear")
      drift.fail("field 'control.drift.type': expected 'linear'");
    const double scale = drift.at("scale").number(), offset = drift.number("offset", 0.0);
    spec.drift = [scale, offset](double, double, double u) { return offset + scale * u; };
  }

  if (!c.has("running")) {
    spec.running = [](double, double, double) { return 0.0; };
  } else if (const Field h = c.at("running"); h.raw().is_number()) {
    const double v = h.number();
    spec.running = [v](double, double, double) { return v; };
  } else {
    const std::string type = h.at("type").string();
    if (type == "constant") {
      const double v = h.at("value").number();
      spec.running = [v](double, double, double) { return v; };
    } else if (type == "quadratic_cost") {
      const double k = h.at("c").number(), offset = h.number("offset", 0.0);
      spec.running = [k, offset](double, double, double u) { return offset - k * u * u; };
    } else {
      h.fail("field 'control.running.type': unknown running reward type '" + type + "'");
    }
  }

  spec.terminal = parse_state_payoff(c.at("terminal"));
  const Field grid = c.at("grid");
  if (grid.raw().is_array()) {
    spec.controls = grid.numbers();
  } else {
    const double lo = grid.at("lo").number(), hi = grid.at("hi").number();
    const long long points = grid.at("points").integer();
    if (points < 1) grid.fail("field 'control.grid.points': expected a positive integer");
    for (long long i = 0; i < points; ++i)
      spec.controls.push_back(points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1));
  }
  if (spec.controls.empty()) grid.fail("field 'control.grid': expected at least one control point");
  spec.k_bound = c.at("k_bound").number();
  return spec;
}

int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    Outcome o;
    if (cfg.command == "snell") {
      o = cmd_snell(cfg);
    } else if (cfg.command == "robust") {
      o = cmd_robust(cfg);
    } else if (cfg.command == "control") {
      o = cmd_control(cfg);
    } else if (cfg.command == "verify") {
      o = cmd_verify(cfg);
    } else if (cfg.command == "converge") {
      o = cmd_converge(cfg);
    } else {
      throw ConfigError("field 'command': unknown command '" + cfg.command + "'");
    }

    json doc = o.payload;
    doc["command"] = cfg.command;
    doc["config"] = cfg.raw;
    doc["seed"] = cfg.seed;
    doc["summary"] = o.summary;
    const std::string artifact = cfg.format == "json" ? doc.dump(2) + "\n" : o.csv;

    if (!cfg.out_path.empty()) {
      std::ofstream file(cfg.out_path, std::ios::binary);
      if (!file) throw Error("cannot write output file '" + cfg.out_path + "'");
      file << artifact;
      out << summary_text(o.summary, "") << o.text;
    } else if (cfg.format == "json") {
      out << artifact;
    } else {
      out << summary_text(o.summary, "# ") << prefix_lines(o.text, "# ") << artifact;
    }
    return o.passed ? kOk : kFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kSchemaError;
  } catch (const StabilityError& e) {
    err << "stability error: " << e.what() << "\n";
    return kStabilityError;
  } catch (const BudgetError& e) {
    err << "budget error: " << e.what() << "\n";
    return kBudgetError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal stopping under families of nonlinear expectations on finite trees"};
  app.require_subcommand(1);
  std::string config_path, out_path, format;
  std::uint64_t seed = 0;
  std::vector<CLI::App*> subs;
  for (const char* name : {"snell", "robust", "control", "verify", "converge", "run"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " command");
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out_path, "write the value surface or report here");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", seed, "override the configuration seed");
    subs.push_back(sub);
  }

  std::vector<const char*> argv{"nlstop"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kSchemaError;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kSchemaError;
  }
  if (chosen->get_name() != "run") cfg.command = chosen->get_name();
  if (cfg.command.empty()) {
    err << "config error: missing field 'command' (required by 'nlstop run')\n";
    return kSchemaError;
  }
  if (!out_path.empty()) cfg.out_path = out_path;
  if (!format.empty()) cfg.format = format;
  if (chosen->count("--seed") > 0) cfg.seed = seed;
  return run(cfg, out, err);
}

}  // namespace nlstop::cli
