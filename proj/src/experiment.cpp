#include "pathflow/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pathflow/error.hpp"
#include "pathflow/mollify.hpp"
#include "pathflow/stats.hpp"

#ifndef PATHFLOW_BUILD_ID
#define PATHFLOW_BUILD_ID "unknown"
#endif

namespace pathflow {
namespace {

using json = nlohmann::json;

[[noreturn]] void invalid(const std::string& field, const std::string& reason) {
  fail(ErrorKind::kConfigInvalid, field + ": " + reason);
}

const json* member(const json& obj, const char* key) {
  if (!obj.is_object()) return nullptr;
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_number(const json& obj, const char* key, const std::string& path, double fallback) {
  const json* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_number()) invalid(path + "." + key, "must be a number");
  return v->get<double>();
}

double get_positive(const json& obj, const char* key, const std::string& path, double fallback) {
  const double v = get_number(obj, key, path, fallback);
  if (!(v > 0.0) || !std::isfinite(v)) invalid(path + "." + key, "must be positive");
  return v;
}

int get_positive_int(const json& obj, const char* key, const std::string& path, int fallback) {
  const json* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_number_integer() || v->get<long long>() <= 0 || v->get<long long>() > (1LL << 30)) {
    invalid(path + "." + key, "must be a positive integer");
  }
  return v->get<int>();
}

bool get_bool(const json& obj, const char* key, const std::string& path, bool fallback) {
  const json* v = member(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) invalid(path + "." + key, "must be true or false");
  return v->get<bool>();
}

std::vector<double> get_vector(const json& v, const std::string& path) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array() || v.empty()) invalid(path, "must be a number or a non-empty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) invalid(path, "must contain numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> get_int_list(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) invalid(path, "must be a non-empty array of positive integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() <= 0) invalid(path, "entries must be positive integers");
    out.push_back(e.get<int>());
  }
  return out;
}

ExperimentMode parse_mode(const std::string& s) {
  static const std::pair<const char*, ExperimentMode> modes[] = {
      {"forward", ExperimentMode::kForward},   {"value", ExperimentMode::kValue},
      {"residual", ExperimentMode::kResidual}, {"derivative", ExperimentMode::kDerivative},
      {"mollify", ExperimentMode::kMollify},   {"control", ExperimentMode::kControl},
      {"flow", ExperimentMode::kFlow}};
  for (const auto& [name, m] : modes) {
    if (s == name) return m;
  }
  invalid("mode", "unknown mode '" + s + "'");
}

bool on_grid(double t, const PathGrid& grid) {
  try {
    grid.step_of(t);
    return true;
  } catch (const Error&) {
    return false;
  }
}

NoiseSpec noise_of(const ExperimentConfig& cfg, int n_steps) {
  return {cfg.seed, cfg.n_paths, 1, PathGrid(cfg.horizon, n_steps)};
}

ValueQuery query_of(const ExperimentConfig& cfg, const Benchmark& bench) {
  ValueQuery q;
  q.t0 = cfg.t0;
  q.x0 = initial_state(cfg, bench);
  q.coeffs = bench.coefficients();
  q.mc = noise_of(cfg, cfg.n_steps);
  q.mc.noise_dim = q.coeffs.noise_dim;
  q.basis = cfg.basis;
  q.options = cfg.bsde;
  return q;
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  std::ofstream os(std::filesystem::path(dir) / name, std::ios::binary);
  if (!os) fail(ErrorKind::kFormat, "cannot write " + name + " into " + dir);
  os << text;
}

std::string g17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct ModeOutput {
  json payload;
  std::vector<std::pair<std::string, std::string>> tables;  ///< CSV file name, contents
  std::vector<std::string> failed;
};

void check(ModeOutput& out, bool ok, const std::string& what) {
  if (!ok) out.failed.push_back(what);
}

ModeOutput run_forward(const ExperimentConfig& cfg, const Benchmark& bench) {
  const ValueQuery q = query_of(cfg, bench);
  const ForwardEnsemble ens = simulate_forward(q.coeffs, cfg.t0, q.x0, q.mc);
  ModeOutput out;
  json present = json::array();
  for (int i = 0; i < ens.dim(); ++i) {
    std::vector<double> v(ens.n_paths());
    for (int p = 0; p < ens.n_paths(); ++p) v[p] = ens.present(p, ens.n_steps())[i];
    present.push_back({{"mean", mean_of(v)}, {"std_error", std_error_of(v)}});
  }
  std::vector<double> sup(ens.n_paths());
  for (int p = 0; p < ens.n_paths(); ++p) {
    double m = 0.0;
    for (int k = 0; k <= ens.n_steps(); ++k) m = std::max(m, sup_norm(ens.state(p, k)));
    sup[p] = m * m;
  }
  out.payload = {{"terminal_present", present},
                 {"second_moment_sup", {{"mean", mean_of(sup)}, {"std_error", std_error_of(sup)}}},
                 {"n_steps", ens.n_steps()},
                 {"n_paths", ens.n_paths()}};
  std::ostringstream csv;
  write_ensemble_csv(csv, ens);
  out.tables.emplace_back("ensemble.csv", csv.str());
  if (cfg.write_binary) {
    std::ostringstream bin;
    write_ensemble_binary(bin, ens);
    out.tables.emplace_back("ensemble.bin", bin.str());
  }
  return out;
}

ModeOutput run_value(const ExperimentConfig& cfg, const Benchmark& bench) {
  const ValueQuery q = query_of(cfg, bench);
  const ValueEstimate v = value(q);
  ModeOutput out;
  out.payload = {{"value", to_json(v)}};
  std::string csv = "mean,std_error,n_paths,reference\n" + g17(v.mean) + "," + g17(v.std_error) + "," +
                    std::to_string(v.n_paths) + ",";
  if (bench.closed_form && bench.closed_form->value) {
    const double ref = reference_value(bench, cfg.t0, q.x0);
    out.payload["reference"] = ref;
    out.payload["provenance"] = provenance_name(*bench.closed_form->provenance);
    csv += g17(ref);
    if (cfg.assert_reference) {
      check(out, std::abs(v.mean - ref) <= 3.0 * v.std_error, "value within 3 SE of the reference");
    }
  } else if (cfg.assert_reference) {
    invalid("assert", "benchmark " + bench.name + " has no reference value");
  }
  out.tables.emplace_back("value.csv", csv + "\n");
  return out;
}

SmoothProfile profile_of(const ExperimentConfig& cfg, const Benchmark& bench) {
  if (!cfg.x0) return bench.profile;
  const std::vector<double> c = *cfg.x0;
  return {static_cast<int>(c.size()), [c](double) { return c; },
          [c](double) { return std::vector<double>(c.size(), 0.0); }};
}

ModeOutput run_residual(const ExperimentConfig& cfg, const Benchmark& bench) {
  const CoefficientSet coeffs = bench.coefficients();
  const SmoothProfile profile = profile_of(cfg, bench);
  const std::vector<int> levels = cfg.levels.empty() ? std::vector<int>{cfg.n_steps} : cfg.levels;
  ModeOutput out;
  json rows = json::array();
  std::string csv = "n_steps,eps,eps2,du_dt,du_ax,du_b,trace,g,u,residual,error_budget\n";
  std::optional<double> eps = cfg.stencil.eps, eps2 = cfg.stencil.eps2;
  std::vector<ResidualReport> reps;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const PathGrid grid(cfg.horizon, levels[l]);
    if (!on_grid(cfg.t0, grid)) invalid("query.t0", "not on the grid with N = " + std::to_string(levels[l]));
    NoiseSpec mc = noise_of(cfg, levels[l]);
    mc.noise_dim = coeffs.noise_dim;
    const StencilParams st = {eps, eps2};
    const ResidualReport r = pde_residual(cfg.t0, profile, coeffs, mc, cfg.basis, st, cfg.bsde);
    reps.push_back(r);
    rows.push_back(to_json(r));
    csv += std::to_string(r.n_steps) + "," + g17(r.eps) + "," + g17(r.eps2) + "," + g17(r.du_dt.value) + "," +
           g17(r.du_ax.value) + "," + g17(r.du_b.value) + "," + g17(r.trace_term.value) + "," +
           g17(r.g_term.value) + "," + g17(r.u) + "," + g17(r.residual) + "," + g17(r.error_budget) + "\n";
    eps = 0.5 * r.eps;
    eps2 = 0.5 * r.eps2;
  }
  out.payload = {{"levels", rows}};
  out.tables.emplace_back("residual.csv", csv);
  if (cfg.assert_reference) {
    if (reps.size() == 1) {
      check(out, std::abs(reps[0].residual) <= 3.0 * reps[0].error_budget, "residual within 3 error budgets");
    } else {
      for (std::size_t l = 1; l < reps.size(); ++l) {
        check(out, std::abs(reps[l].residual) <= std::abs(reps[l - 1].residual) + reps[l].error_budget,
              "residual non-increasing at N = " + std::to_string(reps[l].n_steps));
      }
    }
  }
  return out;
}

ModeOutput run_derivative(const ExperimentConfig& cfg, const Benchmark& bench) {
  const ValueQuery q = query_of(cfg, bench);
  const std::vector<double> dir = cfg.direction.value_or(std::vector<double>(q.coeffs.dim, 1.0));
  if (static_cast<int>(dir.size()) != q.coeffs.dim) invalid("direction", "must have dim entries");
  LiftedState h(q.x0.grid(), q.coeffs.dim);
  std::copy(dir.begin(), dir.end(), h.present().begin());
  const DerivativeEstimate dd = directional_derivative(q, h, cfg.stencil.eps);
  const ZIdentification zi = z_identification_gap(q, cfg.stencil.eps);
  const DerivativeEstimate tr = second_trace(q, cfg.stencil.eps2);
  ModeOutput out;
  json interior = json::array();
  for (const auto& p : zi.interior) interior.push_back({{"time", p.time}, {"gap", p.gap}});
  out.payload = {{"directional", {{"mean", dd.mean}, {"std_error", dd.std_error}, {"eps", dd.eps}}},
                 {"identification",
                  {{"z0", zi.z0},
                   {"z0_std_error", zi.z0_std_error},
                   {"du_sigma", zi.du_sigma},
                   {"du_sigma_std_error", zi.du_sigma_std_error},
                   {"gap", zi.gap},
                   {"interior", interior}}},
                 {"second_trace", {{"mean", tr.mean}, {"std_error", tr.std_error}, {"eps2", tr.eps}}}};
  out.tables.emplace_back("derivative.csv",
                          "quantity,mean,std_error\ndirectional," + g17(dd.mean) + "," + g17(dd.std_error) +
                              "\nidentification_gap," + g17(zi.gap) + ",\nsecond_trace," + g17(tr.mean) +
                              "," + g17(tr.std_error) + "\n");
  return out;
}

ModeOutput run_mollify(const ExperimentConfig& cfg, const Benchmark& bench) {
  const ValueQuery q = query_of(cfg, bench);
  const PathGrid& grid = q.x0.grid();
  ModeOutput out;
  json masses = json::array();
  for (int n : cfg.n_list) {
    const double m = mollifier_mass({n, 64});
    masses.push_back({{"n", n}, {"mass", m}});
    if (cfg.assert_reference) check(out, std::abs(m - 1.0) <= 1e-10, "unit mass at n = " + std::to_string(n));
  }
  const auto rows = smoothing_report(q.x0, cfg.n_list);
  std::ostringstream sm;
  write_smoothing_csv(sm, rows);
  out.tables.emplace_back("smoothing.csv", sm.str());
  json smoothing = json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    smoothing.push_back(
        {{"n", rows[i].n}, {"sup_error", rows[i].sup_error}, {"boundedness_ratio", rows[i].boundedness_ratio}});
    if (cfg.assert_reference) {
      check(out, rows[i].boundedness_ratio <= 1.05, "boundedness ratio at n = " + std::to_string(rows[i].n));
      if (i > 0) check(out, rows[i].sup_error < rows[i - 1].sup_error, "sup error decreasing");
    }
  }

  // End-to-end: u^n - u under common noise.
  const ValueRun base = value_run(q, q.t0, q.x0);
  json e2e = json::array();
  std::string csv = "n,u_n,difference,std_error\n";
  for (int n : cfg.n_list) {
    ValueQuery qn = q;
    qn.coeffs = approximate_coefficients(q.coeffs, {n, 64}, grid);
    const ValueRun run = value_run(qn, q.t0, q.x0);
    const ValueEstimate diff = combine({{1.0, &run}, {-1.0, &base}});
    e2e.push_back({{"n", n}, {"u_n", run.mean}, {"difference", diff.mean}, {"std_error", diff.std_error}});
    csv += std::to_string(n) + "," + g17(run.mean) + "," + g17(diff.mean) + "," + g17(diff.std_error) + "\n";
  }
  out.tables.emplace_back("end_to_end.csv", csv);
  out.payload = {{"mass", masses}, {"smoothing", smoothing}, {"u", base.mean}, {"end_to_end", e2e}};
  return out;
}

ModeOutput run_control(const ExperimentConfig& cfg, const Benchmark& bench) {
  if (!bench.has_control()) invalid("benchmark", bench.name + " is not a control benchmark");
  const ValueQuery q = query_of(cfg, bench);
  const ControlProblem p = bench.control();
  const HjbResult hjb = solve_hjb_adaptive(p, cfg.t0, q.x0, q.coeffs, q.mc, cfg.basis, cfg.truncation, 8, cfg.bsde);
  NoiseSpec fresh = q.mc;
  fresh.seed = derive_seed(cfg.seed, 0xC105ED);
  const ClosedLoopResult cl = closed_loop(p, cfg.t0, q.x0, hjb.policy, q.coeffs, fresh);
  const ValueEstimate zero =
      cost(p, cfg.t0, q.x0, constant_control(std::vector<double>(p.noise_dim, 0.0)), q.coeffs, fresh);
  ModeOutput out;
  out.payload = {{"value", to_json(hjb.value)},
                 {"max_abs_z", hjb.max_abs_z},
                 {"truncation", hjb.truncation},
                 {"closed_loop_cost", to_json(cl.cost)},
                 {"extrapolation_fraction", cl.extrapolation_fraction},
                 {"zero_control_cost", to_json(zero)},
                 {"evaluation_seed", fresh.seed}};
  std::string csv = "quantity,mean,std_error\nvalue," + g17(hjb.value.mean) + "," + g17(hjb.value.std_error) +
                    "\nclosed_loop_cost," + g17(cl.cost.mean) + "," + g17(cl.cost.std_error) +
                    "\nzero_control_cost," + g17(zero.mean) + "," + g17(zero.std_error) + "\n";
  out.tables.emplace_back("control.csv", csv);
  if (bench.closed_form && bench.closed_form->value) {
    const double ref = reference_value(bench, cfg.t0, q.x0);
    out.payload["reference"] = ref;
    if (cfg.assert_reference) {
      check(out, std::abs(hjb.value.mean - ref) <= 3.0 * hjb.value.std_error, "value within 3 SE of the reference");
      const double tol = std::max(3.0 * std::hypot(cl.cost.std_error, hjb.value.std_error), 0.02 * std::abs(hjb.value.mean));
      check(out, std::abs(cl.cost.mean - hjb.value.mean) <= tol, "closed-loop cost near the value");
    }
  }
  return out;
}

ModeOutput run_flow(const ExperimentConfig& cfg, const Benchmark& bench) {
  const ValueQuery q = query_of(cfg, bench);
  const PathGrid& grid = q.mc.grid;
  const double t1 = cfg.t1.value_or(grid.time_at(grid.step_of(cfg.t0) + grid.n_steps() / 4));
  if (!on_grid(t1, grid) || t1 < cfg.t0) invalid("t1", "must be a grid time not before t0");
  const FlowGap g = flow_property_gap(cfg.t0, t1, q.x0, q.coeffs, q.mc, cfg.basis, cfg.flow, cfg.bsde);
  ModeOutput out;
  out.payload = {{"t1", t1},
                 {"mode", cfg.flow.mode == FlowMode::kNested ? "nested" : "decoupling_field"},
                 {"u0", g.u0},
                 {"expected", g.expected},
                 {"gap", g.gap},
                 {"std_error", g.std_error}};
  out.tables.emplace_back("flow.csv", "u0,expected,gap,std_error\n" + g17(g.u0) + "," + g17(g.expected) + "," +
                                          g17(g.gap) + "," + g17(g.std_error) + "\n");
  if (cfg.assert_reference) {
    check(out, std::abs(g.gap) <= std::max(3.0 * g.std_error, 0.02 * std::abs(g.u0)), "flow gap");
  }
  return out;
}

}  // namespace

std::string_view mode_name(ExperimentMode m) {
  switch (m) {
    case ExperimentMode::kForward: return "forward";
    case ExperimentMode::kValue: return "value";
    case ExperimentMode::kResidual: return "residual";
    case ExperimentMode::kDerivative: return "derivative";
    case ExperimentMode::kMollify: return "mollify";
    case ExperimentMode::kControl: return "control";
    case ExperimentMode::kFlow: return "flow";
  }
  return "unknown";
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) invalid("config", "must be a JSON object");
  ExperimentConfig cfg;
  cfg.source = doc;

  const json* bench = member(doc, "benchmark");
  if (!bench || !bench->is_string()) invalid("benchmark", "required string");
  cfg.benchmark = bench->get<std::string>();
  const Benchmark& b = find_benchmark(cfg.benchmark);

  const json* mode = member(doc, "mode");
  if (!mode || !mode->is_string()) invalid("mode", "required string");
  cfg.mode = parse_mode(mode->get<std::string>());

  if (const json* g = member(doc, "grid")) {
    if (!g->is_object()) invalid("grid", "must be an object");
    cfg.horizon = get_positive(*g, "T", "grid", b.horizon);
    cfg.n_steps = get_positive_int(*g, "N", "grid", cfg.n_steps);
  }
  if (const json* mc = member(doc, "mc")) {
    if (!mc->is_object()) invalid("mc", "must be an object");
    if (const json* s = member(*mc, "seed")) {
      if (!s->is_number_integer() || s->get<std::int64_t>() < 0) invalid("mc.seed", "must be a non-negative integer");
      cfg.seed = s->get<std::uint64_t>();
    }
    cfg.n_paths = get_positive_int(*mc, "n_paths", "mc", cfg.n_paths);
  }
  if (const json* basis = member(doc, "basis")) {
    if (!basis->is_object()) invalid("basis", "must be an object");
    if (const json* f = member(*basis, "features")) {
      if (*f == "default") {
        cfg.basis.features = RegressionBasis::Features::kDefault;
      } else if (*f == "present") {
        cfg.basis.features = RegressionBasis::Features::kPresent;
      } else {
        invalid("basis.features", "must be \"default\" or \"present\"");
      }
    }
    cfg.basis.degree = get_positive_int(*basis, "degree", "basis", cfg.basis.degree);
    if (cfg.basis.degree > 4) invalid("basis.degree", "at most 4");
    cfg.basis.ridge_lambda = get_number(*basis, "ridge", "basis", cfg.basis.ridge_lambda);
    if (cfg.basis.ridge_lambda < 0.0) invalid("basis.ridge", "must be non-negative");
  }
  if (const json* bs = member(doc, "bsde")) {
    if (const json* s = member(*bs, "scheme")) {
      if (*s == "explicit") {
        cfg.bsde.scheme = BsdeScheme::kExplicit;
      } else if (*s == "picard") {
        cfg.bsde.scheme = BsdeScheme::kPicard;
      } else {
        invalid("bsde.scheme", "must be \"explicit\" or \"picard\"");
      }
    }
    cfg.bsde.picard_iterations = get_positive_int(*bs, "picard_iterations", "bsde", cfg.bsde.picard_iterations);
    cfg.bsde.martingale_correction = get_bool(*bs, "martingale_correction", "bsde", false);
  }
  if (const json* q = member(doc, "query")) {
    if (!q->is_object()) invalid("query", "must be an object");
    cfg.t0 = get_number(*q, "t0", "query", 0.0);
    if (const json* x0 = member(*q, "x0")) cfg.x0 = get_vector(*x0, "query.x0");
    if (const json* prof = member(*q, "profile")) {
      if (*prof != "default") invalid("query.profile", "only \"default\" is registered");
      if (cfg.x0) invalid("query", "give either x0 or profile");
    }
  }
  if (const json* st = member(doc, "stencil")) {
    if (member(*st, "eps")) cfg.stencil.eps = get_positive(*st, "eps", "stencil", 1.0);
    if (member(*st, "eps2")) cfg.stencil.eps2 = get_positive(*st, "eps2", "stencil", 1.0);
  }
  if (const json* o = member(doc, "output_dir")) {
    if (!o->is_string()) invalid("output_dir", "must be a string");
    cfg.output_dir = o->get<std::string>();
  }
  cfg.assert_reference = get_bool(doc, "assert", "config", false);
  if (const json* l = member(doc, "levels")) cfg.levels = get_int_list(*l, "levels");
  if (const json* l = member(doc, "n_list")) {
    cfg.n_list = get_int_list(*l, "n_list");
    if (!std::is_sorted(cfg.n_list.begin(), cfg.n_list.end())) invalid("n_list", "must be increasing");
  }
  if (const json* d = member(doc, "direction")) cfg.direction = get_vector(*d, "direction");
  if (member(doc, "t1")) cfg.t1 = get_number(doc, "t1", "config", 0.0);
  if (const json* f = member(doc, "flow")) {
    if (const json* m = member(*f, "mode")) {
      if (*m == "nested") {
        cfg.flow.mode = FlowMode::kNested;
      } else if (*m == "decoupling_field") {
        cfg.flow.mode = FlowMode::kDecouplingField;
      } else {
        invalid("flow.mode", "must be \"nested\" or \"decoupling_field\"");
      }
    }
    cfg.flow.n_inner = get_positive_int(*f, "n_inner", "flow", cfg.flow.n_inner);
  }
  cfg.truncation = get_positive(doc, "truncation", "config", cfg.truncation);
  cfg.write_binary = get_bool(doc, "binary", "config", false);

  const PathGrid grid(cfg.horizon, cfg.n_steps);
  if (cfg.t0 < 0.0 || cfg.t0 >= cfg.horizon || !on_grid(cfg.t0, grid)) {
    invalid("query.t0", "must be a grid time in [0, T)");
  }
  if (cfg.x0 && static_cast<int>(cfg.x0->size()) != b.coefficients().dim) {
    invalid("query.x0", "must have " + std::to_string(b.coefficients().dim) + " entries");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) invalid("config", "cannot open " + path);
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    invalid("config", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

json RunReport::to_json() const {
  return {{"config", config},       {"build_id", build_id}, {"wall_seconds", wall_seconds},
          {"seed", seed},           {"payload", payload},   {"exit_code", exit_code},
          {"failed_assertions", failed_assertions}};
}

std::string build_id() { return PATHFLOW_BUILD_ID; }

LiftedState initial_state(const ExperimentConfig& cfg, const Benchmark& bench) {
  const PathGrid grid(cfg.horizon, cfg.n_steps);
  if (cfg.x0) return LiftedState::constant(grid, *cfg.x0);
  return sample_profile(bench.profile, grid).state;
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const Benchmark& bench = find_benchmark(cfg.benchmark);
  ModeOutput out;
  switch (cfg.mode) {
    case ExperimentMode::kForward: out = run_forward(cfg, bench); break;
    case ExperimentMode::kValue: out = run_value(cfg, bench); break;
    case ExperimentMode::kResidual: out = run_residual(cfg, bench); break;
    case ExperimentMode::kDerivative: out = run_derivative(cfg, bench); break;
    case ExperimentMode::kMollify: out = run_mollify(cfg, bench); break;
    case ExperimentMode::kControl: out = run_control(cfg, bench); break;
    case ExperimentMode::kFlow: out = run_flow(cfg, bench); break;
  }
  RunReport rep;
  rep.config = cfg.source;
  rep.build_id = build_id();
  rep.seed = cfg.seed;
  rep.payload = std::move(out.payload);
  rep.payload["benchmark"] = bench.name;
  rep.payload["mode"] = mode_name(cfg.mode);
  rep.failed_assertions = std::move(out.failed);
  rep.exit_code = rep.failed_assertions.empty() ? 0 : 2;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir, "report.json", rep.to_json().dump(2) + "\n");
    for (const auto& [name, text] : out.tables) write_text(cfg.output_dir, name, text);
  }
  return rep;
}

}  // namespace pathflow
