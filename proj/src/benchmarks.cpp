#include "pathflow/benchmarks.hpp"

#include <cmath>

#include "pathflow/error.hpp"

namespace pathflow {
namespace {

constexpr double kDelayKappa = -1.0;
constexpr double kDelayTau = 0.5;
constexpr double kLambda = 1.0;
constexpr double kQ = 2.0;

SmoothProfile constant_profile(double c) {
  return {1, [c](double) { return std::vector<double>{c}; },
          [](double) { return std::vector<double>{0.0}; }};
}

double past_mean(const LiftedView& x, int i) {
  double s = 0.0;
  for (int j = 0; j < x.grid().n_steps(); ++j) s += x.past(j)[i];
  return s / x.grid().n_steps();
}

/// Constant history c required by the method-of-steps formulas.
double constant_history(const LiftedView& x) {
  const double c = x.present()[0];
  for (int j = 0; j < x.grid().n_steps(); ++j) {
    if (std::abs(x.past(j)[0] - c) > 1e-12 * (1.0 + std::abs(c))) {
      fail(ErrorKind::kConfigInvalid, "the point-delay reference value needs a constant history");
    }
  }
  return c;
}

CoefficientSet heat(std::string description, TerminalFn phi, TerminalDerivativeFn dphi) {
  CoefficientSet c;
  c.terminal = std::move(phi);
  c.terminal_derivative = std::move(dphi);
  c.lipschitz_c = 1.0;
  c.derivative_bound = 1.0;
  c.description = std::move(description);
  return c;
}

DriftFn point_delay_drift(double kappa, double tau) {
  return [kappa, tau](double, const LiftedView& x, std::span<double> out) {
    out[0] = kappa * x.past_at(-tau)[0];
  };
}

DriftDerivativeFn point_delay_derivative(double kappa, double tau) {
  return [kappa, tau](double, const LiftedView&, const LiftedView& h, std::span<double> out) {
    out[0] = kappa * h.past_at(-tau)[0];
  };
}

Benchmark heat_present_linear() {
  Benchmark b;
  b.name = "heat-present-linear";
  b.coefficients = [] {
    return heat("B = 0, G = 0, sigma = 1, Phi(x) = present",
                [](const LiftedView& x) { return x.present()[0]; },
                [](const LiftedView&, const LiftedView& h) { return h.present()[0]; });
  };
  b.description = "B = 0, G = 0, sigma = 1, Phi(x) = present";
  b.profile = constant_profile(0.5);
  b.closed_form = ClosedForm{"u(t, x) = present", Provenance::kElementary,
                             [](double, const LiftedView& x) { return x.present()[0]; }};
  return b;
}

Benchmark heat_present_square() {
  Benchmark b;
  b.name = "heat-present-square";
  b.coefficients = [] {
    CoefficientSet c = heat(
        "B = 0, G = 0, sigma = 1, Phi(x) = present^2",
        [](const LiftedView& x) { return x.present()[0] * x.present()[0]; },
        [](const LiftedView& x, const LiftedView& h) { return 2.0 * x.present()[0] * h.present()[0]; });
    c.growth_m = 2;
    c.derivative_bound.reset();
    return c;
  };
  b.description = "B = 0, G = 0, sigma = 1, Phi(x) = present^2";
  b.profile = constant_profile(0.5);
  b.closed_form = ClosedForm{"u(t, x) = present^2 + (T - t)", Provenance::kElementary,
                             [](double t, const LiftedView& x) {
                               return x.present()[0] * x.present()[0] + (x.grid().horizon() - t);
                             }};
  return b;
}

Benchmark exponential_driver() {
  Benchmark b;
  b.name = "exponential-driver";
  b.coefficients = [] {
    CoefficientSet c = heat("B = 0, G = -0.5 y, sigma = 1, Phi = 1",
                            [](const LiftedView&) { return 1.0; },
                            [](const LiftedView&, const LiftedView&) { return 0.0; });
    c.driver = [](double, const LiftedView&, double y, std::span<const double>) { return -0.5 * y; };
    c.lipschitz_c = 1.0;
    return c;
  };
  b.description = "B = 0, G = -0.5 y, sigma = 1, Phi = 1";
  b.profile = constant_profile(0.0);
  b.closed_form = ClosedForm{"u(t, x) = exp(0.5 (T - t))", Provenance::kDerived,
                             [](double t, const LiftedView& x) {
                               return std::exp(0.5 * (x.grid().horizon() - t));
                             }};
  return b;
}

Benchmark point_delay() {
  Benchmark b;
  b.name = "point-delay";
  b.coefficients = [] {
    CoefficientSet c;
    c.sigma = Eigen::MatrixXd::Constant(1, 1, 0.3);
    c.drift = point_delay_drift(kDelayKappa, kDelayTau);
    c.drift_derivative = point_delay_derivative(kDelayKappa, kDelayTau);
    c.terminal = [](const LiftedView& x) { return x.present()[0]; };
    c.terminal_derivative = [](const LiftedView&, const LiftedView& h) { return h.present()[0]; };
    c.lipschitz_c = std::abs(kDelayKappa);
    c.derivative_bound = 1.0;
    c.description = "B(x) = -x(-T/2), G = 0, sigma = 0.3, Phi(x) = present";
    return c;
  };
  b.description = "B(x) = -x(-T/2), G = 0, sigma = 0.3, Phi(x) = present";
  b.profile = constant_profile(1.0);
  b.path_drift = [](double, const PathView& path, std::span<double> out) {
    const int lag = static_cast<int>(std::lround(kDelayTau / path.dt()));
    const int i = path.last() - lag;
    // The registered history is constant 1 before the start.
    out[0] = kDelayKappa * (i >= 0 ? path.at(i)[0] : 1.0);
  };
  // Method of steps for m' = kappa m(s - tau) from a constant history c, valid for T - t <= 2 tau.
  b.closed_form = ClosedForm{
      "u(t, x) = c (1 + k s + k^2 (s - tau)_+^2 / 2), s = T - t, constant history c", Provenance::kDerived,
      [](double t, const LiftedView& x) {
        const double c = constant_history(x);
        const double s = x.grid().horizon() - t;
        require(s <= 2.0 * kDelayTau + 1e-12, ErrorKind::kConfigInvalid,
                "the point-delay reference value covers two delay intervals");
        const double late = std::max(0.0, s - kDelayTau);
        return c * (1.0 + kDelayKappa * s + kDelayKappa * kDelayKappa * late * late / 2.0);
      }};
  return b;
}

Benchmark delay_integral() {
  Benchmark b;
  b.name = "delay-integral";
  b.coefficients = [] {
    CoefficientSet c;
    c.sigma = Eigen::MatrixXd::Constant(1, 1, 0.5);
    c.drift = point_delay_drift(-0.5, kDelayTau);
    c.drift_derivative = point_delay_derivative(-0.5, kDelayTau);
    c.driver = [](double, const LiftedView&, double y, std::span<const double>) { return -0.2 * y; };
    c.terminal = [](const LiftedView& x) { return x.present()[0] + past_mean(x, 0); };
    c.terminal_derivative = [](const LiftedView&, const LiftedView& h) {
      return h.present()[0] + past_mean(h, 0);
    };
    c.lipschitz_c = 2.0;
    c.derivative_bound = 2.0;
    c.description = "B(x) = -0.5 x(-T/2), G = -0.2 y, sigma = 0.5, Phi(x) = present + (1/T) int past";
    return c;
  };
  b.description = "B(x) = -0.5 x(-T/2), G = -0.2 y, sigma = 0.5, Phi(x) = present + (1/T) int past";
  b.profile = {1, [](double r) { return std::vector<double>{1.0 + 0.5 * std::sin(r)}; },
               [](double r) { return std::vector<double>{0.5 * std::cos(r)}; }};
  return b;
}

Benchmark linear_bsde() {
  Benchmark b;
  b.name = "linear-bsde";
  b.coefficients = [] {
    CoefficientSet c = heat("B = 0, G = -(0.3 y + 0.2 z + 0.1), sigma = 1, Phi = 1",
                            [](const LiftedView&) { return 1.0; },
                            [](const LiftedView&, const LiftedView&) { return 0.0; });
    c.driver = linear_driver(0.3, {0.2}, 0.1);
    return c;
  };
  b.description = "B = 0, G = -(0.3 y + 0.2 z + 0.1), sigma = 1, Phi = 1";
  b.profile = constant_profile(0.0);
  b.closed_form = ClosedForm{"u(t, x) = e^{0.3 s} + 0.1 (e^{0.3 s} - 1) / 0.3, s = T - t",
                             Provenance::kDerived, [](double t, const LiftedView& x) {
                               const double e = std::exp(0.3 * (x.grid().horizon() - t));
                               return e + 0.1 * (e - 1.0) / 0.3;
                             }};
  return b;
}

ControlProblem lq_problem() {
  ControlProblem p;
  p.control_cost = [](std::span<const double> u) { return 0.5 * u[0] * u[0]; };
  p.terminal_cost = [](const LiftedView& x) { return x.present()[0]; };
  p.closed_form = quadratic_hamiltonian;
  p.description = "L = 0, Q(u) = |u|^2 / 2, Upsilon(x) = present, sigma = 1";
  return p;
}

Benchmark lq_control() {
  Benchmark b;
  b.name = "lq-control";
  b.coefficients = [] {
    CoefficientSet c = heat("B = 0, G = |z|^2 / 2, sigma = 1, Phi(x) = present",
                            [](const LiftedView& x) { return x.present()[0]; },
                            [](const LiftedView&, const LiftedView& h) { return h.present()[0]; });
    c.driver = [](double, const LiftedView&, double, std::span<const double> z) { return 0.5 * z[0] * z[0]; };
    return c;
  };
  b.description = "L = 0, Q(u) = |u|^2 / 2, Upsilon(x) = present, sigma = 1";
  b.profile = constant_profile(1.0);
  b.control = lq_problem;
  b.closed_form = ClosedForm{"v(t, x) = <q, present> - |sigma^T q|^2 (T - t) / 2, q = 1",
                             Provenance::kDerived, [](double t, const LiftedView& x) {
                               return x.present()[0] - 0.5 * (x.grid().horizon() - t);
                             }};
  return b;
}

Benchmark truncated_hamiltonian_benchmark() {
  Benchmark b;
  b.name = "truncated-hamiltonian";
  b.coefficients = [] {
    CoefficientSet c = heat("B = 0, G = -H^1(z), sigma = 1, Phi(x) = 2 present",
                            [](const LiftedView& x) { return kQ * x.present()[0]; },
                            [](const LiftedView&, const LiftedView& h) { return kQ * h.present()[0]; });
    c.driver = [](double, const LiftedView&, double, std::span<const double> z) {
      return truncated_quadratic_neg_hamiltonian(std::abs(z[0]), kLambda);
    };
    c.derivative_bound = kQ;
    return c;
  };
  b.description = "L = 0, Q(u) = |u|^2 / 2 on |u| <= 1, Upsilon(x) = 2 present, sigma = 1";
  b.profile = constant_profile(1.0);
  b.control = [] {
    ControlProblem p = lq_problem();
    p.terminal_cost = [](const LiftedView& x) { return kQ * x.present()[0]; };
    p.closed_form = nullptr;
    p.control_bound = kLambda;
    p.description = "L = 0, Q(u) = |u|^2 / 2 on |u| <= 1, Upsilon(x) = 2 present, sigma = 1";
    return p;
  };
  b.closed_form = ClosedForm{
      "-H^L(z) = |z|^2 / 2 for |z| <= L, L |z| - L^2 / 2 otherwise; v = 2 present - 1.5 (T - t)",
      Provenance::kLiterature, [](double t, const LiftedView& x) {
        return kQ * x.present()[0] -
               (x.grid().horizon() - t) * truncated_quadratic_neg_hamiltonian(kQ, kLambda);
      }};
  return b;
}

Benchmark mollifier_probes() {
  Benchmark b;
  b.name = "mollifier-probes";
  b.coefficients = [] {
    CoefficientSet c = heat("B = 0, G = 0, sigma = 1, Phi(x) = (1/T) int past",
                            [](const LiftedView& x) { return past_mean(x, 0); },
                            [](const LiftedView&, const LiftedView& h) { return past_mean(h, 0); });
    return c;
  };
  b.description = "continuous probe sin(3 r) + r and one-jump paths (1, 1_[a,0)); Phi(x) = (1/T) int past";
  b.profile = {1, [](double r) { return std::vector<double>{std::sin(3.0 * r) + r}; },
               [](double r) { return std::vector<double>{3.0 * std::cos(3.0 * r) + 1.0}; }};
  b.closed_form = ClosedForm{"int rho_n = 1", Provenance::kElementary, nullptr};
  return b;
}

std::vector<Benchmark> build_registry() {
  std::vector<Benchmark> r = {heat_present_linear(), heat_present_square(), exponential_driver(),
                              point_delay(),         delay_integral(),      linear_bsde(),
                              lq_control(),          truncated_hamiltonian_benchmark(),
                              mollifier_probes()};
  for (const auto& b : r) {
    if (b.closed_form && !b.closed_form->provenance) {
      fail(ErrorKind::kConfigInvalid, "benchmark " + b.name + " has an untagged closed form");
    }
  }
  return r;
}

}  // namespace

std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kElementary: return "elementary";
    case Provenance::kDerived: return "derived";
    case Provenance::kLiterature: return "literature";
  }
  return "unknown";
}

const std::vector<Benchmark>& benchmark_registry() {
  static const std::vector<Benchmark> registry = build_registry();
  return registry;
}

const Benchmark& find_benchmark(std::string_view name) {
  for (const auto& b : benchmark_registry()) {
    if (b.name == name) return b;
  }
  fail(ErrorKind::kBenchmarkUnknown, "no benchmark named '" + std::string(name) + "'");
}

double reference_value(const Benchmark& b, double t, const LiftedView& x) {
  if (!b.closed_form || !b.closed_form->value) {
    fail(ErrorKind::kConfigInvalid, "benchmark " + b.name + " has no reference value");
  }
  if (!b.closed_form->provenance) {
    fail(ErrorKind::kConfigInvalid, "benchmark " + b.name + " has an untagged reference value");
  }
  return b.closed_form->value(t, x);
}

nlohmann::json benchmark_table() {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : benchmark_registry()) {
    nlohmann::json row{{"name", b.name}, {"description", b.description}};
    if (b.closed_form) {
      row["closed_form"] = b.closed_form->formula;
      row["provenance"] = std::string(provenance_name(*b.closed_form->provenance));
    } else {
      row["closed_form"] = nullptr;
      row["provenance"] = nullptr;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pathflow
