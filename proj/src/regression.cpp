#include "pathflow/regression.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "pathflow/error.hpp"

namespace pathflow {
namespace {

constexpr const char* kLagNames[] = {"lag_dt", "lag_T/4", "lag_T/2", "lag_T"};

void append_monomials(int n_vars, int degree, int first, std::vector<int>& current,
                      std::vector<std::vector<int>>& out) {
  if (degree == 0) {
    out.push_back(current);
    return;
  }
  for (int v = first; v < n_vars; ++v) {
    ++current[v];
    append_monomials(n_vars, degree - 1, v, current, out);
    --current[v];
  }
}

double monomial_value(const std::vector<int>& exponents, std::span<const double> z) {
  double v = 1.0;
  for (std::size_t i = 0; i < exponents.size(); ++i) {
    for (int e = 0; e < exponents[i]; ++e) v *= z[i];
  }
  return v;
}

}  // namespace

int RegressionBasis::n_raw(int dim) const {
  const int per_coord = features == Features::kDefault ? 6 : 1;
  return per_coord * dim + static_cast<int>(extra.size());
}

std::vector<std::string> RegressionBasis::feature_names(int dim) const {
  std::vector<std::string> names;
  for (int i = 0; i < dim; ++i) {
    const std::string suffix = dim > 1 ? "[" + std::to_string(i) + "]" : "";
    names.push_back("present" + suffix);
    if (features == Features::kDefault) {
      for (const char* lag : kLagNames) names.push_back(lag + suffix);
      names.push_back("past_mean" + suffix);
    }
  }
  for (const auto& f : extra) names.push_back(f.name);
  return names;
}

void RegressionBasis::evaluate(const LiftedView& x, std::span<double> out) const {
  const int d = x.dim();
  const int n = x.grid().n_steps();
  const double horizon = x.grid().horizon();
  std::size_t pos = 0;
  for (int i = 0; i < d; ++i) {
    out[pos++] = x.present()[i];
    if (features == Features::kDefault) {
      out[pos++] = x.past(n - 1)[i];
      out[pos++] = x.past_at(-0.25 * horizon)[i];
      out[pos++] = x.past_at(-0.5 * horizon)[i];
      out[pos++] = x.past(0)[i];
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += x.past(j)[i];
      out[pos++] = s / n;
    }
  }
  for (const auto& f : extra) out[pos++] = f.fn(x);
}

nlohmann::json to_json(const RegressionBasis& basis, int dim) {
  return nlohmann::json{{"features", basis.feature_names(dim)},
                        {"degree", basis.degree},
                        {"ridge_lambda", basis.ridge_lambda}};
}

int monomial_count(int n_vars, int degree) {
  // C(n_vars + degree, degree)
  double c = 1.0;
  for (int k = 1; k <= degree; ++k) c = c * (n_vars + k) / k;
  return static_cast<int>(std::lround(c));
}

std::vector<std::vector<int>> monomial_exponents(int n_vars, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(static_cast<std::size_t>(n_vars), 0);
  for (int deg = 0; deg <= degree; ++deg) append_monomials(n_vars, deg, 0, current, out);
  return out;
}

void RegressionModel::predict(std::span<const double> raw, std::span<double> out) const {
  std::vector<double> z(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) z[i] = (raw[kept[i]] - center[i]) / scale[i];
  for (int t = 0; t < n_targets(); ++t) out[t] = 0.0;
  for (int b = 0; b < n_basis(); ++b) {
    const double m = monomial_value(monomials[b], z);
    for (int t = 0; t < n_targets(); ++t) out[t] += m * coef(b, t);
  }
}

double RegressionModel::predict_one(std::span<const double> raw, int target) const {
  std::vector<double> out(static_cast<std::size_t>(n_targets()));
  predict(raw, out);
  return out[target];
}

RegressionModel RegressionModel::constant(std::span<const double> values) {
  RegressionModel m;
  m.monomials = {{}};
  m.coef = Eigen::MatrixXd(1, static_cast<Eigen::Index>(values.size()));
  for (std::size_t t = 0; t < values.size(); ++t) m.coef(0, static_cast<Eigen::Index>(t)) = values[t];
  return m;
}

LeastSquares::LeastSquares(const Eigen::MatrixXd& raw, int degree, double ridge_lambda) {
  require(degree >= 0, ErrorKind::kInvalidArgument, "degree must be non-negative");
  require(ridge_lambda >= 0.0, ErrorKind::kInvalidArgument, "ridge must be non-negative");
  const auto n = raw.rows();
  require(n > 0, ErrorKind::kInsufficientSamples, "no samples");
  require(raw.allFinite(), ErrorKind::kSingularDesign, "non-finite feature values");

  // Standardize; drop constant columns and exact duplicates of earlier columns.
  std::vector<Eigen::VectorXd> kept_cols;
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double mean = raw.col(c).mean();
    const double var = (raw.col(c).array() - mean).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * (1.0 + std::abs(mean)))) continue;
    Eigen::VectorXd z = (raw.col(c).array() - mean) / sd;
    bool duplicate = false;
    for (const auto& k : kept_cols) {
      if ((k - z).cwiseAbs().maxCoeff() <= 1e-12) {
        duplicate = true;
        break;
      }
    }
    if (duplicate) continue;
    shape_.kept.push_back(static_cast<int>(c));
    shape_.center.push_back(mean);
    shape_.scale.push_back(sd);
    kept_cols.push_back(std::move(z));
  }
  shape_.monomials = monomial_exponents(static_cast<int>(kept_cols.size()), degree);
  const auto m = static_cast<Eigen::Index>(shape_.monomials.size());
  if (n < 5 * m) {
    fail(ErrorKind::kInsufficientSamples, std::to_string(n) + " samples for a basis of size " +
                                              std::to_string(m) + " (need 5x)");
  }

  design_.resize(n, m);
  std::vector<double> z(kept_cols.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < kept_cols.size(); ++i) z[i] = kept_cols[i](r);
    for (Eigen::Index b = 0; b < m; ++b) design_(r, b) = monomial_value(shape_.monomials[b], z);
  }
  normal_ = (design_.transpose() * design_) / static_cast<double>(n);
  regularised_ = normal_;
  for (Eigen::Index b = 1; b < m; ++b) regularised_(b, b) += ridge_lambda;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(regularised_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo <= 1e-13 * hi) {
    fail(ErrorKind::kSingularDesign, "design is rank deficient after regularisation");
  }
  condition_ = hi / lo;
}

Eigen::MatrixXd LeastSquares::solve(const Eigen::MatrixXd& targets) const {
  require(targets.rows() == design_.rows(), ErrorKind::kInvalidArgument,
          "target rows differ from sample count");
  const double n = static_cast<double>(design_.rows());
  const Eigen::MatrixXd rhs = (design_.transpose() * targets) / n;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(regularised_);
  // One step of iterated Tikhonov: removes the ridge bias along well-determined directions.
  Eigen::MatrixXd coef = ldlt.solve(rhs);
  coef += ldlt.solve(rhs - normal_ * coef);
  if (!coef.allFinite()) fail(ErrorKind::kSingularDesign, "normal equations produced non-finite values");
  return coef;
}

RegressionModel LeastSquares::model(const Eigen::MatrixXd& coef) const {
  RegressionModel m = shape_;
  m.coef = coef;
  return m;
}

RegressionResult regress(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& targets, int degree,
                         double ridge_lambda) {
  LeastSquares ls(raw, degree, ridge_lambda);
  RegressionResult out;
  const Eigen::MatrixXd coef = ls.solve(targets);
  out.model = ls.model(coef);
  out.fitted = ls.fitted(coef);
  out.diagnostics.n_samples = ls.n_samples();
  out.diagnostics.n_basis = ls.n_basis();
  out.diagnostics.condition_number = ls.condition_number();
  for (Eigen::Index t = 0; t < targets.cols(); ++t) {
    const double mean = targets.col(t).mean();
    const double ss_tot = (targets.col(t).array() - mean).square().sum();
    const double ss_res = (targets.col(t) - out.fitted.col(t)).squaredNorm();
    out.diagnostics.r_squared.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0);
  }
  return out;
}

}  // namespace pathflow
