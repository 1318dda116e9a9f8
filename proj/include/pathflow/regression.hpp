#pragma once

// Least-squares regression on path features, the conditional-expectation primitive of the
// backward solver.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "pathflow/segment.hpp"

namespace pathflow {

struct NamedFeature {
  std::string name;
  std::function<double(const LiftedView&)> fn;
};

/// Path functionals fed to the regression, expanded into monomials up to `degree`.
struct RegressionBasis {
  enum class Features { kDefault, kPresent };

  /// kDefault: present coordinates, past values at lags -dt, -T/4, -T/2, -T and the running
  /// average of the past, per coordinate. kPresent: present coordinates only.
  Features features = Features::kDefault;
  std::vector<NamedFeature> extra;
  int degree = 2;
  double ridge_lambda = 1e-8;

  int n_raw(int dim) const;
  std::vector<std::string> feature_names(int dim) const;
  void evaluate(const LiftedView& x, std::span<double> out) const;
};

nlohmann::json to_json(const RegressionBasis& basis, int dim);

/// A fitted linear model on standardized, monomial-expanded features.
struct RegressionModel {
  std::vector<int> kept;         ///< raw features with nonzero sample variance
  std::vector<double> center;    ///< per kept feature
  std::vector<double> scale;     ///< per kept feature
  std::vector<std::vector<int>> monomials;  ///< exponent lists over kept features
  Eigen::MatrixXd coef;          ///< n_basis x n_targets

  int n_basis() const { return static_cast<int>(monomials.size()); }
  int n_targets() const { return static_cast<int>(coef.cols()); }
  /// Predicted targets for one raw feature row.
  void predict(std::span<const double> raw, std::span<double> out) const;
  double predict_one(std::span<const double> raw, int target = 0) const;
  /// Constant model (intercept only) with the given per-target values.
  static RegressionModel constant(std::span<const double> values);
};

struct RegressionDiagnostics {
  int n_samples = 0;
  int n_basis = 0;
  double condition_number = 1.0;
  std::vector<double> r_squared;  ///< per target
};

/// Shared design for several targets: standardization, expansion and a factorised
/// ridge-regularised normal matrix (the intercept is not penalised).
class LeastSquares {
 public:
  LeastSquares(const Eigen::MatrixXd& raw, int degree, double ridge_lambda);

  int n_samples() const { return static_cast<int>(design_.rows()); }
  int n_basis() const { return static_cast<int>(design_.cols()); }
  double condition_number() const { return condition_; }

  /// Coefficients for each column of `targets` (n_samples rows).
  Eigen::MatrixXd solve(const Eigen::MatrixXd& targets) const;
  Eigen::MatrixXd fitted(const Eigen::MatrixXd& coef) const { return design_ * coef; }
  RegressionModel model(const Eigen::MatrixXd& coef) const;

 private:
  RegressionModel shape_;
  Eigen::MatrixXd design_;
  Eigen::MatrixXd normal_;
  Eigen::MatrixXd regularised_;
  double condition_ = 1.0;
};

struct RegressionResult {
  RegressionModel model;
  Eigen::MatrixXd fitted;
  RegressionDiagnostics diagnostics;
};

/// Ridge least squares of each target column on the expanded raw features.
/// Throws InsufficientSamples (n < 5 x basis size) or SingularDesign.
RegressionResult regress(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& targets, int degree,
                         double ridge_lambda);

/// Number of monomials of degree <= `degree` in `n_vars` variables.
int monomial_count(int n_vars, int degree);
std::vector<std::vector<int>> monomial_exponents(int n_vars, int degree);

}  // namespace pathflow
