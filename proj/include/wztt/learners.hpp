#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "wztt/arx.hpp"

namespace wztt {

enum class ModelKind { ols, stepwise, elastic_net, mars };

inline constexpr ModelKind kAllModels[] = {ModelKind::ols, ModelKind::stepwise,
                                           ModelKind::elastic_net, ModelKind::mars};

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

/// One factor max(0, sign * (x[column] - knot)) of a MARS basis function.
struct HingeFactor {
  int column = 0;
  int sign = 1;
  double knot = 0.0;
};

struct BasisFunction {
  std::vector<HingeFactor> factors;  // empty for the constant term
  double weight = 0.0;
};

/// Learner-agnostic fitted model. Linear kinds predict
/// intercept + sum_j coefficients[j] * (x_j - mean[j]) / scale[j];
/// MARS predicts intercept + sum_k weight_k * prod(hinges) on raw inputs.
struct FittedModel {
  ModelKind kind = ModelKind::ols;
  std::vector<std::string> columns;
  double intercept = 0.0;
  Eigen::VectorXd coefficients;  // standardized scale, zero where unused
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::vector<BasisFunction> basis;
  std::vector<std::string> selected;
  std::map<std::string, double> info;  // fit diagnostics (lambda, gcv, ...)

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  /// `x` columns in this model's column order.
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  /// Matches columns by label; throws naming the first one missing.
  Eigen::VectorXd predict(const DesignMatrix& design) const;

  /// Raw-scale linear form, for linear kinds.
  Eigen::VectorXd raw_coefficients() const;
  double raw_intercept() const;

  void save(std::ostream& out) const;
  static FittedModel load(std::istream& in);
};

void save_model(const std::filesystem::path& path, const FittedModel& model);
FittedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------- helpers

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;              // population standard deviation, 1 for constants
  std::vector<Eigen::Index> constant; // columns with no variation
};

template <typename Derived>
Standardization standardization_of(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Standardization s;
  const auto n = static_cast<Scalar>(x.rows());
  s.mean = x.colwise().mean().transpose().template cast<double>();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Scalar var = (x.col(j).array() - static_cast<Scalar>(s.mean(j))).square().sum() / n;
    const double sd = std::sqrt(static_cast<double>(var));
    if (!(sd > 1e-12 * (1.0 + std::abs(s.mean(j))))) {
      s.scale(j) = 1.0;
      s.constant.push_back(j);
    } else {
      s.scale(j) = sd;
    }
  }
  return s;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> standardize(
    const Eigen::MatrixBase<Derived>& x, const Standardization& s) {
  using Scalar = typename Derived::Scalar;
  return ((x.rowwise() - s.mean.transpose().template cast<Scalar>()).array().rowwise() /
          s.scale.transpose().template cast<Scalar>().array())
      .matrix();
}

/// Pivoted-QR least squares; returns coefficients and the rank used.
template <typename DerivedX, typename DerivedY>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, 1> least_squares(
    const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  return x.colPivHouseholderQr().solve(y);
}

// ---------------------------------------------------------------- OLS

struct OlsOptions {
  double significance = 0.05;
};

/// Least squares with intercept on standardized columns. Constant and linearly
/// dependent columns are dropped with a warning. p-values (two-sided t) are
/// stored in info as "p:<label>".
FittedModel fit_ols(const DesignMatrix& train, const OlsOptions& options = {});

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
double t_test_p_value(double t, double df);

// ---------------------------------------------------------------- stepwise

struct StepwiseOptions {
  int max_iterations = 1000;
};

/// Penalized forward/backward selection. A column enters when its RSS
/// reduction exceeds 2 * sigma2 * ln(p) and leaves when deleting it costs less,
/// with sigma2 from the full OLS fit and p the number of candidate columns.
FittedModel fit_stepwise(const DesignMatrix& train, const StepwiseOptions& options = {});

/// Gram-space bookkeeping used by fit_stepwise, exposed for testing.
struct StepwiseTrace {
  double penalty = 0.0;
  double sigma2 = 0.0;
  std::vector<Eigen::Index> support;  // indices into the design columns
  int iterations = 0;
};
StepwiseTrace stepwise_select(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const StepwiseOptions& options = {});

/// RSS reduction from adding column j / increase from removing it, relative to
/// the least-squares fit on `support` (standardized, centered data).
double stepwise_add_gain(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                         std::span<const Eigen::Index> support, Eigen::Index j);
double stepwise_remove_cost(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                            std::span<const Eigen::Index> support, Eigen::Index j);

// ---------------------------------------------------------------- elastic net

struct ElasticNetOptions {
  double alpha = 0.5;
  int n_lambda = 100;
  double lambda_min_ratio = 1e-4;
  int folds = 5;
  std::optional<double> lambda;  // skip cross-validation
  int max_sweeps = 100000;
  double tolerance = 1e-8;  // on the KKT residual
};

/// 1/(2n) ||y - Z b||^2 + lambda * (alpha * |b|_1 + (1 - alpha)/2 * |b|^2).
double elastic_net_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& beta, double lambda, double alpha);
/// Largest violation of the subgradient optimality conditions.
double elastic_net_kkt_residual(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& beta, double lambda, double alpha);
/// Smallest lambda at which every coefficient is zero.
double elastic_net_lambda_max(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double alpha);

struct CoordinateDescentResult {
  Eigen::VectorXd beta;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective;  // after each sweep
};

/// Cyclic coordinate descent with covariance updates. `warm` seeds beta.
CoordinateDescentResult elastic_net_cd(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                       double lambda, double alpha,
                                       const Eigen::VectorXd* warm = nullptr,
                                       int max_sweeps = 100000, double tolerance = 1e-8,
                                       bool record_objective = false);

/// log-spaced from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int count, double min_ratio);

FittedModel fit_elastic_net(const DesignMatrix& train, const ElasticNetOptions& options = {});

// ---------------------------------------------------------------- MARS

struct MarsOptions {
  int max_terms = 0;  // 0: 2 * columns + 1
  int max_degree = 2;
  double penalty = 3.0;  // GCV cost per knot
};

struct MarsTrace {
  double forward_gcv = 0.0;  // full forward model
  double gcv = 0.0;          // returned model
  int forward_terms = 0;
  int terms = 0;
};

/// GCV = RSS/n / (1 - C/n)^2 with C = terms + penalty * (terms - 1).
double mars_gcv(double rss, Eigen::Index n, int terms, double penalty);

FittedModel fit_mars(const DesignMatrix& train, const MarsOptions& options = {},
                     MarsTrace* trace = nullptr);
FittedModel fit_mars(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     std::vector<std::string> labels, const MarsOptions& options = {},
                     MarsTrace* trace = nullptr);

// ---------------------------------------------------------------- dispatch

struct LearnerOptions {
  OlsOptions ols;
  StepwiseOptions stepwise;
  ElasticNetOptions elastic_net;
  MarsOptions mars;
};

FittedModel fit_model(ModelKind kind, const DesignMatrix& train, const LearnerOptions& options = {});

/// Design-like wrapper around a bare matrix, for fitting synthetic data.
DesignMatrix make_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         std::vector<std::string> labels);

}  // namespace wztt
