#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wztt/arx.hpp"
#include "wztt/learners.hpp"

namespace wztt {

template <typename DerivedA, typename DerivedB>
double rmse(const Eigen::MatrixBase<DerivedA>& predictions, const Eigen::MatrixBase<DerivedB>& actuals) {
  if (predictions.size() != actuals.size()) throw std::invalid_argument("rmse: length mismatch");
  if (predictions.size() == 0) throw std::invalid_argument("rmse: empty input");
  const double mse = (predictions.template cast<double>() - actuals.template cast<double>())
                         .squaredNorm() /
                     static_cast<double>(predictions.size());
  return std::sqrt(mse);
}

/// RMSE of predicting TT_wz(t + lahead) by TT_wz(t).
double persistence_rmse(const DesignMatrix& test);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Symmetric bins [-K w, K w) of width w covering every error.
std::vector<HistogramBin> error_histogram(std::span<const double> errors, double bin_width);

/// RSU ids needed for a model's selected columns, ascending.
std::vector<int> rsu_plan(const FittedModel& model);
std::string join_ids(std::span<const int> ids);

/// Variables of the star matrix: the 16 inputs followed by the TT_wz lags.
std::vector<std::string> star_variables();

struct ModelScore {
  ModelKind kind;
  double rmse = 0.0;
  std::vector<int> rsus;
  std::vector<std::string> selected;
  bool pareto = false;  // no model is as cheap in RSUs and strictly more accurate
};

struct EvaluationReport {
  std::vector<ModelScore> ranked;  // by RMSE, ascending
  double persistence = 0.0;
  std::vector<std::string> variables;
  std::vector<std::vector<bool>> stars;  // [variable][model in kAllModels order]
  std::vector<ModelKind> kinds;          // fitted kinds, kAllModels order
  Eigen::MatrixXd predictions;           // test rows x kinds
  std::vector<std::vector<HistogramBin>> histograms;  // per kind
  double bin_width = 5.0;
};

EvaluationReport evaluate(std::span<const FittedModel> models, const DesignMatrix& test,
                          double bin_width = 5.0);

/// report.csv, stars.csv, hist.csv (stepwise, else the first model),
/// hist_<kind>.csv, predictions.csv and a readable report.txt.
void write_report(const std::filesystem::path& dir, const EvaluationReport& report,
                  const DesignMatrix& test, const std::string& header_note = {});

}  // namespace wztt
