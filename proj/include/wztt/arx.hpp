#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wztt/features.hpp"

namespace wztt {

struct ArxConfig {
  int lahead = 5;  // windows ahead of t for the target
  int n_a = 3;     // TT_wz lags
  std::array<int, kExogenousCount> n_b = filled(3);
  bool include_current = false;  // lags j = 0..n-1 instead of 1..n

  void validate() const;
  static std::array<int, kExogenousCount> filled(int n) {
    std::array<int, kExogenousCount> a{};
    a.fill(n);
    return a;
  }
};

struct RowProvenance {
  int month = 0;
  int replication = 0;
  int t = 0;
};

/// Lagged regressors X, target y = TT_wz(t + lahead) and the current
/// TT_wz(t) (for persistence forecasts), one row per usable window t.
struct DesignMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd current;
  std::vector<RowProvenance> rows;
  int lahead = 5;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }
  /// Column index of `label`; throws naming it when absent.
  Eigen::Index column(std::string_view label) const;
  /// Rows whose indices are listed, in order.
  DesignMatrix subset(std::span<const Eigen::Index> indices) const;
};

/// Features must be grouped by (month, replication) with t = 0, 1, ... inside
/// each day. Lags never reach across a day.
DesignMatrix build_design(std::span<const FeatureWindow> features, const ArxConfig& config);

/// Column label for `variable` at lag `j`, e.g. "TT_10_1 lag2".
std::string lag_label(std::string_view variable, int j);
/// Variable part of a label ("TT_10_1 lag2" -> "TT_10_1"). Throws on unknown.
std::string variable_of(std::string_view label);

/// RSU ids a column depends on, ascending.
std::vector<int> column_to_rsus(std::string_view label);

/// Months 1..train_last_month train; the rest test. Order preserved.
std::pair<DesignMatrix, DesignMatrix> split(const DesignMatrix& matrix, int train_last_month = 10);
/// Feature-row counts on each side of the same split.
std::pair<std::size_t, std::size_t> split_counts(std::span<const FeatureWindow> features,
                                                 int train_last_month = 10);

void write_design_csv(const std::filesystem::path& path, const DesignMatrix& matrix);
DesignMatrix read_design_csv(const std::filesystem::path& path);
/// label, variable, lag, rsus (ids joined by ';').
void write_column_map_csv(const std::filesystem::path& path, const DesignMatrix& matrix);

}  // namespace wztt
