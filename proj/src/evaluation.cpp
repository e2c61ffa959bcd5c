#include "wztt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "wztt/csv.hpp"

namespace wztt {

double persistence_rmse(const DesignMatrix& test) { return rmse(test.current, test.y); }

std::vector<HistogramBin> error_histogram(std::span<const double> errors, double w) {
  if (!(w > 0)) throw std::invalid_argument("histogram bin width must be > 0");
  double largest = 0.0;
  for (double e : errors) {
    if (!std::isfinite(e)) throw std::invalid_argument("histogram of non-finite error");
    largest = std::max(largest, std::abs(e));
  }
  const auto k = std::max<long long>(1, static_cast<long long>(std::floor(largest / w)) + 1);
  std::vector<HistogramBin> bins(static_cast<std::size_t>(2 * k));
  for (long long i = 0; i < 2 * k; ++i) {
    bins[static_cast<std::size_t>(i)].lo = static_cast<double>(i - k) * w;
    bins[static_cast<std::size_t>(i)].hi = static_cast<double>(i - k + 1) * w;
  }
  for (double e : errors) {
    auto i = static_cast<long long>(std::floor(e / w)) + k;
    i = std::clamp<long long>(i, 0, 2 * k - 1);
    ++bins[static_cast<std::size_t>(i)].count;
  }
  return bins;
}

std::vector<int> rsu_plan(const FittedModel& model) {
  std::set<int> ids;
  for (const auto& label : model.selected) {
    for (int id : column_to_rsus(label)) ids.insert(id);
  }
  return {ids.begin(), ids.end()};
}

std::string join_ids(std::span<const int> ids) {
  std::string s;
  for (int id : ids) {
    if (!s.empty()) s += ';';
    s += std::to_string(id);
  }
  return s;
}

std::vector<std::string> star_variables() {
  const auto& names = exogenous_names();
  std::vector<std::string> v(names.begin(), names.end());
  v.emplace_back(kTargetName);
  return v;
}

EvaluationReport evaluate(std::span<const FittedModel> models, const DesignMatrix& test,
                          double bin_width) {
  if (test.size() == 0) throw std::invalid_argument("evaluation needs a non-empty test split");
  EvaluationReport r;
  r.bin_width = bin_width;
  r.persistence = persistence_rmse(test);
  r.variables = star_variables();
  r.predictions.resize(test.size(), static_cast<Eigen::Index>(models.size()));
  r.stars.assign(r.variables.size(), std::vector<bool>(models.size(), false));
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& model = models[m];
    r.kinds.push_back(model.kind);
    const Eigen::VectorXd pred = model.predict(test);
    r.predictions.col(static_cast<Eigen::Index>(m)) = pred;
    ModelScore s{model.kind, rmse(pred, test.y), rsu_plan(model), model.selected, false};
    r.ranked.push_back(std::move(s));
    const Eigen::VectorXd err = test.y - pred;
    r.histograms.push_back(error_histogram(std::span(err.data(), static_cast<std::size_t>(err.size())), bin_width));
    for (const auto& label : model.selected) {
      const auto var = variable_of(label);
      const auto it = std::find(r.variables.begin(), r.variables.end(), var);
      r.stars[static_cast<std::size_t>(it - r.variables.begin())][m] = true;
    }
  }
  for (auto& a : r.ranked) {
    a.pareto = std::none_of(r.ranked.begin(), r.ranked.end(), [&](const ModelScore& b) {
      return b.rsus.size() <= a.rsus.size() && b.rmse < a.rmse;
    });
  }
  std::stable_sort(r.ranked.begin(), r.ranked.end(),
                   [](const ModelScore& a, const ModelScore& b) { return a.rmse < b.rmse; });
  return r;
}

void write_report(const std::filesystem::path& dir, const EvaluationReport& r,
                  const DesignMatrix& test, const std::string& header_note) {
  std::filesystem::create_directories(dir);
  {
    csv::Writer w(dir / "report.csv");
    w.row(std::vector<std::string>{"model", "rmse_s", "n_rsus", "rsu_list"});
    for (const auto& s : r.ranked) w.row(std::string(to_string(s.kind)), s.rmse, s.rsus.size(), join_ids(s.rsus));
    w.row("persistence", r.persistence, 1, "1");
  }
  {
    csv::Writer w(dir / "stars.csv");
    std::vector<std::string> h{"variable"};
    for (auto k : r.kinds) h.emplace_back(to_string(k));
    w.row(h);
    for (std::size_t v = 0; v < r.variables.size(); ++v) {
      std::vector<std::string> row{r.variables[v]};
      for (std::size_t m = 0; m < r.kinds.size(); ++m) row.emplace_back(r.stars[v][m] ? "*" : "");
      w.row(row);
    }
  }
  auto write_hist = [&](const std::filesystem::path& path, const std::vector<HistogramBin>& bins) {
    csv::Writer w(path);
    w.row(std::vector<std::string>{"bin_lo", "bin_hi", "count"});
    for (const auto& b : bins) w.row(b.lo, b.hi, b.count);
  };
  std::size_t primary = 0;
  for (std::size_t m = 0; m < r.kinds.size(); ++m) {
    write_hist(dir / ("hist_" + std::string(to_string(r.kinds[m])) + ".csv"), r.histograms[m]);
    if (r.kinds[m] == ModelKind::stepwise) primary = m;
  }
  if (!r.kinds.empty()) write_hist(dir / "hist.csv", r.histograms[primary]);
  {
    csv::Writer w(dir / "predictions.csv");
    std::vector<std::string> h{"month", "replication", "t", "actual", "persistence"};
    for (auto k : r.kinds) h.emplace_back(to_string(k));
    w.row(h);
    for (Eigen::Index i = 0; i < test.size(); ++i) {
      const auto& p = test.rows[static_cast<std::size_t>(i)];
      std::vector<std::string> row{std::to_string(p.month), std::to_string(p.replication),
                                   std::to_string(p.t), csv::format(test.y(i)),
                                   csv::format(test.current(i))};
      for (Eigen::Index m = 0; m < r.predictions.cols(); ++m) row.push_back(csv::format(r.predictions(i, m)));
      w.row(row);
    }
  }
  std::ofstream txt(dir / "report.txt");
  txt << "Work-zone travel time prediction, " << test.lahead * 5 << " min ahead\n";
  if (!header_note.empty()) txt << header_note << '\n';
  txt << "Test rows: " << test.size() << "\n\n";
  txt << std::left << std::setw(14) << "model" << std::right << std::setw(10) << "RMSE (s)"
      << std::setw(8) << "RSUs" << "  pareto  RSU set\n";
  txt << std::fixed << std::setprecision(2);
  for (const auto& s : r.ranked) {
    txt << std::left << std::setw(14) << to_string(s.kind) << std::right << std::setw(10) << s.rmse
        << std::setw(8) << s.rsus.size() << "  " << (s.pareto ? "  yes " : "   no ") << "  {"
        << join_ids(s.rsus) << "}\n";
  }
  txt << std::left << std::setw(14) << "persistence" << std::right << std::setw(10) << r.persistence
      << std::setw(8) << 1 << "          {1}\n\n";
  txt << "Significant variables (*)\n";
  txt << std::left << std::setw(16) << "variable";
  for (auto k : r.kinds) txt << std::setw(13) << to_string(k);
  txt << '\n';
  for (std::size_t v = 0; v < r.variables.size(); ++v) {
    txt << std::setw(16) << r.variables[v];
    for (std::size_t m = 0; m < r.kinds.size(); ++m) txt << std::setw(13) << (r.stars[v][m] ? "*" : "");
    txt << '\n';
  }
  txt << "\nAccuracy vs sensing cost: models marked pareto have no rival that needs no more "
         "RSUs and predicts better.\n";
}

}  // namespace wztt
