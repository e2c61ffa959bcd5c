#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wztt/diagnostics.hpp"
#include "wztt/learners.hpp"

namespace wztt {
namespace {

Eigen::MatrixXd sub_gram(const Eigen::MatrixXd& g, std::span<const Eigen::Index> s) {
  const std::vector<Eigen::Index> idx(s.begin(), s.end());
  return g(idx, idx);
}

Eigen::VectorXd sub_vec(const Eigen::VectorXd& v, std::span<const Eigen::Index> s) {
  const std::vector<Eigen::Index> idx(s.begin(), s.end());
  return v(idx);
}

}  // namespace

double stepwise_add_gain(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                         std::span<const Eigen::Index> support, Eigen::Index j) {
  double num = xty(j);
  double den = gram(j, j);
  if (!support.empty()) {
    const std::vector<Eigen::Index> idx(support.begin(), support.end());
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(sub_gram(gram, support));
    const Eigen::VectorXd g_sj = gram(idx, j);
    const Eigen::VectorXd w = ldlt.solve(g_sj);
    num -= w.dot(sub_vec(xty, support));
    den -= g_sj.dot(w);
  }
  if (!(den > 1e-10 * gram(j, j))) return 0.0;
  return num * num / den;
}

double stepwise_remove_cost(const Eigen::MatrixXd& gram, const Eigen::VectorXd& xty,
                            std::span<const Eigen::Index> support, Eigen::Index j) {
  const auto it = std::find(support.begin(), support.end(), j);
  if (it == support.end()) throw std::invalid_argument("column not in support");
  const auto pos = static_cast<Eigen::Index>(it - support.begin());
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(sub_gram(gram, support));
  const Eigen::VectorXd beta = ldlt.solve(sub_vec(xty, support));
  const Eigen::VectorXd e = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(support.size()), pos);
  const double inv_jj = ldlt.solve(e)(pos);
  return beta(pos) * beta(pos) / inv_jj;
}

StepwiseTrace stepwise_select(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              const StepwiseOptions& options) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n == 0) throw std::invalid_argument("stepwise fit on an empty training set");
  const auto s = standardization_of(x);
  const Eigen::MatrixXd z = standardize(x, s);
  const Eigen::VectorXd yc = y.array() - y.mean();

  std::vector<Eigen::Index> candidates;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::find(s.constant.begin(), s.constant.end(), j) == s.constant.end()) candidates.push_back(j);
  }

  StepwiseTrace trace;
  const Eigen::MatrixXd zc = z(Eigen::all, candidates);
  Eigen::Index rank = 0;
  double rss_full = yc.squaredNorm();
  if (!candidates.empty()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zc);
    rank = qr.rank();
    rss_full = (yc - zc * qr.solve(yc)).squaredNorm();
  }
  const double df = static_cast<double>(n - rank - 1);
  if (!(df > 0)) throw std::invalid_argument("stepwise needs more rows than columns");
  trace.sigma2 = rss_full / df;
  trace.penalty = 2.0 * trace.sigma2 * std::log(static_cast<double>(std::max<Eigen::Index>(p, 1)));
  // A perfect fit leaves only rounding in sigma2; gains that small are noise.
  trace.penalty = std::max(trace.penalty, 1e-12 * yc.squaredNorm());

  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd xty = z.transpose() * yc;
  auto& support = trace.support;

  for (;;) {
    if (++trace.iterations > options.max_iterations) {
      warn("stepwise: iteration limit reached before a fixed point");
      break;
    }
    bool changed = false;
    Eigen::Index best = -1;
    double best_gain = 0.0;
    for (Eigen::Index j : candidates) {
      if (std::find(support.begin(), support.end(), j) != support.end()) continue;
      const double g = stepwise_add_gain(gram, xty, support, j);
      if (g > best_gain) {
        best_gain = g;
        best = j;
      }
    }
    if (best >= 0 && best_gain > trace.penalty) {
      support.push_back(best);
      changed = true;
    }
    while (!support.empty()) {
      Eigen::Index worst = -1;
      double worst_cost = std::numeric_limits<double>::infinity();
      for (Eigen::Index j : support) {
        const double c = stepwise_remove_cost(gram, xty, support, j);
        if (c < worst_cost) {
          worst_cost = c;
          worst = j;
        }
      }
      if (!(worst_cost < trace.penalty)) break;
      support.erase(std::find(support.begin(), support.end(), worst));
      changed = true;
    }
    if (!changed) break;
  }
  std::sort(support.begin(), support.end());
  return trace;
}

FittedModel fit_stepwise(const DesignMatrix& train, const StepwiseOptions& options) {
  const auto trace = stepwise_select(train.x, train.y, options);
  FittedModel m;
  m.kind = ModelKind::stepwise;
  m.columns = train.labels;
  const auto s = standardization_of(train.x);
  m.mean = s.mean;
  m.scale = s.scale;
  m.coefficients = Eigen::VectorXd::Zero(train.cols());
  const double ybar = train.y.mean();
  m.intercept = ybar;
  if (!trace.support.empty()) {
    const Eigen::MatrixXd z = standardize(train.x, s)(Eigen::all, trace.support);
    const Eigen::VectorXd beta = least_squares(z, Eigen::VectorXd(train.y.array() - ybar));
    for (std::size_t i = 0; i < trace.support.size(); ++i) {
      m.coefficients(trace.support[i]) = beta(static_cast<Eigen::Index>(i));
      m.selected.push_back(train.labels[static_cast<std::size_t>(trace.support[i])]);
    }
  }
  m.info["penalty"] = trace.penalty;
  m.info["sigma2"] = trace.sigma2;
  m.info["iterations"] = trace.iterations;
  return m;
}

}  // namespace wztt
