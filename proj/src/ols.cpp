#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "wztt/diagnostics.hpp"
#include "wztt/learners.hpp"

namespace wztt {

double t_test_p_value(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (!std::isfinite(t)) return 0.0;
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

FittedModel fit_ols(const DesignMatrix& train, const OlsOptions& options) {
  const Eigen::Index n = train.size();
  const Eigen::Index p = train.cols();
  if (n == 0) throw std::invalid_argument("OLS fit on an empty training set");

  FittedModel m;
  m.kind = ModelKind::ols;
  m.columns = train.labels;
  const auto s = standardization_of(train.x);
  m.mean = s.mean;
  m.scale = s.scale;
  m.coefficients = Eigen::VectorXd::Zero(p);
  const double ybar = train.y.mean();
  m.intercept = ybar;

  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (std::find(s.constant.begin(), s.constant.end(), j) != s.constant.end()) {
      warn("ols: column \"" + train.labels[static_cast<std::size_t>(j)] + "\" is constant; dropped");
    } else {
      kept.push_back(j);
    }
  }
  const Eigen::MatrixXd z_all = standardize(train.x, s);
  const Eigen::VectorXd yc = train.y.array() - ybar;

  Eigen::MatrixXd z = z_all(Eigen::all, kept);
  if (!kept.empty()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    const Eigen::Index rank = qr.rank();
    if (rank < z.cols()) {
      std::vector<Eigen::Index> independent;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index i = 0; i < z.cols(); ++i) {
        const auto col = kept[static_cast<std::size_t>(perm(i))];
        if (i < rank) {
          independent.push_back(col);
        } else {
          warn("ols: column \"" + train.labels[static_cast<std::size_t>(col)] +
               "\" is linearly dependent on others; dropped");
        }
      }
      std::sort(independent.begin(), independent.end());
      kept = std::move(independent);
      z = z_all(Eigen::all, kept);
    }
  }

  const auto r = static_cast<Eigen::Index>(kept.size());
  const double df = static_cast<double>(n - r - 1);
  if (!(df > 0)) throw std::invalid_argument("OLS needs more rows than columns");

  double rss = yc.squaredNorm();
  Eigen::VectorXd variance_factor;
  if (r > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    const Eigen::VectorXd beta = qr.solve(yc);
    rss = (yc - z * beta).squaredNorm();
    const Eigen::MatrixXd upper = qr.matrixR().topLeftCorner(r, r).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv =
        upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(r, r));
    // diag((Z'Z)^-1) = row norms of R^-1, in pivoted order.
    variance_factor.resize(r);
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = 0; i < r; ++i) variance_factor(perm(i)) = rinv.row(i).squaredNorm();
    for (Eigen::Index i = 0; i < r; ++i) m.coefficients(kept[static_cast<std::size_t>(i)]) = beta(i);
  }
  const double sigma2 = rss / df;
  m.info["rss"] = rss;
  m.info["sigma2"] = sigma2;
  m.info["df"] = df;
  m.info["rank"] = static_cast<double>(r);

  for (Eigen::Index i = 0; i < r; ++i) {
    const auto col = kept[static_cast<std::size_t>(i)];
    const double se = std::sqrt(sigma2 * variance_factor(i));
    const double pv = t_test_p_value(m.coefficients(col) / se, df);
    const auto& label = train.labels[static_cast<std::size_t>(col)];
    m.info["p:" + label] = pv;
    if (pv < options.significance) m.selected.push_back(label);
  }
  return m;
}

}  // namespace wztt
