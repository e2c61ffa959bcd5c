#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "wztt/diagnostics.hpp"
#include "wztt/learners.hpp"

namespace wztt {
namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Sufficient statistics of a centered problem, scaled by 1/n.
struct Moments {
  Eigen::MatrixXd gram;  // Z'Z / n
  Eigen::VectorXd xty;   // Z'y / n
  double yy = 0.0;       // y'y / n
};

Moments moments_of(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(z.rows());
  Moments m;
  m.gram = (z.transpose() * z) / n;
  m.xty = (z.transpose() * y) / n;
  m.yy = y.squaredNorm() / n;
  return m;
}

double gram_objective(const Moments& m, const Eigen::VectorXd& beta, const Eigen::VectorXd& gb,
                      double lambda, double alpha) {
  const double fit = 0.5 * (m.yy - 2.0 * beta.dot(m.xty) + beta.dot(gb));
  return fit + lambda * (alpha * beta.lpNorm<1>() + 0.5 * (1.0 - alpha) * beta.squaredNorm());
}

double gram_kkt(const Moments& m, const Eigen::VectorXd& beta, const Eigen::VectorXd& gb,
                double lambda, double alpha) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double grad = gb(j) - m.xty(j) + lambda * (1.0 - alpha) * beta(j);
    const double v = beta(j) != 0.0 ? std::abs(grad + lambda * alpha * (beta(j) > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(grad) - lambda * alpha);
    worst = std::max(worst, v);
  }
  return worst;
}

using Recorder = std::function<double(const Eigen::VectorXd& beta, const Eigen::VectorXd& gb)>;

// Solves the stationarity equations on the current nonzero set with the signs
// held fixed. Accepted only if the signs survive and the point is no worse.
bool polish(const Moments& m, double lambda, double alpha, Eigen::VectorXd& beta, Eigen::VectorXd& gb,
            double& kkt) {
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (beta(j) != 0.0) active.push_back(j);
  }
  if (active.empty()) return false;
  const double l1 = lambda * alpha;
  const double l2 = lambda * (1.0 - alpha);
  const auto k = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd a = m.gram(active, active);
  a.diagonal().array() += l2;
  Eigen::VectorXd rhs(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = active[static_cast<std::size_t>(i)];
    rhs(i) = m.xty(j) - l1 * (beta(j) > 0 ? 1.0 : -1.0);
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd b = ldlt.solve(rhs);
  if (!b.allFinite()) return false;
  Eigen::VectorXd next = beta;
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = active[static_cast<std::size_t>(i)];
    if (!(b(i) * beta(j) > 0)) return false;
    next(j) = b(i);
  }
  const Eigen::VectorXd next_gb = m.gram * next;
  const double next_kkt = gram_kkt(m, next, next_gb, lambda, alpha);
  if (!(next_kkt < kkt)) return false;
  if (gram_objective(m, next, next_gb, lambda, alpha) > gram_objective(m, beta, gb, lambda, alpha)) return false;
  beta = std::move(next);
  gb = next_gb;
  kkt = next_kkt;
  return true;
}

CoordinateDescentResult cd_core(const Moments& m, double lambda, double alpha,
                                Eigen::VectorXd beta, int max_sweeps, double tolerance,
                                const Recorder& record = {}) {
  CoordinateDescentResult out;
  const Eigen::Index p = m.xty.size();
  Eigen::VectorXd gb = m.gram * beta;
  const double l1 = lambda * alpha;
  const double l2 = lambda * (1.0 - alpha);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double denom = m.gram(j, j) + l2;
      if (!(denom > 0)) continue;
      const double old = beta(j);
      const double rho = m.xty(j) - gb(j) + m.gram(j, j) * old;
      const double next = soft_threshold(rho, l1) / denom;
      if (next != old) {
        gb.noalias() += m.gram.col(j) * (next - old);
        beta(j) = next;
      }
    }
    out.sweeps = sweep + 1;
    if (record) out.objective.push_back(record(beta, gb));
    if (gram_kkt(m, beta, gb, lambda, alpha) < tolerance) {
      out.converged = true;
      break;
    }
    // Refresh the running product now and then to keep rounding from drifting.
    if ((sweep + 1) % 1000 == 0) gb = m.gram * beta;
  }
  gb = m.gram * beta;
  double kkt = gram_kkt(m, beta, gb, lambda, alpha);
  if (out.converged && polish(m, lambda, alpha, beta, gb, kkt)) {
    if (record) {
      const double f = record(beta, gb);
      if (out.objective.empty() || f <= out.objective.back()) out.objective.push_back(f);
    }
  }
  out.beta = std::move(beta);
  return out;
}

std::vector<CoordinateDescentResult> cd_path(const Moments& m, const std::vector<double>& grid,
                                             std::size_t count, double alpha,
                                             const ElasticNetOptions& o, int& unconverged) {
  std::vector<CoordinateDescentResult> path;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(m.xty.size());
  for (std::size_t i = 0; i < count; ++i) {
    auto r = cd_core(m, grid[i], alpha, beta, o.max_sweeps, o.tolerance);
    if (!r.converged) ++unconverged;
    beta = r.beta;
    path.push_back(std::move(r));
  }
  return path;
}

}  // namespace

double elastic_net_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& beta, double lambda, double alpha) {
  const double n = static_cast<double>(z.rows());
  return 0.5 / n * (y - z * beta).squaredNorm() +
         lambda * (alpha * beta.lpNorm<1>() + 0.5 * (1.0 - alpha) * beta.squaredNorm());
}

double elastic_net_kkt_residual(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& beta, double lambda, double alpha) {
  const double n = static_cast<double>(z.rows());
  const Eigen::VectorXd corr = z.transpose() * (y - z * beta) / n;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double grad = -corr(j) + lambda * (1.0 - alpha) * beta(j);
    const double v = beta(j) != 0.0 ? std::abs(grad + lambda * alpha * (beta(j) > 0 ? 1.0 : -1.0))
                                    : std::max(0.0, std::abs(grad) - lambda * alpha);
    worst = std::max(worst, v);
  }
  return worst;
}

double elastic_net_lambda_max(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("elastic_net.alpha must be > 0 for lambda_max");
  const double n = static_cast<double>(z.rows());
  return (z.transpose() * y).cwiseAbs().maxCoeff() / n / alpha;
}

CoordinateDescentResult elastic_net_cd(const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                       double lambda, double alpha, const Eigen::VectorXd* warm,
                                       int max_sweeps, double tolerance, bool record_objective) {
  const auto m = moments_of(z, y);
  Eigen::VectorXd beta = warm ? *warm : Eigen::VectorXd::Zero(z.cols());
  Recorder record;
  if (record_objective) {
    record = [&](const Eigen::VectorXd& b, const Eigen::VectorXd&) {
      return elastic_net_objective(z, y, b, lambda, alpha);
    };
  }
  auto r = cd_core(m, lambda, alpha, std::move(beta), max_sweeps, tolerance, record);
  if (!r.converged) warn("elastic net: coordinate descent did not converge; returning last iterate");
  return r;
}

std::vector<double> lambda_grid(double lambda_max, int count, double min_ratio) {
  if (count < 1) throw std::invalid_argument("elastic_net.n_lambda must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lambda_max;
    return grid;
  }
  const double lo = std::log(lambda_max * min_ratio);
  const double hi = std::log(lambda_max);
  for (int i = 0; i < count; ++i) {
    grid[static_cast<std::size_t>(i)] = std::exp(hi + (lo - hi) * i / (count - 1));
  }
  grid.front() = lambda_max;
  return grid;
}

FittedModel fit_elastic_net(const DesignMatrix& train, const ElasticNetOptions& o) {
  if (!(o.alpha > 0 && o.alpha <= 1)) throw std::invalid_argument("elastic_net.alpha must be in (0, 1]");
  if (o.folds < 2 && !o.lambda) throw std::invalid_argument("elastic_net.folds must be >= 2");
  const Eigen::Index n = train.size();
  const Eigen::Index p = train.cols();
  if (n == 0) throw std::invalid_argument("elastic net fit on an empty training set");

  FittedModel m;
  m.kind = ModelKind::elastic_net;
  m.columns = train.labels;
  const auto s = standardization_of(train.x);
  m.mean = s.mean;
  m.scale = s.scale;
  const double ybar = train.y.mean();
  m.intercept = ybar;
  const Eigen::MatrixXd z = standardize(train.x, s);
  const Eigen::VectorXd yc = train.y.array() - ybar;
  const auto full = moments_of(z, yc);

  int unconverged = 0;
  double chosen = 0.0;
  Eigen::VectorXd beta;
  if (o.lambda) {
    chosen = *o.lambda;
    auto r = cd_core(full, chosen, o.alpha, Eigen::VectorXd::Zero(p), o.max_sweeps, o.tolerance);
    if (!r.converged) ++unconverged;
    beta = std::move(r.beta);
  } else {
    const double lmax = full.xty.cwiseAbs().maxCoeff() / o.alpha;
    const auto grid = lambda_grid(lmax > 0 ? lmax : 1.0, o.n_lambda, o.lambda_min_ratio);
    std::vector<double> sse(grid.size(), 0.0);
    for (int f = 0; f < o.folds; ++f) {
      const Eigen::Index lo = n * f / o.folds;
      const Eigen::Index hi = n * (f + 1) / o.folds;
      std::vector<Eigen::Index> tr;
      std::vector<Eigen::Index> te;
      for (Eigen::Index i = 0; i < n; ++i) (i >= lo && i < hi ? te : tr).push_back(i);
      if (tr.empty() || te.empty()) continue;
      const Eigen::MatrixXd xtr = train.x(tr, Eigen::all);
      const Eigen::VectorXd ytr = train.y(tr);
      const auto fs = standardization_of(xtr);
      const double fmean = ytr.mean();
      const auto fm = moments_of(standardize(xtr, fs), Eigen::VectorXd(ytr.array() - fmean));
      const Eigen::MatrixXd zte = standardize(Eigen::MatrixXd(train.x(te, Eigen::all)), fs);
      const Eigen::VectorXd yte = train.y(te);
      const auto path = cd_path(fm, grid, grid.size(), o.alpha, o, unconverged);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        sse[i] += ((yte.array() - fmean).matrix() - zte * path[i].beta).squaredNorm();
      }
    }
    const auto best = static_cast<std::size_t>(std::min_element(sse.begin(), sse.end()) - sse.begin());
    chosen = grid[best];
    auto path = cd_path(full, grid, best + 1, o.alpha, o, unconverged);
    beta = std::move(path.back().beta);
    m.info["cv_mse"] = sse[best] / static_cast<double>(n);
    m.info["lambda_max"] = lmax;
  }
  if (unconverged > 0) {
    warn("elastic net: " + std::to_string(unconverged) +
         " coordinate-descent runs hit the sweep limit; best iterates used");
  }
  m.coefficients = beta;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (beta(j) != 0.0) m.selected.push_back(train.labels[static_cast<std::size_t>(j)]);
  }
  m.info["lambda"] = chosen;
  m.info["alpha"] = o.alpha;
  m.info["kkt"] = gram_kkt(full, beta, full.gram * beta, chosen, o.alpha);
  return m;
}

}  // namespace wztt
