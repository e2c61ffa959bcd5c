#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "wztt/diagnostics.hpp"
#include "wztt/learners.hpp"

namespace wztt {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Term {
  std::vector<HingeFactor> factors;
  bool uses(int column) const {
    return std::any_of(factors.begin(), factors.end(),
                       [&](const HingeFactor& f) { return f.column == column; });
  }
};

struct Candidate {
  double reduction = 0.0;
  int parent = -1;
  int column = -1;
  double knot = 0.0;
};

// Forward-pass state: basis values and an orthonormal basis of their span.
class ForwardPass {
 public:
  ForwardPass(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_terms)
      : x_(x), n_(x.rows()), q_(x.rows(), max_terms), values_(x.rows(), max_terms) {
    terms_.push_back(Term{});
    values_.col(0).setOnes();
    q_.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n_)));
    m_ = 1;
    r_ = y.array() - y.mean();
    order_.resize(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index v = 0; v < x.cols(); ++v) {
      auto& o = order_[static_cast<std::size_t>(v)];
      o.resize(static_cast<std::size_t>(n_));
      std::iota(o.begin(), o.end(), Eigen::Index{0});
      std::stable_sort(o.begin(), o.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return x(a, v) > x(b, v); });
    }
  }

  double rss() const { return r_.squaredNorm(); }
  int terms() const { return static_cast<int>(terms_.size()); }
  const std::vector<Term>& term_list() const { return terms_; }
  Eigen::MatrixXd basis_values() const { return values_.leftCols(terms()); }

  Candidate best_candidate(int max_degree) const {
    Candidate best;
    Eigen::VectorXd a(m_ + 1);
    Eigen::VectorXd bq(m_ + 1);
    for (int p = 0; p < terms(); ++p) {
      if (static_cast<int>(terms_[static_cast<std::size_t>(p)].factors.size()) >= max_degree) continue;
      const Eigen::VectorXd b = values_.col(p);
      for (Eigen::Index v = 0; v < x_.cols(); ++v) {
        if (terms_[static_cast<std::size_t>(p)].uses(static_cast<int>(v))) continue;
        scan(p, v, b, a, bq, best);
      }
    }
    return best;
  }

  /// Adds b*(x-t)+ and b*(t-x)+, skipping any that is dependent on the basis.
  /// Returns the number of terms added.
  int add_pair(const Candidate& c, int max_terms) {
    int added = 0;
    for (int sign : {1, -1}) {
      if (terms() >= max_terms) break;
      Term t = terms_[static_cast<std::size_t>(c.parent)];
      t.factors.push_back({c.column, sign, c.knot});
      const Eigen::VectorXd h =
          values_.col(c.parent).array() *
          (static_cast<double>(sign) * (x_.col(c.column).array() - c.knot)).max(0.0);
      Eigen::VectorXd u = h;
      orthogonalize(u);
      const double nu = u.squaredNorm();
      if (!(nu > 1e-10 * h.squaredNorm()) || !(nu > 0)) continue;
      u /= std::sqrt(nu);
      values_.col(terms()) = h;
      q_.col(m_) = u;
      ++m_;
      r_ -= u.dot(r_) * u;
      terms_.push_back(std::move(t));
      ++added;
    }
    return added;
  }

 private:
  void orthogonalize(Eigen::VectorXd& u) const {
    for (int pass = 0; pass < 2; ++pass) {
      const Eigen::VectorXd coef = q_.leftCols(m_).transpose() * u;
      u.noalias() -= q_.leftCols(m_) * coef;
    }
  }

  // Sweep knots of variable v under parent p from the largest value down.
  // The pair {b*(x-t)+, b*(t-x)+} spans the same space as {b*x, b*(x-t)+}
  // given b, so the reduction is that of b*x plus that of the hinge on top.
  void scan(int p, Eigen::Index v, const Eigen::VectorXd& b, Eigen::VectorXd& a,
            Eigen::VectorXd& bq, Candidate& best) const {
    const Eigen::VectorXd c = b.array() * x_.col(v).array();
    Eigen::VectorXd u = c;
    orthogonalize(u);
    const double nu = u.squaredNorm();
    double red_lin = 0.0;
    Eigen::VectorXd r = r_;
    const bool lin = nu > 1e-10 * c.squaredNorm() && nu > 0;
    if (lin) {
      u /= std::sqrt(nu);
      const double ur = u.dot(r);
      red_lin = ur * ur;
      r -= ur * u;
    }
    const Eigen::Index m = m_;
    a.setZero();
    bq.setZero();
    double sxr = 0.0, sr = 0.0, sbb = 0.0, sbbx = 0.0, sbbxx = 0.0, au = 0.0, bu = 0.0;
    const auto& order = order_[static_cast<std::size_t>(v)];
    bool any = false;
    std::size_t k = 0;
    while (k < order.size()) {
      const double t = x_(order[k], v);
      if (any) {
        const double hr = sxr - t * sr;
        const double hh = sbbxx - 2.0 * t * sbbx + t * t * sbb;
        double proj = (a.head(m) - t * bq.head(m)).squaredNorm();
        if (lin) proj += (au - t * bu) * (au - t * bu);
        const double den = hh - proj;
        if (hh > 0 && den > 1e-9 * hh) {
          const double total = red_lin + hr * hr / den;
          if (total > best.reduction) best = {total, p, static_cast<int>(v), t};
        }
      }
      for (; k < order.size() && x_(order[k], v) == t; ++k) {
        const Eigen::Index i = order[k];
        const double bi = b(i);
        if (bi == 0.0) continue;
        const double xi = x_(i, v);
        const double bx = bi * xi;
        sxr += bx * r(i);
        sr += bi * r(i);
        sbb += bi * bi;
        sbbx += bi * bx;
        sbbxx += bx * bx;
        a.head(m).noalias() += bx * q_.row(i).head(m).transpose();
        bq.head(m).noalias() += bi * q_.row(i).head(m).transpose();
        if (lin) {
          au += bx * u(i);
          bu += bi * u(i);
        }
        any = true;
      }
    }
  }

  const Eigen::MatrixXd& x_;
  Eigen::Index n_;
  RowMajor q_;
  Eigen::MatrixXd values_;
  Eigen::Index m_ = 0;
  Eigen::VectorXd r_;
  std::vector<Term> terms_;
  std::vector<std::vector<Eigen::Index>> order_;
};

double residual_ss(const Eigen::MatrixXd& b, const Eigen::VectorXd& y, Eigen::VectorXd* weights) {
  const Eigen::VectorXd w = b.colPivHouseholderQr().solve(y);
  if (weights) *weights = w;
  return (y - b * w).squaredNorm();
}

}  // namespace

double mars_gcv(double rss, Eigen::Index n, int terms, double penalty) {
  const double c = terms + penalty * (terms - 1);
  const double nn = static_cast<double>(n);
  if (!(c < nn)) return std::numeric_limits<double>::infinity();
  const double f = 1.0 - c / nn;
  return rss / nn / (f * f);
}

FittedModel fit_mars(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                     std::vector<std::string> labels, const MarsOptions& o, MarsTrace* trace) {
  const Eigen::Index n = x.rows();
  if (n == 0) throw std::invalid_argument("MARS fit on an empty training set");
  if (o.max_degree < 1) throw std::invalid_argument("mars.max_degree must be >= 1");
  const int max_terms = o.max_terms > 0 ? o.max_terms : static_cast<int>(2 * x.cols() + 1);

  ForwardPass fwd(x, y, max_terms);
  const double tss = fwd.rss();
  while (fwd.terms() < max_terms && tss > 0) {
    const auto c = fwd.best_candidate(o.max_degree);
    if (c.parent < 0 || !(c.reduction > 1e-12 * tss)) break;
    if (fwd.add_pair(c, max_terms) == 0) break;
  }

  const Eigen::MatrixXd basis = fwd.basis_values();
  const int full_terms = static_cast<int>(basis.cols());
  Eigen::VectorXd weights;
  const double rss_full = residual_ss(basis, y, &weights);
  const double gcv_full = mars_gcv(rss_full, n, full_terms, o.penalty);

  // Backward elimination in the space of the full model's R factor: with
  // basis = Q R and z = Q'y, RSS(S) = RSS(full) + min |z - R_S w|^2.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis);
  const Eigen::MatrixXd rfull = qr.matrixQR().topRows(full_terms).triangularView<Eigen::Upper>();
  const Eigen::VectorXd z = (qr.householderQ().transpose() * y).head(full_terms);

  std::vector<int> current(static_cast<std::size_t>(full_terms));
  std::iota(current.begin(), current.end(), 0);
  std::vector<int> best_set = current;
  double best_gcv = gcv_full;
  double rss = rss_full;
  while (current.size() > 1) {
    const Eigen::MatrixXd rs = rfull(Eigen::all, current);
    Eigen::HouseholderQR<Eigen::MatrixXd> sqr(rs);
    const auto k = static_cast<Eigen::Index>(current.size());
    const Eigen::MatrixXd upper = sqr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    const Eigen::VectorXd zs = (sqr.householderQ().transpose() * z).head(k);
    const Eigen::VectorXd w = upper.triangularView<Eigen::Upper>().solve(zs);
    const Eigen::MatrixXd rinv =
        upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    std::size_t drop = 0;
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < current.size(); ++j) {  // the constant term stays
      const auto jj = static_cast<Eigen::Index>(j);
      const double d = w(jj) * w(jj) / rinv.row(jj).squaredNorm();
      if (d < delta) {
        delta = d;
        drop = j;
      }
    }
    current.erase(current.begin() + static_cast<std::ptrdiff_t>(drop));
    rss += delta;
    const double g = mars_gcv(rss, n, static_cast<int>(current.size()), o.penalty);
    if (g <= best_gcv) {
      best_gcv = g;
      best_set = current;
    }
  }

  FittedModel m;
  m.kind = ModelKind::mars;
  m.columns = std::move(labels);
  m.mean = Eigen::VectorXd::Zero(x.cols());
  m.scale = Eigen::VectorXd::Ones(x.cols());
  m.coefficients = Eigen::VectorXd::Zero(x.cols());
  const Eigen::MatrixXd kept = basis(Eigen::all, best_set);
  const double rss_kept = residual_ss(kept, y, &weights);
  double gcv = mars_gcv(rss_kept, n, static_cast<int>(best_set.size()), o.penalty);
  if (best_set.size() == static_cast<std::size_t>(full_terms)) gcv = gcv_full;
  if (gcv > gcv_full) {
    // Rounding in the R-space bookkeeping picked a worse subset; keep the full model.
    warn("mars: pruned model GCV above forward model after refit; keeping forward model");
    best_set.resize(static_cast<std::size_t>(full_terms));
    std::iota(best_set.begin(), best_set.end(), 0);
    residual_ss(basis, y, &weights);
    gcv = gcv_full;
  }

  std::vector<bool> used(static_cast<std::size_t>(x.cols()), false);
  const auto& terms = fwd.term_list();
  for (std::size_t i = 0; i < best_set.size(); ++i) {
    const auto& t = terms[static_cast<std::size_t>(best_set[i])];
    const double w = weights(static_cast<Eigen::Index>(i));
    if (t.factors.empty()) {
      m.intercept = w;
      continue;
    }
    m.basis.push_back({t.factors, w});
    for (const auto& f : t.factors) used[static_cast<std::size_t>(f.column)] = true;
  }
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (used[j]) m.selected.push_back(m.columns[j]);
  }
  m.info["gcv"] = gcv;
  m.info["forward_gcv"] = gcv_full;
  m.info["forward_terms"] = full_terms;
  m.info["terms"] = static_cast<double>(best_set.size());
  if (trace) *trace = {gcv_full, gcv, full_terms, static_cast<int>(best_set.size())};
  return m;
}

FittedModel fit_mars(const DesignMatrix& train, const MarsOptions& options, MarsTrace* trace) {
  return fit_mars(train.x, train.y, train.labels, options, trace);
}

}  // namespace wztt
