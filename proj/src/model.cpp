#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wztt/csv.hpp"
#include "wztt/learners.hpp"

namespace wztt {
namespace {

constexpr std::string_view kMagic = "wztt-model 1";

std::string next_line(std::istream& in, std::string_view key) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("model file truncated before \"" + std::string(key) + "\"");
  if (line.rfind(std::string(key) + " ", 0) != 0 && line != key) {
    throw std::runtime_error("model file: expected \"" + std::string(key) + "\", got \"" + line + "\"");
  }
  return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ols: return "ols";
    case ModelKind::stepwise: return "stepwise";
    case ModelKind::elastic_net: return "elastic_net";
    case ModelKind::mars: return "mars";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  for (auto k : kAllModels) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown model kind \"" + std::string(text) + "\"");
}

double FittedModel::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  if (row.size() != static_cast<Eigen::Index>(columns.size())) {
    throw std::invalid_argument("row has " + std::to_string(row.size()) + " values, model expects " +
                                std::to_string(columns.size()));
  }
  double out = intercept;
  if (kind == ModelKind::mars) {
    for (const auto& term : basis) {
      double v = term.weight;
      for (const auto& f : term.factors) v *= std::max(0.0, f.sign * (row(f.column) - f.knot));
      out += v;
    }
    return out;
  }
  for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
    if (coefficients(j) != 0.0) out += coefficients(j) * ((row(j) - mean(j)) / scale(j));
  }
  return out;
}

Eigen::VectorXd FittedModel::predict(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict_row(x.row(i));
  return out;
}

Eigen::VectorXd FittedModel::predict(const DesignMatrix& design) const {
  std::vector<Eigen::Index> idx;
  idx.reserve(columns.size());
  for (const auto& c : columns) idx.push_back(design.column(c));
  return predict(Eigen::MatrixXd(design.x(Eigen::all, idx)));
}

Eigen::VectorXd FittedModel::raw_coefficients() const {
  if (kind == ModelKind::mars) throw std::logic_error("MARS models have no linear form");
  return coefficients.cwiseQuotient(scale);
}

double FittedModel::raw_intercept() const {
  return intercept - raw_coefficients().dot(mean);
}

void FittedModel::save(std::ostream& out) const {
  auto f = [](double v) { return csv::format(v); };
  out << kMagic << '\n';
  out << "kind " << to_string(kind) << '\n';
  out << "intercept " << f(intercept) << '\n';
  out << "columns " << columns.size() << '\n';
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out << "column " << f(coefficients(static_cast<Eigen::Index>(j))) << ' '
        << f(mean(static_cast<Eigen::Index>(j))) << ' ' << f(scale(static_cast<Eigen::Index>(j)))
        << ' ' << columns[j] << '\n';
  }
  out << "basis " << basis.size() << '\n';
  for (const auto& t : basis) {
    out << "term " << f(t.weight) << ' ' << t.factors.size();
    for (const auto& h : t.factors) out << ' ' << h.column << ' ' << h.sign << ' ' << f(h.knot);
    out << '\n';
  }
  out << "selected " << selected.size() << '\n';
  for (const auto& s : selected) out << "variable " << s << '\n';
  out << "info " << info.size() << '\n';
  for (const auto& [k, v] : info) out << "value " << f(v) << ' ' << k << '\n';
}

FittedModel FittedModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error("not a model file");
  FittedModel m;
  m.kind = parse_model_kind(next_line(in, "kind"));
  m.intercept = csv::parse_double(next_line(in, "intercept"));
  const auto ncol = csv::parse_int(next_line(in, "columns"));
  m.coefficients.resize(ncol);
  m.mean.resize(ncol);
  m.scale.resize(ncol);
  for (Eigen::Index j = 0; j < ncol; ++j) {
    const auto rest = next_line(in, "column");
    std::size_t pos = 0;
    double vals[3];
    for (double& v : vals) {
      const auto sp = rest.find(' ', pos);
      if (sp == std::string::npos) throw std::runtime_error("model file: bad column line");
      v = csv::parse_double(std::string_view(rest).substr(pos, sp - pos));
      pos = sp + 1;
    }
    m.coefficients(j) = vals[0];
    m.mean(j) = vals[1];
    m.scale(j) = vals[2];
    m.columns.push_back(rest.substr(pos));
  }
  const auto nbasis = csv::parse_int(next_line(in, "basis"));
  for (std::int64_t k = 0; k < nbasis; ++k) {
    const auto w = words(next_line(in, "term"));
    if (w.size() < 2) throw std::runtime_error("model file: bad term line");
    BasisFunction b;
    b.weight = csv::parse_double(w[0]);
    const auto nf = static_cast<std::size_t>(csv::parse_int(w[1]));
    if (w.size() != 2 + 3 * nf) throw std::runtime_error("model file: bad term line");
    for (std::size_t i = 0; i < nf; ++i) {
      HingeFactor h;
      h.column = static_cast<int>(csv::parse_int(w[2 + 3 * i]));
      h.sign = static_cast<int>(csv::parse_int(w[3 + 3 * i]));
      h.knot = csv::parse_double(w[4 + 3 * i]);
      if (h.column < 0 || h.column >= ncol) throw std::runtime_error("model file: factor column out of range");
      b.factors.push_back(h);
    }
    m.basis.push_back(std::move(b));
  }
  const auto nsel = csv::parse_int(next_line(in, "selected"));
  for (std::int64_t k = 0; k < nsel; ++k) m.selected.push_back(next_line(in, "variable"));
  const auto ninfo = csv::parse_int(next_line(in, "info"));
  for (std::int64_t k = 0; k < ninfo; ++k) {
    const auto rest = next_line(in, "value");
    const auto sp = rest.find(' ');
    m.info[rest.substr(sp + 1)] = csv::parse_double(std::string_view(rest).substr(0, sp));
  }
  return m;
}

void save_model(const std::filesystem::path& path, const FittedModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  model.save(out);
}

FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return FittedModel::load(in);
}

FittedModel fit_model(ModelKind kind, const DesignMatrix& train, const LearnerOptions& o) {
  switch (kind) {
    case ModelKind::ols: return fit_ols(train, o.ols);
    case ModelKind::stepwise: return fit_stepwise(train, o.stepwise);
    case ModelKind::elastic_net: return fit_elastic_net(train, o.elastic_net);
    case ModelKind::mars: return fit_mars(train, o.mars);
  }
  throw std::logic_error("unreachable");
}

DesignMatrix make_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         std::vector<std::string> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != x.cols() || y.size() != x.rows()) {
    throw std::invalid_argument("make_design: shape mismatch");
  }
  DesignMatrix d;
  d.labels = std::move(labels);
  d.x = x;
  d.y = y;
  d.current = Eigen::VectorXd::Zero(x.rows());
  d.rows.resize(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < d.rows.size(); ++i) d.rows[i].t = static_cast<int>(i);
  return d;
}

}  // namespace wztt
