#include "wztt/arx.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "wztt/csv.hpp"
#include "wztt/diagnostics.hpp"

namespace wztt {
namespace {

struct Source {
  std::string name;
  int input = -1;  // -1 for the TT_wz series, else index into exogenous()
  int lags = 0;
};

std::vector<Source> sources(const ArxConfig& c) {
  std::vector<Source> out{{std::string(kTargetName), -1, c.n_a}};
  const auto& names = exogenous_names();
  for (int i = 0; i < kExogenousCount; ++i) {
    out.push_back({names[static_cast<std::size_t>(i)], i, c.n_b[static_cast<std::size_t>(i)]});
  }
  return out;
}

bool known_variable(std::string_view v) {
  if (v == kTargetName) return true;
  const auto& names = exogenous_names();
  return std::find(names.begin(), names.end(), v) != names.end();
}

std::string lead_label(int lahead) { return std::string(kTargetName) + " lead" + std::to_string(lahead); }

}  // namespace

void ArxConfig::validate() const {
  if (lahead < 1) throw std::invalid_argument("arx.lahead must be >= 1");
  if (n_a < 1) throw std::invalid_argument("arx.n_a must be >= 1");
  for (std::size_t i = 0; i < n_b.size(); ++i) {
    if (n_b[i] < 1) {
      throw std::invalid_argument("arx.n_b[" + std::to_string(i) + "] (" + exogenous_names()[i] +
                                  ") must be >= 1");
    }
  }
}

Eigen::Index DesignMatrix::column(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw std::out_of_range("design has no column \"" + std::string(label) + "\"");
  return static_cast<Eigen::Index>(it - labels.begin());
}

DesignMatrix DesignMatrix::subset(std::span<const Eigen::Index> indices) const {
  DesignMatrix out;
  out.labels = labels;
  out.lahead = lahead;
  const auto n = static_cast<Eigen::Index>(indices.size());
  out.x.resize(n, cols());
  out.y.resize(n);
  out.current.resize(n);
  out.rows.reserve(indices.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::Index src = indices[static_cast<std::size_t>(r)];
    out.x.row(r) = x.row(src);
    out.y(r) = y(src);
    out.current(r) = current(src);
    out.rows.push_back(rows[static_cast<std::size_t>(src)]);
  }
  return out;
}

std::string lag_label(std::string_view variable, int j) {
  return std::string(variable) + " lag" + std::to_string(j);
}

std::string variable_of(std::string_view label) {
  const auto space = label.find(' ');
  std::string_view v = label.substr(0, space);
  if (space != std::string_view::npos) {
    const auto suffix = label.substr(space + 1);
    int lag = 0;
    const bool ok =
        suffix.starts_with("lag") &&
        std::from_chars(suffix.data() + 3, suffix.data() + suffix.size(), lag).ec == std::errc{} &&
        suffix.size() > 3;
    if (!ok) throw std::invalid_argument("unknown column label \"" + std::string(label) + "\"");
  }
  if (!known_variable(v)) throw std::invalid_argument("unknown column label \"" + std::string(label) + "\"");
  return std::string(v);
}

std::vector<int> column_to_rsus(std::string_view label) {
  const auto v = variable_of(label);
  if (v.starts_with("TT_") && v != kTargetName) {
    const int i = std::stoi(v.substr(3, v.size() - 5));
    return {1, i};
  }
  if (v == "UpstreamFlow") return {kRsuCount};
  return {1};
}

DesignMatrix build_design(std::span<const FeatureWindow> features, const ArxConfig& config) {
  config.validate();
  const auto srcs = sources(config);
  const int offset = config.include_current ? 0 : 1;
  int max_lag = 0;
  DesignMatrix m;
  m.lahead = config.lahead;
  for (const auto& s : srcs) {
    max_lag = std::max(max_lag, s.lags);
    for (int j = 0; j < s.lags; ++j) m.labels.push_back(lag_label(s.name, j + offset));
  }
  const int earliest = max_lag - 1 + offset;  // first t whose deepest lag is at index 0

  // Day boundaries, checking the layout the lags depend on.
  std::vector<std::pair<std::size_t, std::size_t>> days;
  for (std::size_t i = 0; i < features.size();) {
    std::size_t j = i;
    while (j < features.size() && features[j].month == features[i].month &&
           features[j].replication == features[i].replication) {
      if (features[j].t != static_cast<int>(j - i)) {
        throw std::invalid_argument("features for month " + std::to_string(features[i].month) +
                                    " replication " + std::to_string(features[i].replication) +
                                    " are not consecutive from t = 0");
      }
      ++j;
    }
    days.emplace_back(i, j);
    i = j;
  }

  std::vector<std::size_t> anchors;
  for (const auto& [b, e] : days) {
    const int n = static_cast<int>(e - b);
    for (int t = earliest; t + config.lahead < n; ++t) anchors.push_back(b + static_cast<std::size_t>(t));
  }
  if (anchors.empty()) warn("series too short for the requested lags; design matrix is empty");

  const auto rows = static_cast<Eigen::Index>(anchors.size());
  m.x.resize(rows, static_cast<Eigen::Index>(m.labels.size()));
  m.y.resize(rows);
  m.current.resize(rows);
  m.rows.reserve(anchors.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t a = anchors[static_cast<std::size_t>(r)];
    Eigen::Index c = 0;
    for (const auto& s : srcs) {
      for (int j = 0; j < s.lags; ++j) {
        const auto& f = features[a - static_cast<std::size_t>(j + offset)];
        m.x(r, c++) = s.input < 0 ? f.tt_wz : f.exogenous()[static_cast<std::size_t>(s.input)];
      }
    }
    m.y(r) = features[a + static_cast<std::size_t>(config.lahead)].tt_wz;
    m.current(r) = features[a].tt_wz;
    m.rows.push_back({features[a].month, features[a].replication, features[a].t});
  }
  return m;
}

std::pair<DesignMatrix, DesignMatrix> split(const DesignMatrix& matrix, int train_last_month) {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  for (std::size_t i = 0; i < matrix.rows.size(); ++i) {
    (matrix.rows[i].month <= train_last_month ? train : test).push_back(static_cast<Eigen::Index>(i));
  }
  if (test.empty()) warn("test split is empty (no rows after month " + std::to_string(train_last_month) + ")");
  if (train.empty()) warn("training split is empty");
  return {matrix.subset(train), matrix.subset(test)};
}

std::pair<std::size_t, std::size_t> split_counts(std::span<const FeatureWindow> features,
                                                 int train_last_month) {
  std::size_t train = 0;
  for (const auto& f : features) train += f.month <= train_last_month ? 1 : 0;
  return {train, features.size() - train};
}

void write_design_csv(const std::filesystem::path& path, const DesignMatrix& m) {
  csv::Writer w(path);
  std::vector<std::string> header = {"month", "replication", "t"};
  header.insert(header.end(), m.labels.begin(), m.labels.end());
  header.push_back(lead_label(m.lahead));
  header.push_back(lag_label(kTargetName, 0) + " current");
  w.row(header);
  std::vector<std::string> fields;
  for (Eigen::Index r = 0; r < m.size(); ++r) {
    const auto& p = m.rows[static_cast<std::size_t>(r)];
    fields = {std::to_string(p.month), std::to_string(p.replication), std::to_string(p.t)};
    for (Eigen::Index c = 0; c < m.cols(); ++c) fields.push_back(csv::format(m.x(r, c)));
    fields.push_back(csv::format(m.y(r)));
    fields.push_back(csv::format(m.current(r)));
    w.row(fields);
  }
}

DesignMatrix read_design_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  const std::string lead_prefix = std::string(kTargetName) + " lead";
  if (h.size() < 6 || h[0] != "month" || h[1] != "replication" || h[2] != "t" ||
      !h[h.size() - 2].starts_with(lead_prefix)) {
    throw csv::ParseError(path.string() + ": not a design matrix file");
  }
  DesignMatrix m;
  m.lahead = static_cast<int>(csv::parse_int(std::string_view(h[h.size() - 2]).substr(lead_prefix.size())));
  m.labels.assign(h.begin() + 3, h.end() - 2);
  for (const auto& l : m.labels) variable_of(l);
  const auto rows = static_cast<Eigen::Index>(table.rows.size());
  const auto cols = static_cast<Eigen::Index>(m.labels.size());
  m.x.resize(rows, cols);
  m.y.resize(rows);
  m.current.resize(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    m.rows.push_back({static_cast<int>(csv::parse_int(row[0])),
                      static_cast<int>(csv::parse_int(row[1])),
                      static_cast<int>(csv::parse_int(row[2]))});
    for (Eigen::Index c = 0; c < cols; ++c) m.x(r, c) = csv::parse_double(row[static_cast<std::size_t>(3 + c)]);
    m.y(r) = csv::parse_double(row[static_cast<std::size_t>(3 + cols)]);
    m.current(r) = csv::parse_double(row[static_cast<std::size_t>(4 + cols)]);
  }
  return m;
}

void write_column_map_csv(const std::filesystem::path& path, const DesignMatrix& m) {
  csv::Writer w(path);
  w.row(std::vector<std::string>{"label", "variable", "lag", "rsus"});
  for (const auto& label : m.labels) {
    std::string rsus;
    for (int id : column_to_rsus(label)) {
      if (!rsus.empty()) rsus += ';';
      rsus += std::to_string(id);
    }
    const auto lag = label.substr(label.find(" lag") + 4);
    w.row(label, variable_of(label), lag, rsus);
  }
}

}  // namespace wztt
