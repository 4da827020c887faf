#include "sae/estimate_table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <tuple>

#include "sae/error.hpp"
#include "sae/harness.hpp"

namespace sae {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_field(const std::string& field, std::size_t line_no) {
  const std::string t = trim(field);
  if (t.empty() || t == "NA" || t == "NaN") return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
    throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": bad number '" + t + "'");
  }
  return v;
}

struct ResponseColumns {
  std::string name;
  int y = -1;
  int se = -1;
  int moe = -1;
};

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cur));
      cur.clear();
    } else if (c != '\r' || quoted) {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::size_t DirectEstimateTable::n_observed() const {
  return static_cast<std::size_t>((y.array() == y.array()).count());
}

void DirectEstimateTable::validate() const {
  const auto n = y.rows();
  if (gamma.rows() != n || gamma.cols() != y.cols() || x.rows() != n ||
      region_ids.size() != static_cast<std::size_t>(n) || responses.size() != n_responses() ||
      covariates.size() != n_covariates()) {
    throw Error(ErrorKind::ShapeMismatch, "estimate table parts disagree in shape");
  }
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool has_y = !std::isnan(y(i, k));
      const bool has_g = !std::isnan(gamma(i, k));
      if (has_y != has_g) {
        throw Error(ErrorKind::ShapeMismatch,
                    "region " + region_ids[static_cast<std::size_t>(i)] + ", response " +
                        responses[static_cast<std::size_t>(k)] + ": estimate and standard error must be missing together");
      }
      if (has_g && !(gamma(i, k) > 0.0)) {
        throw Error(ErrorKind::NonPositiveScale,
                    "region " + region_ids[static_cast<std::size_t>(i)] + ": standard error must be positive");
      }
    }
  }
  if (!x.allFinite()) throw Error(ErrorKind::ShapeMismatch, "covariates must be complete");
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols()) {
    throw Error(ErrorKind::SingularDesign, "design matrix has rank " + std::to_string(qr.rank()) +
                                               " < " + std::to_string(x.cols()) + " columns");
  }
}

void ensure_intercept(DirectEstimateTable& table) {
  for (Eigen::Index p = 0; p < table.x.cols(); ++p) {
    if ((table.x.col(p).array() == 1.0).all()) return;
  }
  Eigen::MatrixXd x(table.x.rows(), table.x.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(table.x.cols()) = table.x;
  table.x = std::move(x);
  table.covariates.insert(table.covariates.begin(), "intercept");
}

DirectEstimateTable read_estimate_csv(std::istream& in, const RegionGraph& graph,
                                      const CsvOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty() || header[0] != "region_id") {
    throw Error(ErrorKind::Parse, "header must start with region_id");
  }
  std::vector<ResponseColumns> responses;
  std::map<std::string, std::size_t> response_index;
  std::vector<std::pair<std::string, int>> covariates;
  auto response = [&](const std::string& name) -> ResponseColumns& {
    auto [it, fresh] = response_index.emplace(name, responses.size());
    if (fresh) responses.push_back({name});
    return responses[it->second];
  };
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string& h = header[c];
    const int col = static_cast<int>(c);
    if (h.rfind("y_", 0) == 0) {
      response(h.substr(2)).y = col;
    } else if (h.rfind("se_", 0) == 0) {
      response(h.substr(3)).se = col;
    } else if (h.rfind("moe_", 0) == 0) {
      response(h.substr(4)).moe = col;
    } else if (h.rfind("x_", 0) == 0) {
      covariates.emplace_back(h.substr(2), col);
    } else {
      throw Error(ErrorKind::Parse, "unrecognized column '" + h + "'");
    }
  }
  if (responses.empty()) throw Error(ErrorKind::Parse, "no y_<name> columns");
  for (const auto& r : responses) {
    if (r.y < 0 || (r.se < 0) == (r.moe < 0)) {
      throw Error(ErrorKind::Parse, "response '" + r.name + "' needs y_ and exactly one of se_/moe_");
    }
  }

  const auto n = static_cast<Eigen::Index>(graph.size());
  const auto k = static_cast<Eigen::Index>(responses.size());
  DirectEstimateTable t;
  t.region_ids = graph.ids();
  for (const auto& r : responses) t.responses.push_back(r.name);
  for (const auto& c : covariates) t.covariates.push_back(c.first);
  t.y = Eigen::MatrixXd::Constant(n, k, kNaN);
  t.gamma = Eigen::MatrixXd::Constant(n, k, kNaN);
  t.x = Eigen::MatrixXd::Constant(n, static_cast<Eigen::Index>(covariates.size()), kNaN);
  std::vector<bool> seen(graph.size(), false);

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    if (!graph.contains(fields[0])) {
      if (options.skip_unknown_regions) continue;
      throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": region '" + fields[0] +
                                        "' is not in the graph");
    }
    const std::size_t i = graph.index_of(fields[0]);
    if (seen[i]) throw Error(ErrorKind::Parse, "duplicate row for region '" + fields[0] + "'");
    seen[i] = true;
    const auto ii = static_cast<Eigen::Index>(i);
    for (Eigen::Index kk = 0; kk < k; ++kk) {
      const auto& r = responses[static_cast<std::size_t>(kk)];
      const auto yv = parse_field(fields[static_cast<std::size_t>(r.y)], line_no);
      const int sc = r.se >= 0 ? r.se : r.moe;
      auto sv = parse_field(fields[static_cast<std::size_t>(sc)], line_no);
      if (yv.has_value() != sv.has_value()) {
        throw Error(ErrorKind::ShapeMismatch, "line " + std::to_string(line_no) + ": response '" +
                                                  r.name + "' has only one of estimate/error");
      }
      if (!yv) continue;
      double se = r.moe >= 0 ? moe_to_se(*sv, options.moe_level) : *sv;
      double y = *yv;
      if (options.log_transform) std::tie(y, se) = delta_log(y, se);
      t.y(ii, kk) = y;
      t.gamma(ii, kk) = se;
    }
    for (std::size_t c = 0; c < covariates.size(); ++c) {
      const auto v = parse_field(fields[static_cast<std::size_t>(covariates[c].second)], line_no);
      if (!v) {
        throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": covariate '" +
                                          covariates[c].first + "' is missing");
      }
      t.x(ii, static_cast<Eigen::Index>(c)) = *v;
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw Error(ErrorKind::ShapeMismatch, "no row for region '" + graph.ids()[i] + "'");
  }
  ensure_intercept(t);
  t.validate();
  return t;
}

DirectEstimateTable read_estimate_csv_file(const std::string& path, const RegionGraph& graph,
                                           const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  return read_estimate_csv(in, graph, options);
}

void write_estimate_csv(std::ostream& out, const DirectEstimateTable& table) {
  out << "region_id";
  for (const auto& r : table.responses) out << ",y_" << r << ",se_" << r;
  std::vector<Eigen::Index> cov_cols;
  for (std::size_t p = 0; p < table.covariates.size(); ++p) {
    if (table.covariates[p] == "intercept") continue;
    out << ",x_" << table.covariates[p];
    cov_cols.push_back(static_cast<Eigen::Index>(p));
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < table.n_regions(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    out << table.region_ids[i];
    for (Eigen::Index k = 0; k < table.y.cols(); ++k) {
      if (std::isnan(table.y(ii, k))) {
        out << ",,";
      } else {
        out << ',' << table.y(ii, k) << ',' << table.gamma(ii, k);
      }
    }
    for (Eigen::Index p : cov_cols) out << ',' << table.x(ii, p);
    out << '\n';
  }
}

}  // namespace sae
