#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "bagbayes/bagging.hpp"
#include "bagbayes/dataset.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/overlap.hpp"
#include "bagbayes/randstream.hpp"
#include "bagbayes/version.hpp"

namespace bagbayes {

// Shortest decimal string that round-trips to the same double.  Keeps CSV
// output byte-stable across runs and platforms.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// Strictly tabular CSV: one header row, comma separators, LF line endings,
// no quoting (emitted fields never contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("CsvTable: row width " + std::to_string(row.size()) +
                                  " does not match header width " +
                                  std::to_string(header.size()));
    }
    rows.push_back(std::move(row));
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i > 0) out += ',';
      out += header[i];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) out += ',';
        out += row[i];
      }
      out += '\n';
    }
    return out;
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open for reading: " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return content;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_csv_double(const std::string& field, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw std::invalid_argument("dataset CSV row " + std::to_string(row) + ", column " +
                                std::to_string(col) + ": not a number: '" + field + "'");
  }
  return value;
}

}  // namespace detail

// Header x_0..x_{D-1} for location data; z_0..z_{D-1},y for regression data.
inline std::string dataset_to_csv(const Dataset& data) {
  CsvTable table;
  const bool regression = data.kind() == Dataset::Kind::regression;
  const Eigen::MatrixXd& z = regression ? data.regressors() : data.observations();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    table.header.push_back((regression ? "z_" : "x_") + std::to_string(j));
  }
  if (regression) table.header.push_back("y");
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < z.cols(); ++j) row.push_back(format_double(z(i, j)));
    if (regression) row.push_back(format_double(data.outcomes()(i)));
    table.add_row(std::move(row));
  }
  return table.to_string();
}

// Parses a dataset CSV, inferring the kind from the header.  Malformed input
// throws invalid_argument naming the offending row and column (1-based, the
// header is row 1).
inline Dataset parse_dataset_csv(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
    start = nl + 1;
  }
  if (lines.empty()) throw std::invalid_argument("dataset CSV: empty file");

  const std::vector<std::string> header = detail::split_csv_line(lines.front());
  bool regression = false;
  std::size_t dim = 0;
  if (header.back() == "y") {
    regression = true;
    dim = header.size() - 1;
    if (dim == 0) throw std::invalid_argument("dataset CSV row 1: no regressor columns before y");
    for (std::size_t j = 0; j < dim; ++j) {
      if (header[j] != "z_" + std::to_string(j)) {
        throw std::invalid_argument("dataset CSV row 1, column " + std::to_string(j + 1) +
                                    ": expected header z_" + std::to_string(j) + ", found '" +
                                    header[j] + "'");
      }
    }
  } else {
    dim = header.size();
    for (std::size_t j = 0; j < dim; ++j) {
      if (header[j] != "x_" + std::to_string(j)) {
        throw std::invalid_argument("dataset CSV row 1, column " + std::to_string(j + 1) +
                                    ": expected header x_" + std::to_string(j) +
                                    " (or a trailing y column), found '" + header[j] + "'");
      }
    }
  }

  const std::size_t n = lines.size() - 1;
  if (n == 0) throw std::invalid_argument("dataset CSV: no data rows");
  const std::size_t width = header.size();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  Eigen::VectorXd y(static_cast<Eigen::Index>(regression ? n : 0));
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::string> fields = detail::split_csv_line(lines[i + 1]);
    if (fields.size() != width) {
      throw std::invalid_argument("dataset CSV row " + std::to_string(i + 2) + ": expected " +
                                  std::to_string(width) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::parse_csv_double(fields[j], i + 2, j + 1);
    }
    if (regression) {
      y(static_cast<Eigen::Index>(i)) = detail::parse_csv_double(fields[dim], i + 2, dim + 1);
    }
  }
  return regression ? Dataset::regression(std::move(z), std::move(y))
                    : Dataset::location(std::move(z));
}

inline Dataset read_dataset_csv(const std::string& path) {
  try {
    return parse_dataset_csv(read_text_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  write_text_file(path, dataset_to_csv(data));
}

// ---- JSON serialization -------------------------------------------------

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json seed_path_json(const SeedPath& sp) {
  nlohmann::json out;
  out["root_seed"] = sp.root_seed;
  out["path"] = sp.path;
  return out;
}

inline nlohmann::json component_json(const PosteriorComponent& c) {
  nlohmann::json out;
  if (const auto* g = std::get_if<GaussianPosterior>(&c)) {
    out["family"] = "gaussian";
    out["mean"] = vector_json(g->mean());
    out["cov"] = matrix_json(g->cov());
    return out;
  }
  const auto& nig = std::get<NIGPosterior>(c);
  out["family"] = "normal-inverse-gamma";
  out["mu"] = vector_json(nig.mu());
  out["lambda"] = matrix_json(nig.lambda());
  out["a"] = nig.a();
  out["b"] = nig.b();
  return out;
}

inline nlohmann::json bagged_posterior_json(const BaggedPosterior& bp) {
  bp.validate();
  nlohmann::json out;
  out["m"] = bp.m;
  out["exact_enumeration"] = bp.exact_enumeration;
  out["skipped"] = bp.skipped;
  out["weights"] = bp.weights;
  if (!bp.exact_enumeration) {
    out["root"] = seed_path_json(bp.root);
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& sp : bp.component_seeds) seeds.push_back(seed_path_json(sp));
    out["component_seeds"] = std::move(seeds);
  }
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : bp.components) comps.push_back(component_json(c));
  out["components"] = std::move(comps);
  return out;
}

inline nlohmann::json bagged_moments_json(const BaggedMoments& m) {
  nlohmann::json out;
  out["mean"] = vector_json(m.mean);
  out["cov"] = matrix_json(m.cov);
  out["within_cov"] = matrix_json(m.within_cov);
  out["between_cov"] = matrix_json(m.between_cov);
  return out;
}

// One row per (method, direction, level); method column first so several
// reports can share one file.
inline CsvTable overlap_reports_csv(
    const std::vector<std::pair<std::string, const OverlapReport*>>& reports) {
  CsvTable table;
  table.header = {"method", "direction_id", "level",     "overlap_prob",
                  "bound",  "replicates",   "violated"};
  for (const auto& [method, report] : reports) {
    for (const OverlapRow& row : report->rows) {
      table.add_row({method, row.direction_id, format_double(row.level),
                     format_double(row.overlap_prob), format_double(row.bound),
                     std::to_string(row.replicates), row.violated ? "true" : "false"});
    }
  }
  return table;
}

// ---- Provenance sidecars ------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    hash ^= static_cast<std::uint64_t>(c);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string hex_u64(std::uint64_t x) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[x & 0xF];
    x >>= 4;
  }
  return out;
}

// Writes <path>.meta.json describing how <path> was produced.  Deliberately
// carries no timestamps so reruns stay byte-identical.
inline void write_sidecar(const std::string& path, const std::string& command,
                          const nlohmann::json& config, std::uint64_t root_seed) {
  nlohmann::json meta;
  meta["artifact_version"] = version_string;
  meta["command"] = command;
  meta["config_hash"] = hex_u64(fnv1a64(config.dump()));
  meta["root_seed"] = root_seed;
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

}  // namespace bagbayes
