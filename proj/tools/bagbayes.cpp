// Command-line front end: every experiment and calculator in the library,
// configured by JSON and/or flags, emitting strictly tabular CSVs with JSON
// provenance sidecars.  Exit codes: 0 success, 1 runtime failure, 2
// configuration error.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bagbayes/bagging.hpp"
#include "bagbayes/dataset.hpp"
#include "bagbayes/errors.hpp"
#include "bagbayes/experiments.hpp"
#include "bagbayes/io.hpp"
#include "bagbayes/models.hpp"
#include "bagbayes/overlap.hpp"
#include "bagbayes/sampler.hpp"
#include "bagbayes/simgen.hpp"
#include "bagbayes/version.hpp"

using nlohmann::json;

namespace {

// ---- config plumbing ------------------------------------------------------

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  const std::string text = bagbayes::read_text_file(path);
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) {
      throw std::invalid_argument("config " + path + ": top level must be a JSON object");
    }
    return doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
  for (const auto& item : obj.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      std::string known;
      for (const auto& k : allowed) {
        if (!known.empty()) known += ", ";
        known += k;
      }
      throw std::invalid_argument(context + ": unknown config key '" + item.key() +
                                  "' (accepted: " + known + ")");
    }
  }
}

double jnumber(const json& v, const std::string& name) {
  if (!v.is_number()) throw std::invalid_argument("config key '" + name + "': expected a number");
  return v.get<double>();
}

long jinteger(const json& v, const std::string& name) {
  if (!v.is_number_integer()) {
    throw std::invalid_argument("config key '" + name + "': expected an integer");
  }
  return v.get<long>();
}

bool jboolean(const json& v, const std::string& name) {
  if (!v.is_boolean()) throw std::invalid_argument("config key '" + name + "': expected a boolean");
  return v.get<bool>();
}

std::string jstring(const json& v, const std::string& name) {
  if (!v.is_string()) throw std::invalid_argument("config key '" + name + "': expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd jvector(const json& v, const std::string& name) {
  if (!v.is_array() || v.empty()) {
    throw std::invalid_argument("config key '" + name + "': expected a non-empty array");
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = jnumber(v[i], name + "[" + std::to_string(i) + "]");
  }
  return out;
}

Eigen::MatrixXd jmatrix(const json& v, const std::string& name) {
  if (!v.is_array() || v.empty() || !v[0].is_array() || v[0].empty()) {
    throw std::invalid_argument("config key '" + name +
                                "': expected a non-empty array of arrays");
  }
  const std::size_t cols = v[0].size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) {
      throw std::invalid_argument("config key '" + name + "': row " + std::to_string(i) +
                                  " is not an array of width " + std::to_string(cols));
    }
    for (std::size_t j = 0; j < cols; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          jnumber(v[i][j], name + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    }
  }
  return out;
}

// Resolves one scalar with flag > config > default precedence.
template <typename T, typename Getter>
void apply_config(const CLI::Option* opt, const json& cfg, const std::string& key, T& value,
                  Getter getter) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) value = getter(cfg.at(key), key);
}

std::uint64_t resolve_seed(const CLI::Option* seed_opt, const json& cfg, std::uint64_t value) {
  apply_config(seed_opt, cfg, "root_seed", value,
               [](const json& v, const std::string& name) -> std::uint64_t {
                 if (!v.is_number_integer()) {
                   throw std::invalid_argument("config key '" + name + "': expected an integer");
                 }
                 return v.get<std::uint64_t>();
               });
  if (const char* env = std::getenv("BAGBAYES_SEED")) {
    char* end = nullptr;
    const unsigned long long parsed = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw std::invalid_argument("BAGBAYES_SEED: not an unsigned integer: '" + std::string(env) +
                                  "'");
    }
    value = static_cast<std::uint64_t>(parsed);
  }
  return value;
}

// ---- model configuration ----------------------------------------------

struct ModelChoice {
  bagbayes::Model model;
  bool estimate_sigma2 = false;
};

// Model config schema:
//   {"kind": "nig", "a0": 2, "b0": 1, "lambda": 1}
//   {"kind": "flat", "sigma2": 1}            or {"kind": "flat", "estimate_sigma2": true}
//   {"kind": "location", "v": [[..]], "v0_inv": [[..]] (optional; flat prior when absent)}
ModelChoice parse_model(const json& m, bool allow_location, long location_dim) {
  if (!m.is_object()) throw std::invalid_argument("config key 'model': expected an object");
  const std::string kind = m.contains("kind") ? jstring(m.at("kind"), "model.kind") : "nig";
  if (kind == "nig") {
    reject_unknown_keys(m, {"kind", "a0", "b0", "lambda"}, "model (nig)");
    const double a0 = m.contains("a0") ? jnumber(m.at("a0"), "model.a0") : 2.0;
    const double b0 = m.contains("b0") ? jnumber(m.at("b0"), "model.b0") : 1.0;
    const double lambda = m.contains("lambda") ? jnumber(m.at("lambda"), "model.lambda") : 1.0;
    return {bagbayes::Model(bagbayes::NIGRegressionModel(a0, b0, lambda)), false};
  }
  if (kind == "flat") {
    reject_unknown_keys(m, {"kind", "sigma2", "estimate_sigma2"}, "model (flat)");
    const bool estimate =
        m.contains("estimate_sigma2") && jboolean(m.at("estimate_sigma2"), "model.estimate_sigma2");
    if (estimate && m.contains("sigma2")) {
      throw std::invalid_argument("model (flat): give sigma2 or estimate_sigma2, not both");
    }
    const double sigma2 = m.contains("sigma2") ? jnumber(m.at("sigma2"), "model.sigma2") : 1.0;
    return {bagbayes::Model(bagbayes::FlatLinRegModel(sigma2)), estimate};
  }
  if (kind == "location") {
    if (!allow_location) {
      throw std::invalid_argument("model (location): this command needs a regression model");
    }
    reject_unknown_keys(m, {"kind", "v", "v0_inv"}, "model (location)");
    Eigen::MatrixXd v;
    if (m.contains("v")) {
      v = jmatrix(m.at("v"), "model.v");
    } else if (location_dim > 0) {
      v = Eigen::MatrixXd::Identity(location_dim, location_dim);
    } else {
      throw std::invalid_argument("model (location): 'v' is required");
    }
    if (m.contains("v0_inv")) {
      return {bagbayes::Model(
                  bagbayes::GaussianLocationModel(v, jmatrix(m.at("v0_inv"), "model.v0_inv"))),
              false};
    }
    return {bagbayes::Model(bagbayes::GaussianLocationModel::flat_prior(v)), false};
  }
  throw std::invalid_argument("model.kind: expected 'nig', 'flat', or 'location', got '" + kind +
                              "'");
}

bagbayes::FKind parse_fkind(const std::string& s) {
  if (s == "linear") return bagbayes::FKind::linear;
  if (s == "nonlinear") return bagbayes::FKind::nonlinear;
  throw std::invalid_argument("f: expected 'linear' or 'nonlinear', got '" + s + "'");
}

bagbayes::GKind parse_gkind(const std::string& s) {
  if (s == "uncorrelated") return bagbayes::GKind::uncorrelated;
  if (s == "correlated") return bagbayes::GKind::correlated;
  if (s == "fixed-design") return bagbayes::GKind::fixed_design;
  throw std::invalid_argument("g: expected 'uncorrelated', 'correlated', or 'fixed-design', got '" +
                              s + "'");
}

std::string out_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void write_output(const std::string& dir, const std::string& file, const std::string& content,
                  const std::string& command, const json& resolved, std::uint64_t seed) {
  const std::string path = out_path(dir, file);
  bagbayes::write_text_file(path, content);
  bagbayes::write_sidecar(path, command, resolved, seed);
}

json report_rows_json(const bagbayes::OverlapReport& report) {
  json rows = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["direction_id"] = row.direction_id;
    r["level"] = row.level;
    r["overlap_prob"] = row.overlap_prob;
    r["bound"] = row.bound;
    r["replicates"] = row.replicates;
    r["violated"] = row.violated;
    rows.push_back(std::move(r));
  }
  return rows;
}

// 20 equal bins over [0, 1]; the final bin is closed above.
bagbayes::CsvTable overlap_histogram(
    const std::vector<std::pair<std::string, const bagbayes::OverlapReport*>>& reports,
    const std::vector<double>& levels) {
  constexpr int kBins = 20;
  bagbayes::CsvTable table;
  table.header = {"method", "level", "bin_lower", "bin_upper", "count"};
  for (const auto& [method, report] : reports) {
    for (double level : levels) {
      long counts[kBins] = {0};
      for (const auto& row : report->rows) {
        if (row.level != level) continue;
        int bin = static_cast<int>(row.overlap_prob * kBins);
        if (bin >= kBins) bin = kBins - 1;
        if (bin < 0) bin = 0;
        ++counts[bin];
      }
      for (int bin = 0; bin < kBins; ++bin) {
        table.add_row({method, bagbayes::format_double(level),
                       bagbayes::format_double(static_cast<double>(bin) / kBins),
                       bagbayes::format_double(static_cast<double>(bin + 1) / kBins),
                       std::to_string(counts[bin])});
      }
    }
  }
  return table;
}

// ---- overlap-sim ---------------------------------------------------------

struct OverlapSimArgs {
  std::string config_path;
  std::string out_dir = ".";
  long n = 100;
  long d = 100;
  std::string f = "linear";
  std::string g = "uncorrelated";
  double kappa = 1.0;
  double h = 10.0;
  double noise_scale = 1.0;
  long r = 20;
  long b = 20;
  long m = 0;  // 0: match n
  std::vector<double> levels{0.8, 0.9, 0.95};
  long test_points = 100;
  std::uint64_t root_seed = 0;
  int threads = 1;
  bool full_scale = false;
};

int run_overlap_sim(const OverlapSimArgs& args, const json& cfg, const json& model_cfg) {
  const ModelChoice choice = parse_model(model_cfg, false, 0);
  bagbayes::ExperimentSpec spec{.model = choice.model};
  spec.dgp.n = args.n;
  spec.dgp.d = args.d;
  spec.dgp.f_kind = parse_fkind(args.f);
  spec.dgp.g_kind = parse_gkind(args.g);
  spec.dgp.kappa = args.kappa;
  spec.dgp.h = args.h;
  spec.dgp.noise_scale = args.noise_scale;
  spec.estimate_sigma2 = choice.estimate_sigma2;
  if (args.m > 0) spec.m_explicit = args.m;
  spec.b = args.b;
  spec.r = args.r;
  spec.levels = args.levels;
  spec.test_point_count = args.test_points;
  spec.root_seed = args.root_seed;
  spec.threads = args.threads;
  spec.validate();

  const bagbayes::ExperimentResult result = bagbayes::run_overlap_experiment(spec);

  json resolved;
  resolved["command"] = "overlap-sim";
  resolved["n"] = args.n;
  resolved["d"] = args.d;
  resolved["f"] = args.f;
  resolved["g"] = args.g;
  resolved["kappa"] = args.kappa;
  resolved["h"] = args.h;
  resolved["noise_scale"] = args.noise_scale;
  resolved["model"] = model_cfg;
  resolved["r"] = args.r;
  resolved["b"] = args.b;
  resolved["m"] = spec.m_explicit.value_or(args.n);
  resolved["levels"] = args.levels;
  resolved["test_points"] = args.test_points;
  resolved["root_seed"] = args.root_seed;
  resolved["full_scale"] = args.full_scale;
  if (cfg.contains("threads") || args.threads != 1) resolved["threads"] = args.threads;

  std::filesystem::create_directories(args.out_dir);
  const std::vector<std::pair<std::string, const bagbayes::OverlapReport*>> csv_reports = {
      {"standard", &result.standard_report}, {"bagged", &result.bagged_report}};
  write_output(args.out_dir, "overlap.csv", bagbayes::overlap_reports_csv(csv_reports).to_string(),
               "overlap-sim", resolved, args.root_seed);

  const std::vector<std::pair<std::string, const bagbayes::OverlapReport*>> all_reports = {
      {"standard", &result.standard_report},
      {"bagged", &result.bagged_report},
      {"bagged_moment_matched", &result.bagged_moment_report}};
  write_output(args.out_dir, "histogram.csv",
               overlap_histogram(all_reports, args.levels).to_string(), "overlap-sim", resolved,
               args.root_seed);

  json summary;
  summary["config"] = resolved;
  summary["failed_replicates"] = result.failed_replicates;
  json fractions;
  const std::map<double, double>* maps[3] = {&result.violation_fraction_standard,
                                             &result.violation_fraction_bagged,
                                             &result.violation_fraction_bagged_moment};
  const char* names[3] = {"standard", "bagged", "bagged_moment_matched"};
  for (int i = 0; i < 3; ++i) {
    json per_level;
    for (const auto& [level, fraction] : *maps[i]) {
      per_level[bagbayes::format_double(level)] = fraction;
    }
    fractions[names[i]] = std::move(per_level);
  }
  summary["violation_fraction"] = std::move(fractions);
  json mlpd;
  mlpd["standard"] = result.mlpd_standard;
  mlpd["bagged"] = result.mlpd_bagged;
  mlpd["diff_ci_99"] = {result.mlpd_diff_ci.first, result.mlpd_diff_ci.second};
  summary["mlpd"] = std::move(mlpd);
  summary["moment_matched_report"] = report_rows_json(result.bagged_moment_report);
  write_output(args.out_dir, "summary.json", summary.dump(2) + "\n", "overlap-sim", resolved,
               args.root_seed);
  return 0;
}

// ---- fig1 -----------------------------------------------------------------

struct Fig1Args {
  std::string config_path;
  std::string out_dir = ".";
  double true_mean = 0.0;
  double true_sd = 5.0;
  double model_v = 1.0;
  long n = 100;
  long num_datasets = 6;
  double alpha = 0.05;
  long b = 50;
  long m = 0;  // 0: match n
  std::uint64_t root_seed = 0;
};

int run_fig1(const Fig1Args& args) {
  bagbayes::LocationScenario scenario;
  scenario.true_mean = args.true_mean;
  scenario.true_sd = args.true_sd;
  scenario.model_v = args.model_v;
  std::optional<long> m_explicit;
  if (args.m > 0) m_explicit = args.m;
  const bagbayes::Figure1Summary summary = bagbayes::figure1_experiment(
      scenario, args.n, args.num_datasets, args.alpha, bagbayes::SeedPath(args.root_seed), args.b,
      m_explicit);

  json resolved;
  resolved["command"] = "fig1";
  resolved["true_mean"] = args.true_mean;
  resolved["true_sd"] = args.true_sd;
  resolved["model_v"] = args.model_v;
  resolved["n"] = args.n;
  resolved["num_datasets"] = args.num_datasets;
  resolved["alpha"] = args.alpha;
  resolved["b"] = args.b;
  resolved["m"] = args.m > 0 ? args.m : args.n;
  resolved["root_seed"] = args.root_seed;

  std::filesystem::create_directories(args.out_dir);
  bagbayes::CsvTable datasets;
  datasets.header = {"dataset",        "standard_mean", "standard_sd",  "standard_lower",
                     "standard_upper", "standard_covers", "bagged_mean", "bagged_sd",
                     "bagged_lower",   "bagged_upper",  "bagged_covers"};
  for (std::size_t i = 0; i < summary.datasets.size(); ++i) {
    const auto& row = summary.datasets[i];
    datasets.add_row({std::to_string(i), bagbayes::format_double(row.standard_mean),
                      bagbayes::format_double(row.standard_sd),
                      bagbayes::format_double(row.standard_lower),
                      bagbayes::format_double(row.standard_upper),
                      row.standard_covers ? "true" : "false",
                      bagbayes::format_double(row.bagged_mean),
                      bagbayes::format_double(row.bagged_sd),
                      bagbayes::format_double(row.bagged_lower),
                      bagbayes::format_double(row.bagged_upper),
                      row.bagged_covers ? "true" : "false"});
  }
  write_output(args.out_dir, "datasets.csv", datasets.to_string(), "fig1", resolved,
               args.root_seed);

  bagbayes::CsvTable pairwise;
  pairwise.header = {"first", "second", "standard_overlap", "bagged_overlap"};
  for (const auto& pair : summary.pairs) {
    pairwise.add_row({std::to_string(pair.first), std::to_string(pair.second),
                      pair.standard_overlap ? "true" : "false",
                      pair.bagged_overlap ? "true" : "false"});
  }
  write_output(args.out_dir, "pairwise.csv", pairwise.to_string(), "fig1", resolved,
               args.root_seed);

  json out;
  out["config"] = resolved;
  out["standard_pairwise_rate"] = summary.standard_pairwise_rate;
  out["bagged_pairwise_rate"] = summary.bagged_pairwise_rate;
  write_output(args.out_dir, "summary.json", out.dump(2) + "\n", "fig1", resolved, args.root_seed);
  return 0;
}

// ---- asymptotic -------------------------------------------------------

struct AsymptoticArgs {
  std::string config_path;
  int theorem = 2;
  std::string method = "standard";  // theorems 2-4
  std::string lr_case = "correct";  // theorem 5
  double alpha = 0.05;
  double c = 1.0;
  long n = 50;
  long m = 50;
  double quadform = 1.0;
  double sigma = 1.0;
  double sigma_tilde = 1.0;
  double sigma_dagger = 1.0;
  double v_norm = 1.0;
  double vt_norm = 1.0;
  double k_quadform = 4.0;
  double offset_v = 0.0;
  double offset_vt = 0.0;
  bool as_json = false;
};

bagbayes::OverlapWhich parse_which(const std::string& s) {
  if (s == "standard") return bagbayes::OverlapWhich::standard;
  if (s == "bagged") return bagbayes::OverlapWhich::bagged;
  throw std::invalid_argument("method: expected 'standard' or 'bagged', got '" + s + "'");
}

int run_asymptotic(const AsymptoticArgs& args, const json& cfg) {
  double probability = 0.0;
  bool is_upper_bound = false;
  json detail;
  detail["theorem"] = args.theorem;
  detail["alpha"] = args.alpha;
  switch (args.theorem) {
    case 2: {
      const Eigen::MatrixXd v =
          cfg.contains("v") ? jmatrix(cfg.at("v"), "v") : Eigen::MatrixXd::Identity(1, 1);
      const Eigen::MatrixXd sigma_true = cfg.contains("sigma_true")
                                             ? jmatrix(cfg.at("sigma_true"), "sigma_true")
                                             : Eigen::MatrixXd::Identity(1, 1);
      const Eigen::VectorXd u =
          cfg.contains("u") ? jvector(cfg.at("u"), "u") : Eigen::VectorXd::Ones(v.rows());
      probability = bagbayes::asymptotic_overlap_location(v, sigma_true, u, args.alpha, args.c,
                                                          parse_which(args.method));
      detail["method"] = args.method;
      detail["c"] = args.c;
      break;
    }
    case 3: {
      const bagbayes::GrowingDimWhich which = args.method == "standard"
                                                  ? bagbayes::GrowingDimWhich::standard_exact
                                                  : bagbayes::GrowingDimWhich::bagged_lower_bound;
      if (args.method != "standard" && args.method != "bagged") {
        throw std::invalid_argument("method: expected 'standard' or 'bagged', got '" +
                                    args.method + "'");
      }
      probability = bagbayes::growing_dim_overlap(args.quadform, args.alpha, args.n, args.m, which);
      detail["method"] = args.method;
      detail["n"] = args.n;
      detail["m"] = args.m;
      detail["quadform"] = args.quadform;
      break;
    }
    case 4: {
      bagbayes::SandwichInputs inputs;
      inputs.j = cfg.contains("j") ? jmatrix(cfg.at("j"), "j") : Eigen::MatrixXd::Identity(1, 1);
      inputs.k = cfg.contains("k") ? jmatrix(cfg.at("k"), "k") : Eigen::MatrixXd::Identity(1, 1);
      inputs.u =
          cfg.contains("u") ? jvector(cfg.at("u"), "u") : Eigen::VectorXd::Ones(inputs.j.rows());
      inputs.c = args.c;
      inputs.alpha = args.alpha;
      probability = bagbayes::asymptotic_overlap_regular(inputs, parse_which(args.method));
      detail["method"] = args.method;
      detail["c"] = args.c;
      break;
    }
    case 5: {
      bagbayes::LinRegCase which;
      if (args.lr_case == "correct") {
        which = bagbayes::LinRegCase::correct;
      } else if (args.lr_case == "fixed-design") {
        which = bagbayes::LinRegCase::fixed_design;
      } else if (args.lr_case == "random-design-bound") {
        which = bagbayes::LinRegCase::random_design_bound;
      } else {
        throw std::invalid_argument(
            "case: expected 'correct', 'fixed-design', or 'random-design-bound', got '" +
            args.lr_case + "'");
      }
      bagbayes::LinRegGeometry geom;
      geom.v_norm = args.v_norm;
      geom.vt_norm = args.vt_norm;
      geom.sigma = args.sigma;
      geom.sigma_tilde = args.sigma_tilde;
      geom.sigma_dagger = args.sigma_dagger;
      geom.k_quadform = args.k_quadform;
      geom.offset_v = args.offset_v;
      geom.offset_vt = args.offset_vt;
      const bagbayes::LinRegOverlapResult result =
          bagbayes::linreg_overlap(which, geom, args.alpha);
      probability = result.probability;
      is_upper_bound = result.is_upper_bound;
      detail["case"] = args.lr_case;
      break;
    }
    default:
      throw std::invalid_argument("theorem: expected 2, 3, 4, or 5, got " +
                                  std::to_string(args.theorem));
  }

  if (args.as_json) {
    detail["overlap_probability"] = probability;
    detail["is_upper_bound"] = is_upper_bound;
    std::printf("%s\n", detail.dump(2).c_str());
  } else {
    std::printf("overlap_probability = %.6f\n", probability);
    if (is_upper_bound) std::printf("note = upper_bound\n");
  }
  return 0;
}

// ---- bag-fit ----------------------------------------------------------

struct BagFitArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string data_path;
  long m = 0;  // 0: match n
  long b = 50;
  bool exact = false;
  bool closed_form = false;
  std::uint64_t root_seed = 0;
  int threads = 1;
};

int run_bag_fit(const BagFitArgs& args, const json& cfg, const json& model_cfg) {
  if (args.data_path.empty()) {
    throw std::invalid_argument("bag-fit: 'data' (a dataset CSV path) is required");
  }
  const bagbayes::Dataset data = bagbayes::read_dataset_csv(args.data_path);
  const long dim =
      data.is_regression() ? data.regressors().cols() : data.observations().cols();
  const ModelChoice choice = parse_model(model_cfg.is_null() && !data.is_regression()
                                             ? json{{"kind", "location"}}
                                             : (model_cfg.is_null() ? json::object() : model_cfg),
                                         true, dim);
  bagbayes::Model model = choice.model;
  if (choice.estimate_sigma2) {
    model = bagbayes::FlatLinRegModel(bagbayes::residual_sigma2_hat(data));
  }
  const long m = args.m > 0 ? args.m : data.rows();

  Eigen::VectorXd u;
  if (cfg.contains("u")) {
    u = jvector(cfg.at("u"), "u");
  } else {
    u = Eigen::VectorXd::Ones(dim) / std::sqrt(static_cast<double>(dim));
  }

  const bagbayes::BaggedPosterior bp =
      args.exact ? bagbayes::bag_exact(model, data, m)
                 : bagbayes::bag_monte_carlo(model, data, m, args.b,
                                             bagbayes::SeedPath(args.root_seed), args.threads);
  const bagbayes::BaggedMoments moments = bagbayes::bagged_moments(bp);

  json resolved;
  resolved["command"] = "bag-fit";
  resolved["data"] = args.data_path;
  resolved["model"] = model_cfg.is_null() ? json::object() : model_cfg;
  resolved["m"] = m;
  resolved["b"] = args.b;
  resolved["exact"] = args.exact;
  resolved["closed_form"] = args.closed_form;
  resolved["root_seed"] = args.root_seed;

  std::filesystem::create_directories(args.out_dir);
  write_output(args.out_dir, "bagged_posterior.json",
               bagbayes::bagged_posterior_json(bp).dump(2) + "\n", "bag-fit", resolved,
               args.root_seed);

  json moments_doc = bagbayes::bagged_moments_json(moments);
  if (args.closed_form) {
    const auto* loc = std::get_if<bagbayes::GaussianLocationModel>(&model);
    if (loc == nullptr) {
      throw std::invalid_argument("bag-fit: closed_form applies to the location model only");
    }
    const bagbayes::BaggedMoments cf =
        bagbayes::gaussian_location_bagged_moments_closed_form(*loc, data, m);
    moments_doc["closed_form"] = bagbayes::bagged_moments_json(cf);
  }
  write_output(args.out_dir, "moments.json", moments_doc.dump(2) + "\n", "bag-fit", resolved,
               args.root_seed);

  json diagnostic;
  if (args.exact) {
    diagnostic["exact_enumeration"] = true;
    diagnostic["note"] = "exact enumeration carries no Monte Carlo error";
  } else {
    diagnostic["b"] = args.b;
    diagnostic["direction"] = bagbayes::vector_json(u);
    try {
      const bagbayes::ChooseBDiagnostic d = bagbayes::choose_b_diagnostic(bp, u);
      diagnostic["se_mean"] = d.se_mean;
      diagnostic["se_sd"] = d.se_sd;
    } catch (const bagbayes::insufficient_components_error& e) {
      diagnostic["error"] = "insufficient-components";
      diagnostic["message"] = e.what();
    }
  }
  write_output(args.out_dir, "diagnostic.json", diagnostic.dump(2) + "\n", "bag-fit", resolved,
               args.root_seed);
  return 0;
}

// ---- sample ---------------------------------------------------------------

struct SampleArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::string data_path;
  long t = 1000;
  long t_flat = 100;
  long m = 0;  // 0: match n
  long b = 50;
  double proposal_sd = 1.0;
  double discard_fraction = 0.0;
  std::uint64_t root_seed = 0;
  int threads = 1;
};

long sampler_state_dim(const bagbayes::Model& model, const bagbayes::Dataset& data) {
  if (std::holds_alternative<bagbayes::GaussianLocationModel>(model)) {
    return data.observations().cols();
  }
  if (std::holds_alternative<bagbayes::NIGRegressionModel>(model)) {
    return data.regressors().cols() + 1;  // (beta, log sigma^2)
  }
  return data.regressors().cols();
}

int run_sample(const SampleArgs& args, const json& cfg, const json& model_cfg) {
  if (args.data_path.empty()) {
    throw std::invalid_argument("sample: 'data' (a dataset CSV path) is required");
  }
  const bagbayes::Dataset data = bagbayes::read_dataset_csv(args.data_path);
  const long dim =
      data.is_regression() ? data.regressors().cols() : data.observations().cols();
  const ModelChoice choice = parse_model(model_cfg.is_null() && !data.is_regression()
                                             ? json{{"kind", "location"}}
                                             : (model_cfg.is_null() ? json::object() : model_cfg),
                                         true, dim);
  bagbayes::Model model = choice.model;
  if (choice.estimate_sigma2) {
    model = bagbayes::FlatLinRegModel(bagbayes::residual_sigma2_hat(data));
  }

  const long state_dim = sampler_state_dim(model, data);
  Eigen::VectorXd theta_init = Eigen::VectorXd::Zero(state_dim);
  if (cfg.contains("theta_init")) {
    theta_init = jvector(cfg.at("theta_init"), "theta_init");
    if (theta_init.size() != state_dim) {
      throw std::invalid_argument("theta_init: expected length " + std::to_string(state_dim) +
                                  ", got " + std::to_string(theta_init.size()));
    }
  }
  Eigen::VectorXd beta_init(1);
  beta_init(0) = args.proposal_sd;
  const long m = args.m > 0 ? args.m : data.rows();

  const bagbayes::MCMCProcedure mcmc = bagbayes::make_random_walk_metropolis(
      [model](const bagbayes::Dataset& d) { return bagbayes::log_posterior_density(model, d); });
  const bagbayes::SamplerOutput output = bagbayes::bayesbag_sample(
      mcmc, data, args.t, args.t_flat, m, args.b, theta_init, beta_init,
      bagbayes::SeedPath(args.root_seed), args.discard_fraction, args.threads);

  json resolved;
  resolved["command"] = "sample";
  resolved["data"] = args.data_path;
  resolved["model"] = model_cfg.is_null() ? json::object() : model_cfg;
  resolved["t"] = args.t;
  resolved["t_flat"] = args.t_flat;
  resolved["m"] = m;
  resolved["b"] = args.b;
  resolved["proposal_sd"] = args.proposal_sd;
  resolved["discard_fraction"] = args.discard_fraction;
  resolved["root_seed"] = args.root_seed;

  std::filesystem::create_directories(args.out_dir);
  bagbayes::CsvTable samples;
  samples.header = {"run_id"};
  for (long j = 0; j < state_dim; ++j) samples.header.push_back("theta_" + std::to_string(j));
  const auto add_rows = [&](const std::string& run_id, const Eigen::MatrixXd& block) {
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      std::vector<std::string> row{run_id};
      for (Eigen::Index j = 0; j < block.cols(); ++j) {
        row.push_back(bagbayes::format_double(block(i, j)));
      }
      samples.add_row(std::move(row));
    }
  };
  add_rows("standard", output.standard_samples);
  const Eigen::Index per_run = output.runs.empty() ? 0 : output.bagged_samples.rows() /
                                     static_cast<Eigen::Index>(output.runs.size());
  for (std::size_t k = 0; k < output.runs.size(); ++k) {
    add_rows("bootstrap_" + std::to_string(k),
             output.bagged_samples.middleRows(static_cast<Eigen::Index>(k) * per_run, per_run));
  }
  write_output(args.out_dir, "samples.csv", samples.to_string(), "sample", resolved,
               args.root_seed);

  json runs;
  runs["standard_beta"] = bagbayes::vector_json(output.standard_beta);
  json run_list = json::array();
  for (const auto& run : output.runs) {
    json r;
    r["seed"] = bagbayes::seed_path_json(run.seed);
    r["initial_state"] = bagbayes::vector_json(run.initial_state);
    r["adapted_beta"] = bagbayes::vector_json(run.adapted_beta);
    run_list.push_back(std::move(r));
  }
  runs["runs"] = std::move(run_list);
  write_output(args.out_dir, "runs.json", runs.dump(2) + "\n", "sample", resolved, args.root_seed);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("bagged posteriors toolkit ") + bagbayes::version_string};
  app.require_subcommand(1);

  OverlapSimArgs os;
  CLI::App* overlap_sim = app.add_subcommand(
      "overlap-sim",
      "Replicate-pair overlap experiment. Config keys: n, d, f, g, kappa, h, noise_scale, model, "
      "r, b, m, levels, test_points, root_seed, threads, full_scale");
  overlap_sim->add_option("--config", os.config_path, "JSON config file");
  overlap_sim->add_option("--out", os.out_dir, "output directory");
  auto* os_n = overlap_sim->add_option("--n", os.n, "training size per dataset");
  auto* os_d = overlap_sim->add_option("--d", os.d, "regressor dimension");
  auto* os_f = overlap_sim->add_option("--f", os.f, "trend: linear | nonlinear");
  auto* os_g =
      overlap_sim->add_option("--g", os.g, "regressors: uncorrelated | correlated | fixed-design");
  auto* os_kappa = overlap_sim->add_option("--kappa", os.kappa, "correlation length scale");
  auto* os_h = overlap_sim->add_option("--tail-dof", os.h, "tail degrees of freedom");
  auto* os_noise = overlap_sim->add_option("--noise-scale", os.noise_scale, "noise multiplier");
  auto* os_r = overlap_sim->add_option("--r", os.r, "replicate pairs");
  auto* os_b = overlap_sim->add_option("--b", os.b, "bootstrap components");
  auto* os_m = overlap_sim->add_option("--m", os.m, "bootstrap size (0: match n)");
  auto* os_levels = overlap_sim->add_option("--levels", os.levels, "credible levels in (0,1)");
  auto* os_tp = overlap_sim->add_option("--test-points", os.test_points, "test directions");
  auto* os_seed = overlap_sim->add_option("--seed", os.root_seed, "root seed");
  auto* os_threads = overlap_sim->add_option("--threads", os.threads, "worker threads");
  auto* os_full = overlap_sim->add_flag("--full-scale", os.full_scale,
                                        "full-scale preset: n=d=500, r=100, b=50");

  Fig1Args f1;
  CLI::App* fig1 = app.add_subcommand(
      "fig1",
      "Location-scenario interval comparison. Config keys: true_mean, true_sd, model_v, n, "
      "num_datasets, alpha, b, m, root_seed");
  fig1->add_option("--config", f1.config_path, "JSON config file");
  fig1->add_option("--out", f1.out_dir, "output directory");
  auto* f1_mean = fig1->add_option("--true-mean", f1.true_mean, "data mean");
  auto* f1_sd = fig1->add_option("--true-sd", f1.true_sd, "data standard deviation");
  auto* f1_v = fig1->add_option("--model-v", f1.model_v, "model variance");
  auto* f1_n = fig1->add_option("--n", f1.n, "observations per dataset");
  auto* f1_k = fig1->add_option("--num-datasets", f1.num_datasets, "independent datasets");
  auto* f1_alpha = fig1->add_option("--alpha", f1.alpha, "interval tail mass");
  auto* f1_b = fig1->add_option("--b", f1.b, "bootstrap components");
  auto* f1_m = fig1->add_option("--m", f1.m, "bootstrap size (0: match n)");
  auto* f1_seed = fig1->add_option("--seed", f1.root_seed, "root seed");

  AsymptoticArgs as;
  CLI::App* asymptotic = app.add_subcommand(
      "asymptotic",
      "Limiting overlap probability calculators. Config keys: theorem, method, case, alpha, c, n, "
      "m, quadform, v, sigma_true, u, j, k, sigma, sigma_tilde, sigma_dagger, v_norm, vt_norm, "
      "k_quadform, offset_v, offset_vt");
  asymptotic->add_option("--config", as.config_path, "JSON config file");
  auto* as_thm = asymptotic->add_option("--theorem", as.theorem, "2 | 3 | 4 | 5");
  auto* as_method = asymptotic->add_option("--method", as.method, "standard | bagged");
  auto* as_case = asymptotic->add_option(
      "--case", as.lr_case, "theorem 5: correct | fixed-design | random-design-bound");
  auto* as_alpha = asymptotic->add_option("--alpha", as.alpha, "credible tail mass");
  auto* as_c = asymptotic->add_option("--c", as.c, "limit of M/N");
  auto* as_n = asymptotic->add_option("--n", as.n, "sample size (theorem 3)");
  auto* as_m = asymptotic->add_option("--m", as.m, "bootstrap size (theorem 3)");
  auto* as_quad =
      asymptotic->add_option("--quadform", as.quadform, "u' Sigma_true u (theorem 3 standard)");
  auto* as_sigma = asymptotic->add_option("--sigma", as.sigma, "model sd (theorem 5)");
  auto* as_sigma_t =
      asymptotic->add_option("--sigma-tilde", as.sigma_tilde, "replicate model sd (theorem 5)");
  auto* as_sigma_d =
      asymptotic->add_option("--sigma-dagger", as.sigma_dagger, "true sd (theorem 5)");
  auto* as_vn = asymptotic->add_option("--v-norm", as.v_norm, "||v|| (theorem 5)");
  auto* as_vtn = asymptotic->add_option("--vt-norm", as.vt_norm, "||v~|| (theorem 5)");
  auto* as_kq = asymptotic->add_option("--k-quadform", as.k_quadform, "v' K(Z) v (theorem 5)");
  auto* as_ov = asymptotic->add_option("--offset-v", as.offset_v, "v' m(Z) (theorem 5)");
  auto* as_ovt = asymptotic->add_option("--offset-vt", as.offset_vt, "v~' m(Z~) (theorem 5)");
  asymptotic->add_flag("--json", as.as_json, "print a JSON document instead of text");

  BagFitArgs bf;
  CLI::App* bag_fit = app.add_subcommand(
      "bag-fit",
      "Fit a bagged posterior to a dataset CSV. Config keys: data, model, m, b, exact, u, "
      "closed_form, root_seed, threads");
  bag_fit->add_option("--config", bf.config_path, "JSON config file");
  bag_fit->add_option("--out", bf.out_dir, "output directory");
  auto* bf_data = bag_fit->add_option("--data", bf.data_path, "dataset CSV path");
  auto* bf_m = bag_fit->add_option("--m", bf.m, "bootstrap size (0: match n)");
  auto* bf_b = bag_fit->add_option("--b", bf.b, "bootstrap components");
  auto* bf_exact = bag_fit->add_flag("--exact", bf.exact, "exact enumeration instead of Monte Carlo");
  auto* bf_cf = bag_fit->add_flag("--closed-form", bf.closed_form,
                                  "also emit location-model closed-form moments");
  auto* bf_seed = bag_fit->add_option("--seed", bf.root_seed, "root seed");
  auto* bf_threads = bag_fit->add_option("--threads", bf.threads, "worker threads");

  SampleArgs sa;
  CLI::App* sample = app.add_subcommand(
      "sample",
      "Long-run plus bootstrap-run Metropolis sampling. Config keys: data, model, t, t_flat, m, "
      "b, theta_init, proposal_sd, discard_fraction, root_seed, threads");
  sample->add_option("--config", sa.config_path, "JSON config file");
  sample->add_option("--out", sa.out_dir, "output directory");
  auto* sa_data = sample->add_option("--data", sa.data_path, "dataset CSV path");
  auto* sa_t = sample->add_option("--t", sa.t, "long-run samples");
  auto* sa_tf = sample->add_option("--t-flat", sa.t_flat, "samples per bootstrap run");
  auto* sa_m = sample->add_option("--m", sa.m, "bootstrap size (0: match n)");
  auto* sa_b = sample->add_option("--b", sa.b, "bootstrap runs");
  auto* sa_sd = sample->add_option("--proposal-sd", sa.proposal_sd, "initial proposal sd");
  auto* sa_df =
      sample->add_option("--discard-fraction", sa.discard_fraction, "short-run burn-in fraction");
  auto* sa_seed = sample->add_option("--seed", sa.root_seed, "root seed");
  auto* sa_threads = sample->add_option("--threads", sa.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(overlap_sim)) {
      const json cfg = load_config(os.config_path);
      reject_unknown_keys(cfg,
                          {"n", "d", "f", "g", "kappa", "h", "noise_scale", "model", "r", "b", "m",
                           "levels", "test_points", "root_seed", "threads", "full_scale"},
                          "overlap-sim");
      apply_config(os_full, cfg, "full_scale", os.full_scale, jboolean);
      if (os.full_scale) {
        if (os_n->count() == 0 && !cfg.contains("n")) os.n = 500;
        if (os_d->count() == 0 && !cfg.contains("d")) os.d = 500;
        if (os_r->count() == 0 && !cfg.contains("r")) os.r = 100;
        if (os_b->count() == 0 && !cfg.contains("b")) os.b = 50;
      }
      apply_config(os_n, cfg, "n", os.n, jinteger);
      apply_config(os_d, cfg, "d", os.d, jinteger);
      apply_config(os_f, cfg, "f", os.f, jstring);
      apply_config(os_g, cfg, "g", os.g, jstring);
      apply_config(os_kappa, cfg, "kappa", os.kappa, jnumber);
      apply_config(os_h, cfg, "h", os.h, jnumber);
      apply_config(os_noise, cfg, "noise_scale", os.noise_scale, jnumber);
      apply_config(os_r, cfg, "r", os.r, jinteger);
      apply_config(os_b, cfg, "b", os.b, jinteger);
      apply_config(os_m, cfg, "m", os.m, jinteger);
      apply_config(os_levels, cfg, "levels", os.levels,
                   [](const json& v, const std::string& name) {
                     std::vector<double> out;
                     if (!v.is_array()) {
                       throw std::invalid_argument("config key '" + name + "': expected an array");
                     }
                     for (std::size_t i = 0; i < v.size(); ++i) {
                       out.push_back(jnumber(v[i], name + "[" + std::to_string(i) + "]"));
                     }
                     return out;
                   });
      apply_config(os_tp, cfg, "test_points", os.test_points, jinteger);
      apply_config(os_threads, cfg, "threads", os.threads,
                   [](const json& v, const std::string& name) {
                     return static_cast<int>(jinteger(v, name));
                   });
      os.root_seed = resolve_seed(os_seed, cfg, os.root_seed);
      const json model_cfg = cfg.contains("model") ? cfg.at("model") : json::object();
      return run_overlap_sim(os, cfg, model_cfg);
    }
    if (app.got_subcommand(fig1)) {
      const json cfg = load_config(f1.config_path);
      reject_unknown_keys(cfg,
                          {"true_mean", "true_sd", "model_v", "n", "num_datasets", "alpha", "b",
                           "m", "root_seed"},
                          "fig1");
      apply_config(f1_mean, cfg, "true_mean", f1.true_mean, jnumber);
      apply_config(f1_sd, cfg, "true_sd", f1.true_sd, jnumber);
      apply_config(f1_v, cfg, "model_v", f1.model_v, jnumber);
      apply_config(f1_n, cfg, "n", f1.n, jinteger);
      apply_config(f1_k, cfg, "num_datasets", f1.num_datasets, jinteger);
      apply_config(f1_alpha, cfg, "alpha", f1.alpha, jnumber);
      apply_config(f1_b, cfg, "b", f1.b, jinteger);
      apply_config(f1_m, cfg, "m", f1.m, jinteger);
      f1.root_seed = resolve_seed(f1_seed, cfg, f1.root_seed);
      return run_fig1(f1);
    }
    if (app.got_subcommand(asymptotic)) {
      const json cfg = load_config(as.config_path);
      reject_unknown_keys(cfg, {"theorem",     "method",   "case",        "alpha",    "c",
                                "n",           "m",        "quadform",    "v",        "sigma_true",
                                "u",           "j",        "k",           "sigma",    "sigma_tilde",
                                "sigma_dagger", "v_norm",  "vt_norm",     "k_quadform",
                                "offset_v",    "offset_vt"},
                          "asymptotic");
      apply_config(as_thm, cfg, "theorem", as.theorem,
                   [](const json& v, const std::string& name) {
                     return static_cast<int>(jinteger(v, name));
                   });
      apply_config(as_method, cfg, "method", as.method, jstring);
      apply_config(as_case, cfg, "case", as.lr_case, jstring);
      apply_config(as_alpha, cfg, "alpha", as.alpha, jnumber);
      apply_config(as_c, cfg, "c", as.c, jnumber);
      apply_config(as_n, cfg, "n", as.n, jinteger);
      apply_config(as_m, cfg, "m", as.m, jinteger);
      apply_config(as_quad, cfg, "quadform", as.quadform, jnumber);
      apply_config(as_sigma, cfg, "sigma", as.sigma, jnumber);
      apply_config(as_sigma_t, cfg, "sigma_tilde", as.sigma_tilde, jnumber);
      apply_config(as_sigma_d, cfg, "sigma_dagger", as.sigma_dagger, jnumber);
      apply_config(as_vn, cfg, "v_norm", as.v_norm, jnumber);
      apply_config(as_vtn, cfg, "vt_norm", as.vt_norm, jnumber);
      apply_config(as_kq, cfg, "k_quadform", as.k_quadform, jnumber);
      apply_config(as_ov, cfg, "offset_v", as.offset_v, jnumber);
      apply_config(as_ovt, cfg, "offset_vt", as.offset_vt, jnumber);
      return run_asymptotic(as, cfg);
    }
    if (app.got_subcommand(bag_fit)) {
      const json cfg = load_config(bf.config_path);
      reject_unknown_keys(
          cfg, {"data", "model", "m", "b", "exact", "u", "closed_form", "root_seed", "threads"},
          "bag-fit");
      apply_config(bf_data, cfg, "data", bf.data_path, jstring);
      apply_config(bf_m, cfg, "m", bf.m, jinteger);
      apply_config(bf_b, cfg, "b", bf.b, jinteger);
      apply_config(bf_exact, cfg, "exact", bf.exact, jboolean);
      apply_config(bf_cf, cfg, "closed_form", bf.closed_form, jboolean);
      apply_config(bf_threads, cfg, "threads", bf.threads,
                   [](const json& v, const std::string& name) {
                     return static_cast<int>(jinteger(v, name));
                   });
      bf.root_seed = resolve_seed(bf_seed, cfg, bf.root_seed);
      const json model_cfg = cfg.contains("model") ? cfg.at("model") : json();
      return run_bag_fit(bf, cfg, model_cfg);
    }
    if (app.got_subcommand(sample)) {
      const json cfg = load_config(sa.config_path);
      reject_unknown_keys(cfg,
                          {"data", "model", "t", "t_flat", "m", "b", "theta_init", "proposal_sd",
                           "discard_fraction", "root_seed", "threads"},
                          "sample");
      apply_config(sa_data, cfg, "data", sa.data_path, jstring);
      apply_config(sa_t, cfg, "t", sa.t, jinteger);
      apply_config(sa_tf, cfg, "t_flat", sa.t_flat, jinteger);
      apply_config(sa_m, cfg, "m", sa.m, jinteger);
      apply_config(sa_b, cfg, "b", sa.b, jinteger);
      apply_config(sa_sd, cfg, "proposal_sd", sa.proposal_sd, jnumber);
      apply_config(sa_df, cfg, "discard_fraction", sa.discard_fraction, jnumber);
      apply_config(sa_threads, cfg, "threads", sa.threads,
                   [](const json& v, const std::string& name) {
                     return static_cast<int>(jinteger(v, name));
                   });
      sa.root_seed = resolve_seed(sa_seed, cfg, sa.root_seed);
      const json model_cfg = cfg.contains("model") ? cfg.at("model") : json();
      return run_sample(sa, cfg, model_cfg);
    }
  } catch (const bagbayes::enumeration_too_large_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
