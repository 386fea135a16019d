#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "tpcalib/config.hpp"
#include "tpcalib/csv.hpp"
#include "tpcalib/errors.hpp"
#include "tpcalib/version.hpp"

namespace fs = std::filesystem;
using namespace tpcalib;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStudyAbort = 3;
constexpr int kExitData = 4;

// Outputs are staged and renamed so readers never see partial files.
void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

struct OutputFormat {
  bool csv = true;
  bool json = true;
};

OutputFormat parse_format(const std::string& format) {
  if (format == "csv") return {true, false};
  if (format == "json") return {false, true};
  if (format == "both") return {true, true};
  throw ConfigError("--format must be csv, json or both");
}

std::string run_metadata_json(const MetadataPairs& pairs, const KvConfig& kv) {
  nlohmann::json j;
  for (const auto& [key, value] : pairs) j[key] = value;
  nlohmann::json cfg = nlohmann::json::object();
  std::istringstream in(kv.raw_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cfg[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  j["config"] = cfg;
  return j.dump(2) + "\n";
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::int64_t> seed, std::optional<int> threads,
                 const std::string& format) {
  const OutputFormat fmt = parse_format(format);
  const KvConfig kv = KvConfig::parse_file(config_path);
  StudyConfig study = study_config_from(kv);
  if (seed) study.seed = static_cast<std::uint64_t>(*seed);
  if (threads) study.threads = *threads;

  const McSummary summary = run_study(study);

  MetadataPairs meta{{"tool", "tpcalib simulate"},
                     {"version", TPCALIB_VERSION},
                     {"config_hash", config_hash(kv.raw_text())},
                     {"seed", std::to_string(study.seed)}};
  fs::create_directories(out_dir);
  if (fmt.csv) write_file_atomic(fs::path(out_dir) / "summary.csv", summary_to_csv(summary, meta));
  if (fmt.json)
    write_file_atomic(fs::path(out_dir) / "summary.json", summary_to_json(summary, meta));
  write_file_atomic(fs::path(out_dir) / "run_metadata.json", run_metadata_json(meta, kv));
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              std::optional<std::int64_t> seed, std::optional<int> threads) {
  const KvConfig kv = KvConfig::parse_file(config_path);
  SweepConfig sweep = sweep_config_from(kv);
  if (seed) sweep.base.seed = static_cast<std::uint64_t>(*seed);
  if (threads) sweep.base.threads = *threads;

  const std::vector<SweepRow> rows = efficiency_sweep(sweep);

  MetadataPairs meta{{"tool", "tpcalib sweep"},
                     {"version", TPCALIB_VERSION},
                     {"config_hash", config_hash(kv.raw_text())},
                     {"seed", std::to_string(sweep.base.seed)},
                     {"efficiency_gain",
                      "empirical_variance(direct_s2) / empirical_variance(method), "
                      "per coefficient and grid point"}};
  fs::create_directories(out_dir);
  write_file_atomic(fs::path(out_dir) / "sweep.csv", sweep_to_csv(rows, meta));
  write_file_atomic(fs::path(out_dir) / "run_metadata.json", run_metadata_json(meta, kv));
  return kExitOk;
}

int cmd_analyze(const std::string& data_path, const std::string& model_path,
                const std::string& out_dir, const std::string& format) {
  const OutputFormat fmt = parse_format(format);
  const KvConfig kv = KvConfig::parse_file(model_path);
  const AnalyzeSpec spec = analyze_spec_from(kv);

  TwoPhaseDataset ds = read_dataset_csv_file(data_path, spec.design);
  ds.fp_size = spec.fp_size;
  const ValidationReport report = validate(ds);
  if (!report.accepted()) {
    std::cerr << report_to_jsonl(report);
    std::cerr << "analyze: dataset rejected (" << report.violations.size()
              << " violations)\n";
    return kExitData;
  }

  struct MethodRun {
    std::string name;
    std::optional<EstimatorOutput> output;
    std::string error;
  };
  std::vector<MethodRun> runs;
  runs.push_back({"direct_s2", std::nullopt, ""});
  runs.push_back({"imputation", std::nullopt, ""});
  runs.push_back({"calib_influence", std::nullopt, ""});
  for (MethodRun& run : runs) {
    try {
      if (run.name == "direct_s2")
        run.output = estimate_direct_s2(ds, spec.model);
      else if (run.name == "imputation")
        run.output = estimate_imputation(ds, spec.model, spec.predictor);
      else
        run.output = estimate_calib_influence(ds, spec.model, spec.predictor, spec.calibration);
    } catch (const std::exception& e) {
      run.error = e.what();
      std::cerr << "analyze: method " << run.name << " failed: " << e.what() << "\n";
    }
  }

  const MetadataPairs meta{{"tool", "tpcalib analyze"},
                           {"version", TPCALIB_VERSION},
                           {"config_hash", config_hash(kv.raw_text())},
                           {"data", fs::path(data_path).filename().string()}};

  std::ostringstream csv;
  for (const auto& [key, value] : meta) csv << "# " << key << ": " << value << "\n";
  csv << "method,coefficient,estimate,variance,se,ci_lower,ci_upper,df,"
         "calibration_residual,negative_weights,prediction_r2\n";
  nlohmann::json j;
  j["metadata"] = nlohmann::json::object();
  for (const auto& [key, value] : meta) j["metadata"][key] = value;
  j["methods"] = nlohmann::json::object();

  int successes = 0;
  for (const MethodRun& run : runs) {
    nlohmann::json& jm = j["methods"][run.name];
    if (!run.output) {
      jm["error"] = run.error;
      continue;
    }
    ++successes;
    const EstimatorOutput& est = *run.output;
    const auto cis = wald_ci(est.beta, est.covariance, est.df, 0.95);
    jm["df"] = est.df;
    jm["coefficients"] = nlohmann::json::object();
    for (Eigen::Index c = 0; c < est.beta.size(); ++c) {
      const std::string& name = est.coefficient_names[static_cast<std::size_t>(c)];
      const auto& ci = cis[static_cast<std::size_t>(c)];
      csv << run.name << ',' << name << ',' << format_double(est.beta[c]) << ','
          << format_double(est.covariance(c, c)) << ',' << format_double(ci.se) << ','
          << format_double(ci.lower) << ',' << format_double(ci.upper) << ',' << est.df;
      if (run.name != "direct_s2" && std::isfinite(est.diagnostics.prediction_r2)) {
        csv << ',';
        if (run.name == "calib_influence")
          csv << format_double(est.diagnostics.calibration_residual) << ','
              << est.diagnostics.negative_weight_count << ','
              << format_double(est.diagnostics.prediction_r2);
        else
          csv << ",," << format_double(est.diagnostics.prediction_r2);
      } else {
        csv << ",,,";
      }
      csv << '\n';
      nlohmann::json jc;
      jc["estimate"] = est.beta[c];
      jc["variance"] = est.covariance(c, c);
      jc["se"] = ci.se;
      jc["ci_lower"] = ci.lower;
      jc["ci_upper"] = ci.upper;
      jm["coefficients"][name] = jc;
    }
    if (run.name == "calib_influence") {
      jm["diagnostics"] = {{"calibration_residual", est.diagnostics.calibration_residual},
                           {"negative_weights", est.diagnostics.negative_weight_count},
                           {"prediction_r2", est.diagnostics.prediction_r2},
                           {"score_constraint_residual",
                            est.diagnostics.score_constraint_residual}};
    } else if (run.name == "imputation") {
      jm["diagnostics"] = {{"prediction_r2", est.diagnostics.prediction_r2}};
    }
  }

  fs::create_directories(out_dir);
  if (fmt.csv) write_file_atomic(fs::path(out_dir) / "estimates.csv", csv.str());
  if (fmt.json) write_file_atomic(fs::path(out_dir) / "estimates.json", j.dump(2) + "\n");
  return successes > 0 ? kExitOk : kExitData;
}

int cmd_validate(const std::string& data_path, const std::string& design) {
  const DesignType type = design == "type2" ? DesignType::TypeII : DesignType::TypeI;
  const TwoPhaseDataset ds = read_dataset_csv_file(data_path, type);
  const ValidationReport report = validate(ds);
  std::cout << report_to_jsonl(report);
  return report.accepted() ? kExitOk : kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based two-phase survey regression with influence-function "
               "weight calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TPCALIB_VERSION);

  std::string config_path, out_dir = ".", data_path, model_path, format = "both";
  std::string design = "type1";
  std::optional<std::int64_t> seed;
  std::optional<int> threads;

  CLI::App* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study from a config");
  simulate->add_option("--config", config_path, "key=value study config")->required();
  simulate->add_option("--out", out_dir, "output directory");
  simulate->add_option("--seed", seed, "override study.seed");
  simulate->add_option("--threads", threads, "worker threads (0 = all cores)");
  simulate->add_option("--format", format, "csv|json|both");

  CLI::App* sweep = app.add_subcommand("sweep", "Efficiency-gain sweep over a parameter grid");
  sweep->add_option("--config", config_path, "key=value sweep config")->required();
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--seed", seed, "override study.seed");
  sweep->add_option("--threads", threads, "worker threads (0 = all cores)");

  CLI::App* analyze = app.add_subcommand("analyze", "Estimate log-odds ratios on a user CSV");
  analyze->add_option("--data", data_path, "two-phase dataset CSV")->required();
  analyze->add_option("--model", model_path, "key=value model spec")->required();
  analyze->add_option("--out", out_dir, "output directory");
  analyze->add_option("--format", format, "csv|json|both");

  CLI::App* validate_cmd = app.add_subcommand("validate", "Validate a dataset CSV");
  validate_cmd->add_option("data", data_path, "two-phase dataset CSV")->required();
  validate_cmd->add_option("--design", design, "type1|type2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, out_dir, seed, threads, format);
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, seed, threads);
    if (analyze->parsed()) return cmd_analyze(data_path, model_path, out_dir, format);
    if (validate_cmd->parsed()) return cmd_validate(data_path, design);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StudyAbort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStudyAbort;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfig;
}
