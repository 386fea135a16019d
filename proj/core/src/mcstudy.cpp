#include "tpcalib/mcstudy.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tpcalib/csv.hpp"
#include "tpcalib/errors.hpp"
#include "tpcalib/rng.hpp"

namespace tpcalib {

McMethodSpec parse_method_token(const std::string& token) {
  McMethodSpec spec;
  spec.token = token;
  if (token == "direct_s2") {
    spec.kind = Method::DirectS2;
  } else if (token == "direct_s1") {
    spec.kind = Method::DirectS1Oracle;
  } else if (token == "calib_fp") {
    spec.kind = Method::CalibFP;
  } else if (token.rfind("calib:", 0) == 0) {
    spec.kind = Method::CalibInfluence;
    spec.predictor_column = token.substr(6);
  } else if (token.rfind("imp:", 0) == 0) {
    spec.kind = Method::Imputation;
    spec.predictor_column = token.substr(4);
  } else {
    throw ConfigError("unknown method token '" + token + "'");
  }
  if ((spec.kind == Method::CalibInfluence || spec.kind == Method::Imputation) &&
      spec.predictor_column.empty())
    throw ConfigError("method token '" + token + "' needs a predictor column");
  return spec;
}

double StudyConfig::f2() const {
  if (design == DesignType::TypeI) return type1.f2;
  return static_cast<double>(type2.x2_cycles) / type2.cycles;
}

const McCell& McSummary::cell(const std::string& method, const std::string& coefficient) const {
  for (const McCell& c : cells)
    if (c.method == method && c.coefficient == coefficient) return c;
  throw std::out_of_range("McSummary: no cell for " + method + " / " + coefficient);
}

McSummary summarize(const std::vector<ReplicateDraws>& draws,
                    const Eigen::VectorXd& beta_true,
                    const std::vector<std::string>& coefficient_names, int replicates) {
  McSummary summary;
  summary.replicates = replicates;
  summary.coefficient_names = coefficient_names;
  const Eigen::Index d = beta_true.size();

  for (const ReplicateDraws& method : draws) {
    summary.failure_counts[method.method] = method.failures;
    const auto r = static_cast<int>(method.estimates.size());
    if (r < 2) throw StudyAbort("summarize: method '" + method.method +
                                "' has fewer than 2 successful replicates");
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mean_av = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < r; ++i) {
      mean += method.estimates[static_cast<std::size_t>(i)];
      mean_av += method.analytic_variances[static_cast<std::size_t>(i)];
    }
    mean /= r;
    mean_av /= r;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < r; ++i) {
      const Eigen::VectorXd dev = method.estimates[static_cast<std::size_t>(i)] - mean;
      ss += dev.cwiseProduct(dev);
    }
    const Eigen::VectorXd empvar = ss / (r - 1.0);

    for (Eigen::Index j = 0; j < d; ++j) {
      McCell cell;
      cell.method = method.method;
      cell.coefficient = coefficient_names[static_cast<std::size_t>(j)];
      cell.beta_true = beta_true[j];
      cell.mean_estimate = mean[j];
      if (beta_true[j] != 0.0) {
        cell.relative_bias_pct = 100.0 * (mean[j] - beta_true[j]) / beta_true[j];
      } else {
        cell.relative_bias_pct = mean[j];
        cell.bias_is_absolute = true;
      }
      cell.empirical_variance = empvar[j];
      cell.mean_analytic_variance = mean_av[j];
      cell.variance_ratio = empvar[j] > 0.0 ? mean_av[j] / empvar[j]
                                            : std::numeric_limits<double>::quiet_NaN();
      const double bias = mean[j] - beta_true[j];
      cell.mse = empvar[j] + bias * bias;
      summary.cells.push_back(std::move(cell));
    }
  }
  return summary;
}

namespace {

EstimatorOutput run_method(const McMethodSpec& spec, const TwoPhaseDataset& ds,
                           const ModelSpec& model, const FpTotals& fp_totals,
                           const std::optional<double>& calibration_floor) {
  switch (spec.kind) {
    case Method::DirectS2:
      return estimate_direct_s2(ds, model);
    case Method::DirectS1Oracle:
      return estimate_direct_s1(ds, model);
    case Method::CalibFP:
      return estimate_calib_fp(ds, model, fp_totals);
    case Method::Imputation:
      return estimate_imputation(ds, model,
                                 PredictorSpec{PredictorSpec::Mode::Passthrough,
                                               {spec.predictor_column}});
    case Method::CalibInfluence: {
      CalibOptions options;
      options.factor_floor = calibration_floor;
      return estimate_calib_influence(ds, model,
                                      PredictorSpec{PredictorSpec::Mode::Passthrough,
                                                    {spec.predictor_column}},
                                      options);
    }
  }
  throw std::logic_error("run_method: unreachable");
}

struct ReplicateResult {
  // One entry per method; empty optional = failure.
  std::vector<std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>> by_method;
  std::vector<std::string> errors;  // first error text per failed method
};

}  // namespace

McSummary run_study(const StudyConfig& config) {
  if (config.replicates < 2) throw StudyAbort("run_study: need at least 2 replicates");
  if (config.methods.empty()) throw StudyAbort("run_study: no methods configured");
  if (config.model.dimension() != 5)
    throw StudyAbort("run_study: the study model must have exactly the 5 coefficients "
                     "matching fp.beta_true");

  FinitePopulation fp = generate_fp(config.fp);
  const FpTotals fp_totals = fp.totals({"x1_1", "x1_2", "z_1", "z_2"});
  const auto n_methods = config.methods.size();
  const auto n_reps = static_cast<std::size_t>(config.replicates);

  std::vector<ReplicateResult> results(n_reps);
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= n_reps) return;
      ReplicateResult& out = results[r];
      out.by_method.resize(n_methods);
      out.errors.resize(n_methods);
      const std::uint64_t rep_seed = derive_stream_seed(config.seed, r);
      try {
        const FinitePopulation* pop = &fp;
        FinitePopulation local;
        if (config.regenerate_fp) {
          FpConfig fp_cfg = config.fp;
          fp_cfg.seed = derive_stream_seed(config.fp.seed, r);
          local = generate_fp(fp_cfg);
          pop = &local;
        }
        const TwoPhaseDataset ds = config.design == DesignType::TypeI
                                       ? sample_type1(*pop, config.type1, rep_seed)
                                       : sample_type2(*pop, config.type2, rep_seed);
        for (std::size_t m = 0; m < n_methods; ++m) {
          try {
            const EstimatorOutput est = run_method(config.methods[m], ds, config.model,
                                                   fp_totals, config.calibration_floor);
            out.by_method[m] = std::make_pair(est.beta,
                                              Eigen::VectorXd(est.covariance.diagonal()));
          } catch (const std::exception& e) {
            out.errors[m] = e.what();
          }
        }
      } catch (const std::exception& e) {
        // Sampler failure: every method fails for this replicate.
        for (std::size_t m = 0; m < n_methods; ++m) out.errors[m] = e.what();
      }
    }
  };

  unsigned n_threads = config.threads > 0 ? static_cast<unsigned>(config.threads)
                                          : std::thread::hardware_concurrency();
  if (n_threads == 0) n_threads = 1;
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(n_reps));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Reduce in replicate order so scheduling cannot change the summary.
  std::vector<ReplicateDraws> draws(n_methods);
  std::vector<std::string> first_error(n_methods);
  for (std::size_t m = 0; m < n_methods; ++m) draws[m].method = config.methods[m].token;
  for (std::size_t r = 0; r < n_reps; ++r) {
    for (std::size_t m = 0; m < n_methods; ++m) {
      const auto& cell = results[r].by_method[m];
      if (cell) {
        draws[m].estimates.push_back(cell->first);
        draws[m].analytic_variances.push_back(cell->second);
      } else {
        draws[m].failures += 1;
        if (first_error[m].empty()) first_error[m] = results[r].errors[m];
      }
    }
  }
  for (std::size_t m = 0; m < n_methods; ++m) {
    if (draws[m].failures * 20 > config.replicates)
      throw StudyAbort("run_study: method '" + draws[m].method + "' failed on " +
                       std::to_string(draws[m].failures) + " of " +
                       std::to_string(config.replicates) + " replicates (> 5%); first error: " +
                       first_error[m]);
  }

  Eigen::VectorXd beta_true(5);
  for (int j = 0; j < 5; ++j) beta_true[j] = config.fp.beta_true[static_cast<std::size_t>(j)];
  return summarize(draws, beta_true, config.model.coefficient_names(), config.replicates);
}

std::vector<SweepRow> efficiency_sweep(const SweepConfig& config) {
  if (config.values.empty()) throw StudyAbort("efficiency_sweep: empty grid");
  if (config.designs.empty()) throw StudyAbort("efficiency_sweep: no designs");
  if (config.parameter != "f2" && config.parameter != "rho_x11_z2")
    throw StudyAbort("efficiency_sweep: unknown parameter '" + config.parameter + "'");

  std::vector<SweepRow> rows;
  for (DesignType design : config.designs) {
    for (double value : config.values) {
      StudyConfig study = config.base;
      study.design = design;
      if (config.parameter == "f2") {
        if (design == DesignType::TypeI) {
          study.type1.f2 = value;
        } else {
          const int cycles = static_cast<int>(std::lround(1.0 / value));
          study.type2.cycles = cycles;
          study.type2.x2_cycles = 1;
          study.type2.n_per_cycle = static_cast<double>(study.type1.n1) / cycles;
        }
      } else {
        study.fp.rho_x11_z2 = value;
      }
      // Make sure the baseline is available for the gain denominator.
      bool has_direct = false;
      for (const auto& m : study.methods) has_direct = has_direct || m.kind == Method::DirectS2;
      if (!has_direct) study.methods.insert(study.methods.begin(),
                                            parse_method_token("direct_s2"));

      const McSummary summary = run_study(study);
      for (const std::string& coef : summary.coefficient_names) {
        const double base_var = summary.cell("direct_s2", coef).empirical_variance;
        for (const auto& method : study.methods) {
          if (method.kind == Method::DirectS2) continue;
          SweepRow row;
          row.design = design == DesignType::TypeI ? "type1" : "type2";
          row.parameter = config.parameter;
          row.value = value;
          row.method = method.token;
          row.coefficient = coef;
          row.empvar_direct = base_var;
          row.empvar_method = summary.cell(method.token, coef).empirical_variance;
          row.efficiency_gain = base_var / row.empvar_method;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

namespace {

void write_metadata_comments(std::ostringstream& out, const MetadataPairs& metadata) {
  for (const auto& [key, value] : metadata) out << "# " << key << ": " << value << '\n';
}

nlohmann::json metadata_object(const MetadataPairs& metadata) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : metadata) j[key] = value;
  return j;
}

}  // namespace

std::string summary_to_csv(const McSummary& summary, const MetadataPairs& metadata) {
  std::ostringstream out;
  write_metadata_comments(out, metadata);
  out << "method,coefficient,beta_true,mean_estimate,relative_bias_pct,bias_is_absolute,"
         "empirical_variance,mean_analytic_variance,variance_ratio,mse,failures,replicates\n";
  for (const McCell& c : summary.cells) {
    out << c.method << ',' << c.coefficient << ',' << format_double(c.beta_true) << ','
        << format_double(c.mean_estimate) << ',' << format_double(c.relative_bias_pct) << ','
        << (c.bias_is_absolute ? 1 : 0) << ',' << format_double(c.empirical_variance) << ','
        << format_double(c.mean_analytic_variance) << ',' << format_double(c.variance_ratio)
        << ',' << format_double(c.mse) << ',' << summary.failure_counts.at(c.method) << ','
        << summary.replicates << '\n';
  }
  return out.str();
}

std::string summary_to_json(const McSummary& summary, const MetadataPairs& metadata) {
  nlohmann::json j;
  j["metadata"] = metadata_object(metadata);
  j["replicates"] = summary.replicates;
  j["coefficients"] = summary.coefficient_names;
  nlohmann::json methods = nlohmann::json::object();
  for (const McCell& c : summary.cells) {
    nlohmann::json& m = methods[c.method];
    if (m.is_null()) {
      m = nlohmann::json::object();
      m["failures"] = summary.failure_counts.at(c.method);
      m["cells"] = nlohmann::json::object();
    }
    nlohmann::json cell;
    cell["beta_true"] = c.beta_true;
    cell["mean_estimate"] = c.mean_estimate;
    cell["relative_bias_pct"] = c.relative_bias_pct;
    cell["bias_is_absolute"] = c.bias_is_absolute;
    cell["empirical_variance"] = c.empirical_variance;
    cell["mean_analytic_variance"] = c.mean_analytic_variance;
    cell["variance_ratio"] = c.variance_ratio;
    cell["mse"] = c.mse;
    m["cells"][c.coefficient] = cell;
  }
  j["methods"] = methods;
  return j.dump(2) + "\n";
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows, const MetadataPairs& metadata) {
  std::ostringstream out;
  write_metadata_comments(out, metadata);
  out << "design,parameter,value,method,coefficient,efficiency_gain,empvar_direct,"
         "empvar_method\n";
  for (const SweepRow& r : rows) {
    out << r.design << ',' << r.parameter << ',' << format_double(r.value) << ',' << r.method
        << ',' << r.coefficient << ',' << format_double(r.efficiency_gain) << ','
        << format_double(r.empvar_direct) << ',' << format_double(r.empvar_method) << '\n';
  }
  return out.str();
}

}  // namespace tpcalib
