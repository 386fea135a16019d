#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tpcalib/estimators.hpp"
#include "tpcalib/mcstudy.hpp"

namespace tpcalib {

/// Flat key=value configuration with section-prefixed keys ("fp.n",
/// "study.replicates", ...). Lines starting with '#' and blank lines are
/// ignored. Numeric values accept plain fractions ("1/3"). Reads are
/// tracked; unknown_keys() after parsing a typed config catches typos.
class KvConfig {
 public:
  static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>");
  static KvConfig parse_file(const std::string& path);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  /// Keys present in the file but never read. Empty after a clean parse.
  std::vector<std::string> unknown_keys() const;
  const std::string& origin() const { return origin_; }
  const std::string& raw_text() const { return raw_; }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool used = false;
  };
  std::map<std::string, Entry> entries_;
  std::string origin_;
  std::string raw_;

  const Entry& require(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;
};

/// FNV-1a 64-bit hash of the raw config text, printed as 16 hex digits;
/// recorded in every output file so runs can be traced to their inputs.
std::string config_hash(const std::string& text);

/// Study / sweep configs from the key=value schema (see bundled configs).
StudyConfig study_config_from(const KvConfig& kv);
SweepConfig sweep_config_from(const KvConfig& kv);

/// Analyze-mode model specification file.
struct AnalyzeSpec {
  DesignType design = DesignType::TypeI;
  std::optional<double> fp_size;
  ModelSpec model;
  PredictorSpec predictor;
  CalibOptions calibration;
};
AnalyzeSpec analyze_spec_from(const KvConfig& kv);

}  // namespace tpcalib
