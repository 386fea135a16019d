#include "tpcalib/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tpcalib/errors.hpp"

namespace tpcalib {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, const std::string& context) {
  const std::string s = trim(raw);
  const auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      std::size_t p1 = 0, p2 = 0;
      const double num = std::stod(s.substr(0, slash), &p1);
      const double den = std::stod(s.substr(slash + 1), &p2);
      if (p1 != slash || p2 != s.size() - slash - 1 || den == 0.0)
        throw std::invalid_argument("bad fraction");
      return num / den;
    }
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": cannot parse '" + s + "' as a number");
  }
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text, const std::string& origin) {
  KvConfig cfg;
  cfg.origin_ = origin;
  cfg.raw_ = text;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.entries_.count(key))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    cfg.entries_[key] = Entry{value, line_no, false};
  }
  return cfg;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

bool KvConfig::has(const std::string& key) const {
  auto it = entries_.find(key);
  if (it != entries_.end()) it->second.used = true;
  return it != entries_.end();
}

const KvConfig::Entry& KvConfig::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw ConfigError(origin_ + ": missing required key '" + key + "'");
  it->second.used = true;
  return it->second;
}

void KvConfig::fail(const std::string& key, const std::string& why) const {
  auto it = entries_.find(key);
  const std::string line = it == entries_.end() ? "?" : std::to_string(it->second.line);
  throw ConfigError(origin_ + ":" + line + ": key '" + key + "': " + why);
}

std::string KvConfig::get_string(const std::string& key) const { return require(key).value; }

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? require(key).value : fallback;
}

double KvConfig::get_double(const std::string& key) const {
  const Entry& e = require(key);
  return parse_number(e.value, origin_ + ":" + std::to_string(e.line) + ": key '" + key + "'");
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KvConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const auto i = static_cast<std::int64_t>(v);
  if (static_cast<double>(i) != v) fail(key, "expected an integer");
  return i;
}

std::int64_t KvConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = require(key).value;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(key, "expected true/false");
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  const Entry& e = require(key);
  std::vector<std::string> out;
  std::string cur;
  for (char ch : e.value + ",") {
    if (ch == ',') {
      const std::string t = trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (out.empty()) fail(key, "expected a non-empty comma-separated list");
  return out;
}

std::vector<double> KvConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_list(key))
    out.push_back(parse_number(item, origin_ + ": key '" + key + "'"));
  return out;
}

std::vector<std::string> KvConfig::unknown_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, entry] : entries_)
    if (!entry.used) out.push_back(key);
  return out;
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

FpConfig fp_config_from(const KvConfig& kv) {
  FpConfig fp;
  fp.n = kv.get_int("fp.size", fp.n);
  fp.rho_x11_z2 = kv.get_double("fp.rho_x11_z2", fp.rho_x11_z2);
  fp.eps_sd = kv.get_double("fp.eps_sd", fp.eps_sd);
  if (kv.has("fp.beta_true")) {
    const auto values = kv.get_double_list("fp.beta_true");
    if (values.size() != 5)
      throw ConfigError("fp.beta_true must list exactly 5 values");
    std::copy(values.begin(), values.end(), fp.beta_true.begin());
  }
  fp.stage1_clusters = static_cast<int>(kv.get_int("fp.stage1_clusters", fp.stage1_clusters));
  fp.stage2_per_stage1 =
      static_cast<int>(kv.get_int("fp.stage2_per_stage1", fp.stage2_per_stage1));
  fp.units_per_stage2 =
      static_cast<int>(kv.get_int("fp.units_per_stage2", fp.units_per_stage2));
  fp.mos_coefficient = kv.get_double("fp.mos_coefficient", fp.mos_coefficient);
  fp.sort_outcome_weight = kv.get_double("fp.sort_outcome_weight", fp.sort_outcome_weight);
  fp.sort_x12_weight = kv.get_double("fp.sort_x12_weight", fp.sort_x12_weight);
  fp.sort_z2_weight = kv.get_double("fp.sort_z2_weight", fp.sort_z2_weight);
  fp.sort_noise_sd = kv.get_double("fp.sort_noise_sd", fp.sort_noise_sd);
  fp.seed = static_cast<std::uint64_t>(kv.get_int("fp.seed", 42));
  return fp;
}

DesignType design_from(const std::string& text) {
  if (text == "type1") return DesignType::TypeI;
  if (text == "type2") return DesignType::TypeII;
  throw ConfigError("design.type must be 'type1' or 'type2', got '" + text + "'");
}

void check_consumed(const KvConfig& kv) {
  const auto unknown = kv.unknown_keys();
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError(kv.origin() + ": unknown keys: " + list);
  }
}

}  // namespace

StudyConfig study_config_from(const KvConfig& kv) {
  StudyConfig cfg;
  cfg.fp = fp_config_from(kv);
  cfg.design = design_from(kv.get_string("design.type", "type1"));
  cfg.type1.n1 = static_cast<int>(kv.get_int("sample.n1", cfg.type1.n1));
  cfg.type1.f2 = kv.get_double("sample.f2", cfg.type1.f2);
  cfg.type1.stage1_draws =
      static_cast<int>(kv.get_int("sample.stage1_draws", cfg.type1.stage1_draws));
  cfg.type1.stage2_draws =
      static_cast<int>(kv.get_int("sample.stage2_draws", cfg.type1.stage2_draws));
  cfg.type1.plain_srs_phase2 = kv.get_bool("sample.plain_srs_phase2", false);
  cfg.type2.cycles = static_cast<int>(kv.get_int("design.cycles", cfg.type2.cycles));
  cfg.type2.x2_cycles = static_cast<int>(kv.get_int("design.x2_cycles", cfg.type2.x2_cycles));
  cfg.type2.n_per_cycle = kv.get_double("sample.n_per_cycle",
                                        static_cast<double>(cfg.type1.n1) / cfg.type2.cycles);
  cfg.type2.stage1_draws = cfg.type1.stage1_draws;
  cfg.type2.stage2_draws = cfg.type1.stage2_draws;
  cfg.replicates = static_cast<int>(kv.get_int("study.replicates", cfg.replicates));
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("study.seed", 1));
  cfg.threads = static_cast<int>(kv.get_int("study.threads", 0));
  cfg.regenerate_fp = kv.get_bool("study.regenerate_fp", false);
  if (kv.has("study.calibration_floor"))
    cfg.calibration_floor = kv.get_double("study.calibration_floor");
  for (const std::string& token : kv.get_list("study.methods"))
    cfg.methods.push_back(parse_method_token(token));
  check_consumed(kv);
  return cfg;
}

SweepConfig sweep_config_from(const KvConfig& kv) {
  SweepConfig cfg;
  cfg.parameter = kv.get_string("sweep.parameter");
  cfg.values = kv.get_double_list("sweep.values");
  for (const std::string& d : kv.get_list("sweep.designs"))
    cfg.designs.push_back(design_from(d));

  // The base study reuses the study.* / fp.* / sample.* keys.
  cfg.base.fp = fp_config_from(kv);
  cfg.base.type1.n1 = static_cast<int>(kv.get_int("sample.n1", cfg.base.type1.n1));
  cfg.base.type1.f2 = kv.get_double("sample.f2", cfg.base.type1.f2);
  cfg.base.type1.stage1_draws =
      static_cast<int>(kv.get_int("sample.stage1_draws", cfg.base.type1.stage1_draws));
  cfg.base.type1.stage2_draws =
      static_cast<int>(kv.get_int("sample.stage2_draws", cfg.base.type1.stage2_draws));
  cfg.base.type2.stage1_draws = cfg.base.type1.stage1_draws;
  cfg.base.type2.stage2_draws = cfg.base.type1.stage2_draws;
  cfg.base.replicates = static_cast<int>(kv.get_int("study.replicates", 300));
  cfg.base.seed = static_cast<std::uint64_t>(kv.get_int("study.seed", 1));
  cfg.base.threads = static_cast<int>(kv.get_int("study.threads", 0));
  if (kv.has("study.calibration_floor"))
    cfg.base.calibration_floor = kv.get_double("study.calibration_floor");
  for (const std::string& token : kv.get_list("study.methods"))
    cfg.base.methods.push_back(parse_method_token(token));
  check_consumed(kv);
  return cfg;
}

AnalyzeSpec analyze_spec_from(const KvConfig& kv) {
  AnalyzeSpec spec;
  spec.design = design_from(kv.get_string("design.type", "type1"));
  if (kv.has("fp.size")) spec.fp_size = kv.get_double("fp.size");
  spec.model.covariates = kv.get_list("model.covariates");
  if (kv.has("model.interactions")) {
    for (const std::string& pair : kv.get_list("model.interactions")) {
      const auto star = pair.find('*');
      if (star == std::string::npos)
        throw ConfigError("model.interactions entries must look like a*b, got '" + pair + "'");
      std::string a = pair.substr(0, star), b = pair.substr(star + 1);
      const auto strip = [](std::string s) {
        s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; }),
                s.end());
        return s;
      };
      spec.model.interactions.emplace_back(strip(a), strip(b));
    }
  }
  const std::string mode = kv.get_string("predictor.mode", "passthrough");
  if (mode == "passthrough")
    spec.predictor.mode = PredictorSpec::Mode::Passthrough;
  else if (mode == "linear_s2")
    spec.predictor.mode = PredictorSpec::Mode::LinearInS2;
  else
    throw ConfigError("predictor.mode must be 'passthrough' or 'linear_s2'");
  spec.predictor.columns = kv.get_list("predictor.columns");
  const std::string distance = kv.get_string("calibration.distance", "chisq");
  if (distance == "chisq")
    spec.calibration.distance = CalibDistance::ChiSquare;
  else if (distance == "exponential")
    spec.calibration.distance = CalibDistance::Exponential;
  else
    throw ConfigError("calibration.distance must be 'chisq' or 'exponential'");
  spec.calibration.use_influence_auxiliaries =
      kv.get_bool("calibration.use_influence_auxiliaries", false);
  spec.calibration.plugin_variance = kv.get_bool("variance.plugin", false);
  check_consumed(kv);
  return spec;
}

}  // namespace tpcalib
