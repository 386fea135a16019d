#include "tpcalib/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tpcalib/errors.hpp"

namespace tpcalib {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

bool is_missing(const std::string& s) { return s.empty() || s == "NA"; }

double parse_double(const std::string& s, std::size_t line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": column '" + col +
                    "': cannot parse '" + s + "' as a number");
  }
}

// Columns named <prefix>_1 .. <prefix>_k must be present contiguously from 1.
std::vector<int> indexed_columns(const std::map<std::string, int>& header,
                                 const std::string& prefix) {
  std::vector<int> cols;
  for (int k = 1;; ++k) {
    auto it = header.find(prefix + "_" + std::to_string(k));
    if (it == header.end()) break;
    cols.push_back(it->second);
  }
  return cols;
}

}  // namespace

TwoPhaseDataset read_dataset_csv(std::istream& in, DesignType design_type) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: header required");
  const auto names = split_csv_line(line);
  std::map<std::string, int> header;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (header.count(names[j])) throw DataError("duplicate CSV column '" + names[j] + "'");
    header[names[j]] = static_cast<int>(j);
  }
  auto require = [&](const char* name) {
    auto it = header.find(name);
    if (it == header.end()) throw DataError(std::string("missing CSV column '") + name + "'");
    return it->second;
  };
  const int c_unit = require("unit_id");
  const int c_stratum = require("stratum");
  const int c_psu = require("psu");
  const int c_cycle = require("cycle");
  const int c_w1 = require("w1");
  const int c_ins2 = require("in_s2");
  const int c_w2 = require("w2");
  const int c_y = require("y");
  const int c_x2 = require("x2");
  const auto x1_cols = indexed_columns(header, "x1");
  const auto z_cols = indexed_columns(header, "z");
  if (x1_cols.empty()) throw DataError("missing CSV columns x1_1..x1_p");
  const int c_oracle = header.count("x2_oracle") ? header["x2_oracle"] : -1;

  TwoPhaseDataset ds;
  ds.design_type = design_type;
  ds.phase2_strata_rule = design_type == DesignType::TypeII
                              ? Phase2StrataRule::CycleSubset
                              : Phase2StrataRule::Phase1PsuAsStratum;
  for (std::size_t j = 0; j < x1_cols.size(); ++j)
    ds.x1_names.push_back("x1_" + std::to_string(j + 1));
  for (std::size_t j = 0; j < z_cols.size(); ++j)
    ds.z_names.push_back("z_" + std::to_string(j + 1));

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != names.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(names.size()) + " fields, got " +
                      std::to_string(f.size()));
    Row r;
    r.unit_id = f[c_unit];
    r.stratum = f[c_stratum];
    r.psu = f[c_psu];
    if (!is_missing(f[c_cycle])) r.cycle = f[c_cycle];
    r.w1 = parse_double(f[c_w1], line_no, "w1");
    if (f[c_ins2] == "1")
      r.in_s2 = true;
    else if (f[c_ins2] == "0")
      r.in_s2 = false;
    else
      throw DataError("line " + std::to_string(line_no) + ": in_s2 must be 0 or 1");
    if (!is_missing(f[c_w2])) r.w2 = parse_double(f[c_w2], line_no, "w2");
    const double y = parse_double(f[c_y], line_no, "y");
    r.y = static_cast<int>(y);
    if (static_cast<double>(r.y) != y)
      throw DataError("line " + std::to_string(line_no) + ": y must be integral");
    for (int c : x1_cols) r.x1.push_back(parse_double(f[c], line_no, names[c]));
    for (int c : z_cols) r.z.push_back(parse_double(f[c], line_no, names[c]));
    if (!is_missing(f[c_x2])) r.x2 = parse_double(f[c_x2], line_no, "x2");
    if (c_oracle >= 0 && !is_missing(f[c_oracle]))
      r.x2_oracle = parse_double(f[c_oracle], line_no, "x2_oracle");
    ds.rows.push_back(std::move(r));
  }

  // TypeII cycle counts derived from the data.
  if (design_type == DesignType::TypeII) {
    std::set<std::string> all, designated;
    for (const Row& r : ds.rows)
      if (r.cycle) {
        all.insert(*r.cycle);
        if (r.in_s2) designated.insert(*r.cycle);
      }
    ds.cycles_total = static_cast<int>(all.size());
    ds.cycles_with_x2 = static_cast<int>(designated.size());
  }
  return ds;
}

TwoPhaseDataset read_dataset_csv_file(const std::string& path, DesignType design_type) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  return read_dataset_csv(in, design_type);
}

void write_dataset_csv(std::ostream& out, const TwoPhaseDataset& ds) {
  out << "unit_id,stratum,psu,cycle,w1,in_s2,w2,y";
  for (const auto& n : ds.x1_names) out << ',' << n;
  for (const auto& n : ds.z_names) out << ',' << n;
  out << ",x2";
  const bool any_oracle =
      std::any_of(ds.rows.begin(), ds.rows.end(), [](const Row& r) { return r.x2_oracle.has_value(); });
  if (any_oracle) out << ",x2_oracle";
  out << '\n';
  for (const Row& r : ds.rows) {
    out << r.unit_id << ',' << r.stratum << ',' << r.psu << ','
        << (r.cycle ? *r.cycle : "") << ',' << format_double(r.w1) << ','
        << (r.in_s2 ? '1' : '0') << ',' << (r.w2 ? format_double(*r.w2) : "") << ','
        << r.y;
    for (double v : r.x1) out << ',' << format_double(v);
    for (double v : r.z) out << ',' << format_double(v);
    out << ',' << (r.x2 ? format_double(*r.x2) : "");
    if (any_oracle) out << ',' << (r.x2_oracle ? format_double(*r.x2_oracle) : "");
    out << '\n';
  }
}

void write_dataset_csv_file(const std::string& path, const TwoPhaseDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_dataset_csv(out, ds);
}

std::string report_to_jsonl(const ValidationReport& report) {
  std::ostringstream out;
  for (const Violation& v : report.violations) {
    nlohmann::json j;
    if (v.row >= 0)
      j["row"] = v.row;
    else
      j["row"] = nullptr;
    j["rule"] = v.rule;
    j["message"] = v.message;
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace tpcalib
