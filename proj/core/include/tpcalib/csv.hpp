#pragma once

#include <iosfwd>
#include <string>

#include "tpcalib/data.hpp"

namespace tpcalib {

/// Reads a two-phase dataset from the canonical CSV schema
///   unit_id, stratum, psu, cycle, w1, in_s2, w2, y, x1_1..x1_p, z_1..z_q, x2 [, x2_oracle]
/// Header is required; column order is free. Empty string or "NA" in the x2,
/// w2, cycle and x2_oracle columns means absent; any other unparsable numeric
/// is an error. The design type is declared by the caller, not inferred.
TwoPhaseDataset read_dataset_csv(std::istream& in, DesignType design_type);
TwoPhaseDataset read_dataset_csv_file(const std::string& path, DesignType design_type);

/// Writes the same schema back. Doubles are printed with 17 significant
/// digits so a write/read round trip is value-exact.
void write_dataset_csv(std::ostream& out, const TwoPhaseDataset& ds);
void write_dataset_csv_file(const std::string& path, const TwoPhaseDataset& ds);

/// Validation report as JSON lines, one violation per line:
///   {"row": <index or null>, "rule": "...", "message": "..."}
std::string report_to_jsonl(const ValidationReport& report);

/// Formats a double with round-trip precision (shared by all CSV writers).
std::string format_double(double x);

}  // namespace tpcalib
