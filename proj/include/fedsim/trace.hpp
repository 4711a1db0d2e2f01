#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/types.hpp"

namespace fedsim {

// JSON-lines run trace: one record object per eval point, then a footer
// object. Everything except the wall_ms fields is deterministic for a fixed
// config; the footer's content_hash covers exactly that deterministic region.
struct RunTrace {
  std::vector<MetricRecord> records;
  double final_loss = 0.0;
  ParamVector final_params;
  bool schedule_valid = true;
  std::int64_t seed = 0;
  nlohmann::json config_echo;
  nlohmann::json footer_raw;  // as read back by parse_file

  std::string content_hash() const;
  // Full file body; include_wall=false yields the hashed deterministic region.
  std::string to_jsonl(bool include_wall = true) const;

  static RunTrace parse_file(const std::string& path);
};

void write_trace(const RunTrace& trace, const std::string& path);

// Hex FNV-1a over the raw double bits.
std::string params_hash(const ParamVector& params);

struct BoundReport {
  std::string bound_name;
  nlohmann::json inputs;
  double value = 0.0;          // right-hand side
  double lhs_empirical = 0.0;  // observed quantity on this sample path
  bool satisfied = false;
};

void write_bound_reports(const std::vector<BoundReport>& reports, const std::string& path);

}  // namespace fedsim
