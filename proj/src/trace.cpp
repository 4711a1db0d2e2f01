#include "fedsim/trace.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

nlohmann::json record_to_json(const MetricRecord& r, bool include_wall) {
  nlohmann::json j{{"round", r.round},
                   {"iteration", r.iteration},
                   {"loss", r.train_loss},
                   {"grad_norm_sq", r.grad_norm_sq},
                   {"num_available", r.num_available},
                   {"num_selected", r.num_selected}};
  if (include_wall) j["wall_ms"] = r.wall_ms;
  return j;  // nlohmann objects serialize with sorted keys: deterministic
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.round = j.at("round").get<long>();
  r.iteration = j.at("iteration").get<long>();
  r.train_loss = j.at("loss").get<double>();
  r.grad_norm_sq = j.at("grad_norm_sq").get<double>();
  r.num_available = j.at("num_available").get<int>();
  r.num_selected = j.at("num_selected").get<int>();
  if (j.contains("wall_ms")) r.wall_ms = j.at("wall_ms").get<double>();
  return r;
}

}  // namespace

std::string params_hash(const ParamVector& params) {
  std::string bytes(params.size() * sizeof(double), '\0');
  if (!params.empty()) std::memcpy(bytes.data(), params.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

std::string RunTrace::content_hash() const {
  std::string region;
  for (const MetricRecord& r : records) {
    region += record_to_json(r, false).dump();
    region += '\n';
  }
  region += params_hash(final_params);
  region += nlohmann::json(final_loss).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(region)));
  return buf;
}

std::string RunTrace::to_jsonl(bool include_wall) const {
  std::string out;
  for (const MetricRecord& r : records) {
    out += record_to_json(r, include_wall).dump();
    out += '\n';
  }
  nlohmann::json footer{{"final_loss", final_loss},
                        {"final_params_hash", params_hash(final_params)},
                        {"config", config_echo},
                        {"seed", seed},
                        {"schedule_valid", schedule_valid},
                        {"content_hash", content_hash()}};
  out += nlohmann::json{{"footer", footer}}.dump();
  out += '\n';
  return out;
}

RunTrace RunTrace::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace: " + path);
  RunTrace t;
  std::string line;
  bool saw_footer = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("trace: bad JSON line");
    if (j.contains("footer")) {
      const nlohmann::json& f = j["footer"];
      t.final_loss = f.at("final_loss").get<double>();
      t.seed = f.at("seed").get<std::int64_t>();
      t.schedule_valid = f.at("schedule_valid").get<bool>();
      t.config_echo = f.at("config");
      t.footer_raw = f;
      saw_footer = true;
    } else {
      t.records.push_back(record_from_json(j));
    }
  }
  if (!saw_footer) throw IoError("trace: missing footer: " + path);
  return t;
}

void write_trace(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace: " + path);
  out << trace.to_jsonl(true);
  if (!out) throw IoError("short write: " + path);
}

void write_bound_reports(const std::vector<BoundReport>& reports, const std::string& path) {
  nlohmann::json arr = nlohmann::json::array();
  for (const BoundReport& r : reports)
    arr.push_back({{"bound_name", r.bound_name},
                   {"inputs", r.inputs},
                   {"value", r.value},
                   {"lhs_empirical", r.lhs_empirical},
                   {"satisfied", r.satisfied}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write bound report: " + path);
  out << arr.dump(2) << '\n';
}

}  // namespace fedsim
