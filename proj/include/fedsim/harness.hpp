#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/algorithms.hpp"
#include "fedsim/availability.hpp"
#include "fedsim/objectives.hpp"
#include "fedsim/trace.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

// JSON document -> validated RunConfig with defaults applied. SchemaError
// names the offending key; RangeError covers well-typed but out-of-range
// values.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(const std::string& text);

// Canonical JSON echo of the experiment-defining fields (excludes output_path
// and threads, which do not affect the trajectory). Two configs that produce
// the same echo produce the same trace bytes.
nlohmann::json config_to_json(const RunConfig& config);

// Schedule assembly; diurnal group_a defaults to the clients holding labels
// below label_boundary, sleep-window starts come from the seed streams.
Schedule build_schedule(const RunConfig& config, const StreamFactory& streams);

// Objective assembly. For logistic tasks under a sleep_window schedule the
// binary labels are skewed per client by its awake-window clock position.
std::unique_ptr<TrainingProblem> build_problem(const RunConfig& config, const Schedule& schedule,
                                               const StreamFactory& streams);

struct RunResult {
  RunTrace trace;
  std::vector<BoundReport> bounds;  // quadratic configs only
  double resolved_lr = 0.0;
};

// Executes one run: assembles the pieces, resolves the learning rate,
// validates the schedule's declared window over the horizon (warning, not
// error), and fills a trace with one record per eval_every rounds plus the
// final round. Writes trace (and bound reports) when output_path is set.
RunResult run_experiment(const RunConfig& config);

struct SweepSpec {
  RunConfig base;
  std::string axis;  // N | beta | E | D | alpha | T | algorithm
  std::vector<nlohmann::json> values;
  std::vector<std::int64_t> seeds;
  double target_loss = std::numeric_limits<double>::quiet_NaN();
};

SweepSpec parse_sweep(const nlohmann::json& doc);

// base with one axis value substituted; the result re-validates.
RunConfig apply_axis(const RunConfig& base, const std::string& axis, const nlohmann::json& value);

struct SweepRow {
  std::string axis_value;
  std::int64_t seed = 0;
  double final_loss = 0.0;
  double min_loss = 0.0;
  long rounds_to_target = -1;  // -1 = target absent or never reached
  double slope = 0.0;          // within-trace log-log slope of grad_norm_sq
};

// One cell per (axis value, seed), executed in parallel up to the
// FEDSIM_THREADS cap, results merged in deterministic value-major order.
std::vector<SweepRow> run_sweep(const SweepSpec& spec);

// Fixed-column CSV: axis_value,seed,final_loss,min_loss,rounds_to_target,slope
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace fedsim
