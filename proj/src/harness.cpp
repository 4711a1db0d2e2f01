#include "fedsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "fedsim/analysis.hpp"

namespace fedsim {

// ===== enum names ==========================================================

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kFedLaAvg:
      return "fedlaavg";
    case Algorithm::kFedAvg:
      return "fedavg";
    case Algorithm::kFedSgd:
      return "fedsgd";
    case Algorithm::kFedProx:
      return "fedprox";
    case Algorithm::kSeqSgd:
      return "seqsgd";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "fedlaavg") return Algorithm::kFedLaAvg;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "fedsgd") return Algorithm::kFedSgd;
  if (name == "fedprox") return Algorithm::kFedProx;
  if (name == "seqsgd") return Algorithm::kSeqSgd;
  throw SchemaError("unknown algorithm '" + name +
                    "' (expected fedlaavg|fedavg|fedsgd|fedprox|seqsgd)");
}

namespace {

const char* objective_kind_name(ObjectiveSpec::Kind k) {
  switch (k) {
    case ObjectiveSpec::Kind::kQuadratic:
      return "quadratic";
    case ObjectiveSpec::Kind::kLogistic:
      return "logistic";
    case ObjectiveSpec::Kind::kCsv:
      return "csv";
  }
  return "?";
}

const char* availability_kind_name(AvailabilitySpec::Kind k) {
  switch (k) {
    case AvailabilitySpec::Kind::kAlwaysOn:
      return "always_on";
    case AvailabilitySpec::Kind::kAlternating:
      return "alternating";
    case AvailabilitySpec::Kind::kDiurnal:
      return "diurnal";
    case AvailabilitySpec::Kind::kSleepWindow:
      return "sleep_window";
    case AvailabilitySpec::Kind::kCustom:
      return "custom";
  }
  return "?";
}

}  // namespace

// ===== RunConfig::validate =================================================

void RunConfig::validate() const {
  if (num_clients < 1) throw RangeError("clients must be >= 1");
  if (!(select_frac > 0.0) || select_frac > 1.0)
    throw RangeError("select_frac must be in (0, 1]");
  if (local_iters < 1) throw RangeError("local_iters must be >= 1");
  if (rounds < 1) throw RangeError("rounds must be >= 1");
  if (!auto_lr && !(learning_rate > 0.0)) throw RangeError("lr must be positive");
  if (prox_mu < 0.0) throw RangeError("prox_mu must be >= 0");
  if (batch_size < 1) throw RangeError("batch_size must be >= 1");
  if (eval_every < 1) throw RangeError("eval_every must be >= 1");
  if (threads < 1) throw RangeError("threads must be >= 1");
  if (algorithm == Algorithm::kFedSgd && local_iters != 1)
    throw RangeError("fedsgd requires local_iters = 1");

  switch (objective.kind) {
    case ObjectiveSpec::Kind::kQuadratic:
      if (static_cast<int>(objective.means.size()) != num_clients)
        throw RangeError("objective.means must list one mean per client");
      if (objective.noise_sigma < 0.0) throw RangeError("objective.noise_sigma must be >= 0");
      break;
    case ObjectiveSpec::Kind::kLogistic:
      if (objective.num_classes < 2) throw RangeError("objective.classes must be >= 2");
      if (objective.dim < 1) throw RangeError("objective.dim must be >= 1");
      if (!(objective.sample_sigma > 0.0))
        throw RangeError("objective.sample_sigma must be positive");
      if (objective.total_samples < num_clients)
        throw RangeError("objective.samples must cover every client");
      if (availability.kind == AvailabilitySpec::Kind::kSleepWindow) {
        if (objective.num_classes != 2)
          throw RangeError("sleep_window skews binary labels: objective.classes must be 2");
      } else if (num_clients % objective.num_classes != 0) {
        throw RangeError("clients must be a multiple of objective.classes");
      }
      break;
    case ObjectiveSpec::Kind::kCsv:
      if (objective.csv_path.empty()) throw RangeError("objective.path must name a CSV file");
      break;
  }

  switch (availability.kind) {
    case AvailabilitySpec::Kind::kAlwaysOn:
      break;
    case AvailabilitySpec::Kind::kAlternating:
      if (availability.t1 < 1 || availability.t2 < 1)
        throw RangeError("availability.t1 and t2 must be >= 1");
      break;  // group ids checked when the schedule is built
    case AvailabilitySpec::Kind::kDiurnal:
      if (availability.block_len < 1) throw RangeError("availability.block_len must be >= 1");
      if (availability.group_a.empty()) {
        // the default group is "clients holding the first label_boundary
        // labels", which only makes sense for the synthetic classifier
        if (objective.kind != ObjectiveSpec::Kind::kLogistic)
          throw RangeError("diurnal availability needs an explicit group_a for this objective");
        if (availability.label_boundary < 1 ||
            availability.label_boundary >= objective.num_classes)
          throw RangeError("availability.label_boundary must be in [1, classes-1]");
      }
      break;
    case AvailabilitySpec::Kind::kSleepWindow:
      if (availability.rounds_per_day < 3 || availability.rounds_per_day % 3 != 0)
        throw RangeError("availability.rounds_per_day must be a positive multiple of 3");
      if (availability.alpha < 0.0 || availability.alpha > 0.5)
        throw RangeError("availability.alpha must be in [0, 0.5]");
      if (objective.kind != ObjectiveSpec::Kind::kLogistic && availability.alpha != 0.5)
        throw RangeError("availability.alpha only skews the synthetic logistic labels");
      break;
    case AvailabilitySpec::Kind::kCustom:
      if (availability.custom_path.empty() == availability.custom_bitmap.empty())
        throw RangeError("custom availability needs exactly one of path or bitmap");
      break;
  }
}

// ===== JSON schema =========================================================

namespace {

[[noreturn]] void bad_type(const std::string& key, const char* want) {
  throw SchemaError("key '" + key + "' must be " + want);
}

double get_number(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) bad_type(key, "a number");
  return v.get<double>();
}

long get_integer(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) bad_type(key, "an integer");
  return v.get<long>();
}

bool get_boolean(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) bad_type(key, "a boolean");
  return v.get<bool>();
}

std::string get_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) bad_type(key, "a string");
  return v.get<std::string>();
}

std::vector<double> get_number_array(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) bad_type(key, "an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) bad_type(key, "an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<int> get_id_array(const nlohmann::json& v, const std::string& key) {
  if (!v.is_array()) bad_type(key, "an array of client ids");
  std::vector<int> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number_integer()) bad_type(key, "an array of client ids");
    out.push_back(e.get<int>());
  }
  return out;
}

void check_keys(const nlohmann::json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw SchemaError("unknown key '" + (prefix.empty() ? it.key() : prefix + "." + it.key()) +
                        "'");
  }
}

ObjectiveSpec parse_objective(const nlohmann::json& obj) {
  if (!obj.is_object()) bad_type("objective", "an object");
  ObjectiveSpec spec;
  std::string kind =
      obj.contains("kind") ? get_string(obj.at("kind"), "objective.kind") : "quadratic";
  if (kind == "quadratic") {
    spec.kind = ObjectiveSpec::Kind::kQuadratic;
    check_keys(obj, "objective", {"kind", "means", "noise_sigma"});
    if (!obj.contains("means")) throw SchemaError("quadratic objective needs key 'objective.means'");
    spec.means = get_number_array(obj.at("means"), "objective.means");
    if (obj.contains("noise_sigma"))
      spec.noise_sigma = get_number(obj.at("noise_sigma"), "objective.noise_sigma");
  } else if (kind == "logistic") {
    spec.kind = ObjectiveSpec::Kind::kLogistic;
    check_keys(obj, "objective",
               {"kind", "classes", "dim", "sample_sigma", "center_scale", "samples"});
    if (obj.contains("classes"))
      spec.num_classes = static_cast<int>(get_integer(obj.at("classes"), "objective.classes"));
    if (obj.contains("dim"))
      spec.dim = static_cast<int>(get_integer(obj.at("dim"), "objective.dim"));
    if (obj.contains("sample_sigma"))
      spec.sample_sigma = get_number(obj.at("sample_sigma"), "objective.sample_sigma");
    if (obj.contains("center_scale"))
      spec.center_scale = get_number(obj.at("center_scale"), "objective.center_scale");
    if (obj.contains("samples"))
      spec.total_samples = get_integer(obj.at("samples"), "objective.samples");
  } else if (kind == "csv") {
    spec.kind = ObjectiveSpec::Kind::kCsv;
    check_keys(obj, "objective", {"kind", "path"});
    if (!obj.contains("path")) throw SchemaError("csv objective needs key 'objective.path'");
    spec.csv_path = get_string(obj.at("path"), "objective.path");
  } else {
    throw SchemaError("key 'objective.kind' must be quadratic|logistic|csv");
  }
  return spec;
}

AvailabilitySpec parse_availability(const nlohmann::json& obj) {
  if (!obj.is_object()) bad_type("availability", "an object");
  AvailabilitySpec spec;
  std::string kind =
      obj.contains("kind") ? get_string(obj.at("kind"), "availability.kind") : "always_on";
  if (kind == "always_on") {
    spec.kind = AvailabilitySpec::Kind::kAlwaysOn;
    check_keys(obj, "availability", {"kind"});
  } else if (kind == "alternating") {
    spec.kind = AvailabilitySpec::Kind::kAlternating;
    check_keys(obj, "availability", {"kind", "t1", "t2", "group1", "group2"});
    if (obj.contains("t1")) spec.t1 = static_cast<int>(get_integer(obj.at("t1"), "availability.t1"));
    if (obj.contains("t2")) spec.t2 = static_cast<int>(get_integer(obj.at("t2"), "availability.t2"));
    if (obj.contains("group1")) spec.group1 = get_id_array(obj.at("group1"), "availability.group1");
    if (obj.contains("group2")) spec.group2 = get_id_array(obj.at("group2"), "availability.group2");
  } else if (kind == "diurnal") {
    spec.kind = AvailabilitySpec::Kind::kDiurnal;
    check_keys(obj, "availability", {"kind", "block_len", "label_boundary", "group_a"});
    if (obj.contains("block_len"))
      spec.block_len = static_cast<int>(get_integer(obj.at("block_len"), "availability.block_len"));
    if (obj.contains("label_boundary"))
      spec.label_boundary =
          static_cast<int>(get_integer(obj.at("label_boundary"), "availability.label_boundary"));
    if (obj.contains("group_a"))
      spec.group_a = get_id_array(obj.at("group_a"), "availability.group_a");
  } else if (kind == "sleep_window") {
    spec.kind = AvailabilitySpec::Kind::kSleepWindow;
    check_keys(obj, "availability", {"kind", "rounds_per_day", "alpha"});
    if (obj.contains("rounds_per_day"))
      spec.rounds_per_day =
          static_cast<int>(get_integer(obj.at("rounds_per_day"), "availability.rounds_per_day"));
    if (obj.contains("alpha")) spec.alpha = get_number(obj.at("alpha"), "availability.alpha");
  } else if (kind == "custom") {
    spec.kind = AvailabilitySpec::Kind::kCustom;
    check_keys(obj, "availability", {"kind", "path", "bitmap"});
    if (obj.contains("path")) spec.custom_path = get_string(obj.at("path"), "availability.path");
    if (obj.contains("bitmap")) {
      const nlohmann::json& rows = obj.at("bitmap");
      if (!rows.is_array()) bad_type("availability.bitmap", "an array of '0'/'1' strings");
      for (const auto& row : rows) {
        if (!row.is_string()) bad_type("availability.bitmap", "an array of '0'/'1' strings");
        std::string flags = row.get<std::string>();
        std::vector<uint8_t> bits(flags.size());
        for (size_t i = 0; i < flags.size(); ++i) {
          if (flags[i] != '0' && flags[i] != '1')
            bad_type("availability.bitmap", "an array of '0'/'1' strings");
          bits[i] = flags[i] == '1';
        }
        spec.custom_bitmap.push_back(std::move(bits));
      }
    }
  } else {
    throw SchemaError(
        "key 'availability.kind' must be always_on|alternating|diurnal|sleep_window|custom");
  }
  return spec;
}

}  // namespace

RunConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("config root must be a JSON object");
  check_keys(doc, "",
             {"algorithm", "clients", "select_frac", "local_iters", "rounds", "lr", "prox_mu",
              "batch_size", "seed", "eval_every", "strict_selection", "threads", "objective",
              "availability", "output"});
  RunConfig c;
  if (doc.contains("algorithm"))
    c.algorithm = algorithm_from_name(get_string(doc.at("algorithm"), "algorithm"));
  if (doc.contains("clients"))
    c.num_clients = static_cast<int>(get_integer(doc.at("clients"), "clients"));
  if (doc.contains("select_frac")) c.select_frac = get_number(doc.at("select_frac"), "select_frac");
  if (doc.contains("local_iters"))
    c.local_iters = static_cast<int>(get_integer(doc.at("local_iters"), "local_iters"));
  if (doc.contains("rounds")) c.rounds = static_cast<int>(get_integer(doc.at("rounds"), "rounds"));
  if (doc.contains("lr")) {
    const nlohmann::json& lr = doc.at("lr");
    if (lr.is_string()) {
      if (lr.get<std::string>() != "auto") bad_type("lr", "a positive number or \"auto\"");
      c.auto_lr = true;
      c.learning_rate = 0.0;
    } else if (lr.is_number()) {
      c.auto_lr = false;
      c.learning_rate = lr.get<double>();
    } else {
      bad_type("lr", "a positive number or \"auto\"");
    }
  }
  if (doc.contains("batch_size"))
    c.batch_size = static_cast<int>(get_integer(doc.at("batch_size"), "batch_size"));
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_integer()) bad_type("seed", "an integer");
    c.master_seed = doc.at("seed").get<std::int64_t>();
  }
  if (doc.contains("eval_every"))
    c.eval_every = static_cast<int>(get_integer(doc.at("eval_every"), "eval_every"));
  if (doc.contains("strict_selection"))
    c.strict_selection = get_boolean(doc.at("strict_selection"), "strict_selection");
  if (doc.contains("threads"))
    c.threads = static_cast<int>(get_integer(doc.at("threads"), "threads"));
  if (doc.contains("objective")) c.objective = parse_objective(doc.at("objective"));
  if (doc.contains("availability")) c.availability = parse_availability(doc.at("availability"));
  if (doc.contains("output")) c.output_path = get_string(doc.at("output"), "output");
  if (doc.contains("prox_mu")) {
    c.prox_mu = get_number(doc.at("prox_mu"), "prox_mu");
  } else if (c.algorithm == Algorithm::kFedProx) {
    // default proximal weight for the convex objectives shipped here
    c.prox_mu = 1.0;
  }
  c.validate();
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw SchemaError("config is not valid JSON");
  return parse_config(doc);
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["clients"] = c.num_clients;
  j["select_frac"] = c.select_frac;
  j["local_iters"] = c.local_iters;
  j["rounds"] = c.rounds;
  if (c.auto_lr)
    j["lr"] = "auto";
  else
    j["lr"] = c.learning_rate;
  j["prox_mu"] = c.prox_mu;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.master_seed;
  j["eval_every"] = c.eval_every;
  j["strict_selection"] = c.strict_selection;

  nlohmann::json obj;
  obj["kind"] = objective_kind_name(c.objective.kind);
  switch (c.objective.kind) {
    case ObjectiveSpec::Kind::kQuadratic:
      obj["means"] = c.objective.means;
      obj["noise_sigma"] = c.objective.noise_sigma;
      break;
    case ObjectiveSpec::Kind::kLogistic:
      obj["classes"] = c.objective.num_classes;
      obj["dim"] = c.objective.dim;
      obj["sample_sigma"] = c.objective.sample_sigma;
      obj["center_scale"] = c.objective.center_scale;
      obj["samples"] = c.objective.total_samples;
      break;
    case ObjectiveSpec::Kind::kCsv:
      obj["path"] = c.objective.csv_path;
      break;
  }
  j["objective"] = obj;

  nlohmann::json av;
  av["kind"] = availability_kind_name(c.availability.kind);
  switch (c.availability.kind) {
    case AvailabilitySpec::Kind::kAlwaysOn:
      break;
    case AvailabilitySpec::Kind::kAlternating:
      av["t1"] = c.availability.t1;
      av["t2"] = c.availability.t2;
      if (!c.availability.group1.empty()) av["group1"] = c.availability.group1;
      if (!c.availability.group2.empty()) av["group2"] = c.availability.group2;
      break;
    case AvailabilitySpec::Kind::kDiurnal:
      av["block_len"] = c.availability.block_len;
      if (c.availability.group_a.empty())
        av["label_boundary"] = c.availability.label_boundary;
      else
        av["group_a"] = c.availability.group_a;
      break;
    case AvailabilitySpec::Kind::kSleepWindow:
      av["rounds_per_day"] = c.availability.rounds_per_day;
      av["alpha"] = c.availability.alpha;
      break;
    case AvailabilitySpec::Kind::kCustom:
      if (!c.availability.custom_path.empty()) {
        av["path"] = c.availability.custom_path;
      } else {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& row : c.availability.custom_bitmap) {
          std::string flags(row.size(), '0');
          for (size_t i = 0; i < row.size(); ++i)
            if (row[i]) flags[i] = '1';
          rows.push_back(flags);
        }
        av["bitmap"] = rows;
      }
      break;
  }
  j["availability"] = av;
  return j;
}

// ===== assembly ============================================================

Schedule build_schedule(const RunConfig& c, const StreamFactory& streams) {
  const AvailabilitySpec& av = c.availability;
  switch (av.kind) {
    case AvailabilitySpec::Kind::kAlwaysOn:
      return Schedule::always_on(c.num_clients);
    case AvailabilitySpec::Kind::kAlternating:
      return Schedule::alternating(c.num_clients, av.t1, av.t2, av.group1, av.group2);
    case AvailabilitySpec::Kind::kDiurnal: {
      std::vector<int> group_a = av.group_a;
      if (group_a.empty()) {
        // one-label-per-client rule: client i holds class i mod classes
        for (int i = 0; i < c.num_clients; ++i)
          if (i % c.objective.num_classes < av.label_boundary) group_a.push_back(i);
      }
      return Schedule::diurnal(c.num_clients, av.block_len, group_a);
    }
    case AvailabilitySpec::Kind::kSleepWindow:
      return Schedule::sleep_window(c.num_clients, av.rounds_per_day, streams);
    case AvailabilitySpec::Kind::kCustom: {
      Schedule s = av.custom_path.empty() ? Schedule::custom(av.custom_bitmap)
                                          : Schedule::custom_from_file(av.custom_path);
      if (s.num_clients() != c.num_clients)
        throw RangeError("custom schedule covers " + std::to_string(s.num_clients()) +
                         " clients, config says " + std::to_string(c.num_clients));
      return s;
    }
  }
  throw Error("unreachable availability kind");
}

std::unique_ptr<TrainingProblem> build_problem(const RunConfig& c, const Schedule& schedule,
                                               const StreamFactory& streams) {
  switch (c.objective.kind) {
    case ObjectiveSpec::Kind::kQuadratic:
      return std::make_unique<QuadraticProblem>(c.objective.means, c.objective.noise_sigma);
    case ObjectiveSpec::Kind::kLogistic: {
      SyntheticGeometry geom;
      geom.dim = c.objective.dim;
      geom.sample_sigma = c.objective.sample_sigma;
      geom.center_scale = c.objective.center_scale;
      std::vector<ClientDataset> shards;
      if (schedule.kind() == AvailabilitySpec::Kind::kSleepWindow) {
        // label skew follows the awake-window clock position
        std::vector<double> positive(c.num_clients);
        for (int i = 0; i < c.num_clients; ++i)
          positive[i] = sleep_positive_proportion(c.availability.alpha, schedule.client_hour(i));
        shards = partition_binary(c.num_clients, c.objective.total_samples, positive, streams,
                                  geom);
      } else {
        shards = partition_synthetic(c.num_clients, c.objective.num_classes,
                                     c.objective.total_samples, streams, geom);
      }
      return std::make_unique<LogisticProblem>(std::move(shards), c.objective.num_classes,
                                               c.objective.dim);
    }
    case ObjectiveSpec::Kind::kCsv: {
      auto [samples, classes] = load_csv(c.objective.csv_path);
      int feature_dim = samples.empty() ? 0 : static_cast<int>(samples.front().features.size());
      auto shards = partition_by_label(samples, c.num_clients);
      return std::make_unique<LogisticProblem>(std::move(shards), classes, feature_dim);
    }
  }
  throw Error("unreachable objective kind");
}

// ===== single run ==========================================================

RunResult run_experiment(const RunConfig& config) {
  config.validate();
  StreamFactory streams(config.master_seed);
  Schedule schedule = build_schedule(config, streams);
  std::unique_ptr<TrainingProblem> problem = build_problem(config, schedule, streams);
  const int N = problem->num_clients();
  const int dim = problem->dim();
  const int K = config.selected_count();
  const long R = config.rounds;
  const bool quadratic = config.objective.kind == ObjectiveSpec::Kind::kQuadratic;
  const double L = 2.0;  // exact smoothness of each scaled quadratic local

  if (config.auto_lr && !quadratic)
    throw RangeError("lr \"auto\" needs the quadratic objective (no exact smoothness "
                     "constant is known for the others)");
  const double gamma = resolve_learning_rate(config, L, schedule.declared_E());

  // Declared-window check over the horizon. Failure voids the staleness
  // guarantees but the run itself stays meaningful, so this only warns.
  bool schedule_ok = true;
  if (R >= schedule.declared_E()) {
    schedule_ok = validate_min_availability(schedule, schedule.declared_E(), R).ok;
  } else {
    for (int i = 0; i < N && schedule_ok; ++i) {
      bool seen = false;
      for (long t = 1; t <= R && !seen; ++t) seen = schedule.is_available(i, t);
      schedule_ok = seen;
    }
  }

  EngineOptions opt;
  opt.gamma = gamma;
  opt.local_iters = config.local_iters;
  opt.select_count = K;
  opt.strict = config.strict_selection;
  opt.batch_size = config.batch_size;
  opt.prox_mu = config.algorithm == Algorithm::kFedProx ? config.prox_mu : 0.0;
  opt.threads = config.threads;

  ServerState server = ServerState::init(N, dim);
  std::vector<ClientCache> caches(N);

  const bool latest = config.algorithm == Algorithm::kFedLaAvg;
  const bool step_mode = latest && config.local_iters == 1;
  int steps_per_round = 1;
  if (config.algorithm == Algorithm::kSeqSgd)
    steps_per_round = std::max(
        1, static_cast<int>(std::lround(config.select_frac * N * config.local_iters)));

  int last_avail = 0;
  int last_sel = 0;
  long max_stale = 0;
  StepObserver obs = [&](const StepView& v) {
    if (v.selection) {
      last_avail = v.selection->available_count;
      last_sel = static_cast<int>(v.selection->selected.size());
    }
    if (latest && v.server) {
      for (long p : v.server->last_participation)
        max_stale = std::max(max_stale, v.step - p);
    }
  };

  RunTrace trace;
  trace.seed = config.master_seed;
  trace.schedule_valid = schedule_ok;
  trace.config_echo = config_to_json(config);

  double best_loss = std::numeric_limits<double>::infinity();
  double best_x = 0.0;  // scalar-task tracker for the min-loss iterate
  double sum_grad_norm_sq = 0.0;
  long evals = 0;

  ParamVector grad(dim);
  auto t_prev = std::chrono::steady_clock::now();
  for (long r = 1; r <= R; ++r) {
    switch (config.algorithm) {
      case Algorithm::kFedLaAvg: {
        std::vector<int> avail = schedule.available(r);
        if (step_mode)
          fedlaavg_step(server, caches, avail, *problem, opt, streams, &obs);
        else
          fedlaavg_round(server, caches, avail, *problem, opt, streams, &obs);
        break;
      }
      case Algorithm::kFedAvg:
      case Algorithm::kFedSgd:
      case Algorithm::kFedProx: {
        std::vector<int> avail = schedule.available(r);
        fedavg_round(server, avail, *problem, opt, streams, &obs);
        break;
      }
      case Algorithm::kSeqSgd:
        seqsgd_round(server, *problem, opt, steps_per_round, streams, nullptr);
        break;
    }
    if (r % config.eval_every == 0 || r == R) {
      if (!all_finite(server.params))
        throw Error("run diverged: non-finite parameters at round " + std::to_string(r));
      MetricRecord rec;
      rec.round = r;
      rec.iteration = config.algorithm == Algorithm::kSeqSgd ? r * steps_per_round
                                                             : r * config.local_iters;
      rec.train_loss = problem->population_loss(server.params);
      problem->population_grad(server.params, grad, opt.threads);
      rec.grad_norm_sq = norm_sq(grad);
      rec.num_available = last_avail;
      rec.num_selected = last_sel;
      auto now = std::chrono::steady_clock::now();
      rec.wall_ms = std::chrono::duration<double, std::milli>(now - t_prev).count();
      t_prev = now;
      trace.records.push_back(rec);
      sum_grad_norm_sq += rec.grad_norm_sq;
      ++evals;
      if (rec.train_loss < best_loss) {
        best_loss = rec.train_loss;
        if (dim == 1) best_x = server.params[0];
      }
    }
  }
  trace.final_params = server.params;
  trace.final_loss = trace.records.back().train_loss;

  RunResult result;
  result.resolved_lr = gamma;

  if (quadratic) {
    const auto* qp = static_cast<const QuadraticProblem*>(problem.get());
    const std::vector<double>& means = qp->means();
    double xstar = qp->optimum();
    double lo = std::min(0.0, *std::min_element(means.begin(), means.end()));
    double hi = std::max(0.0, *std::max_element(means.begin(), means.end()));
    double G = 2.0 * (hi - lo);                        // gradient cap over the visited range
    double sigma_g = 2.0 * config.objective.noise_sigma;  // gradient-noise std
    double gap = qp->population_loss({0.0}) - qp->population_loss({xstar});
    int E = schedule.declared_E();
    int I = staleness_bound(N, K, E);
    double mean_gns = sum_grad_norm_sq / static_cast<double>(evals);

    if (latest) {
      BoundReport lem;
      lem.bound_name = "lemma1_staleness";
      lem.inputs = {{"N", N}, {"K", K}, {"E", E}};
      lem.value = I;
      lem.lhs_empirical = static_cast<double>(max_stale);
      lem.satisfied = max_stale <= I;
      result.bounds.push_back(lem);

      BoundInputs bi;
      bi.L = L;
      bi.G = G;
      bi.sigma = sigma_g;
      bi.B = gap;
      bi.N = N;
      bi.I = I;
      bi.gamma = gamma;
      try {
        BoundReport th;
        if (step_mode) {
          bi.T = R;
          th.bound_name = "theorem3_stationarity";
          th.inputs = {{"L", L}, {"G", G},         {"sigma", sigma_g}, {"B", gap},
                       {"N", N}, {"I", I},         {"gamma", gamma},   {"T", R}};
          th.value = theorem3_bound(bi).total();
        } else {
          bi.R = R;
          bi.C = config.local_iters;
          th.bound_name = "theorem4_stationarity_shape";
          th.inputs = {{"L", L},     {"G", G},           {"sigma", sigma_g},
                       {"B", gap},   {"N", N},           {"I", I},
                       {"gamma", gamma}, {"R", R},       {"C", config.local_iters}};
          th.value = theorem4_bound_shape(bi);
        }
        th.lhs_empirical = mean_gns;
        th.satisfied = mean_gns <= th.value;
        result.bounds.push_back(th);
      } catch (const RateTooLarge&) {
        // gamma >= 1/(2L): the stationarity bounds do not apply
      }
    }

    bool two_client_alternating = N == 2 && config.objective.noise_sigma == 0.0 &&
                                  schedule.kind() == AvailabilitySpec::Kind::kAlternating &&
                                  schedule.is_available(0, 1) != schedule.is_available(1, 1);
    if (two_client_alternating) {
      int g1 = schedule.is_available(0, 1) ? 0 : 1;
      double e1 = means[g1], e2 = means[1 - g1];
      if (step_mode && std::abs(gamma - 0.5 / std::sqrt(static_cast<double>(R))) <=
                           1e-12 * gamma) {
        // the min-loss iterate guarantee under the 1/(2 sqrt(T)) rate
        int I2 = std::max(config.availability.t1, config.availability.t2);
        double G2 = std::max(2.0 * std::abs(0.0 - xstar), std::abs(e1 - e2));
        double B0 = xstar * xstar;  // (x^0 - x*)^2 with x^0 = 0
        BoundReport th2;
        th2.bound_name = "theorem2_min_iterate";
        th2.inputs = {{"T", R}, {"I", I2}, {"G", G2}, {"B0", B0}};
        th2.value = theorem2_bound(R, I2, G2, B0);
        th2.lhs_empirical = (best_x - xstar) * (best_x - xstar);
        th2.satisfied = th2.lhs_empirical <= th2.value;
        result.bounds.push_back(th2);
      }
      if (config.algorithm == Algorithm::kFedAvg && config.local_iters == 1 && gamma < 0.5) {
        BoundReport fx;
        fx.bound_name = "theorem1_fixed_point";
        fx.inputs = {{"e1", e1},
                     {"e2", e2},
                     {"t1", config.availability.t1},
                     {"t2", config.availability.t2},
                     {"gamma", gamma}};
        fx.value = fedavg_fixed_point(e1, e2, config.availability.t1, config.availability.t2,
                                      gamma);
        fx.lhs_empirical = server.params[0];
        fx.satisfied = std::abs(server.params[0] - fx.value) <= 1e-6;
        result.bounds.push_back(fx);
      }
    }
  }

  result.trace = std::move(trace);
  if (!config.output_path.empty()) {
    write_trace(result.trace, config.output_path);
    if (!result.bounds.empty())
      write_bound_reports(result.bounds, config.output_path + ".bounds.json");
  }
  return result;
}

// ===== sweeps ==============================================================

RunConfig apply_axis(const RunConfig& base, const std::string& axis,
                     const nlohmann::json& value) {
  RunConfig c = base;
  auto as_int = [&](const char* name) {
    if (!value.is_number_integer())
      throw SchemaError(std::string("axis ") + name + " values must be integers");
    return static_cast<int>(value.get<long>());
  };
  auto as_number = [&](const char* name) {
    if (!value.is_number())
      throw SchemaError(std::string("axis ") + name + " values must be numbers");
    return value.get<double>();
  };
  if (axis == "N") {
    c.num_clients = as_int("N");
  } else if (axis == "beta") {
    c.select_frac = as_number("beta");
  } else if (axis == "T") {
    c.rounds = as_int("T");
  } else if (axis == "algorithm") {
    if (!value.is_string()) throw SchemaError("axis algorithm values must be strings");
    c.algorithm = algorithm_from_name(value.get<std::string>());
  } else if (axis == "E") {
    int v = as_int("E");
    switch (c.availability.kind) {
      case AvailabilitySpec::Kind::kAlternating:
        c.availability.t1 = c.availability.t2 = v;
        break;
      case AvailabilitySpec::Kind::kDiurnal:
        c.availability.block_len = v;
        break;
      case AvailabilitySpec::Kind::kSleepWindow:
        c.availability.rounds_per_day = v;
        break;
      default:
        throw SchemaError("axis E needs alternating, diurnal, or sleep_window availability");
    }
  } else if (axis == "D") {
    if (c.availability.kind != AvailabilitySpec::Kind::kDiurnal)
      throw SchemaError("axis D needs diurnal availability");
    c.availability.label_boundary = as_int("D");
    c.availability.group_a.clear();  // boundary only matters for the label rule
  } else if (axis == "alpha") {
    if (c.availability.kind != AvailabilitySpec::Kind::kSleepWindow)
      throw SchemaError("axis alpha needs sleep_window availability");
    c.availability.alpha = as_number("alpha");
  } else {
    throw SchemaError("axis must be one of N|beta|E|D|alpha|T|algorithm");
  }
  return c;
}

SweepSpec parse_sweep(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("sweep root must be a JSON object");
  check_keys(doc, "", {"base", "axis", "values", "seeds", "target_loss"});
  for (const char* key : {"base", "axis", "values"})
    if (!doc.contains(key)) throw SchemaError(std::string("sweep needs key '") + key + "'");
  SweepSpec spec;
  spec.base = parse_config(doc.at("base"));
  spec.axis = get_string(doc.at("axis"), "axis");
  if (!doc.at("values").is_array() || doc.at("values").empty())
    bad_type("values", "a non-empty array");
  spec.values.assign(doc.at("values").begin(), doc.at("values").end());
  if (doc.contains("seeds")) {
    const nlohmann::json& seeds = doc.at("seeds");
    if (!seeds.is_array() || seeds.empty()) bad_type("seeds", "a non-empty array of integers");
    for (const auto& s : seeds) {
      if (!s.is_number_integer()) bad_type("seeds", "a non-empty array of integers");
      spec.seeds.push_back(s.get<std::int64_t>());
    }
  } else {
    spec.seeds = {spec.base.master_seed};
  }
  if (doc.contains("target_loss"))
    spec.target_loss = get_number(doc.at("target_loss"), "target_loss");
  // every derived cell must be a valid config on its own
  for (const nlohmann::json& v : spec.values) apply_axis(spec.base, spec.axis, v).validate();
  return spec;
}

namespace {

int sweep_parallelism() {
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FEDSIM_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) workers = std::min<unsigned>(workers, static_cast<unsigned>(cap));
  }
  return static_cast<int>(workers);
}

SweepRow summarize_cell(const nlohmann::json& value, std::int64_t seed, double target,
                        const RunTrace& trace) {
  SweepRow row;
  row.axis_value = value.is_string() ? value.get<std::string>() : value.dump();
  row.seed = seed;
  row.final_loss = trace.final_loss;
  row.min_loss = trace.final_loss;
  row.rounds_to_target = -1;
  for (const MetricRecord& rec : trace.records) {
    row.min_loss = std::min(row.min_loss, rec.train_loss);
    if (row.rounds_to_target < 0 && std::isfinite(target) && rec.train_loss <= target)
      row.rounds_to_target = rec.round;
  }
  std::vector<std::pair<double, double>> points;
  for (const MetricRecord& rec : trace.records)
    if (rec.grad_norm_sq > 0.0) points.emplace_back(static_cast<double>(rec.round),
                                                    rec.grad_norm_sq);
  row.slope = std::numeric_limits<double>::quiet_NaN();
  if (points.size() >= 2) {
    try {
      row.slope = loglog_slope(points);
    } catch (const Error&) {
      // degenerate series: leave the slope as NaN
    }
  }
  return row;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  const size_t nv = spec.values.size();
  const size_t ns = spec.seeds.size();
  std::vector<RunConfig> cells(nv * ns);
  for (size_t v = 0; v < nv; ++v)
    for (size_t s = 0; s < ns; ++s) {
      RunConfig c = apply_axis(spec.base, spec.axis, spec.values[v]);
      c.master_seed = spec.seeds[s];
      c.output_path.clear();  // cells stay in memory; only the CSV is written
      c.threads = 1;          // parallelism lives at the cell level here
      cells[v * ns + s] = std::move(c);
    }

  std::vector<SweepRow> rows(cells.size());
  std::atomic<size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr first_error;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        RunResult res = run_experiment(cells[i]);
        rows[i] =
            summarize_cell(spec.values[i / ns], spec.seeds[i % ns], spec.target_loss, res.trace);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  int workers = static_cast<int>(std::min(cells.size(), static_cast<size_t>(sweep_parallelism())));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  auto num = [](double x) {
    return std::isfinite(x) ? nlohmann::json(x).dump() : std::string("nan");
  };
  std::string out = "axis_value,seed,final_loss,min_loss,rounds_to_target,slope\n";
  for (const SweepRow& r : rows) {
    out += r.axis_value;
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += num(r.final_loss);
    out += ',';
    out += num(r.min_loss);
    out += ',';
    out += std::to_string(r.rounds_to_target);
    out += ',';
    out += num(r.slope);
    out += '\n';
  }
  return out;
}

}  // namespace fedsim
