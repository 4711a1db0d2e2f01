// Command-line front end: one run or one sweep per invocation, configured by
// a JSON file, command-line flags, or both (flags win).

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/harness.hpp"

namespace {

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fedsim::IoError("cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw fedsim::SchemaError(path + " is not valid JSON");
  return doc;
}

nlohmann::json parse_lr_flag(const std::string& text) {
  if (text == "auto") return "auto";
  try {
    size_t pos = 0;
    double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw fedsim::SchemaError("--lr expects a number or 'auto', got '" + text + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated optimization simulator"};
  app.get_formatter()->column_width(32);

  std::string config_path, sweep_path, output_path, algorithm, lr;
  int clients = 0, local_iters = 0, rounds = 0, eval_every = 0, batch_size = 0, threads = 0;
  double select_frac = 0.0, prox_mu = 0.0;
  std::int64_t seed = 0;
  bool strict = false;

  auto* o_config = app.add_option("--config", config_path, "JSON run configuration file");
  auto* o_sweep = app.add_option("--sweep", sweep_path, "JSON sweep specification file");
  auto* o_output = app.add_option("--output", output_path,
                                  "trace path (runs) or summary CSV path (sweeps)");
  auto* o_algorithm =
      app.add_option("--algorithm", algorithm, "fedlaavg|fedavg|fedsgd|fedprox|seqsgd");
  auto* o_clients = app.add_option("--clients", clients, "number of clients N");
  auto* o_select = app.add_option("--select-frac", select_frac, "selected fraction beta in (0,1]");
  auto* o_local = app.add_option("--local-iters", local_iters, "local iterations C per round");
  auto* o_rounds = app.add_option("--rounds", rounds, "rounds R (iterations when C=1)");
  auto* o_lr = app.add_option("--lr", lr, "learning rate (number or 'auto')");
  auto* o_prox = app.add_option("--prox-mu", prox_mu, "proximal weight (fedprox)");
  auto* o_batch = app.add_option("--batch-size", batch_size, "per-gradient mini-batch size");
  auto* o_seed = app.add_option("--seed", seed, "master seed");
  auto* o_eval = app.add_option("--eval-every", eval_every, "evaluation period in rounds");
  auto* o_threads = app.add_option("--threads", threads, "client-loop threads (same trace)");
  auto* o_strict = app.add_flag("--strict-selection", strict,
                                "fail instead of shrinking short selections");

  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json overrides = nlohmann::json::object();
    if (o_algorithm->count()) overrides["algorithm"] = algorithm;
    if (o_clients->count()) overrides["clients"] = clients;
    if (o_select->count()) overrides["select_frac"] = select_frac;
    if (o_local->count()) overrides["local_iters"] = local_iters;
    if (o_rounds->count()) overrides["rounds"] = rounds;
    if (o_lr->count()) overrides["lr"] = parse_lr_flag(lr);
    if (o_prox->count()) overrides["prox_mu"] = prox_mu;
    if (o_batch->count()) overrides["batch_size"] = batch_size;
    if (o_seed->count()) overrides["seed"] = seed;
    if (o_eval->count()) overrides["eval_every"] = eval_every;
    if (o_threads->count()) overrides["threads"] = threads;
    if (o_strict->count()) overrides["strict_selection"] = true;

    if (o_sweep->count()) {
      nlohmann::json spec_doc = load_json_file(sweep_path);
      if (spec_doc.is_object() && spec_doc.contains("base") && spec_doc["base"].is_object())
        for (auto it = overrides.begin(); it != overrides.end(); ++it)
          spec_doc["base"][it.key()] = it.value();
      fedsim::SweepSpec spec = fedsim::parse_sweep(spec_doc);
      std::string csv = fedsim::sweep_csv(fedsim::run_sweep(spec));
      if (o_output->count()) {
        std::ofstream out(output_path, std::ios::binary);
        if (!out) throw fedsim::IoError("cannot write " + output_path);
        out << csv;
        std::cerr << "wrote " << output_path << "\n";
      } else {
        std::cout << csv;
      }
      return 0;
    }

    nlohmann::json doc = nlohmann::json::object();
    if (o_config->count()) doc = load_json_file(config_path);
    if (!doc.is_object()) throw fedsim::SchemaError("config root must be a JSON object");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) doc[it.key()] = it.value();
    if (o_output->count()) doc["output"] = output_path;

    fedsim::RunConfig config = fedsim::parse_config(doc);
    fedsim::RunResult result = fedsim::run_experiment(config);
    if (config.output_path.empty()) {
      std::cout << result.trace.to_jsonl(true);
    } else {
      std::cerr << "wrote " << config.output_path << " (final_loss="
                << result.trace.final_loss << ", lr=" << result.resolved_lr
                << (result.trace.schedule_valid ? "" : ", schedule warning: declared window "
                                                       "not met over this horizon")
                << ")\n";
    }
    if (!result.trace.schedule_valid && config.output_path.empty())
      std::cerr << "warning: schedule misses its declared window over this horizon\n";
    return 0;
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
