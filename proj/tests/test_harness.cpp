#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <doctest.h>

#include "fedsim/analysis.hpp"
#include "fedsim/harness.hpp"

using namespace fedsim;
using nlohmann::json;

namespace {

json example1_fedavg() {
  return json::parse(R"({
    "algorithm": "fedavg", "clients": 2, "select_frac": 1.0, "local_iters": 1,
    "rounds": 600, "lr": 0.1, "seed": 1, "eval_every": 50,
    "objective": {"kind": "quadratic", "means": [0, 1], "noise_sigma": 0},
    "availability": {"kind": "alternating", "t1": 2, "t2": 1,
                     "group1": [0], "group2": [1]}
  })");
}

const BoundReport* find_bound(const std::vector<BoundReport>& bounds, const std::string& name) {
  for (const BoundReport& b : bounds)
    if (b.bound_name == name) return &b;
  return nullptr;
}

}  // namespace

TEST_CASE("config parsing applies defaults and computes K") {
  json doc = json::parse(R"({
    "algorithm": "fedavg", "clients": 10, "select_frac": 0.5, "local_iters": 1,
    "rounds": 100, "lr": 0.01, "seed": 1,
    "objective": {"kind": "quadratic", "means": [0,0,0,0,0,1,1,1,1,1], "noise_sigma": 0},
    "availability": {"kind": "alternating", "t1": 2, "t2": 1}
  })");
  RunConfig c = parse_config(doc);
  CHECK(c.algorithm == Algorithm::kFedAvg);
  CHECK(c.selected_count() == 5);
  CHECK(c.eval_every == 1);            // default
  CHECK(c.strict_selection == false);  // default
  CHECK(c.prox_mu == 0.0);             // not fedprox
  CHECK(!c.auto_lr);

  doc["select_frac"] = 1.5;
  CHECK_THROWS_AS(parse_config(doc), RangeError);
}

TEST_CASE("fedprox gets a proximal weight when none is given") {
  json doc = json::parse(R"({
    "algorithm": "fedprox", "clients": 2, "rounds": 10, "lr": 0.1, "seed": 0,
    "objective": {"kind": "quadratic", "means": [0, 1]}
  })");
  CHECK(parse_config(doc).prox_mu == 1.0);
  doc["prox_mu"] = 0.25;
  CHECK(parse_config(doc).prox_mu == 0.25);
  doc["algorithm"] = "fedavg";
  doc.erase("prox_mu");
  CHECK(parse_config(doc).prox_mu == 0.0);
}

TEST_CASE("schema errors name the offending key") {
  json doc = example1_fedavg();
  doc["gamma"] = 0.1;
  CHECK_THROWS_WITH_AS(parse_config(doc), "unknown key 'gamma'", SchemaError);
  doc.erase("gamma");
  doc["availability"]["period"] = 3;
  CHECK_THROWS_WITH_AS(parse_config(doc), "unknown key 'availability.period'", SchemaError);

  doc = example1_fedavg();
  doc["clients"] = "two";
  CHECK_THROWS_WITH_AS(parse_config(doc), "key 'clients' must be an integer", SchemaError);
  doc = example1_fedavg();
  doc["algorithm"] = "fedsomething";
  CHECK_THROWS_AS(parse_config(doc), SchemaError);
  CHECK_THROWS_AS(parse_config_text("{not json"), SchemaError);
  CHECK_THROWS_AS(parse_config_text("[1, 2]"), SchemaError);
}

TEST_CASE("learning rate accepts a number or the auto marker") {
  json doc = example1_fedavg();
  doc["algorithm"] = "fedlaavg";
  doc["lr"] = "auto";
  RunConfig c = parse_config(doc);
  CHECK(c.auto_lr);
  doc["lr"] = "fast";
  CHECK_THROWS_AS(parse_config(doc), SchemaError);
  doc["lr"] = true;
  CHECK_THROWS_AS(parse_config(doc), SchemaError);
  doc["lr"] = -0.1;
  CHECK_THROWS_AS(parse_config(doc), RangeError);
}

TEST_CASE("fedsgd means one local iteration") {
  json doc = example1_fedavg();
  doc["algorithm"] = "fedsgd";
  CHECK(parse_config(doc).local_iters == 1);
  doc["local_iters"] = 2;
  CHECK_THROWS_AS(parse_config(doc), RangeError);
}

TEST_CASE("config echoes differ exactly where the configs do") {
  RunConfig a = parse_config(example1_fedavg());
  RunConfig b = a;
  b.master_seed = 2;
  b.output_path = "elsewhere.jsonl";  // must not appear in the echo
  b.threads = 8;
  json ja = config_to_json(a);
  json jb = config_to_json(b);
  CHECK(ja != jb);
  ja.erase("seed");
  jb.erase("seed");
  CHECK(ja == jb);
  CHECK(!jb.contains("output"));
  CHECK(!jb.contains("threads"));
}

TEST_CASE("the divergence example lands on the biased fixed point") {
  RunConfig c = parse_config(example1_fedavg());
  RunResult res = run_experiment(c);
  double X = fedavg_fixed_point(0.0, 1.0, 2, 1, 0.1);
  CHECK(std::abs(res.trace.final_params[0] - X) < 1e-9);
  CHECK(std::abs(X - 0.5) > 0.05);  // persistent bias away from the optimum

  const BoundReport* fx = find_bound(res.bounds, "theorem1_fixed_point");
  REQUIRE(fx != nullptr);
  CHECK(fx->satisfied);
  CHECK(fx->value == doctest::Approx(X).epsilon(1e-15));
  CHECK(res.trace.schedule_valid);
  CHECK(res.trace.records.size() == 12);  // 600 / 50
}

TEST_CASE("the latest-average run satisfies its min-iterate guarantee") {
  json doc = example1_fedavg();
  doc["algorithm"] = "fedlaavg";
  doc["rounds"] = 1600;
  doc["lr"] = 0.0125;  // 1 / (2 sqrt(1600))
  doc["eval_every"] = 1;
  RunConfig c = parse_config(doc);
  RunResult res = run_experiment(c);

  const BoundReport* th2 = find_bound(res.bounds, "theorem2_min_iterate");
  REQUIRE(th2 != nullptr);
  CHECK(th2->satisfied);
  CHECK(th2->lhs_empirical <= th2->value);
  CHECK(th2->value == doctest::Approx(theorem2_bound(1600, 2, 1.0, 0.25)).epsilon(1e-12));

  const BoundReport* lem = find_bound(res.bounds, "lemma1_staleness");
  REQUIRE(lem != nullptr);
  CHECK(lem->satisfied);
  CHECK(lem->value == staleness_bound(2, 2, 3));
}

TEST_CASE("reruns are byte-identical and seeds matter") {
  json doc = example1_fedavg();
  doc["algorithm"] = "fedlaavg";
  doc["rounds"] = 80;
  doc["eval_every"] = 5;
  doc["objective"]["noise_sigma"] = 0.5;
  RunConfig c = parse_config(doc);

  RunResult r1 = run_experiment(c);
  RunResult r2 = run_experiment(c);
  CHECK(r1.trace.to_jsonl(false) == r2.trace.to_jsonl(false));
  CHECK(r1.trace.content_hash() == r2.trace.content_hash());

  c.master_seed = 99;
  RunResult r3 = run_experiment(c);
  CHECK(r1.trace.content_hash() != r3.trace.content_hash());
  json e1 = r1.trace.config_echo;
  json e3 = r3.trace.config_echo;
  CHECK(e1 != e3);
  e1.erase("seed");
  e3.erase("seed");
  CHECK(e1 == e3);
}

TEST_CASE("trace files round-trip through the reader") {
  const char* path = "harness_trace_test.jsonl";
  json doc = example1_fedavg();
  doc["rounds"] = 50;
  doc["eval_every"] = 7;
  doc["output"] = path;
  RunConfig c = parse_config(doc);
  RunResult res = run_experiment(c);

  RunTrace back = RunTrace::parse_file(path);
  CHECK(back.records.size() == 8);  // rounds 7,14,...,49 plus the final 50
  CHECK(back.records.back().round == 50);
  CHECK(back.records[6].round == 49);
  CHECK(back.final_loss == res.trace.final_loss);
  CHECK(back.seed == 1);
  CHECK(back.schedule_valid);
  CHECK(back.config_echo == res.trace.config_echo);
  CHECK(back.footer_raw.at("content_hash").get<std::string>() == res.trace.content_hash());
  CHECK(back.footer_raw.at("final_params_hash").get<std::string>() ==
        params_hash(res.trace.final_params));
  for (const MetricRecord& rec : back.records) {
    CHECK(rec.iteration == rec.round);  // C = 1
    CHECK(rec.num_available == 1);      // alternating singletons
    CHECK(rec.num_selected == 1);
  }
  std::remove(path);
  CHECK_THROWS_AS(RunTrace::parse_file(path), IoError);
}

TEST_CASE("a never-available client is reported, not fatal") {
  json doc = json::parse(R"({
    "algorithm": "fedlaavg", "clients": 2, "select_frac": 0.5, "local_iters": 1,
    "rounds": 20, "lr": 0.05, "seed": 3,
    "objective": {"kind": "quadratic", "means": [0, 1], "noise_sigma": 0},
    "availability": {"kind": "custom", "bitmap": ["10", "10"]}
  })");
  RunConfig c = parse_config(doc);
  RunResult res = run_experiment(c);
  CHECK(!res.trace.schedule_valid);
  CHECK(res.trace.records.size() == 20);

  const BoundReport* lem = find_bound(res.bounds, "lemma1_staleness");
  REQUIRE(lem != nullptr);
  CHECK(!lem->satisfied);  // client 1 only goes staler; the premise failed
}

TEST_CASE("custom schedules must cover the configured clients") {
  json doc = json::parse(R"({
    "algorithm": "fedlaavg", "clients": 3, "select_frac": 1.0, "local_iters": 1,
    "rounds": 5, "lr": 0.05, "seed": 3,
    "objective": {"kind": "quadratic", "means": [0, 1, 2], "noise_sigma": 0},
    "availability": {"kind": "custom", "bitmap": ["10", "01"]}
  })");
  RunConfig c = parse_config(doc);
  CHECK_THROWS_AS(run_experiment(c), RangeError);
}

TEST_CASE("sweeps emit one row per cell in a fixed order") {
  json doc = json::parse(R"({
    "base": {
      "algorithm": "fedlaavg", "clients": 2, "select_frac": 0.5, "local_iters": 1,
      "rounds": 100, "lr": 0.05, "seed": 7, "eval_every": 10,
      "objective": {"kind": "quadratic", "means": [0, 1], "noise_sigma": 0},
      "availability": {"kind": "alternating", "t1": 1, "t2": 1}
    },
    "axis": "T", "values": [100, 400], "seeds": [7, 8], "target_loss": 0.27
  })");
  SweepSpec spec = parse_sweep(doc);
  std::vector<SweepRow> rows = run_sweep(spec);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].axis_value == "100");
  CHECK(rows[0].seed == 7);
  CHECK(rows[1].axis_value == "100");
  CHECK(rows[1].seed == 8);
  CHECK(rows[2].axis_value == "400");
  for (const SweepRow& r : rows) {
    CHECK(r.min_loss <= r.final_loss);
    CHECK(r.min_loss >= 0.25 - 1e-12);  // bounded below by the optimum, modulo rounding
  }
  // sigma = 0: same trajectory whatever the seed
  CHECK(rows[0].final_loss == rows[1].final_loss);
  // longer horizon gets at least as close to the target
  if (rows[0].rounds_to_target > 0 && rows[2].rounds_to_target > 0)
    CHECK(rows[2].rounds_to_target <= rows[0].rounds_to_target * 4);

  std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("axis_value,seed,final_loss,min_loss,rounds_to_target,slope\n", 0) == 0);
  size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == 5);

  // a serial rerun under the env cap reproduces the rows exactly
  setenv("FEDSIM_THREADS", "1", 1);
  std::vector<SweepRow> again = run_sweep(spec);
  unsetenv("FEDSIM_THREADS");
  CHECK(sweep_csv(again) == csv);
}

TEST_CASE("algorithm axis swaps engines per cell") {
  json doc = json::parse(R"({
    "base": {
      "algorithm": "fedlaavg", "clients": 2, "select_frac": 1.0, "local_iters": 1,
      "rounds": 60, "lr": 0.1, "seed": 7, "eval_every": 10,
      "objective": {"kind": "quadratic", "means": [0, 1], "noise_sigma": 0},
      "availability": {"kind": "alternating", "t1": 2, "t2": 1,
                       "group1": [0], "group2": [1]}
    },
    "axis": "algorithm", "values": ["fedavg", "fedlaavg"]
  })");
  std::vector<SweepRow> rows = run_sweep(parse_sweep(doc));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].axis_value == "fedavg");
  CHECK(rows[1].axis_value == "fedlaavg");
  CHECK(rows[0].final_loss != rows[1].final_loss);
}

TEST_CASE("axis substitutions are validated up front") {
  RunConfig base = parse_config(example1_fedavg());
  CHECK_THROWS_AS(apply_axis(base, "D", json(1)), SchemaError);      // not diurnal
  CHECK_THROWS_AS(apply_axis(base, "alpha", json(0.3)), SchemaError);
  CHECK_THROWS_AS(apply_axis(base, "clients", json(4)), SchemaError);

  RunConfig widened = apply_axis(base, "E", json(5));
  CHECK(widened.availability.t1 == 5);
  CHECK(widened.availability.t2 == 5);

  json sweep_doc = json::parse(R"({"axis": "T", "values": [10]})");
  CHECK_THROWS_AS(parse_sweep(sweep_doc), SchemaError);  // no base

  // widening N breaks the per-client means list; caught at parse time
  json bad = json::object();
  bad["base"] = example1_fedavg();
  bad["axis"] = "N";
  bad["values"] = json::array({4});
  CHECK_THROWS_AS(parse_sweep(bad), RangeError);
}
