#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <doctest.h>

#include "fedsim/objectives.hpp"

using namespace fedsim;

TEST_CASE("quadratic gradient is exact when sigma is zero") {
  auto s = derive_stream(1, "batch", 0, 1, 1);
  CHECK(quadratic_gradient(1.0, 0.0, 0.0, s) == 2.0);
  for (double c : {-3.0, 0.0, 0.7, 42.0}) CHECK(quadratic_gradient(c, c, 0.0, s) == 0.0);
}

TEST_CASE("quadratic gradient noise is centered with variance 4 sigma^2") {
  auto s = derive_stream(99, "batch", 0, 1, 1);
  const int n = 100000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double g = quadratic_gradient(0.0, 0.0, 1.0, s);
    sum += g;
    sumsq += g * g;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(mean > -0.02);
  CHECK(mean < 0.02);
  CHECK(var == doctest::Approx(4.0).epsilon(0.05));  // Var(2(x-xi)) = 4 sigma^2
}

TEST_CASE("quadratic gradient is unbiased at off-center points") {
  auto s = derive_stream(7, "batch", 2, 3, 1);
  const int n = 100000;
  const double x = 1.3, e = 0.7, sigma = 2.0;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += quadratic_gradient(x, e, sigma, s);
  double se = 2.0 * sigma / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum / n - 2.0 * (x - e)) < 3.0 * se);
}

TEST_CASE("population quadratic loss") {
  CHECK(quadratic_loss(0.5, {0.0, 1.0}, 0.0) == 0.25);
  CHECK(quadratic_loss(0.0, {0.0, 0.0, 0.0}, 2.0) == 4.0);

  // the mean of the client means minimizes the loss
  std::vector<double> means = {-1.0, 0.4, 2.2, 0.0};
  double opt = (-1.0 + 0.4 + 2.2 + 0.0) / 4.0;
  double at_opt = quadratic_loss(opt, means, 0.0);
  for (double x = -2.0; x <= 3.0; x += 0.01) CHECK(quadratic_loss(x, means, 0.0) >= at_opt);
}

TEST_CASE("softmax gradient at zero weights is the symmetric residual") {
  Sample sample;
  sample.features = {2.0, -1.0};
  sample.label = 0;
  ParamVector W(2 * 3, 0.0);  // 2 classes x (2 features + bias)
  ParamVector g = logistic_gradient(W, {sample});
  // uniform softmax puts 1/2 on each class; the true-label row gets -1/2
  CHECK(g[0] == doctest::Approx(-0.5 * 2.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-0.5 * -1.0).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(0.5 * 2.0).epsilon(1e-12));
  CHECK(g[4] == doctest::Approx(0.5 * -1.0).epsilon(1e-12));
  CHECK(g[5] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("duplicating a batch leaves the mean gradient alone") {
  auto s = derive_stream(5, "batch", 0, 1, 1);
  std::vector<Sample> batch(3);
  for (int i = 0; i < 3; ++i) {
    batch[i].features = {s.normal(0, 1), s.normal(0, 1), s.normal(0, 1)};
    batch[i].label = i % 2;
  }
  ParamVector W(2 * 4);
  for (double& w : W) w = s.normal(0, 1);
  std::vector<Sample> twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  ParamVector g1 = logistic_gradient(W, batch);
  ParamVector g2 = logistic_gradient(W, twice);
  for (size_t d = 0; d < g1.size(); ++d) CHECK(g1[d] == doctest::Approx(g2[d]).epsilon(1e-12));
}

TEST_CASE("softmax gradient matches central finite differences") {
  auto s = derive_stream(11, "batch", 0, 1, 1);
  const int classes = 3, dim = 4;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Sample> batch(4);
    for (auto& sample : batch) {
      sample.features.resize(dim);
      for (double& f : sample.features) f = s.normal(0, 1);
      sample.label = s.uniform_index(classes);
    }
    ParamVector W(classes * (dim + 1));
    for (double& w : W) w = s.normal(0, 1);

    ParamVector g = logistic_gradient(W, batch);
    const double h = 1e-6;
    double worst = 0;
    for (size_t d = 0; d < W.size(); ++d) {
      ParamVector Wp = W, Wm = W;
      Wp[d] += h;
      Wm[d] -= h;
      double fd = (logistic_loss(Wp, batch) - logistic_loss(Wm, batch)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[d]));
    }
    double scale = 0;
    for (double v : g) scale = std::max(scale, std::abs(v));
    CHECK(worst / std::max(1.0, scale) < 1e-5);
  }
}

TEST_CASE("gradient dimension checks") {
  Sample sample;
  sample.features = {1.0, 2.0};
  sample.label = 0;
  ParamVector W(7, 0.0);  // not a multiple of dim+1 = 3
  CHECK_THROWS_AS(logistic_gradient(W, {sample}), DimensionMismatch);
}

TEST_CASE("label-pure partition with one client per class") {
  StreamFactory streams(3);
  auto shards = partition_synthetic(10, 10, 500, streams);
  REQUIRE(shards.size() == 10);
  std::set<int> labels;
  double weight_sum = 0.0;
  for (const auto& shard : shards) {
    REQUIRE(!shard.samples.empty());
    labels.insert(shard.label);
    for (const auto& sample : shard.samples) CHECK(sample.label == shard.label);
    weight_sum += shard.weight;
  }
  CHECK(labels.size() == 10);       // every class owned by exactly one client
  CHECK(weight_sum == 1.0);         // normalized exactly, last weight takes slack
}

TEST_CASE("partition sizes concentrate near S/N") {
  double grand_mean = 0.0;
  for (int seed = 0; seed < 50; ++seed) {
    StreamFactory streams(seed);
    auto shards = partition_synthetic(20, 10, 2000, streams);
    long total = 0;
    for (const auto& shard : shards) total += static_cast<long>(shard.samples.size());
    grand_mean += static_cast<double>(total) / 20.0;
  }
  grand_mean /= 50.0;
  CHECK(grand_mean > 80.0);
  CHECK(grand_mean < 120.0);
}

TEST_CASE("partition needs client count divisible by class count") {
  StreamFactory streams(1);
  CHECK_THROWS_AS(partition_synthetic(10, 3, 100, streams), IndivisibleClients);
}

TEST_CASE("rescaled locals average to the weighted objective") {
  CHECK(rescale_local_objective(1.0 / 8.0, 8) == 1.0);

  std::vector<double> w = {0.5, 0.3, 0.2};
  std::vector<double> e = {0.0, 1.0, -2.0};
  auto s = derive_stream(2, "batch", 0, 1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    double x = s.normal(0, 2);
    double weighted = 0, rescaled = 0;
    for (int i = 0; i < 3; ++i) {
      double fi = (x - e[i]) * (x - e[i]);
      weighted += w[i] * fi;
      rescaled += rescale_local_objective(w[i], 3) * fi;
    }
    rescaled /= 3.0;
    CHECK(rescaled == doctest::Approx(weighted).epsilon(1e-12));
  }
}

TEST_CASE("binary partition follows the requested positive rates") {
  StreamFactory streams(4);
  std::vector<double> rates = {0.0, 1.0, 0.3};
  auto shards = partition_binary(3, 3000, rates, streams);
  REQUIRE(shards.size() == 3);
  for (int i = 0; i < 3; ++i) {
    long positives = 0;
    for (const auto& sample : shards[i].samples) {
      CHECK((sample.label == 0 || sample.label == 1));
      positives += sample.label;
    }
    double frac = static_cast<double>(positives) / shards[i].samples.size();
    CHECK(std::abs(frac - rates[i]) < 0.1);
  }
}

TEST_CASE("csv rows load and split one label per client") {
  const char* path = "objectives_test.csv";
  {
    std::ofstream out(path);
    out << "f0,f1,label\n";
    out << "0.5,1.5,0\n";
    out << "1.0,-1.0,1\n";
    out << "0.25,0.75,0\n";
    out << "2.0,0.0,1\n";
    out << "-1.0,3.0,1\n";
  }
  auto [samples, classes] = load_csv(path);
  CHECK(classes == 2);
  REQUIRE(samples.size() == 5);
  CHECK(samples[0].features == std::vector<double>{0.5, 1.5});
  CHECK(samples[4].label == 1);

  auto shards = partition_by_label(samples, 2);
  REQUIRE(shards.size() == 2);
  CHECK(shards[0].label == 0);
  CHECK(shards[1].label == 1);
  CHECK(shards[0].samples.size() == 2);
  CHECK(shards[1].samples.size() == 3);
  CHECK(shards[0].weight + shards[1].weight == 1.0);
  std::remove(path);

  CHECK_THROWS_AS(load_csv("no_such_file.csv"), IoError);
}

TEST_CASE("quadratic problem population oracle") {
  QuadraticProblem problem({0.0, 1.0}, 0.0);
  CHECK(problem.optimum() == 0.5);
  ParamVector g(1);
  problem.population_grad({0.2}, g, 1);
  CHECK(g[0] == doctest::Approx(-0.6).epsilon(1e-15));  // (0.4 + (-1.6)) / 2
  CHECK(problem.population_loss({0.5}) == 0.25);
}

TEST_CASE("logistic problem gradient agrees with loss differences") {
  StreamFactory streams(8);
  SyntheticGeometry geom;
  geom.dim = 4;
  LogisticProblem problem(partition_synthetic(6, 3, 300, streams, geom), 3, 4);
  ParamVector x(problem.dim());
  auto s = derive_stream(8, "batch", -1, 0, 0);
  for (double& v : x) v = 0.1 * s.normal(0, 1);
  ParamVector g(problem.dim());
  problem.population_grad(x, g, 1);
  const double h = 1e-6;
  for (size_t d = 0; d < x.size(); d += 5) {
    ParamVector xp = x, xm = x;
    xp[d] += h;
    xm[d] -= h;
    double fd = (problem.population_loss(xp) - problem.population_loss(xm)) / (2 * h);
    CHECK(fd == doctest::Approx(g[d]).epsilon(1e-4));
  }
}
