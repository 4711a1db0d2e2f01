#include "fedsim/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fedsim/parallel.hpp"

namespace fedsim {

double quadratic_gradient(double x, double e, double sigma, RandomStream& stream) {
  double xi = sigma == 0.0 ? e : stream.normal(e, sigma);
  return 2.0 * (x - xi);
}

double quadratic_loss(double x, const std::vector<double>& means, double sigma) {
  if (means.empty()) throw DimensionMismatch("quadratic_loss: no client means");
  double inv_n = 1.0 / static_cast<double>(means.size());
  double acc = 0.0;
  for (double e : means) {
    double d = x - e;
    acc += inv_n * (d * d);
  }
  return acc + sigma * sigma;
}

namespace {

// Shared softmax plumbing: logits -> probabilities, stable against overflow.
void softmax_probs(const ParamVector& W, const Sample& s, int num_classes, int dim,
                   std::vector<double>& probs) {
  probs.assign(num_classes, 0.0);
  double zmax = -1e300;
  for (int c = 0; c < num_classes; ++c) {
    const double* row = W.data() + static_cast<size_t>(c) * (dim + 1);
    double z = row[dim];  // bias
    for (int d = 0; d < dim; ++d) z += row[d] * s.features[d];
    probs[c] = z;
    zmax = std::max(zmax, z);
  }
  double norm = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    probs[c] = std::exp(probs[c] - zmax);
    norm += probs[c];
  }
  for (int c = 0; c < num_classes; ++c) probs[c] /= norm;
}

// Recovers (num_classes, dim) from W and the batch, throwing on mismatch.
std::pair<int, int> classifier_shape(const ParamVector& W, const std::vector<Sample>& batch) {
  if (batch.empty()) throw DimensionMismatch("logistic: empty batch");
  int dim = static_cast<int>(batch.front().features.size());
  if (dim <= 0 || W.size() % static_cast<size_t>(dim + 1) != 0)
    throw DimensionMismatch("logistic: W length not a multiple of dim+1");
  int num_classes = static_cast<int>(W.size() / static_cast<size_t>(dim + 1));
  if (num_classes < 2) throw DimensionMismatch("logistic: fewer than 2 classes");
  for (const Sample& s : batch) {
    if (static_cast<int>(s.features.size()) != dim)
      throw DimensionMismatch("logistic: ragged feature rows");
    if (s.label < 0 || s.label >= num_classes)
      throw DimensionMismatch("logistic: label out of range");
  }
  return {num_classes, dim};
}

}  // namespace

double logistic_loss(const ParamVector& W, const std::vector<Sample>& batch) {
  auto [num_classes, dim] = classifier_shape(W, batch);
  std::vector<double> probs;
  double acc = 0.0;
  for (const Sample& s : batch) {
    softmax_probs(W, s, num_classes, dim, probs);
    acc += -std::log(std::max(probs[s.label], 1e-300));
  }
  return acc / static_cast<double>(batch.size());
}

ParamVector logistic_gradient(const ParamVector& W, const std::vector<Sample>& batch) {
  auto [num_classes, dim] = classifier_shape(W, batch);
  ParamVector grad(W.size(), 0.0);
  std::vector<double> probs;
  double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) {
    softmax_probs(W, s, num_classes, dim, probs);
    for (int c = 0; c < num_classes; ++c) {
      double r = inv_b * (probs[c] - (c == s.label ? 1.0 : 0.0));
      double* row = grad.data() + static_cast<size_t>(c) * (dim + 1);
      for (int d = 0; d < dim; ++d) row[d] += r * s.features[d];
      row[dim] += r;
    }
  }
  return grad;
}

std::vector<std::vector<double>> make_class_centers(int num_classes, int dim, double scale,
                                                    const StreamFactory& streams) {
  std::vector<std::vector<double>> centers(num_classes, std::vector<double>(dim, 0.0));
  if (dim >= num_classes) {
    for (int c = 0; c < num_classes; ++c) centers[c][c] = scale;
    return centers;
  }
  for (int c = 0; c < num_classes; ++c) {
    RandomStream s = streams.make("centers", -1, 0, c);
    double nrm = 0.0;
    for (int d = 0; d < dim; ++d) {
      centers[c][d] = s.normal(0.0, 1.0);
      nrm += centers[c][d] * centers[c][d];
    }
    nrm = std::sqrt(nrm);
    for (int d = 0; d < dim; ++d) centers[c][d] *= scale / nrm;
  }
  return centers;
}

namespace {

// Sample counts Normal(S/N, (S/(6N))^2) clipped to >= 1; weights count/total
// with the last client absorbing rounding slack so they sum to exactly 1.
std::pair<std::vector<ClientDataset>, std::vector<long>> make_shards(
    int num_clients, long total_samples, const StreamFactory& streams) {
  double mean = static_cast<double>(total_samples) / num_clients;
  double stddev = mean / 6.0;
  RandomStream cs = streams.make("partition_counts", -1, 0, 0);
  std::vector<long> counts(num_clients);
  long total = 0;
  for (int i = 0; i < num_clients; ++i) {
    counts[i] = std::max(1L, std::lround(cs.normal(mean, stddev)));
    total += counts[i];
  }
  std::vector<ClientDataset> out(num_clients);
  double wsum = 0.0;
  for (int i = 0; i < num_clients; ++i) {
    out[i].client_id = i;
    out[i].samples.reserve(counts[i]);
    if (i + 1 < num_clients) {
      out[i].weight = static_cast<double>(counts[i]) / static_cast<double>(total);
      wsum += out[i].weight;
    } else {
      out[i].weight = 1.0 - wsum;
    }
  }
  return {std::move(out), std::move(counts)};
}

void fill_gaussian(Sample& s, const std::vector<double>& center, double sigma,
                   RandomStream& stream) {
  s.features.resize(center.size());
  for (size_t d = 0; d < center.size(); ++d) s.features[d] = stream.normal(center[d], sigma);
}

}  // namespace

std::vector<ClientDataset> partition_synthetic(int num_clients, int num_classes,
                                               long total_samples, const StreamFactory& streams,
                                               const SyntheticGeometry& geom) {
  if (num_clients < 1 || num_classes < 1) throw RangeError("partition: nonpositive sizes");
  if (num_clients % num_classes != 0)
    throw IndivisibleClients("partition: num_clients not divisible by num_classes");
  auto centers = make_class_centers(num_classes, geom.dim, geom.center_scale, streams);
  auto [shards, counts] = make_shards(num_clients, total_samples, streams);
  for (int i = 0; i < num_clients; ++i) {
    int label = i % num_classes;
    shards[i].label = label;
    RandomStream ds = streams.make("partition", i, 0, 0);
    for (long k = 0; k < counts[i]; ++k) {
      Sample s;
      s.label = label;
      fill_gaussian(s, centers[label], geom.sample_sigma, ds);
      shards[i].samples.push_back(std::move(s));
    }
  }
  return shards;
}

std::vector<ClientDataset> partition_binary(int num_clients, long total_samples,
                                            const std::vector<double>& positive_prob,
                                            const StreamFactory& streams,
                                            const SyntheticGeometry& geom) {
  if (static_cast<int>(positive_prob.size()) != num_clients)
    throw DimensionMismatch("partition_binary: probabilities vs clients");
  auto centers = make_class_centers(2, geom.dim, geom.center_scale, streams);
  auto [shards, counts] = make_shards(num_clients, total_samples, streams);
  for (int i = 0; i < num_clients; ++i) {
    shards[i].label = -1;
    RandomStream ds = streams.make("partition", i, 0, 0);
    for (long k = 0; k < counts[i]; ++k) {
      Sample s;
      s.label = ds.uniform01() < positive_prob[i] ? 1 : 0;
      fill_gaussian(s, centers[s.label], geom.sample_sigma, ds);
      shards[i].samples.push_back(std::move(s));
    }
  }
  return shards;
}

std::pair<std::vector<Sample>, int> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path);  // header
  std::vector<Sample> samples;
  int dim = -1;
  int max_label = -1;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("csv row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    if (vals.size() < 2) throw IoError("csv row " + std::to_string(row) + ": too few columns");
    if (dim == -1) dim = static_cast<int>(vals.size()) - 1;
    if (static_cast<int>(vals.size()) - 1 != dim)
      throw IoError("csv row " + std::to_string(row) + ": ragged row");
    Sample s;
    s.features.assign(vals.begin(), vals.end() - 1);
    double lab = vals.back();
    if (lab != std::floor(lab) || lab < 0)
      throw IoError("csv row " + std::to_string(row) + ": label not a nonneg integer");
    s.label = static_cast<int>(lab);
    max_label = std::max(max_label, s.label);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw IoError("csv has no data rows: " + path);
  return {std::move(samples), max_label + 1};
}

std::vector<ClientDataset> partition_by_label(const std::vector<Sample>& samples,
                                              int num_clients) {
  int num_classes = 0;
  for (const Sample& s : samples) num_classes = std::max(num_classes, s.label + 1);
  if (num_clients % num_classes != 0)
    throw IndivisibleClients("partition_by_label: num_clients not divisible by class count");
  int per_class = num_clients / num_classes;
  std::vector<ClientDataset> out(num_clients);
  std::vector<int> seen(num_classes, 0);
  for (int i = 0; i < num_clients; ++i) {
    out[i].client_id = i;
    out[i].label = i % num_classes;
  }
  for (const Sample& s : samples) {
    int slot = seen[s.label]++ % per_class;
    out[s.label + slot * num_classes].samples.push_back(s);
  }
  long total = static_cast<long>(samples.size());
  double wsum = 0.0;
  for (int i = 0; i < num_clients; ++i) {
    if (out[i].samples.empty())
      throw NeverAvailable("partition_by_label: client " + std::to_string(i) + " got no samples");
    if (i + 1 < num_clients) {
      out[i].weight = static_cast<double>(out[i].samples.size()) / static_cast<double>(total);
      wsum += out[i].weight;
    } else {
      out[i].weight = 1.0 - wsum;
    }
  }
  return out;
}

// ===== QuadraticProblem ====================================================

QuadraticProblem::QuadraticProblem(std::vector<double> means, double noise_sigma)
    : means_(std::move(means)), sigma_(noise_sigma) {
  if (means_.empty()) throw RangeError("quadratic: no client means");
}

double QuadraticProblem::optimum() const {
  double s = 0.0;
  for (double e : means_) s += e;
  return s / static_cast<double>(means_.size());
}

void QuadraticProblem::client_grad(const ParamVector& x, int client, long round, int local_iter,
                                   int batch_size, const StreamFactory& streams,
                                   ParamVector& out) const {
  out.assign(1, 0.0);
  if (sigma_ == 0.0) {
    out[0] = 2.0 * (x[0] - means_[client]);  // weights are uniform; rescale is 1
    return;
  }
  RandomStream s = streams.make("batch", client, round, local_iter);
  double acc = 0.0;
  for (int b = 0; b < batch_size; ++b) acc += quadratic_gradient(x[0], means_[client], sigma_, s);
  out[0] = acc / static_cast<double>(batch_size);
}

void QuadraticProblem::pooled_grad(const ParamVector& x, long round, int step, int batch_size,
                                   const StreamFactory& streams, ParamVector& out) const {
  if (sigma_ == 0.0) {
    population_grad(x, out, 1);
    return;
  }
  RandomStream s = streams.make("pooled", -1, round, step);
  double acc = 0.0;
  int n = num_clients();
  for (int b = 0; b < batch_size; ++b) {
    int j = s.uniform_index(n);
    acc += quadratic_gradient(x[0], means_[j], sigma_, s);
  }
  out.assign(1, acc / static_cast<double>(batch_size));
}

double QuadraticProblem::population_loss(const ParamVector& x) const {
  return quadratic_loss(x[0], means_, sigma_);
}

void QuadraticProblem::population_grad(const ParamVector& x, ParamVector& out,
                                       int threads) const {
  (void)threads;  // scalar problem; nothing to fan out
  double inv_n = 1.0 / static_cast<double>(means_.size());
  double acc = 0.0;
  for (double e : means_) acc += inv_n * (2.0 * (x[0] - e));
  out.assign(1, acc);
}

// ===== LogisticProblem =====================================================

LogisticProblem::LogisticProblem(std::vector<ClientDataset> datasets, int num_classes,
                                 int feature_dim)
    : datasets_(std::move(datasets)), num_classes_(num_classes), feature_dim_(feature_dim) {
  if (datasets_.empty()) throw RangeError("logistic: no clients");
  count_prefix_.reserve(datasets_.size() + 1);
  count_prefix_.push_back(0);
  for (const ClientDataset& d : datasets_) {
    if (d.samples.empty()) throw RangeError("logistic: empty client shard");
    total_count_ += static_cast<long>(d.samples.size());
    count_prefix_.push_back(total_count_);
  }
}

void LogisticProblem::client_grad(const ParamVector& x, int client, long round, int local_iter,
                                  int batch_size, const StreamFactory& streams,
                                  ParamVector& out) const {
  const ClientDataset& d = datasets_[client];
  RandomStream s = streams.make("batch", client, round, local_iter);
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  int n = static_cast<int>(d.samples.size());
  for (int b = 0; b < batch_size; ++b) batch.push_back(d.samples[s.uniform_index(n)]);
  out = logistic_gradient(x, batch);
  double scale = rescale_local_objective(d.weight, num_clients());
  for (double& v : out) v *= scale;
}

void LogisticProblem::pooled_grad(const ParamVector& x, long round, int step, int batch_size,
                                  const StreamFactory& streams, ParamVector& out) const {
  RandomStream s = streams.make("pooled", -1, round, step);
  std::vector<Sample> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    long g = static_cast<long>(s.uniform01() * static_cast<double>(total_count_));
    if (g >= total_count_) g = total_count_ - 1;
    auto it = std::upper_bound(count_prefix_.begin(), count_prefix_.end(), g);
    int client = static_cast<int>(it - count_prefix_.begin()) - 1;
    batch.push_back(datasets_[client].samples[g - count_prefix_[client]]);
  }
  out = logistic_gradient(x, batch);
}

double LogisticProblem::population_loss(const ParamVector& x) const {
  double acc = 0.0;
  for (const ClientDataset& d : datasets_) acc += d.weight * logistic_loss(x, d.samples);
  return acc;
}

void LogisticProblem::population_grad(const ParamVector& x, ParamVector& out,
                                      int threads) const {
  int n = num_clients();
  std::vector<ParamVector> parts(n);
  for_each_client(n, threads,
                  [&](int i) { parts[i] = logistic_gradient(x, datasets_[i].samples); });
  out.assign(x.size(), 0.0);
  for (int i = 0; i < n; ++i) axpy(datasets_[i].weight, parts[i], out);  // ordered merge
}

}  // namespace fedsim
