#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

struct Sample {
  std::vector<double> features;
  int label = 0;
};

struct ClientDataset {
  int client_id = 0;
  double weight = 0.0;  // w_i, sums to 1 across clients
  int label = -1;       // primary label for label-pure shards, -1 otherwise
  std::vector<Sample> samples;
};

// ===== scalar quadratic task ==============================================
// Client i holds the loss (x - xi)^2 with xi ~ Normal(e_i, sigma^2);
// sigma == 0 means the exact gradient 2(x - e_i).

double quadratic_gradient(double x, double e, double sigma, RandomStream& stream);

// Population loss (1/N) sum_i (x - e_i)^2 + sigma^2.
double quadratic_loss(double x, const std::vector<double>& means, double sigma);

// ===== softmax classifier ==================================================
// W is a flattened [num_classes x (dim+1)] matrix, bias last per row. The
// class/feature counts are recovered from W and the batch itself.

double logistic_loss(const ParamVector& W, const std::vector<Sample>& batch);

// Mean cross-entropy gradient over the batch. DimensionMismatch when W's
// length is not a multiple of (dim+1).
ParamVector logistic_gradient(const ParamVector& W, const std::vector<Sample>& batch);

// ===== data partitioning ===================================================

struct SyntheticGeometry {
  int dim = 10;
  double sample_sigma = 1.0;
  double center_scale = 2.0;
};

// Per-class centers: scaled basis vectors when dim >= num_classes, otherwise
// seeded random unit directions.
std::vector<std::vector<double>> make_class_centers(int num_classes, int dim, double scale,
                                                    const StreamFactory& streams);

// Label-pure shards: client i holds class (i % num_classes); sample counts
// drawn Normal(S/N, (S/(6N))^2) clipped to >= 1; weights are counts
// normalized to sum exactly to 1 (last weight takes the slack).
std::vector<ClientDataset> partition_synthetic(int num_clients, int num_classes,
                                               long total_samples, const StreamFactory& streams,
                                               const SyntheticGeometry& geom = {});

// Binary variant for the sleep-window task: client i's samples are positive
// with probability positive_prob[i], features drawn around the two class
// centers.
std::vector<ClientDataset> partition_binary(int num_clients, long total_samples,
                                            const std::vector<double>& positive_prob,
                                            const StreamFactory& streams,
                                            const SyntheticGeometry& geom = {});

// Section-2 rescaling: algorithms run on f~_i = (w_i N) f_i so the population
// objective is the plain average of the rescaled locals.
inline double rescale_local_objective(double weight, int num_clients) {
  return weight * num_clients;
}

// CSV ingestion: header row, feature columns, integer label column last.
// Returns samples plus the inferred class count (labels must be 0..C-1).
std::pair<std::vector<Sample>, int> load_csv(const std::string& path);

// One-label-per-client split of pooled rows; round-robin within a label.
std::vector<ClientDataset> partition_by_label(const std::vector<Sample>& samples,
                                              int num_clients);

// ===== problem abstraction for the engines =================================

class TrainingProblem {
 public:
  virtual ~TrainingProblem() = default;

  virtual int dim() const = 0;
  virtual int num_clients() const = 0;

  // Stochastic gradient of the rescaled local objective f~_i at x, drawn from
  // the (purpose="batch", client, round, local_iter) stream.
  virtual void client_grad(const ParamVector& x, int client, long round, int local_iter,
                           int batch_size, const StreamFactory& streams,
                           ParamVector& out) const = 0;

  // Stochastic gradient of the population objective from pooled data
  // (purpose="pooled"); used by the sequential-SGD baseline.
  virtual void pooled_grad(const ParamVector& x, long round, int step, int batch_size,
                           const StreamFactory& streams, ParamVector& out) const = 0;

  virtual double population_loss(const ParamVector& x) const = 0;
  // Exact population gradient; per-client parts merge in ascending id order.
  virtual void population_grad(const ParamVector& x, ParamVector& out, int threads) const = 0;
};

class QuadraticProblem final : public TrainingProblem {
 public:
  QuadraticProblem(std::vector<double> means, double noise_sigma);

  int dim() const override { return 1; }
  int num_clients() const override { return static_cast<int>(means_.size()); }
  void client_grad(const ParamVector& x, int client, long round, int local_iter, int batch_size,
                   const StreamFactory& streams, ParamVector& out) const override;
  void pooled_grad(const ParamVector& x, long round, int step, int batch_size,
                   const StreamFactory& streams, ParamVector& out) const override;
  double population_loss(const ParamVector& x) const override;
  void population_grad(const ParamVector& x, ParamVector& out, int threads) const override;

  const std::vector<double>& means() const { return means_; }
  double noise_sigma() const { return sigma_; }
  double optimum() const;  // mean of e_i

 private:
  std::vector<double> means_;
  double sigma_;
};

class LogisticProblem final : public TrainingProblem {
 public:
  LogisticProblem(std::vector<ClientDataset> datasets, int num_classes, int feature_dim);

  int dim() const override { return num_classes_ * (feature_dim_ + 1); }
  int num_clients() const override { return static_cast<int>(datasets_.size()); }
  void client_grad(const ParamVector& x, int client, long round, int local_iter, int batch_size,
                   const StreamFactory& streams, ParamVector& out) const override;
  void pooled_grad(const ParamVector& x, long round, int step, int batch_size,
                   const StreamFactory& streams, ParamVector& out) const override;
  double population_loss(const ParamVector& x) const override;
  void population_grad(const ParamVector& x, ParamVector& out, int threads) const override;

  const std::vector<ClientDataset>& datasets() const { return datasets_; }
  int num_classes() const { return num_classes_; }

 private:
  std::vector<ClientDataset> datasets_;
  int num_classes_;
  int feature_dim_;
  long total_count_ = 0;
  std::vector<long> count_prefix_;  // pooled index -> (client, local) lookup
};

}  // namespace fedsim
