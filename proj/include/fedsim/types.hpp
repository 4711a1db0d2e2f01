#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

// Flat parameter vector shared by server and clients. Dimension is fixed for
// the lifetime of a run (1 for the scalar quadratic task, C*(d+1) for a
// flattened softmax classifier).
using ParamVector = std::vector<double>;

// ===== error taxonomy ======================================================
// Config-shaped problems map to CLI exit code 1, everything else to 2.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
// Malformed/unknown config key or wrong JSON type.
struct SchemaError : ConfigError {
  using ConfigError::ConfigError;
};
// Key present and well-typed but out of range.
struct RangeError : ConfigError {
  using ConfigError::ConfigError;
};

struct AutoRateExceedsCap : Error {
  using Error::Error;
};
struct DegenerateRate : Error {
  using Error::Error;
};
struct RateTooLarge : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct IndivisibleClients : Error {
  using Error::Error;
};
struct InsufficientAvailable : Error {
  using Error::Error;
};
struct NeverAvailable : Error {
  using Error::Error;
};
struct NonPositiveValue : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// ===== run configuration ===================================================

enum class Algorithm { kFedLaAvg, kFedAvg, kFedSgd, kFedProx, kSeqSgd };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);  // SchemaError

struct ObjectiveSpec {
  enum class Kind { kQuadratic, kLogistic, kCsv };
  Kind kind = Kind::kQuadratic;

  // quadratic: one scalar mean per client, additive Normal(0, noise_sigma^2)
  // draw noise; noise_sigma == 0 means exact gradients.
  std::vector<double> means;
  double noise_sigma = 0.0;

  // logistic (synthetic): label-pure client shards around per-class centers.
  int num_classes = 10;
  int dim = 10;
  double sample_sigma = 1.0;
  double center_scale = 2.0;
  long total_samples = 10000;

  // csv: pooled labelled rows, split one-label-per-client.
  std::string csv_path;
};

struct AvailabilitySpec {
  enum class Kind { kAlwaysOn, kAlternating, kDiurnal, kSleepWindow, kCustom };
  Kind kind = Kind::kAlwaysOn;

  // alternating: group1 for t1 iterations, then group2 for t2, repeating.
  // Empty groups default to a half/half split by client id.
  int t1 = 1;
  int t2 = 1;
  std::vector<int> group1;
  std::vector<int> group2;

  // diurnal: blocks of block_len rounds; group_a in odd blocks, rest in even.
  // group_a defaults to the clients whose labels fall below label_boundary.
  int block_len = 10;
  int label_boundary = 1;
  std::vector<int> group_a;

  // sleep_window: per-client contiguous awake window of rounds_per_day/3
  // rounds, start drawn once per client. alpha skews binary labels by the
  // window position (hour 0 -> alpha positive, hour 12 -> 1-alpha); 0.5
  // means no skew at all.
  int rounds_per_day = 24;
  double alpha = 0.5;

  // custom: explicit bitmap, either from file or inline.
  std::string custom_path;
  std::vector<std::vector<uint8_t>> custom_bitmap;  // [round][client]
};

struct RunConfig {
  Algorithm algorithm = Algorithm::kFedLaAvg;
  int num_clients = 2;
  double select_frac = 1.0;  // beta; K = round(beta*N), at least 1
  int local_iters = 1;       // C
  int rounds = 100;          // R (== T when C == 1)
  double learning_rate = 0.01;
  bool auto_lr = false;  // "lr": "auto" -> theory-prescribed rate (analysis.hpp)
  double prox_mu = 0.0;
  int batch_size = 5;
  std::int64_t master_seed = 1;
  int eval_every = 1;
  bool strict_selection = false;
  int threads = 1;  // client-loop width; any value yields identical traces
  ObjectiveSpec objective;
  AvailabilitySpec availability;
  std::string output_path;

  int selected_count() const {
    int k = static_cast<int>(std::lround(select_frac * num_clients));
    return k < 1 ? 1 : k;
  }
  // Throws RangeError/SchemaError on inconsistent fields.
  void validate() const;
};

// One evaluation row of a run trace.
struct MetricRecord {
  long round = 0;
  long iteration = 0;  // round * C
  double train_loss = 0.0;
  double grad_norm_sq = 0.0;
  int num_available = 0;
  int num_selected = 0;
  double wall_ms = 0.0;  // wall clock; excluded from the hashed trace region
};

// ===== small vector helpers ================================================

inline double dot(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const ParamVector& a) { return dot(a, a); }

inline bool all_finite(const ParamVector& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// y += alpha * x
inline void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace fedsim
