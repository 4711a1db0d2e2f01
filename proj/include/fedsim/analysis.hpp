#pragma once

#include <utility>
#include <vector>

#include "fedsim/types.hpp"

namespace fedsim {

// Worst-case gradient staleness under minimal availability: ceil(N/K)*E - 1.
int staleness_bound(int N, int K, int E);

// Periodic-availability fixed point of the participant-mean baseline on the
// two-client scalar task: the limit of x^{k(t1+t2)} as k grows.
// DegenerateRate when gamma >= 1/2 (the per-step contraction dies).
double fedavg_fixed_point(double e1, double e2, int t1, int t2, double gamma);

// gamma -> 0+ limit of the fixed point: the availability-time-weighted mean.
double fedavg_fixed_point_limit(double e1, double e2, int t1, int t2);

// (x_hat - x*)^2 <= B0/sqrt(T) + I^2 G^2 / (4T) for the two-client scalar
// task run with gamma = 1/(2 sqrt(T)).
double theorem2_bound(long T, int I, double G, double B0);

struct BoundInputs {
  double L = 1.0;
  double G = 1.0;
  double sigma = 0.0;
  double B = 1.0;  // f(x^0) - f(x*)
  int N = 1;
  int I = 0;
  double gamma = 0.1;
  long T = 1;  // iterations (iteration-mode bound)
  long R = 1;  // rounds (round-mode bound)
  int C = 1;   // local iterations per round
};

// Five-term stationarity bound for the iteration-mode algorithm. Terms are
// exposed so reports can label them. RateTooLarge when gamma >= 1/(2L).
struct Theorem3Terms {
  double staleness_a = 0.0;  // 2 gamma I L (G^2 + sigma^2) / sqrt(N)
  double staleness_b = 0.0;  // 2 gamma^2 I^2 L^2 G^2 / (1 - 2 gamma L)
  double staleness_c = 0.0;  // 4 gamma^2 I^2 L^2 G^2
  double variance = 0.0;     // 4 gamma sigma^2 L / N
  double distance = 0.0;     // 4 B / (gamma T)
  double total() const { return staleness_a + staleness_b + staleness_c + variance + distance; }
};
Theorem3Terms theorem3_bound(const BoundInputs& in);

// Round-mode analogue (uses R and C). RateTooLarge when gamma >= 1/(2L).
double theorem4_bound_shape(const BoundInputs& in);

// Auto learning rate sqrt(beta) N^{1/4} / (2 L C sqrt(E) sqrt(R)); throws
// AutoRateExceedsCap beyond 1/(4L). C=1 gives the iteration-mode rate.
double auto_learning_rate(double beta, int N, int E, long R, int C, double L);

// Explicit rate passthrough or the auto rate, validated.
double resolve_learning_rate(const RunConfig& config, double L, int E);

// Per-step snapshot of the latest-average identity: the server cache against
// the plain average of every client's latest upload.
struct LatestAverageSnapshot {
  long step = 0;
  ParamVector cached_avg;
  std::vector<ParamVector> uploads;  // one per client; empty = never uploaded
};
struct LatestAverageCheck {
  bool ok = true;
  long first_bad_step = -1;
  double worst_residual = 0.0;  // max ||cache - avg|| / (1 + ||avg||)
};
LatestAverageCheck check_latest_average(const std::vector<LatestAverageSnapshot>& snapshots,
                                        double tol = 1e-9);

// Least-squares slope of log(err) vs log(T). NonPositiveValue on
// nonpositive entries; RangeError with fewer than two points.
double loglog_slope(const std::vector<std::pair<double, double>>& series);

}  // namespace fedsim
