#include "fedsim/analysis.hpp"

#include <cmath>
#include <string>

namespace fedsim {

int staleness_bound(int N, int K, int E) {
  if (N < 1 || K < 1 || E < 1) throw RangeError("staleness_bound: nonpositive input");
  int groups = (N + K - 1) / K;  // ceil(N/K)
  return groups * E - 1;
}

double fedavg_fixed_point(double e1, double e2, int t1, int t2, double gamma) {
  if (t1 < 1 || t2 < 1) throw RangeError("fixed_point: t1, t2 must be >= 1");
  if (gamma <= 0.0) throw NonPositiveValue("fixed_point: gamma <= 0");
  if (gamma >= 0.5) throw DegenerateRate("fixed_point: gamma >= 1/2");
  double a = 1.0 - 2.0 * gamma;
  double num = std::pow(a, t2) * (e1 - e2) + e2 - e1 * std::pow(a, t1 + t2);
  double den = 1.0 - std::pow(a, t1 + t2);
  return num / den;
}

double fedavg_fixed_point_limit(double e1, double e2, int t1, int t2) {
  if (t1 < 1 || t2 < 1) throw RangeError("fixed_point_limit: t1, t2 must be >= 1");
  return (t1 * e1 + t2 * e2) / static_cast<double>(t1 + t2);
}

double theorem2_bound(long T, int I, double G, double B0) {
  if (T < 1) throw RangeError("theorem2_bound: T < 1");
  double t = static_cast<double>(T);
  return B0 / std::sqrt(t) + (static_cast<double>(I) * I * G * G) / (4.0 * t);
}

Theorem3Terms theorem3_bound(const BoundInputs& in) {
  if (in.gamma <= 0.0) throw NonPositiveValue("theorem3_bound: gamma <= 0");
  if (in.gamma >= 1.0 / (2.0 * in.L)) throw RateTooLarge("theorem3_bound: gamma >= 1/(2L)");
  double I = static_cast<double>(in.I);
  double n = static_cast<double>(in.N);
  double t = static_cast<double>(in.T);
  Theorem3Terms out;
  out.staleness_a = 2.0 * in.gamma * I * in.L * (in.G * in.G + in.sigma * in.sigma) / std::sqrt(n);
  out.staleness_b = 2.0 * in.gamma * in.gamma * I * I * in.L * in.L * in.G * in.G /
                    (1.0 - 2.0 * in.gamma * in.L);
  out.staleness_c = 4.0 * in.gamma * in.gamma * I * I * in.L * in.L * in.G * in.G;
  out.variance = 4.0 * in.gamma * in.sigma * in.sigma * in.L / n;
  out.distance = 4.0 * in.B / (in.gamma * t);
  return out;
}

double theorem4_bound_shape(const BoundInputs& in) {
  if (in.gamma <= 0.0) throw NonPositiveValue("theorem4_bound_shape: gamma <= 0");
  if (in.gamma >= 1.0 / (2.0 * in.L)) throw RateTooLarge("theorem4_bound_shape: gamma >= 1/(2L)");
  double I = static_cast<double>(in.I);
  double n = static_cast<double>(in.N);
  double C = static_cast<double>(in.C);
  double r = static_cast<double>(in.R);
  double variance = 4.0 * in.gamma * in.sigma * in.sigma * in.L / n;
  double staleness =
      2.0 * in.gamma * I * C * in.L * (in.G * in.G + in.sigma * in.sigma) / std::sqrt(n);
  double drift = (2.0 * I * I / (1.0 - 2.0 * in.gamma * in.L) + 4.0 * I * I + 4.0 * I + 2.0) *
                 in.gamma * in.gamma * C * C * in.L * in.L * in.G * in.G;
  double distance = 4.0 * in.B / (in.gamma * r * C);
  return variance + staleness + drift + distance;
}

double auto_learning_rate(double beta, int N, int E, long R, int C, double L) {
  if (beta <= 0.0 || beta > 1.0) throw RangeError("auto rate: beta must be in (0, 1]");
  if (N < 1 || E < 1 || R < 1 || C < 1 || L <= 0.0) throw RangeError("auto rate: bad inputs");
  double rate = std::sqrt(beta) * std::pow(static_cast<double>(N), 0.25) /
                (2.0 * L * C * std::sqrt(static_cast<double>(E)) *
                 std::sqrt(static_cast<double>(R)));
  double cap = 1.0 / (4.0 * L);
  if (rate > cap)
    throw AutoRateExceedsCap("auto rate " + std::to_string(rate) + " exceeds 1/(4L) = " +
                             std::to_string(cap));
  return rate;
}

double resolve_learning_rate(const RunConfig& config, double L, int E) {
  if (!config.auto_lr) {
    if (config.learning_rate <= 0.0) throw RangeError("learning_rate must be positive");
    return config.learning_rate;
  }
  return auto_learning_rate(config.select_frac, config.num_clients, E, config.rounds,
                            config.local_iters, L);
}

LatestAverageCheck check_latest_average(const std::vector<LatestAverageSnapshot>& snapshots,
                                        double tol) {
  LatestAverageCheck out;
  for (const LatestAverageSnapshot& snap : snapshots) {
    size_t m = snap.cached_avg.size();
    double inv_n = 1.0 / static_cast<double>(snap.uploads.size());
    ParamVector avg(m, 0.0);
    for (const ParamVector& u : snap.uploads) {
      if (u.empty()) continue;  // never uploaded: zero contribution
      if (u.size() != m) throw DimensionMismatch("check_latest_average: upload size");
      for (size_t d = 0; d < m; ++d) avg[d] += u[d] * inv_n;
    }
    double diff = 0.0, ref = 0.0;
    for (size_t d = 0; d < m; ++d) {
      double e = snap.cached_avg[d] - avg[d];
      diff += e * e;
      ref += avg[d] * avg[d];
    }
    double residual = std::sqrt(diff) / (1.0 + std::sqrt(ref));
    if (residual > out.worst_residual) out.worst_residual = residual;
    if (residual > tol && out.ok) {
      out.ok = false;
      out.first_bad_step = snap.step;
    }
  }
  return out;
}

double loglog_slope(const std::vector<std::pair<double, double>>& series) {
  if (series.size() < 2) throw RangeError("loglog_slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (auto [t, e] : series) {
    if (t <= 0.0 || e <= 0.0) throw NonPositiveValue("loglog_slope: nonpositive entry");
    mx += std::log(t);
    my += std::log(e);
  }
  mx /= series.size();
  my /= series.size();
  double sxx = 0.0, sxy = 0.0;
  for (auto [t, e] : series) {
    double dx = std::log(t) - mx;
    sxy += dx * (std::log(e) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw RangeError("loglog_slope: all abscissae equal");
  return sxy / sxx;
}

}  // namespace fedsim
