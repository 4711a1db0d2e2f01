#pragma once

#include <string>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/types.hpp"

namespace fedsim {

// Deterministic availability oracle over 1-based iteration/round indices.
// Every kind carries a declared window length E: the smallest E such that
// each client shows up in every E-length window (the schedules are built so
// the declared value is exactly the minimal one).
class Schedule {
 public:
  using Kind = AvailabilitySpec::Kind;

  static Schedule always_on(int num_clients);
  // group1 for t1 iterations, then group2 for t2, repeating. Empty groups
  // default to a half/half split by id.
  static Schedule alternating(int num_clients, int t1, int t2, std::vector<int> group1 = {},
                              std::vector<int> group2 = {});
  // Blocks of block_len rounds: group_a in blocks 1, 3, ... and the rest in
  // blocks 2, 4, ...
  static Schedule diurnal(int num_clients, int block_len, std::vector<int> group_a);
  // Per-client awake window of rounds_per_day/3 rounds, start drawn once per
  // client from the (purpose="sleepwin") stream.
  static Schedule sleep_window(int num_clients, int rounds_per_day, const StreamFactory& streams);
  // Explicit bitmap [round][client]; repeats periodically past its horizon.
  static Schedule custom(std::vector<std::vector<uint8_t>> bitmap);
  // Text format: first line "N R", then R lines of N chars, '1' = available.
  static Schedule custom_from_file(const std::string& path);

  bool is_available(int client, long t) const;
  // Sorted ids of the clients available at iteration/round t (t >= 1).
  std::vector<int> available(long t) const;

  int num_clients() const { return num_clients_; }
  int declared_E() const { return declared_E_; }
  Kind kind() const { return kind_; }

  // sleep_window introspection (used to couple label skew to the clock)
  int window_len() const { return window_len_; }
  const std::vector<int>& window_starts() const { return window_start_; }
  // Center of client i's awake window on a 24h clock, in [0, 24).
  double client_hour(int client) const;

  long custom_period() const { return static_cast<long>(bitmap_.size()); }

 private:
  Schedule() = default;

  Kind kind_ = Kind::kAlwaysOn;
  int num_clients_ = 0;
  int declared_E_ = 1;
  int t1_ = 0, t2_ = 0;
  std::vector<uint8_t> in_group1_;  // alternating / diurnal membership
  int block_len_ = 0;
  int rounds_per_day_ = 0;
  int window_len_ = 0;
  std::vector<int> window_start_;
  std::vector<std::vector<uint8_t>> bitmap_;
};

inline std::vector<int> available_set(const Schedule& s, long t) { return s.available(t); }

struct ValidationResult {
  bool ok = true;
  // earliest violating window start per offending client
  std::vector<std::pair<int, long>> violations;
};

// Checks the minimal-availability assumption: every client appears in every
// window [s, s+E-1] within the horizon.
ValidationResult validate_min_availability(const Schedule& schedule, int E, long horizon);

// Smallest E that passes validation over the horizon: longest per-client
// absence gap plus one. NeverAvailable if some client never shows up.
int minimal_E(const Schedule& schedule, long horizon);

// Positive-label proportion for a client whose awake window centers at the
// given hour: alpha at hour 0 interpolating linearly to 1-alpha at hour 12.
double sleep_positive_proportion(double alpha, double hour);

}  // namespace fedsim
