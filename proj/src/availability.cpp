#include "fedsim/availability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fedsim {

namespace {
// Disjoint groups covering 0..N-1, as a membership mask for group1.
std::vector<uint8_t> make_membership(int num_clients, std::vector<int>& group1,
                                     std::vector<int>& group2) {
  if (group1.empty() && group2.empty()) {
    for (int i = 0; i < num_clients / 2; ++i) group1.push_back(i);
    for (int i = num_clients / 2; i < num_clients; ++i) group2.push_back(i);
  }
  std::vector<uint8_t> seen(num_clients, 0);
  std::vector<uint8_t> mask(num_clients, 0);
  for (int id : group1) {
    if (id < 0 || id >= num_clients || seen[id]) throw RangeError("alternating: bad group1 id");
    seen[id] = 1;
    mask[id] = 1;
  }
  for (int id : group2) {
    if (id < 0 || id >= num_clients || seen[id]) throw RangeError("alternating: bad group2 id");
    seen[id] = 1;
  }
  if (std::accumulate(seen.begin(), seen.end(), 0) != num_clients)
    throw RangeError("alternating: groups must cover all clients");
  return mask;
}
}  // namespace

Schedule Schedule::always_on(int num_clients) {
  if (num_clients < 1) throw RangeError("schedule: num_clients < 1");
  Schedule s;
  s.kind_ = Kind::kAlwaysOn;
  s.num_clients_ = num_clients;
  s.declared_E_ = 1;
  return s;
}

Schedule Schedule::alternating(int num_clients, int t1, int t2, std::vector<int> group1,
                               std::vector<int> group2) {
  if (num_clients < 1) throw RangeError("schedule: num_clients < 1");
  if (t1 < 1 || t2 < 1) throw RangeError("alternating: t1, t2 must be >= 1");
  Schedule s;
  s.kind_ = Kind::kAlternating;
  s.num_clients_ = num_clients;
  s.t1_ = t1;
  s.t2_ = t2;
  s.in_group1_ = make_membership(num_clients, group1, group2);
  s.declared_E_ = std::max(t1, t2) + 1;
  return s;
}

Schedule Schedule::diurnal(int num_clients, int block_len, std::vector<int> group_a) {
  if (num_clients < 1) throw RangeError("schedule: num_clients < 1");
  if (block_len < 1) throw RangeError("diurnal: block_len must be >= 1");
  Schedule s;
  s.kind_ = Kind::kDiurnal;
  s.num_clients_ = num_clients;
  s.block_len_ = block_len;
  s.in_group1_.assign(num_clients, 0);
  for (int id : group_a) {
    if (id < 0 || id >= num_clients) throw RangeError("diurnal: bad group_a id");
    s.in_group1_[id] = 1;
  }
  // A client's longest absence is exactly one block, so block_len+1 is the
  // tightest window that always contains an appearance.
  s.declared_E_ = block_len + 1;
  return s;
}

Schedule Schedule::sleep_window(int num_clients, int rounds_per_day,
                                const StreamFactory& streams) {
  if (num_clients < 1) throw RangeError("schedule: num_clients < 1");
  if (rounds_per_day < 3 || rounds_per_day % 3 != 0)
    throw RangeError("sleep_window: rounds_per_day must be a positive multiple of 3");
  Schedule s;
  s.kind_ = Kind::kSleepWindow;
  s.num_clients_ = num_clients;
  s.rounds_per_day_ = rounds_per_day;
  s.window_len_ = rounds_per_day / 3;
  s.window_start_.resize(num_clients);
  for (int i = 0; i < num_clients; ++i) {
    RandomStream r = streams.make("sleepwin", i, 0, 0);
    s.window_start_[i] = r.uniform_index(rounds_per_day);
  }
  // Absence between consecutive awake windows spans rounds_per_day - len.
  s.declared_E_ = rounds_per_day - s.window_len_ + 1;
  return s;
}

Schedule Schedule::custom(std::vector<std::vector<uint8_t>> bitmap) {
  if (bitmap.empty() || bitmap.front().empty()) throw RangeError("custom: empty bitmap");
  size_t n = bitmap.front().size();
  for (const auto& row : bitmap)
    if (row.size() != n) throw RangeError("custom: ragged bitmap rows");
  Schedule s;
  s.kind_ = Kind::kCustom;
  s.num_clients_ = static_cast<int>(n);
  s.bitmap_ = std::move(bitmap);
  // Declared E taken from the bitmap itself (it extends periodically, so one
  // period plus the wrap determines the longest gap). Evaluate over two
  // periods to capture gaps across the seam.
  try {
    s.declared_E_ = minimal_E(s, 2 * static_cast<long>(s.bitmap_.size()));
  } catch (const NeverAvailable&) {
    // No window length can cover an absent client; poison the declared value
    // so validation flags the schedule, but keep construction usable.
    s.declared_E_ = 2 * static_cast<int>(s.bitmap_.size()) + 1;
  }
  return s;
}

Schedule Schedule::custom_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schedule: " + path);
  int n = 0;
  long rows = 0;
  if (!(in >> n >> rows) || n < 1 || rows < 1)
    throw IoError("schedule header must be 'N R' with positive ints: " + path);
  std::string line;
  std::getline(in, line);  // rest of header line
  std::vector<std::vector<uint8_t>> bitmap;
  bitmap.reserve(rows);
  for (long r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw IoError("schedule: expected " + std::to_string(rows) +
                                               " rows, got " + std::to_string(r));
    if (static_cast<int>(line.size()) < n)
      throw IoError("schedule row " + std::to_string(r + 1) + ": need " + std::to_string(n) +
                    " flags");
    std::vector<uint8_t> row(n);
    for (int i = 0; i < n; ++i) {
      if (line[i] != '0' && line[i] != '1')
        throw IoError("schedule row " + std::to_string(r + 1) + ": flags must be 0/1");
      row[i] = line[i] == '1';
    }
    bitmap.push_back(std::move(row));
  }
  return custom(std::move(bitmap));
}

bool Schedule::is_available(int client, long t) const {
  switch (kind_) {
    case Kind::kAlwaysOn:
      return true;
    case Kind::kAlternating: {
      long phase = (t - 1) % (t1_ + t2_);
      return phase < t1_ ? in_group1_[client] : !in_group1_[client];
    }
    case Kind::kDiurnal: {
      long block = (t - 1) / block_len_;  // 0-based; even = first (odd 1-based)
      return block % 2 == 0 ? in_group1_[client] : !in_group1_[client];
    }
    case Kind::kSleepWindow: {
      long pos = (t - 1) % rounds_per_day_;
      long rel = (pos - window_start_[client] + rounds_per_day_) % rounds_per_day_;
      return rel < window_len_;
    }
    case Kind::kCustom: {
      long row = (t - 1) % static_cast<long>(bitmap_.size());
      return bitmap_[row][client] != 0;
    }
  }
  return false;
}

std::vector<int> Schedule::available(long t) const {
  std::vector<int> out;
  out.reserve(num_clients_);
  for (int i = 0; i < num_clients_; ++i)
    if (is_available(i, t)) out.push_back(i);
  return out;
}

double Schedule::client_hour(int client) const {
  if (kind_ != Kind::kSleepWindow) throw RangeError("client_hour: not a sleep_window schedule");
  double center = std::fmod(window_start_[client] + window_len_ / 2.0, rounds_per_day_);
  return center * 24.0 / rounds_per_day_;
}

ValidationResult validate_min_availability(const Schedule& schedule, int E, long horizon) {
  if (E < 1 || horizon < E) throw RangeError("validate: need 1 <= E <= horizon");
  ValidationResult res;
  for (int i = 0; i < schedule.num_clients(); ++i) {
    long prev = 0;  // last appearance; 0 = none yet
    long violation = 0;
    for (long t = 1; t <= horizon && violation == 0; ++t) {
      if (schedule.is_available(i, t)) {
        prev = t;
      } else if (t - prev >= E) {
        violation = prev + 1;  // window [prev+1, prev+E] has no appearance
      }
    }
    if (violation != 0) {
      res.ok = false;
      res.violations.emplace_back(i, violation);
    }
  }
  return res;
}

int minimal_E(const Schedule& schedule, long horizon) {
  if (horizon < 1) throw RangeError("minimal_E: horizon < 1");
  int worst = 1;
  for (int i = 0; i < schedule.num_clients(); ++i) {
    long prev = 0;
    long gap = 0;
    bool seen = false;
    for (long t = 1; t <= horizon; ++t) {
      if (schedule.is_available(i, t)) {
        gap = std::max(gap, t - prev - 1);
        prev = t;
        seen = true;
      }
    }
    if (!seen)
      throw NeverAvailable("client " + std::to_string(i) + " never available in horizon");
    gap = std::max(gap, horizon - prev);  // trailing absence
    worst = std::max<long>(worst, gap + 1);
  }
  return worst;
}

double sleep_positive_proportion(double alpha, double hour) {
  double h = std::fmod(hour, 24.0);
  if (h < 0) h += 24.0;
  double d = std::min(h, 24.0 - h);  // distance from hour 0, in [0, 12]
  return alpha + (1.0 - 2.0 * alpha) * (d / 12.0);
}

}  // namespace fedsim
