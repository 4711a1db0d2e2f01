#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <doctest.h>

#include "fedsim/availability.hpp"

using namespace fedsim;

TEST_CASE("alternating schedule walks its two groups") {
  auto s = Schedule::alternating(2, 2, 1, {0}, {1});
  CHECK(s.declared_E() == 3);
  CHECK(s.available(1) == std::vector<int>{0});
  CHECK(s.available(2) == std::vector<int>{0});
  CHECK(s.available(3) == std::vector<int>{1});
  CHECK(s.available(4) == std::vector<int>{0});  // period t1+t2 = 3
  CHECK(s.available(6) == std::vector<int>{1});

  auto ok = validate_min_availability(s, 3, 300);
  CHECK(ok.ok);
  auto bad = validate_min_availability(s, 2, 300);
  CHECK(!bad.ok);
  REQUIRE(bad.violations.size() == 1);
  CHECK(bad.violations[0].first == 1);   // client 1 misses window [1, 2]
  CHECK(bad.violations[0].second == 1);
}

TEST_CASE("alternating defaults to a half and half split") {
  auto s = Schedule::alternating(6, 1, 1);
  CHECK(s.available(1) == std::vector<int>{0, 1, 2});
  CHECK(s.available(2) == std::vector<int>{3, 4, 5});
}

TEST_CASE("group validation rejects overlap and gaps") {
  CHECK_THROWS_AS(Schedule::alternating(3, 1, 1, {0, 1}, {1, 2}), RangeError);
  CHECK_THROWS_AS(Schedule::alternating(3, 1, 1, {0}, {2}), RangeError);
  CHECK_THROWS_AS(Schedule::alternating(2, 0, 1, {0}, {1}), RangeError);
}

TEST_CASE("always-on has window one") {
  auto s = Schedule::always_on(5);
  CHECK(s.declared_E() == 1);
  for (long t : {1L, 7L, 1000L}) CHECK(s.available(t) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(minimal_E(s, 50) == 1);
}

TEST_CASE("diurnal blocks flip between groups") {
  auto s = Schedule::diurnal(3, 2, {0, 1});
  CHECK(s.declared_E() == 3);
  CHECK(s.available(1) == std::vector<int>{0, 1});
  CHECK(s.available(2) == std::vector<int>{0, 1});
  CHECK(s.available(3) == std::vector<int>{2});
  CHECK(s.available(4) == std::vector<int>{2});
  CHECK(s.available(5) == std::vector<int>{0, 1});
  CHECK(validate_min_availability(s, s.declared_E(), 200).ok);
  CHECK(!validate_min_availability(s, s.declared_E() - 1, 200).ok);
}

TEST_CASE("minimal window equals longest gap plus one") {
  CHECK(minimal_E(Schedule::alternating(2, 3, 1, {0}, {1}), 40) == 4);

  StreamFactory streams(21);
  auto sleep = Schedule::sleep_window(6, 24, streams);
  CHECK(sleep.declared_E() == 17);  // awake 8 of every 24 rounds
  CHECK(minimal_E(sleep, 72) == 17);
  CHECK(validate_min_availability(sleep, 17, 72).ok);
}

TEST_CASE("declared windows validate for every built-in kind") {
  StreamFactory streams(33);
  const Schedule builtins[] = {
      Schedule::always_on(5),
      Schedule::alternating(6, 2, 3),
      Schedule::diurnal(4, 4, {0, 3}),
      Schedule::sleep_window(8, 6, streams),
      Schedule::custom({{1, 1, 0}, {0, 1, 1}, {1, 0, 1}}),
  };
  for (const auto& s : builtins) {
    CAPTURE(static_cast<int>(s.kind()));
    auto res = validate_min_availability(s, s.declared_E(), 10L * std::max(1, s.declared_E()));
    CHECK(res.ok);
  }
}

TEST_CASE("custom bitmaps extend periodically") {
  auto s = Schedule::custom({{1, 0}, {0, 1}, {1, 0}});
  CHECK(s.custom_period() == 3);
  CHECK(s.available(1) == std::vector<int>{0});
  CHECK(s.available(2) == std::vector<int>{1});
  CHECK(s.available(4) == std::vector<int>{0});  // wraps to row 1
  CHECK(s.available(5) == std::vector<int>{1});
  // client 1's gap crosses the seam: absent at rows 3 and 1
  CHECK(s.declared_E() == 3);
  CHECK(validate_min_availability(s, 3, 60).ok);
}

TEST_CASE("custom schedule files round-trip") {
  const char* path = "sched_test.txt";
  {
    std::ofstream out(path);
    out << "3 4\n110\n011\n101\n111\n";
  }
  auto s = Schedule::custom_from_file(path);
  CHECK(s.num_clients() == 3);
  CHECK(s.custom_period() == 4);
  CHECK(s.available(1) == std::vector<int>{0, 1});
  CHECK(s.available(3) == std::vector<int>{0, 2});
  CHECK(s.available(5) == std::vector<int>{0, 1});  // periodic
  std::remove(path);
}

TEST_CASE("schedule file errors name the offending row") {
  CHECK_THROWS_AS(Schedule::custom_from_file("missing_sched.txt"), IoError);

  const char* path = "sched_bad.txt";
  {
    std::ofstream out(path);
    out << "2 2\n10\n1x\n";
  }
  CHECK_THROWS_WITH_AS(Schedule::custom_from_file(path),
                       "schedule row 2: flags must be 0/1", IoError);
  {
    std::ofstream out(path);
    out << "2 3\n10\n01\n";
  }
  CHECK_THROWS_AS(Schedule::custom_from_file(path), IoError);  // too few rows
  {
    std::ofstream out(path);
    out << "0 2\n\n\n";
  }
  CHECK_THROWS_AS(Schedule::custom_from_file(path), IoError);  // bad header
  std::remove(path);
}

TEST_CASE("a never-available client poisons the declared window") {
  auto s = Schedule::custom({{1, 0}, {1, 0}});
  CHECK(s.declared_E() == 5);  // 2 * period + 1: impossible by construction
  auto res = validate_min_availability(s, s.declared_E(), 20);
  CHECK(!res.ok);
  REQUIRE(!res.violations.empty());
  CHECK(res.violations[0].first == 1);
  CHECK_THROWS_AS(minimal_E(s, 20), NeverAvailable);
}

TEST_CASE("awake windows map onto a 24 hour clock") {
  StreamFactory streams(7);
  auto s = Schedule::sleep_window(10, 24, streams);
  for (int i = 0; i < 10; ++i) {
    double h = s.client_hour(i);
    CHECK(h >= 0.0);
    CHECK(h < 24.0);
    double center = std::fmod(s.window_starts()[i] + s.window_len() / 2.0, 24.0);
    CHECK(h == doctest::Approx(center).epsilon(1e-12));
  }
  CHECK_THROWS_AS(Schedule::always_on(2).client_hour(0), RangeError);
  CHECK_THROWS_AS(Schedule::sleep_window(2, 10, streams), RangeError);
  CHECK_THROWS_AS(Schedule::sleep_window(2, 0, streams), RangeError);
}

TEST_CASE("label skew interpolates from midnight to noon") {
  CHECK(sleep_positive_proportion(0.2, 0.0) == doctest::Approx(0.2));
  CHECK(sleep_positive_proportion(0.2, 12.0) == doctest::Approx(0.8));
  CHECK(sleep_positive_proportion(0.2, 6.0) == doctest::Approx(0.5));
  CHECK(sleep_positive_proportion(0.2, 18.0) == doctest::Approx(0.5));  // symmetric
  CHECK(sleep_positive_proportion(0.2, 24.0) == doctest::Approx(0.2));  // wraps
  for (double h = 0; h < 24; h += 1.7)
    CHECK(sleep_positive_proportion(0.5, h) == doctest::Approx(0.5));  // no skew
}
