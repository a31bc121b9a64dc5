#include "cvp/error.hpp"
#include "cvp/marketdata.hpp"
#include "cvp/processes.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace cvp;

namespace {

IngestReport ingest(const std::string& text) {
  std::istringstream in(text);
  return ingest_transactions(in);
}

AggregatedSeries aggregate(std::vector<TransactionRecord> r, double t2, double origin = 0.0) {
  return aggregate_vwap(std::move(r), AggregationConfig{t2, origin});
}

}  // namespace

TEST_CASE("ingest happy path") {
  const auto rep = ingest("timestamp,value,volume\n0.5,10,2\n0.7,21,3\n");
  REQUIRE(rep.records.size() == 2);
  CHECK(rep.records[1].t == 0.7);
  CHECK(rep.records[1].c == 21.0);
  CHECK(rep.records[1].v == 3.0);
  CHECK(rep.malformed.empty());
}

TEST_CASE("ingest rejects nonpositive volume by line number") {
  const auto rep = ingest("timestamp,value,volume\n0.5,10,2\n0.6,10,0\n0.7,21,3\n");
  CHECK(rep.records.size() == 2);
  REQUIRE(rep.rejected.size() == 1);
  CHECK(rep.rejected[0].line == 3);
}

TEST_CASE("ingest sorts stably by time") {
  const auto rep = ingest("timestamp;value;volume\n3;1;1\n1;2;1\n3;3;1\n2;4;1\n");
  REQUIRE(rep.records.size() == 4);
  CHECK(rep.records[0].c == 2.0);
  CHECK(rep.records[1].c == 4.0);
  CHECK(rep.records[2].c == 1.0);
  CHECK(rep.records[3].c == 3.0);
}

TEST_CASE("ingest malformed threshold and schema errors") {
  std::string ok = "timestamp,value,volume\n";
  for (int i = 0; i < 19; ++i) ok += std::to_string(i) + ",1,1\n";
  const auto rep = ingest(ok + "x,1,1\n");  // 1 of 20 malformed
  CHECK(rep.malformed.size() == 1);
  CHECK(rep.malformed[0].line == 21);
  CHECK_THROWS_AS(ingest(ok + "x,1,1\ny,1,1\nz,1,1\n"), InvalidInput);  // 3 of 22
  CHECK_THROWS_AS(ingest(""), InvalidInput);
  CHECK_THROWS_AS(ingest("a,b,c\n1,2,3\n"), InvalidInput);
  CHECK_THROWS_AS(ingest("timestamp,value,volume\n"), InvalidInput);
}

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("1700000000.25") == 1700000000.25);
  CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0.0);
  CHECK(parse_timestamp("2024-01-02T03:04:05.5Z") == 1704164645.5);
  CHECK(parse_timestamp("2024-01-02T05:04:05+02:00") == 1704164645.0);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), InvalidInput);
  const auto rep = ingest("timestamp\tvalue\tvolume\n2024-01-02T03:04:05Z\t5\t1\n");
  CHECK(rep.records.at(0).t == 1704164645.0);
}

TEST_CASE("vwap of the two-tick example") {
  const auto s = aggregate({{0.5, 10.0, 2.0}, {0.7, 21.0, 3.0}}, 1.0);
  REQUIRE(s.windows.size() == 1);
  const Window& w = s.windows[0];
  CHECK(w.start == 0.0);
  CHECK(w.end == 1.0);
  CHECK(w.sum_c == 31.0);
  CHECK(w.sum_v == 5.0);
  CHECK(w.vwap == 31.0 / 5.0);
  CHECK(w.simple_avg == 6.0);
  CHECK(w.n_ticks == 2);
}

TEST_CASE("single tick and constant price windows") {
  const auto one = aggregate({{0.2, 9.0, 4.0}}, 1.0);
  CHECK(one.windows[0].vwap == 2.25);
  CHECK(one.windows[0].simple_avg == 2.25);
  const auto flat = aggregate({{0.1, 6, 2}, {0.4, 30, 10}, {1.2, 3, 1}, {1.5, 0.3, 0.1}}, 1.0);
  for (const auto& w : flat.windows) {
    CHECK(w.vwap == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(w.simple_avg == doctest::Approx(3.0).epsilon(1e-15));
  }
  CHECK(vwap_gap(flat).max < 1e-15);
}

TEST_CASE("empty windows are gaps") {
  const auto s = aggregate({{0.5, 1, 1}, {3.5, 2, 1}}, 1.0);
  REQUIRE(s.windows.size() == 4);
  CHECK(s.windows[1].gap());
  CHECK(std::isnan(s.windows[1].vwap));
  CHECK(s.windows[2].sum_c == 0.0);
  const auto g = vwap_gap(s);
  CHECK(std::isnan(g.gap[1]));
  CHECK(g.max == 0.0);
}

TEST_CASE("vwap gap examples") {
  const auto same = aggregate({{0.1, 10, 10}, {0.2, 100, 10}}, 1.0);
  CHECK(vwap_gap(same).gap[0] == 0.0);
  const auto skew = aggregate({{0.1, 10, 10}, {0.2, 100, 50}}, 1.0);
  const double vwap = 110.0 / 60.0;
  CHECK(vwap_gap(skew).gap[0] == std::abs(vwap - 1.5) / vwap);
  CHECK(std::abs(vwap_gap(skew).gap[0] - 2.0 / 11.0) <= 1e-15);
  // uniform rescaling of every C leaves the gap unchanged
  const auto scaled = aggregate({{0.1, 37, 10}, {0.2, 370, 50}}, 1.0);
  CHECK(vwap_gap(scaled).gap[0] == doctest::Approx(vwap_gap(skew).gap[0]).epsilon(1e-14));
}

TEST_CASE("window boundaries") {
  const double dt = 1.0 / 252.0;
  std::vector<TransactionRecord> r;
  for (int i = 0; i < 1000; ++i) r.push_back({i * dt, 1.0, 1.0});
  const auto s = aggregate(r, dt);
  CHECK(s.windows.size() == 1000);
  for (const auto& w : s.windows) CHECK(w.n_ticks == 1);
  const auto shifted = aggregate({{0.5, 1, 1}, {1.5, 1, 1}}, 1.0, 1.0);
  CHECK(shifted.dropped_before_origin == 1);
  CHECK(shifted.windows.size() == 1);
}

TEST_CASE("conservation and vwap bounds for random ticks at several scales") {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> time(0.0, 100.0), price(1.0, 50.0);
  std::uniform_int_distribution<int> eighths(1, 160);
  // values on a 1/64 lattice keep every partial sum exact, so totals must agree bit for bit
  std::vector<TransactionRecord> lattice, reals;
  for (int i = 0; i < 5000; ++i) {
    const double v = eighths(rng) / 8.0;
    lattice.push_back({time(rng), eighths(rng) * v / 8.0, v});
    reals.push_back({time(rng), price(rng) * v, v});
  }
  for (double t2 : {0.37, 1.0, 7.5, 60.0}) {
    for (const auto* ticks : {&lattice, &reals}) {
      const auto s = aggregate(*ticks, t2);
      long double ref_c = 0.0L, ref_v = 0.0L;
      for (const auto& t : *ticks) {
        ref_c += t.c;
        ref_v += t.v;
      }
      double win_c = 0.0, win_v = 0.0;
      std::size_t n = 0;
      for (const auto& w : s.windows) {
        n += w.n_ticks;
        win_c += w.sum_c;
        win_v += w.sum_v;
        if (w.gap()) continue;
        CHECK(w.vwap == w.sum_c / w.sum_v);
        CHECK(w.vwap >= w.min_price);
        CHECK(w.vwap <= w.max_price);
      }
      CHECK(n == ticks->size());
      if (ticks == &lattice) {
        CHECK(win_c == static_cast<double>(ref_c));
        CHECK(win_v == static_cast<double>(ref_v));
      } else {
        CHECK(std::abs(win_c - static_cast<double>(ref_c)) <= 1e-14 * static_cast<double>(ref_c));
        CHECK(std::abs(win_v - static_cast<double>(ref_v)) <= 1e-14 * static_cast<double>(ref_v));
      }
    }
  }
}

TEST_CASE("calibration of a noiseless exponential") {
  std::vector<TransactionRecord> r;
  const double dt = 1.0 / 252.0;
  for (int i = 0; i < 500; ++i) {
    const double t = i * dt;
    r.push_back({t, 100.0 * std::exp(0.08 * t), 5.0 * std::exp(-0.02 * t)});
  }
  const auto cal = calibrate_two_factor(aggregate(r, dt), 252.0);
  CHECK(cal.sigma_c < 1e-6);
  CHECK(cal.sigma_v < 1e-6);
  CHECK(std::abs(cal.mu_c - 0.08) < 1e-10);
  CHECK(std::abs(cal.mu_v + 0.02) < 1e-10);
  CHECK(cal.n_obs == 499);
}

TEST_CASE("calibration uses the longest contiguous run") {
  std::vector<TransactionRecord> r;
  for (int i = 0; i < 40; ++i) r.push_back({static_cast<double>(i), 1.0 + 0.01 * (i % 3), 1.0});
  for (int i = 45; i < 120; ++i) r.push_back({static_cast<double>(i), 1.0 + 0.01 * (i % 5), 1.0 + 0.02 * (i % 2)});
  const auto cal = calibrate_two_factor(aggregate(r, 1.0), 1.0);
  CHECK(cal.run_start == 45);
  CHECK(cal.run_length == 75);
  CHECK(cal.n_obs == 74);

  std::vector<TransactionRecord> short_run;
  for (int i = 0; i < 20; ++i) short_run.push_back({static_cast<double>(i), 1.0, 1.0});
  CHECK_THROWS_AS(calibrate_two_factor(aggregate(short_run, 1.0), 1.0), InsufficientData);
}

TEST_CASE("calibration round trip and independent streams") {
  const double dt = 1.0 / 252.0;
  SimConfig cfg;
  cfg.n_paths = 1;
  cfg.n_steps = 20000;
  cfg.horizon = 20000 * dt;
  cfg.seed = 99;
  for (double lambda : {0.5, 0.0}) {
    const TwoFactorParams p{0.1, 0.3, 0.05, 0.2, lambda};
    const PathBundle b = simulate_two_factor(p, 1000.0, 100.0, cfg);
    std::vector<TransactionRecord> ticks;
    for (std::size_t k = 0; k < b.n_times(); ++k) ticks.push_back({b.times[k], b.at(0, k, 0), b.at(0, k, 1)});
    const auto cal = calibrate_two_factor(aggregate(ticks, dt), 252.0);
    CHECK(std::abs(cal.sigma_c - 0.3) < 4.0 * cal.se.sigma_c);
    CHECK(std::abs(cal.sigma_v - 0.2) < 4.0 * cal.se.sigma_v);
    CHECK(std::abs(cal.mu_c - 0.1) < 4.0 * cal.se.mu_c);
    CHECK(std::abs(cal.mu_v - 0.05) < 4.0 * cal.se.mu_v);
    CHECK(std::abs(cal.lambda - lambda) < 4.0 * cal.se.lambda);
    if (lambda == 0.0) CHECK(std::abs(cal.lambda) <= 4.0 / std::sqrt(static_cast<double>(cal.n_obs)));
  }
}

TEST_CASE("csv writers") {
  std::ostringstream ticks, series;
  write_ticks_csv(ticks, {{0.5, 10.0, 2.0}});
  CHECK(ticks.str() == "timestamp,value,volume\n0.5,10,2\n");
  write_series_csv(series, aggregate({{0.5, 10.0, 2.0}, {2.5, 1.0, 1.0}}, 1.0));
  CHECK(series.str().rfind("start,end,sum_value,sum_volume,vwap,simple_avg,n_ticks\n", 0) == 0);
  CHECK(series.str().find("1,2,0,0,,,0\n") != std::string::npos);
}
