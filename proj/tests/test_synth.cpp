#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "eqdet/synth.hpp"

using namespace eqdet;

TEST_CASE("generate_network places unique stations inside the extent") {
  StationGeometry geo = generate_network(13, 50.0, 42);
  REQUIRE(geo.size() == 13);
  std::set<std::string> ids;
  for (const auto& s : geo.stations) {
    ids.insert(s.id);
    CHECK(!s.id.empty());
    CHECK(s.x_km >= 0.0);
    CHECK(s.x_km <= 50.0);
    CHECK(s.y_km >= 0.0);
    CHECK(s.y_km <= 50.0);
  }
  CHECK(ids.size() == 13);
}

TEST_CASE("generate_network minimal and deterministic") {
  CHECK(generate_network(1, 10.0, 0).size() == 1);

  StationGeometry a = generate_network(5, 20.0, 7);
  StationGeometry b = generate_network(5, 20.0, 7);
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.stations[i].id == b.stations[i].id);
    CHECK(a.stations[i].x_km == b.stations[i].x_km);
    CHECK(a.stations[i].y_km == b.stations[i].y_km);
  }

  StationGeometry c = generate_network(5, 20.0, 8);
  bool differs = false;
  for (int i = 0; i < a.size(); ++i)
    if (a.stations[i].x_km != c.stations[i].x_km) differs = true;
  CHECK(differs);

  CHECK_THROWS_AS(generate_network(0, 10.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(generate_network(3, 0.0, 1), std::invalid_argument);
}

TEST_CASE("arrival_times does d/v arithmetic") {
  SeismicEvent e;
  e.origin_time_s = 100.0;
  e.x_km = 0.0;
  e.y_km = 0.0;
  e.depth_km = 0.0;
  auto [tp, ts] = arrival_times(60.0, 0.0, e, 6.0, 3.0);
  CHECK(tp == Catch::Approx(110.0).margin(1e-12));
  CHECK(ts == Catch::Approx(120.0).margin(1e-12));

  auto [tp0, ts0] = arrival_times(0.0, 0.0, e, 6.0, 3.0);
  CHECK(tp0 == 100.0);
  CHECK(ts0 == 100.0);

  CHECK_THROWS_AS(arrival_times(1.0, 1.0, e, 3.0, 6.0), std::invalid_argument);
  CHECK_THROWS_AS(arrival_times(1.0, 1.0, e, 6.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(arrival_times(1.0, 1.0, e, 6.0, -1.0), std::invalid_argument);
}

TEST_CASE("S-P gap matches an independent distance computation") {
  StationGeometry geo = generate_network(7, 80.0, 99);
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    SeismicEvent e;
    e.origin_time_s = rng.uniform(0.0, 1000.0);
    e.x_km = rng.uniform(0.0, 80.0);
    e.y_km = rng.uniform(0.0, 80.0);
    e.depth_km = rng.uniform(0.0, 30.0);
    for (const auto& st : geo.stations) {
      // brute-force coordinate arithmetic, independent of the library helper
      const double dx = st.x_km - e.x_km;
      const double dy = st.y_km - e.y_km;
      const double d = std::sqrt(dx * dx + dy * dy + e.depth_km * e.depth_km);
      auto [tp, ts] = arrival_times(st.x_km, st.y_km, e, 6.0, 3.5);
      CHECK(ts - tp == Catch::Approx(d * (1.0 / 3.5 - 1.0 / 6.0)).margin(1e-9));
      if (d > 0.0) CHECK(ts > tp);
    }
  }
}

TEST_CASE("noise-only synthesis has the requested std") {
  StationGeometry geo = generate_network(1, 10.0, 3);
  EventCatalog empty;
  RawTraceSet tr = synth_waveforms(geo, empty, 500.0, 0.05, 11);
  REQUIRE(tr.n_samples == 100000);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int64_t t = 0; t < tr.n_samples; ++t) {
      const double x = tr.at(0, t, c);
      sum += x;
      sumsq += x * x;
    }
    const double n = static_cast<double>(tr.n_samples);
    const double stddev = std::sqrt(sumsq / n - (sum / n) * (sum / n));
    CHECK(stddev > 0.045);
    CHECK(stddev < 0.055);
  }
}

TEST_CASE("noise-free event is causal and S dominates P") {
  StationGeometry geo = generate_network(4, 40.0, 21);
  EventCatalog cat;
  SeismicEvent e;
  e.origin_time_s = 30.0;
  e.x_km = 20.0;
  e.y_km = 20.0;
  e.depth_km = 8.0;
  e.amplitude = 1.0;
  cat.events.push_back(e);

  RawTraceSet tr = synth_waveforms(geo, cat, 120.0, 0.0, 5);
  const double fs = tr.sample_rate_hz;
  for (int s = 0; s < geo.size(); ++s) {
    const auto& st = geo.stations[static_cast<size_t>(s)];
    auto [tp, ts] = arrival_times(st.x_km, st.y_km, e);

    // causality: exactly zero before the P arrival
    const int64_t tp_idx = static_cast<int64_t>(std::floor(tp * fs));
    for (int64_t t = 0; t < tp_idx; ++t)
      for (int c = 0; c < 3; ++c) REQUIRE(tr.at(s, t, c) == 0.0f);

    // scan the generated trace for the amplitude ratio
    auto window_max = [&](double t0, double t1) {
      double m = 0.0;
      for (int64_t t = static_cast<int64_t>(std::ceil(t0 * fs));
           t <= static_cast<int64_t>(std::floor(t1 * fs)) && t < tr.n_samples; ++t)
        for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(static_cast<double>(tr.at(s, t, c))));
      return m;
    };
    const double p_max = window_max(tp, tp + 0.5 * (ts - tp));
    const double s_max = window_max(ts, ts + 2.0);
    CHECK(s_max >= 2.0 * p_max);
  }
}

TEST_CASE("synthesis is deterministic under seed and differs across seeds") {
  StationGeometry geo = generate_network(3, 30.0, 2);
  EventCatalog cat = generate_catalog(2, 30.0, 40.0, 10.0, 0.5, 2.0, 6);
  RawTraceSet a = synth_waveforms(geo, cat, 100.0, 0.02, 77);
  RawTraceSet b = synth_waveforms(geo, cat, 100.0, 0.02, 77);
  RawTraceSet c = synth_waveforms(geo, cat, 100.0, 0.02, 78);
  CHECK(a.traces == b.traces);
  CHECK(a.traces != c.traces);

  CHECK_THROWS_AS(synth_waveforms(StationGeometry{}, cat, 10.0, 0.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(synth_waveforms(geo, cat, 0.0, 0.0, 1), std::invalid_argument);
}

TEST_CASE("generate_catalog keeps origin times strictly increasing") {
  EventCatalog cat = generate_catalog(50, 60.0, 24.0, 15.0, 0.5, 2.0, 4);
  REQUIRE(cat.events.size() == 50);
  for (size_t i = 0; i + 1 < cat.events.size(); ++i)
    CHECK(cat.events[i].origin_time_s < cat.events[i + 1].origin_time_s);
  validate_catalog(cat);
}
