#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eqdet/rng.hpp"
#include "eqdet/tensor.hpp"

namespace eqdet {

struct Station {
  std::string id;
  double x_km = 0.0;
  double y_km = 0.0;
};

struct StationGeometry {
  std::vector<Station> stations;
  int size() const { return static_cast<int>(stations.size()); }
};

struct SeismicEvent {
  double origin_time_s = 0.0;
  double x_km = 0.0;
  double y_km = 0.0;
  double depth_km = 0.0;
  double amplitude = 1.0;
};

struct EventCatalog {
  std::vector<SeismicEvent> events;
};

inline void validate_catalog(const EventCatalog& cat) {
  for (size_t i = 0; i + 1 < cat.events.size(); ++i)
    check_arg(cat.events[i].origin_time_s < cat.events[i + 1].origin_time_s,
              "catalog: origin times must be strictly increasing");
  for (const auto& e : cat.events) {
    check_arg(e.depth_km >= 0.0, "catalog: depth_km must be >= 0");
    check_arg(e.amplitude > 0.0, "catalog: amplitude must be > 0");
  }
}

// Raw three-component traces, station-major then time then component.
// Stored as float32: that is the on-disk payload precision.
struct RawTraceSet {
  double sample_rate_hz = 200.0;
  double start_time_s = 0.0;
  int n_stations = 0;
  int64_t n_samples = 0;
  std::vector<float> traces;  // N * T * 3

  float& at(int s, int64_t t, int c) {
    return traces[(static_cast<size_t>(s) * n_samples + t) * 3 + c];
  }
  float at(int s, int64_t t, int c) const {
    return traces[(static_cast<size_t>(s) * n_samples + t) * 3 + c];
  }
};

// Crustal straight-ray velocities used throughout the synthetic pipeline.
constexpr double kVpKmS = 6.0;
constexpr double kVsKmS = 3.5;

inline StationGeometry generate_network(int n_stations, double extent_km, uint64_t seed) {
  check_arg(n_stations >= 1, "generate_network: n_stations must be >= 1");
  check_arg(extent_km > 0.0, "generate_network: extent_km must be > 0");
  Rng rng(mix_seed(seed, 0x5747u));
  StationGeometry geo;
  geo.stations.reserve(static_cast<size_t>(n_stations));
  int width = 2;
  for (int n = n_stations - 1; n >= 100; n /= 10) ++width;
  for (int i = 0; i < n_stations; ++i) {
    std::string id = std::to_string(i);
    while (static_cast<int>(id.size()) < width) id.insert(id.begin(), '0');
    geo.stations.push_back({"ST" + id, rng.uniform(0.0, extent_km),
                            rng.uniform(0.0, extent_km)});
  }
  return geo;
}

inline double hypocentral_distance_km(double sx, double sy, const SeismicEvent& e) {
  const double dx = sx - e.x_km, dy = sy - e.y_km, dz = e.depth_km;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// P and S arrival times for one station/event pair, straight rays.
inline std::pair<double, double> arrival_times(double station_x_km, double station_y_km,
                                               const SeismicEvent& event,
                                               double vp_km_s = kVpKmS,
                                               double vs_km_s = kVsKmS) {
  check_arg(vs_km_s > 0.0 && vp_km_s > vs_km_s,
            "arrival_times: need vp > vs > 0");
  const double d = hypocentral_distance_km(station_x_km, station_y_km, event);
  return {event.origin_time_s + d / vp_km_s, event.origin_time_s + d / vs_km_s};
}

namespace detail {

// Damped sinusoid onset added in place. Weights are per component.
inline void add_burst(RawTraceSet& out, int station, double onset_s, double freq_hz,
                      double tau_s, double amp, const double (&weights)[3]) {
  const double fs = out.sample_rate_hz;
  const int64_t t0 = static_cast<int64_t>(std::ceil((onset_s - out.start_time_s) * fs));
  const int64_t t1 =
      std::min<int64_t>(out.n_samples,
                        t0 + static_cast<int64_t>(std::ceil(10.0 * tau_s * fs)));
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (int64_t t = std::max<int64_t>(t0, 0); t < t1; ++t) {
    const double dt = static_cast<double>(t) / fs + out.start_time_s - onset_s;
    const double base = amp * std::exp(-dt / tau_s);
    const double s0 = std::sin(two_pi * freq_hz * dt);
    const double s1 = std::sin(two_pi * freq_hz * dt + 0.7853981633974483);
    out.at(station, t, 0) += static_cast<float>(weights[0] * base * s0);
    out.at(station, t, 1) += static_cast<float>(weights[1] * base * s1);
    out.at(station, t, 2) += static_cast<float>(weights[2] * base * s0);
  }
}

}  // namespace detail

// Synthesizes raw 200 Hz traces: white Gaussian background plus, per event
// and station, a P onset (vertical-dominant, 5 Hz) and a stronger S onset
// (horizontal-dominant, 3.5 Hz). Everything is deterministic under the seed.
inline RawTraceSet synth_waveforms(const StationGeometry& geometry,
                                   const EventCatalog& catalog, double duration_s,
                                   double noise_std, uint64_t seed,
                                   double sample_rate_hz = 200.0) {
  check_arg(!geometry.stations.empty(), "synth_waveforms: empty geometry");
  check_arg(duration_s > 0.0, "synth_waveforms: duration_s must be > 0");
  validate_catalog(catalog);

  RawTraceSet out;
  out.sample_rate_hz = sample_rate_hz;
  out.start_time_s = 0.0;
  out.n_stations = geometry.size();
  out.n_samples = static_cast<int64_t>(std::llround(duration_s * sample_rate_hz));
  out.traces.assign(static_cast<size_t>(out.n_stations) * out.n_samples * 3, 0.0f);

  if (noise_std > 0.0) {
    // independent noise stream per station so memory stays trace-local
    for (int s = 0; s < out.n_stations; ++s) {
      Rng rng(mix_seed(seed, 0xA05Eu, static_cast<uint64_t>(s)));
      float* p = out.traces.data() + static_cast<size_t>(s) * out.n_samples * 3;
      const int64_t n = out.n_samples * 3;
      for (int64_t i = 0; i < n; ++i)
        p[i] = static_cast<float>(rng.normal(0.0, noise_std));
    }
  }

  // P burst rides mostly on the vertical component, S on the horizontals and
  // at >= 2x the P amplitude, mimicking real phase polarization.
  constexpr double p_weights[3] = {0.30, 0.30, 1.00};
  constexpr double s_weights[3] = {2.50, 2.50, 0.75};
  for (const auto& ev : catalog.events) {
    for (int s = 0; s < out.n_stations; ++s) {
      const auto& st = geometry.stations[static_cast<size_t>(s)];
      const auto [tp, ts] = arrival_times(st.x_km, st.y_km, ev);
      const double d = hypocentral_distance_km(st.x_km, st.y_km, ev);
      const double amp = ev.amplitude / (1.0 + 0.08 * d);
      detail::add_burst(out, s, tp, 5.0, 0.8, amp, p_weights);
      detail::add_burst(out, s, ts, 3.5, 1.2, amp, s_weights);
    }
  }
  return out;
}

// Helper for the CLI: a catalog of events with strictly increasing origin
// times, spread over the network extent.
inline EventCatalog generate_catalog(int n_events, double extent_km, double spacing_s,
                                     double first_origin_s, double amp_lo, double amp_hi,
                                     uint64_t seed) {
  check_arg(n_events >= 0, "generate_catalog: n_events must be >= 0");
  check_arg(spacing_s > 0.0, "generate_catalog: spacing_s must be > 0");
  Rng rng(mix_seed(seed, 0xCA7Au));
  EventCatalog cat;
  cat.events.reserve(static_cast<size_t>(n_events));
  for (int i = 0; i < n_events; ++i) {
    SeismicEvent e;
    e.origin_time_s = first_origin_s + i * spacing_s + rng.uniform(-0.2, 0.2) * spacing_s;
    e.x_km = rng.uniform(0.0, extent_km);
    e.y_km = rng.uniform(0.0, extent_km);
    e.depth_km = rng.uniform(2.0, 20.0);
    e.amplitude = std::exp(rng.uniform(std::log(amp_lo), std::log(amp_hi)));
    cat.events.push_back(e);
  }
  return cat;
}

}  // namespace eqdet
