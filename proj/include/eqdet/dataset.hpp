#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "eqdet/io.hpp"
#include "eqdet/preprocess.hpp"
#include "eqdet/train.hpp"

namespace eqdet {

struct WindowingConfig {
  double window_s = 20.0;
  double pre_arrival_min_s = 2.0;  // event window starts this much before the first P
  double pre_arrival_max_s = 8.0;
  int noise_window_every = 5;  // add one noise-only window per this many events; 0 = off
  double test_fraction = 0.2;  // chronological tail held out for evaluation
  uint64_t seed = 0;
};

// Pick rows arrive grouped by event (the synth writer emits them that way):
// a station id repeating starts the next event block.
inline std::vector<std::vector<PickRow>> group_picks_into_events(
    const std::vector<PickRow>& rows) {
  std::vector<std::vector<PickRow>> events;
  std::vector<PickRow> current;
  std::map<std::string, bool> seen;
  for (const PickRow& r : rows) {
    check_arg(r.t_s_s > r.t_p_s, "picks: t_s must be > t_p for station " + r.station_id);
    if (seen.count(r.station_id)) {
      events.push_back(current);
      current.clear();
      seen.clear();
    }
    seen[r.station_id] = true;
    current.push_back(r);
  }
  if (!current.empty()) events.push_back(current);
  return events;
}

namespace detail {

inline PickSet picks_for_window(const std::vector<std::vector<PickRow>>& events,
                                const std::vector<std::string>& ids, size_t event_idx) {
  PickSet ps;
  ps.picks.assign(ids.size(), std::nullopt);
  for (const PickRow& r : events[event_idx]) {
    auto it = std::find(ids.begin(), ids.end(), r.station_id);
    check_arg(it != ids.end(), "picks: unknown station " + r.station_id);
    ps.picks[static_cast<size_t>(it - ids.begin())] = std::make_pair(r.t_p_s, r.t_s_s);
  }
  return ps;
}

inline void or_labels(LabelSeries& into, const LabelSeries& from) {
  for (size_t i = 0; i < into.labels.size(); ++i)
    into.labels[i] = into.labels[i] || from.labels[i] ? 1 : 0;
}

}  // namespace detail

// Cuts one preprocessed window starting at a raw sample index, with labels
// from every event whose picks intersect it.
inline void append_window(Dataset& ds, WaveSource& src,
                          const std::vector<std::vector<PickRow>>& events,
                          int64_t start_sample, int64_t window_raw) {
  WaveformWindow raw = src.read_window(start_sample, window_raw);
  WaveformWindow processed = preprocess_window(raw);
  LabelSeries labels = LabelSeries::zeros(processed.n_stations, processed.n_samples);
  for (size_t e = 0; e < events.size(); ++e) {
    // skip events that cannot touch the window
    double lo = 1e300, hi = -1e300;
    for (const PickRow& r : events[e]) {
      lo = std::min(lo, r.t_p_s);
      hi = std::max(hi, r.t_p_s + 1.4 * (r.t_s_s - r.t_p_s));
    }
    const double w0 = processed.start_time_s;
    const double w1 = w0 + processed.n_samples / processed.sample_rate_hz;
    if (hi < w0 || lo >= w1) continue;
    detail::or_labels(labels,
                      label_series(detail::picks_for_window(events, src.station_ids(), e),
                                   w0, processed.n_samples, processed.sample_rate_hz));
  }
  ds.windows.push_back(std::move(processed));
  ds.labels.push_back(std::move(labels));
}

// Builds train/test datasets from a raw stream and its picks: one window per
// event (start jittered ahead of the first P arrival), optional noise-only
// windows between events, chronological split at an event boundary.
inline std::pair<Dataset, Dataset> build_datasets(WaveSource& src,
                                                  const std::vector<PickRow>& pick_rows,
                                                  const WindowingConfig& cfg) {
  check_arg(cfg.window_s > 0.0, "windowing: window_s must be > 0");
  check_arg(cfg.test_fraction >= 0.0 && cfg.test_fraction < 1.0,
            "windowing: test_fraction must be in [0,1)");
  const double fs = src.sample_rate_hz();
  // multiple of 8 so the decimated grid aligns with the raw one
  const int64_t window_raw = (static_cast<int64_t>(std::llround(cfg.window_s * fs)) / 8) * 8;
  check_arg(window_raw >= 8, "windowing: window too short");

  const auto events = group_picks_into_events(pick_rows);
  check_arg(!events.empty(), "windowing: no events in picks");

  Dataset all;
  all.n_stations = src.n_stations();
  all.n_samples = static_cast<int>(window_raw / 8);
  all.sample_rate_hz = fs / 8.0;
  all.station_ids = src.station_ids();
  std::vector<size_t> window_event;  // originating event per window

  Rng rng(mix_seed(cfg.seed, 0xD47Au));
  for (size_t e = 0; e < events.size(); ++e) {
    double t_first = 1e300;
    for (const PickRow& r : events[e]) t_first = std::min(t_first, r.t_p_s);
    const double jitter = rng.uniform(cfg.pre_arrival_min_s, cfg.pre_arrival_max_s);
    int64_t start = static_cast<int64_t>(std::llround((t_first - jitter - src.start_time_s()) * fs));
    start = std::max<int64_t>(0, std::min(start, src.n_samples() - window_raw));
    start = (start / 8) * 8;
    append_window(all, src, events, start, window_raw);
    window_event.push_back(e);

    if (cfg.noise_window_every > 0 && (e + 1) % static_cast<size_t>(cfg.noise_window_every) == 0) {
      const int64_t gap_start = start + window_raw + static_cast<int64_t>(std::llround(fs));
      double next_first = 1e300;
      if (e + 1 < events.size())
        for (const PickRow& r : events[e + 1]) next_first = std::min(next_first, r.t_p_s);
      const int64_t gap_limit = e + 1 < events.size()
                                    ? static_cast<int64_t>(std::llround(
                                          (next_first - 2.0 - src.start_time_s()) * fs))
                                    : src.n_samples();
      if (gap_start + window_raw <= gap_limit) {
        append_window(all, src, events, gap_start, window_raw);
        // keep the noise window only if nothing got labeled
        bool clean = true;
        for (uint8_t b : all.labels.back().labels)
          if (b) clean = false;
        if (clean)
          window_event.push_back(e);
        else {
          all.windows.pop_back();
          all.labels.pop_back();
        }
      }
    }
  }

  const size_t split_event = static_cast<size_t>(
      static_cast<double>(events.size()) * (1.0 - cfg.test_fraction));
  Dataset train, test;
  train.n_stations = test.n_stations = all.n_stations;
  train.n_samples = test.n_samples = all.n_samples;
  train.sample_rate_hz = test.sample_rate_hz = all.sample_rate_hz;
  train.station_ids = test.station_ids = all.station_ids;
  for (size_t w = 0; w < all.windows.size(); ++w) {
    Dataset& dst = window_event[w] < split_event ? train : test;
    dst.windows.push_back(std::move(all.windows[w]));
    dst.labels.push_back(std::move(all.labels[w]));
  }
  return {std::move(train), std::move(test)};
}

// Pick rows for a catalog as the synthetic stand-in for visual picking:
// exact straight-ray arrival times per station, grouped by event.
inline std::vector<PickRow> picks_from_catalog(const StationGeometry& geo,
                                               const EventCatalog& cat) {
  std::vector<PickRow> rows;
  for (const auto& ev : cat.events)
    for (const auto& st : geo.stations) {
      const auto [tp, ts] = arrival_times(st.x_km, st.y_km, ev);
      rows.push_back({st.id, tp, ts});
    }
  return rows;
}

}  // namespace eqdet
