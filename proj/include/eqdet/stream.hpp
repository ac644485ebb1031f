#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "eqdet/detector.hpp"
#include "eqdet/io.hpp"
#include "eqdet/preprocess.hpp"

namespace eqdet {

struct StreamConfig {
  double window_s = 20.0;
  double stride_s = 5.0;  // default: a quarter window
};

struct DetectionRow {
  double time_s = 0.0;
  int station = 0;
  double probability = 0.0;
};

// Accumulates overlapping per-timestep probabilities (arithmetic mean) and
// releases rows once no later window can still cover them. Holds at least a
// window's worth of output timesteps.
class StreamState {
 public:
  StreamState(int n_stations, double out_rate_hz, double start_time_s)
      : n_stations_(n_stations), out_rate_hz_(out_rate_hz), start_time_s_(start_time_s) {}

  void add(int64_t out_idx, int station, double p) {
    check_arg(out_idx >= base_, "StreamState: window arrived out of order");
    while (base_ + static_cast<int64_t>(sums_.size()) <= out_idx) {
      sums_.emplace_back(static_cast<size_t>(n_stations_), 0.0);
      counts_.emplace_back(static_cast<size_t>(n_stations_), 0);
    }
    auto& srow = sums_[static_cast<size_t>(out_idx - base_)];
    auto& crow = counts_[static_cast<size_t>(out_idx - base_)];
    srow[static_cast<size_t>(station)] += p;
    crow[static_cast<size_t>(station)] += 1;
  }

  // Emits rows for all timesteps strictly below `limit`, in time order with
  // stations ascending within a timestep.
  void emit_until(int64_t limit, const std::function<void(const DetectionRow&)>& sink) {
    while (base_ < limit && !sums_.empty()) {
      for (int s = 0; s < n_stations_; ++s) {
        const int c = counts_.front()[static_cast<size_t>(s)];
        if (c == 0) continue;
        sink({start_time_s_ + static_cast<double>(base_) / out_rate_hz_, s,
              sums_.front()[static_cast<size_t>(s)] / c});
      }
      sums_.pop_front();
      counts_.pop_front();
      ++base_;
    }
  }

  void finish(const std::function<void(const DetectionRow&)>& sink) {
    emit_until(base_ + static_cast<int64_t>(sums_.size()), sink);
  }

 private:
  int n_stations_;
  double out_rate_hz_;
  double start_time_s_;
  int64_t base_ = 0;  // first un-emitted output timestep
  std::deque<std::vector<double>> sums_;
  std::deque<std::vector<int>> counts_;
};

// Sliding-window detection over a raw stream: every stride, a full window is
// cut, preprocessed, and run through the detector (GRU state resets per
// window); overlapping probabilities are averaged. Window starts snap to the
// decimation grid so all windows share one output time base.
inline void sliding_window_detect(WaveSource& src, const ModelParams& params,
                                  const StreamConfig& cfg,
                                  const std::function<void(const DetectionRow&)>& sink) {
  check_arg(src.n_stations() == params.cfg.n_stations,
            "detect: stream has " + std::to_string(src.n_stations()) +
                " stations but the checkpoint expects " +
                std::to_string(params.cfg.n_stations));
  const double fs = src.sample_rate_hz();
  check_arg(fs > 16.0, "detect: stream sample rate too low");
  const int64_t window_raw =
      (static_cast<int64_t>(std::llround(cfg.window_s * fs)) / 8) * 8;
  int64_t stride_raw = (static_cast<int64_t>(std::llround(cfg.stride_s * fs)) / 8) * 8;
  check_arg(window_raw >= 8, "detect: window shorter than one output sample");
  check_arg(stride_raw >= 8 && stride_raw <= window_raw,
            "detect: stride must be in [1 output sample, window]");

  StreamState state(src.n_stations(), fs / 8.0, src.start_time_s());
  for (int64_t start = 0; start + window_raw <= src.n_samples(); start += stride_raw) {
    WaveformWindow raw = src.read_window(start, window_raw);
    WaveformWindow processed = preprocess_window(raw);
    DetectionSeries det = detector_forward(processed, params);
    const int64_t out_base = start / 8;
    for (int s = 0; s < det.n_stations; ++s)
      for (int t = 0; t < det.n_samples; ++t) state.add(out_base + t, s, det.at(s, t));
    state.emit_until((start + stride_raw) / 8, sink);
  }
  state.finish(sink);
}

}  // namespace eqdet
