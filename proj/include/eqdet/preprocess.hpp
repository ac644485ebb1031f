#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqdet/rng.hpp"
#include "eqdet/tensor.hpp"

namespace eqdet {

// Multi-station, three-component sample block, station-major then time then
// component. Used both for raw 200 Hz cuts and for preprocessed 25 Hz windows.
struct WaveformWindow {
  int n_stations = 0;
  int n_samples = 0;
  double sample_rate_hz = 0.0;
  double start_time_s = 0.0;
  std::vector<double> data;  // N * P * 3

  static WaveformWindow zeros(int n_stations, int n_samples, double rate_hz,
                              double start_s = 0.0) {
    WaveformWindow w;
    w.n_stations = n_stations;
    w.n_samples = n_samples;
    w.sample_rate_hz = rate_hz;
    w.start_time_s = start_s;
    w.data.assign(static_cast<size_t>(n_stations) * n_samples * 3, 0.0);
    return w;
  }

  double& at(int s, int t, int c) {
    return data[(static_cast<size_t>(s) * n_samples + t) * 3 + c];
  }
  double at(int s, int t, int c) const {
    return data[(static_cast<size_t>(s) * n_samples + t) * 3 + c];
  }
};

struct LabelSeries {
  int n_stations = 0;
  int n_samples = 0;
  std::vector<uint8_t> labels;  // N * P

  static LabelSeries zeros(int n_stations, int n_samples) {
    LabelSeries l;
    l.n_stations = n_stations;
    l.n_samples = n_samples;
    l.labels.assign(static_cast<size_t>(n_stations) * n_samples, 0);
    return l;
  }

  uint8_t& at(int s, int t) { return labels[static_cast<size_t>(s) * n_samples + t]; }
  uint8_t at(int s, int t) const {
    return labels[static_cast<size_t>(s) * n_samples + t];
  }
};

// Per-station optional (t_p, t_s) arrival picks, absolute seconds.
struct PickSet {
  std::vector<std::optional<std::pair<double, double>>> picks;
};

inline std::vector<double> demean(const std::vector<double>& trace) {
  check_arg(!trace.empty(), "demean: empty trace");
  double mean = 0.0;
  for (double x : trace) mean += x;
  mean /= static_cast<double>(trace.size());
  std::vector<double> out(trace.size());
  for (size_t i = 0; i < trace.size(); ++i) out[i] = trace[i] - mean;
  return out;
}

// ---------------------------------------------------------------------------
// 2-8 Hz Butterworth band-pass (order-2 prototype -> two second-order
// sections), applied forward then backward for zero phase.
// ---------------------------------------------------------------------------

struct Biquad {
  double b0, b1, b2;  // numerator
  double a1, a2;      // denominator, a0 = 1
};

struct BandpassDesign {
  Biquad sections[2];
  double f_lo_hz, f_hi_hz, sample_rate_hz;

  // single-pass magnitude response at the given frequency
  double magnitude(double freq_hz) const {
    const double w = 2.0 * 3.14159265358979323846 * freq_hz / sample_rate_hz;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    double mag = 1.0;
    for (const Biquad& s : sections) {
      const std::complex<double> num = s.b0 + s.b1 * z1 + s.b2 * z2;
      const std::complex<double> den = 1.0 + s.a1 * z1 + s.a2 * z2;
      mag *= std::abs(num) / std::abs(den);
    }
    return mag;
  }
};

// Bilinear-transform design of the band-pass. The two analog pole pairs come
// from mapping the order-2 Butterworth prototype through s -> (s^2+w0^2)/(Bs).
inline BandpassDesign design_bandpass(double sample_rate_hz, double f_lo_hz = 2.0,
                                      double f_hi_hz = 8.0) {
  check_arg(sample_rate_hz > 2.0 * f_hi_hz,
            "bandpass: sample rate must exceed twice the upper corner");
  using cd = std::complex<double>;
  const double pi = 3.14159265358979323846;
  const double fs2 = 2.0 * sample_rate_hz;
  const double w1 = fs2 * std::tan(pi * f_lo_hz / sample_rate_hz);
  const double w2 = fs2 * std::tan(pi * f_hi_hz / sample_rate_hz);
  const double w0 = std::sqrt(w1 * w2);
  const double bw = w2 - w1;

  // upper-half-plane prototype pole; its conjugate gives mirrored sections
  const cd proto = std::polar(1.0, 3.0 * pi / 4.0);
  const cd disc = std::sqrt(bw * bw * proto * proto - 4.0 * w0 * w0);
  const cd roots[2] = {(bw * proto + disc) / 2.0, (bw * proto - disc) / 2.0};

  BandpassDesign d;
  d.f_lo_hz = f_lo_hz;
  d.f_hi_hz = f_hi_hz;
  d.sample_rate_hz = sample_rate_hz;
  for (int i = 0; i < 2; ++i) {
    const cd zp = (fs2 + roots[i]) / (fs2 - roots[i]);  // bilinear pole
    Biquad& s = d.sections[i];
    s.a1 = -2.0 * zp.real();
    s.a2 = std::norm(zp);
    s.b0 = 1.0;  // zeros at z = +1 and z = -1: (z-1)(z+1) = z^2 - 1
    s.b1 = 0.0;
    s.b2 = -1.0;
  }
  // normalize to unit gain at the (warped) center frequency
  const double wc = 2.0 * std::atan(w0 / fs2);
  const double fc = wc * sample_rate_hz / (2.0 * pi);
  const double g = d.magnitude(fc);
  const double per_section = 1.0 / std::sqrt(g);
  for (Biquad& s : d.sections) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return d;
}

namespace detail {

inline void sos_filter_inplace(std::vector<double>& x, const BandpassDesign& d) {
  for (const Biquad& s : d.sections) {
    double z1 = 0.0, z2 = 0.0;  // direct form II transposed
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace detail

// Zero-phase 2-8 Hz band-pass: reflect-pad by one settling length (100
// samples), run the cascade forward and backward, trim.
inline std::vector<double> bandpass_2_8(const std::vector<double>& trace,
                                        double sample_rate_hz) {
  check_arg(sample_rate_hz > 16.0,
            "bandpass_2_8: sample rate must be > 16 Hz (Nyquist above 8 Hz corner)");
  check_arg(!trace.empty(), "bandpass_2_8: empty trace");
  const BandpassDesign d = design_bandpass(sample_rate_hz);
  const int64_t n = static_cast<int64_t>(trace.size());
  const int64_t pad = std::min<int64_t>(100, n - 1);

  std::vector<double> work;
  work.reserve(static_cast<size_t>(n + 2 * pad));
  for (int64_t i = pad; i >= 1; --i) work.push_back(trace[static_cast<size_t>(i)]);
  work.insert(work.end(), trace.begin(), trace.end());
  for (int64_t i = n - 2; i >= n - 1 - pad && i >= 0; --i)
    work.push_back(trace[static_cast<size_t>(i)]);

  detail::sos_filter_inplace(work, d);
  std::reverse(work.begin(), work.end());
  detail::sos_filter_inplace(work, d);
  std::reverse(work.begin(), work.end());

  return std::vector<double>(work.begin() + pad, work.begin() + pad + n);
}

// Per component: divide every station's trace by the median across stations
// of that component's per-station max-abs. An all-zero component is passed
// through unscaled and reported in `warnings`.
inline WaveformWindow normalize_window(const WaveformWindow& w,
                                       std::vector<std::string>* warnings = nullptr) {
  check_arg(w.n_stations >= 1 && w.n_samples >= 1, "normalize_window: empty window");
  WaveformWindow out = w;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> maxabs(static_cast<size_t>(w.n_stations), 0.0);
    for (int s = 0; s < w.n_stations; ++s) {
      double m = 0.0;
      for (int t = 0; t < w.n_samples; ++t) m = std::max(m, std::abs(w.at(s, t, c)));
      maxabs[static_cast<size_t>(s)] = m;
    }
    std::vector<double> sorted = maxabs;
    std::sort(sorted.begin(), sorted.end());
    const size_t half = sorted.size() / 2;
    const double median = sorted.size() % 2 == 1
                              ? sorted[half]
                              : 0.5 * (sorted[half - 1] + sorted[half]);
    if (median == 0.0) {
      if (warnings)
        warnings->push_back("component " + std::to_string(c) +
                            ": all-zero, left unscaled");
      continue;
    }
    const double inv = 1.0 / median;
    for (int s = 0; s < w.n_stations; ++s)
      for (int t = 0; t < w.n_samples; ++t) out.at(s, t, c) = w.at(s, t, c) * inv;
  }
  return out;
}

// Stride-8 decimation, 200 Hz -> 25 Hz. The 2-8 Hz band-pass upstream keeps
// everything below the new 12.5 Hz Nyquist.
inline std::vector<double> downsample_8x(const std::vector<double>& trace) {
  check_arg(trace.size() >= 8, "downsample_8x: input shorter than 8 samples");
  const size_t out_n = trace.size() / 8;
  std::vector<double> out(out_n);
  for (size_t i = 0; i < out_n; ++i) out[i] = trace[i * 8];
  return out;
}

// Binary labels: 1 on samples with t_p <= t <= t_p + 1.4 (t_s - t_p), clipped
// to the window; stations without picks stay all-zero.
inline LabelSeries label_series(const PickSet& picks, double window_start_s, int P,
                                double sample_rate_hz) {
  check_arg(P >= 1, "label_series: P must be >= 1");
  check_arg(sample_rate_hz > 0.0, "label_series: sample rate must be > 0");
  const int n = static_cast<int>(picks.picks.size());
  LabelSeries out = LabelSeries::zeros(n, P);
  for (int s = 0; s < n; ++s) {
    const auto& pk = picks.picks[static_cast<size_t>(s)];
    if (!pk) continue;
    const auto [tp, ts] = *pk;
    check_arg(ts > tp, "label_series: t_s must be > t_p");
    const double t_end = tp + 1.4 * (ts - tp);
    // 1e-9 guards keep exact grid hits stable against rounding
    int64_t i0 = static_cast<int64_t>(
        std::ceil((tp - window_start_s) * sample_rate_hz - 1e-9));
    int64_t i1 = static_cast<int64_t>(
        std::floor((t_end - window_start_s) * sample_rate_hz + 1e-9));
    i0 = std::max<int64_t>(i0, 0);
    i1 = std::min<int64_t>(i1, P - 1);
    for (int64_t i = i0; i <= i1; ++i) out.at(s, static_cast<int>(i)) = 1;
  }
  return out;
}

// Joint random shift (zero-padding the vacated region) of data and labels,
// then additive Gaussian noise on the data with std drawn once per call from
// Exponential(mean noise_std_mean).
inline std::pair<WaveformWindow, LabelSeries> augment(const WaveformWindow& window,
                                                      const LabelSeries& labels,
                                                      int max_shift_samples,
                                                      uint64_t seed,
                                                      double noise_std_mean = 0.001) {
  check_arg(max_shift_samples >= 0 && max_shift_samples < window.n_samples,
            "augment: max_shift_samples must be < P");
  check_arg(window.n_stations == labels.n_stations &&
                window.n_samples == labels.n_samples,
            "augment: window/labels shape mismatch");
  Rng rng(mix_seed(seed, 0xA46Du));
  const int shift = static_cast<int>(rng.uniform_int(-max_shift_samples, max_shift_samples));
  const double sigma = rng.exponential(noise_std_mean);

  WaveformWindow wout = WaveformWindow::zeros(window.n_stations, window.n_samples,
                                              window.sample_rate_hz,
                                              window.start_time_s);
  LabelSeries lout = LabelSeries::zeros(labels.n_stations, labels.n_samples);
  const int P = window.n_samples;
  for (int s = 0; s < window.n_stations; ++s)
    for (int t = 0; t < P; ++t) {
      const int src = t - shift;
      if (src < 0 || src >= P) continue;
      for (int c = 0; c < 3; ++c) wout.at(s, t, c) = window.at(s, src, c);
      lout.at(s, t) = labels.at(s, src);
    }
  for (double& x : wout.data) x += rng.normal(0.0, sigma);
  return {std::move(wout), std::move(lout)};
}

// Full per-window pipeline: demean -> band-pass -> normalize -> downsample.
// A 200 Hz, 20 s cut becomes an N x 500 x 3 window at 25 Hz.
inline WaveformWindow preprocess_window(const WaveformWindow& raw,
                                        std::vector<std::string>* warnings = nullptr) {
  check_arg(raw.sample_rate_hz > 16.0, "preprocess_window: sample rate too low");
  WaveformWindow filtered = raw;
  std::vector<double> trace(static_cast<size_t>(raw.n_samples));
  for (int s = 0; s < raw.n_stations; ++s)
    for (int c = 0; c < 3; ++c) {
      for (int t = 0; t < raw.n_samples; ++t) trace[static_cast<size_t>(t)] = raw.at(s, t, c);
      std::vector<double> f = bandpass_2_8(demean(trace), raw.sample_rate_hz);
      for (int t = 0; t < raw.n_samples; ++t) filtered.at(s, t, c) = f[static_cast<size_t>(t)];
    }

  WaveformWindow normed = normalize_window(filtered, warnings);

  const int out_n = raw.n_samples / 8;
  WaveformWindow out = WaveformWindow::zeros(raw.n_stations, out_n,
                                             raw.sample_rate_hz / 8.0, raw.start_time_s);
  for (int s = 0; s < raw.n_stations; ++s)
    for (int c = 0; c < 3; ++c)
      for (int t = 0; t < out_n; ++t) out.at(s, t, c) = normed.at(s, t * 8, c);
  return out;
}

}  // namespace eqdet
