#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "eqdet/preprocess.hpp"
#include "eqdet/synth.hpp"
#include "eqdet/train.hpp"

namespace eqdet {

namespace detail {

inline std::string fmt_full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

inline double parse_double(const std::string& s, const std::string& field) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw std::runtime_error("cannot parse '" + s + "' as a number for field " + field);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// waveform container: text manifest + float32 payload, station-major then
// time then component
// ---------------------------------------------------------------------------

constexpr const char* kContainerMagic = "EQDET-WAVE";

struct ContainerHeader {
  int n_stations = 0;
  double sample_rate_hz = 0.0;
  double start_time_s = 0.0;
  int64_t n_samples = 0;
  std::vector<std::string> station_ids;
  int64_t payload_bytes = 0;
};

inline void write_container(const RawTraceSet& traces,
                            const std::vector<std::string>& station_ids,
                            std::ostream& out) {
  check_arg(static_cast<int>(station_ids.size()) == traces.n_stations,
            "write_container: station_ids count does not match traces");
  const int64_t payload_bytes =
      static_cast<int64_t>(traces.traces.size()) * static_cast<int64_t>(sizeof(float));
  out << kContainerMagic << " v1\n";
  out << "schema_version=1\n";
  out << "n_stations=" << traces.n_stations << "\n";
  out << "n_components=3\n";
  out << "sample_rate_hz=" << detail::fmt_full(traces.sample_rate_hz) << "\n";
  out << "start_time_s=" << detail::fmt_full(traces.start_time_s) << "\n";
  out << "n_samples=" << traces.n_samples << "\n";
  out << "station_ids=";
  for (size_t i = 0; i < station_ids.size(); ++i)
    out << (i ? "," : "") << station_ids[i];
  out << "\n";
  out << "payload_bytes=" << payload_bytes << "\n";
  out << "end\n";
  out.write(reinterpret_cast<const char*>(traces.traces.data()), payload_bytes);
  if (!out) throw std::runtime_error("write_container: stream write failed");
}

inline void write_container(const RawTraceSet& traces,
                            const std::vector<std::string>& station_ids,
                            const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_container: cannot open " + path);
  write_container(traces, station_ids, out);
}

inline ContainerHeader read_container_header(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kContainerMagic, 0) != 0)
    throw std::runtime_error(what + ": not a waveform container (bad magic)");
  ContainerHeader h;
  int n_components = -1;
  while (std::getline(in, line)) {
    if (line == "end") break;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(what + ": malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "n_stations")
      h.n_stations = std::stoi(value);
    else if (key == "n_components")
      n_components = std::stoi(value);
    else if (key == "sample_rate_hz")
      h.sample_rate_hz = detail::parse_double(value, key);
    else if (key == "start_time_s")
      h.start_time_s = detail::parse_double(value, key);
    else if (key == "n_samples")
      h.n_samples = std::stoll(value);
    else if (key == "station_ids")
      h.station_ids = detail::split_csv_line(value);
    else if (key == "payload_bytes")
      h.payload_bytes = std::stoll(value);
    else if (key != "schema_version")
      throw std::runtime_error(what + ": unknown header field '" + key + "'");
  }
  if (line != "end") throw std::runtime_error(what + ": header not terminated by 'end'");
  if (h.n_stations <= 0 || static_cast<int>(h.station_ids.size()) != h.n_stations)
    throw std::runtime_error(what + ": field station_ids does not match n_stations");
  if (n_components != 3)
    throw std::runtime_error(what + ": field n_components must be 3");
  if (h.payload_bytes != h.n_stations * h.n_samples * 3 * static_cast<int64_t>(sizeof(float)))
    throw std::runtime_error(what +
                             ": field payload_bytes does not equal N*T*3*4");
  return h;
}

inline RawTraceSet read_container(const std::string& path,
                                  std::vector<std::string>* station_ids = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_container: cannot open " + path);
  ContainerHeader h = read_container_header(in, "read_container: " + path);
  RawTraceSet t;
  t.sample_rate_hz = h.sample_rate_hz;
  t.start_time_s = h.start_time_s;
  t.n_stations = h.n_stations;
  t.n_samples = h.n_samples;
  t.traces.resize(static_cast<size_t>(h.payload_bytes / sizeof(float)));
  in.read(reinterpret_cast<char*>(t.traces.data()), h.payload_bytes);
  if (in.gcount() != h.payload_bytes)
    throw std::runtime_error("read_container: " + path + " payload truncated");
  if (station_ids) *station_ids = h.station_ids;
  return t;
}

// Random access to raw windows of a waveform stream.
class WaveSource {
 public:
  virtual ~WaveSource() = default;
  virtual int n_stations() const = 0;
  virtual int64_t n_samples() const = 0;
  virtual double sample_rate_hz() const = 0;
  virtual double start_time_s() const = 0;
  virtual const std::vector<std::string>& station_ids() const = 0;
  // raw cut [start, start+len) for all stations, zero-padded past the end
  virtual WaveformWindow read_window(int64_t start, int64_t len) = 0;
};

class MemorySource final : public WaveSource {
 public:
  MemorySource(RawTraceSet traces, std::vector<std::string> ids)
      : traces_(std::move(traces)), ids_(std::move(ids)) {
    check_arg(static_cast<int>(ids_.size()) == traces_.n_stations,
              "MemorySource: id count mismatch");
  }

  int n_stations() const override { return traces_.n_stations; }
  int64_t n_samples() const override { return traces_.n_samples; }
  double sample_rate_hz() const override { return traces_.sample_rate_hz; }
  double start_time_s() const override { return traces_.start_time_s; }
  const std::vector<std::string>& station_ids() const override { return ids_; }

  WaveformWindow read_window(int64_t start, int64_t len) override {
    WaveformWindow w = WaveformWindow::zeros(traces_.n_stations, static_cast<int>(len),
                                             traces_.sample_rate_hz,
                                             traces_.start_time_s + start / traces_.sample_rate_hz);
    for (int s = 0; s < traces_.n_stations; ++s)
      for (int64_t t = 0; t < len; ++t) {
        const int64_t src = start + t;
        if (src < 0 || src >= traces_.n_samples) continue;
        for (int c = 0; c < 3; ++c)
          w.at(s, static_cast<int>(t), c) = static_cast<double>(traces_.at(s, src, c));
      }
    return w;
  }

 private:
  RawTraceSet traces_;
  std::vector<std::string> ids_;
};

class FileSource final : public WaveSource {
 public:
  explicit FileSource(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("FileSource: cannot open " + path);
    header_ = read_container_header(in_, "FileSource: " + path);
    payload_offset_ = in_.tellg();
  }

  int n_stations() const override { return header_.n_stations; }
  int64_t n_samples() const override { return header_.n_samples; }
  double sample_rate_hz() const override { return header_.sample_rate_hz; }
  double start_time_s() const override { return header_.start_time_s; }
  const std::vector<std::string>& station_ids() const override { return header_.station_ids; }

  WaveformWindow read_window(int64_t start, int64_t len) override {
    WaveformWindow w = WaveformWindow::zeros(header_.n_stations, static_cast<int>(len),
                                             header_.sample_rate_hz,
                                             header_.start_time_s + start / header_.sample_rate_hz);
    const int64_t lo = std::max<int64_t>(start, 0);
    const int64_t hi = std::min<int64_t>(start + len, header_.n_samples);
    if (lo >= hi) return w;
    std::vector<float> buf(static_cast<size_t>(hi - lo) * 3);
    for (int s = 0; s < header_.n_stations; ++s) {
      const int64_t sample_off = (static_cast<int64_t>(s) * header_.n_samples + lo) * 3;
      in_.seekg(payload_offset_ + static_cast<std::streamoff>(sample_off * sizeof(float)));
      in_.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (in_.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
        throw std::runtime_error("FileSource: " + path_ + " payload truncated");
      for (int64_t t = lo; t < hi; ++t)
        for (int c = 0; c < 3; ++c)
          w.at(s, static_cast<int>(t - start), c) =
              static_cast<double>(buf[static_cast<size_t>((t - lo) * 3 + c)]);
    }
    return w;
  }

 private:
  std::ifstream in_;
  std::string path_;
  ContainerHeader header_;
  std::streamoff payload_offset_ = 0;
};

// ---------------------------------------------------------------------------
// CSV surfaces
// ---------------------------------------------------------------------------

inline void write_geometry_csv(const StationGeometry& geo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_geometry_csv: cannot open " + path);
  out << "station_id,x_km,y_km\n";
  for (const auto& s : geo.stations)
    out << s.id << "," << detail::fmt_full(s.x_km) << "," << detail::fmt_full(s.y_km) << "\n";
}

inline StationGeometry read_geometry_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_geometry_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  StationGeometry geo;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = detail::split_csv_line(line);
    if (parts.size() != 3)
      throw std::runtime_error("read_geometry_csv: bad row '" + line + "'");
    if (parts[0].empty())
      throw std::runtime_error("read_geometry_csv: empty station_id in '" + line + "'");
    if (seen.count(parts[0]))
      throw std::runtime_error("read_geometry_csv: duplicate station_id " + parts[0]);
    seen[parts[0]] = true;
    geo.stations.push_back({parts[0], detail::parse_double(parts[1], "x_km"),
                            detail::parse_double(parts[2], "y_km")});
  }
  return geo;
}

inline void write_catalog_csv(const EventCatalog& cat, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_catalog_csv: cannot open " + path);
  out << "origin_time_s,x_km,y_km,depth_km,amplitude\n";
  for (const auto& e : cat.events)
    out << detail::fmt_full(e.origin_time_s) << "," << detail::fmt_full(e.x_km) << ","
        << detail::fmt_full(e.y_km) << "," << detail::fmt_full(e.depth_km) << ","
        << detail::fmt_full(e.amplitude) << "\n";
}

inline EventCatalog read_catalog_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_catalog_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  EventCatalog cat;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = detail::split_csv_line(line);
    if (parts.size() != 5)
      throw std::runtime_error("read_catalog_csv: bad row '" + line + "'");
    cat.events.push_back({detail::parse_double(parts[0], "origin_time_s"),
                          detail::parse_double(parts[1], "x_km"),
                          detail::parse_double(parts[2], "y_km"),
                          detail::parse_double(parts[3], "depth_km"),
                          detail::parse_double(parts[4], "amplitude")});
  }
  validate_catalog(cat);
  return cat;
}

// One row per (event, station); rows come grouped by event.
struct PickRow {
  std::string station_id;
  double t_p_s = 0.0;
  double t_s_s = 0.0;
};

inline void write_picks_csv(const std::vector<PickRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_picks_csv: cannot open " + path);
  out << "station_id,t_p_s,t_s_s\n";
  for (const auto& r : rows)
    out << r.station_id << "," << detail::fmt_full(r.t_p_s) << ","
        << detail::fmt_full(r.t_s_s) << "\n";
}

inline std::vector<PickRow> read_picks_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_picks_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<PickRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = detail::split_csv_line(line);
    if (parts.size() != 3) throw std::runtime_error("read_picks_csv: bad row '" + line + "'");
    rows.push_back({parts[0], detail::parse_double(parts[1], "t_p_s"),
                    detail::parse_double(parts[2], "t_s_s")});
  }
  return rows;
}

inline void write_loss_csv(const std::vector<double>& epoch_loss, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_loss_csv: cannot open " + path);
  out << "epoch,loss\n";
  for (size_t i = 0; i < epoch_loss.size(); ++i)
    out << i << "," << detail::fmt_full(epoch_loss[i]) << "\n";
}

inline void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_roc_csv: cannot open " + path);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points)
    out << detail::fmt_full(p.threshold) << "," << detail::fmt_full(p.fpr) << ","
        << detail::fmt_full(p.tpr) << "\n";
}

// ---------------------------------------------------------------------------
// windowed dataset file: manifest + per-window blobs
// ---------------------------------------------------------------------------

constexpr const char* kDatasetMagic = "EQDET-DATASET";

inline void save_dataset(const Dataset& ds, const std::string& path) {
  check_arg(ds.windows.size() == ds.labels.size(), "save_dataset: windows/labels mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << kDatasetMagic << " v1\n";
  out << "schema_version=1\n";
  out << "n_windows=" << ds.windows.size() << "\n";
  out << "n_stations=" << ds.n_stations << "\n";
  out << "n_samples=" << ds.n_samples << "\n";
  out << "n_components=3\n";
  out << "sample_rate_hz=" << detail::fmt_full(ds.sample_rate_hz) << "\n";
  out << "station_ids=";
  for (size_t i = 0; i < ds.station_ids.size(); ++i)
    out << (i ? "," : "") << ds.station_ids[i];
  out << "\n";
  out << "end\n";
  for (size_t w = 0; w < ds.windows.size(); ++w) {
    const WaveformWindow& win = ds.windows[w];
    check_arg(win.n_stations == ds.n_stations && win.n_samples == ds.n_samples,
              "save_dataset: window " + std::to_string(w) + " has inconsistent shape");
    const double t0 = win.start_time_s;
    out.write(reinterpret_cast<const char*>(&t0), sizeof(double));
    std::vector<float> f(win.data.size());
    for (size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(win.data[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(ds.labels[w].labels.data()),
              static_cast<std::streamsize>(ds.labels[w].labels.size()));
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kDatasetMagic, 0) != 0)
    throw std::runtime_error("load_dataset: " + path + " is not a dataset file (bad magic)");
  int64_t n_windows = -1;
  Dataset ds;
  while (std::getline(in, line)) {
    if (line == "end") break;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("load_dataset: malformed header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "n_windows")
      n_windows = std::stoll(value);
    else if (key == "n_stations")
      ds.n_stations = std::stoi(value);
    else if (key == "n_samples")
      ds.n_samples = std::stoi(value);
    else if (key == "sample_rate_hz")
      ds.sample_rate_hz = detail::parse_double(value, key);
    else if (key == "station_ids")
      ds.station_ids = detail::split_csv_line(value);
    else if (key != "schema_version" && key != "n_components")
      throw std::runtime_error("load_dataset: unknown header field '" + key + "'");
  }
  if (line != "end") throw std::runtime_error("load_dataset: header not terminated by 'end'");
  if (n_windows < 0 || ds.n_stations <= 0 || ds.n_samples <= 0)
    throw std::runtime_error("load_dataset: missing n_windows/n_stations/n_samples");

  const size_t dlen = static_cast<size_t>(ds.n_stations) * ds.n_samples * 3;
  const size_t llen = static_cast<size_t>(ds.n_stations) * ds.n_samples;
  for (int64_t w = 0; w < n_windows; ++w) {
    WaveformWindow win = WaveformWindow::zeros(ds.n_stations, ds.n_samples, ds.sample_rate_hz);
    double t0 = 0.0;
    in.read(reinterpret_cast<char*>(&t0), sizeof(double));
    std::vector<float> f(dlen);
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    LabelSeries lab = LabelSeries::zeros(ds.n_stations, ds.n_samples);
    in.read(reinterpret_cast<char*>(lab.labels.data()), static_cast<std::streamsize>(llen));
    if (!in)
      throw std::runtime_error("load_dataset: truncated at window " + std::to_string(w));
    win.start_time_s = t0;
    for (size_t i = 0; i < dlen; ++i) win.data[i] = static_cast<double>(f[i]);
    for (uint8_t b : lab.labels)
      if (b != 0 && b != 1)
        throw std::runtime_error("load_dataset: non-binary label in window " +
                                 std::to_string(w));
    ds.windows.push_back(std::move(win));
    ds.labels.push_back(std::move(lab));
  }
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("load_dataset: trailing bytes after last window");
  return ds;
}

}  // namespace eqdet
