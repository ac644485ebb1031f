#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eqdet/gru.hpp"
#include "eqdet/preprocess.hpp"
#include "eqdet/slc.hpp"

namespace eqdet {

enum class ModelKind { kSlc, kBaselineGcn };
enum class RunMode { kTrain, kInfer };

struct ModelConfig {
  ModelKind kind = ModelKind::kSlc;
  int n_stations = 13;
  int input_dim = 3;
  int hidden_dim = 32;
  int n_layers = 5;
  int k_order = 3;
  double dropout_rate = 0.2;
};

struct DetectorLayerParams {
  SlcLayerParams slc;
  GruParams gru;
};

struct ModelParams {
  ModelConfig cfg;
  std::vector<DetectorLayerParams> layers;
  Tensor head_w;  // hidden_dim x 1, shared across stations and timesteps
  Tensor head_b;  // scalar
};

// Per-station probability series, probs[s][t] in [0,1].
struct DetectionSeries {
  int n_stations = 0;
  int n_samples = 0;
  std::vector<double> probs;  // N * P

  static DetectionSeries zeros(int n, int p) {
    DetectionSeries d;
    d.n_stations = n;
    d.n_samples = p;
    d.probs.assign(static_cast<size_t>(n) * p, 0.0);
    return d;
  }
  double& at(int s, int t) { return probs[static_cast<size_t>(s) * n_samples + t]; }
  double at(int s, int t) const { return probs[static_cast<size_t>(s) * n_samples + t]; }
};

inline ModelParams init_model(const ModelConfig& cfg, uint64_t seed) {
  check_arg(cfg.n_layers >= 1, "init_model: need at least one layer");
  check_arg(cfg.hidden_dim >= 1 && cfg.k_order >= 1 && cfg.n_stations >= 1,
            "init_model: bad architecture dims");
  check_arg(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0,
            "init_model: dropout must be in [0,1)");
  Rng rng(mix_seed(seed, 0x30DEu));
  ModelParams p;
  p.cfg = cfg;
  const bool baseline = cfg.kind == ModelKind::kBaselineGcn;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const int c_in = l == 0 ? cfg.input_dim : cfg.hidden_dim;
    DetectorLayerParams layer;
    layer.slc = init_slc_params(cfg.n_stations, c_in, cfg.hidden_dim, cfg.k_order, rng,
                                baseline);
    layer.gru = init_gru_params(cfg.hidden_dim, cfg.hidden_dim, rng);
    p.layers.push_back(std::move(layer));
  }
  p.head_w = Tensor::zeros({cfg.hidden_dim, 1});
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  for (double& x : p.head_w.v) x = rng.uniform(-bound, bound);
  p.head_b = Tensor::scalar(0.0);
  return p;
}

// Visits every learnable tensor in canonical (checkpoint) order.
inline void for_each_param(ModelParams& p,
                           const std::function<void(const std::string&, Tensor&)>& fn) {
  const bool baseline = p.cfg.kind == ModelKind::kBaselineGcn;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = "layer" + std::to_string(l) + ".";
    DetectorLayerParams& layer = p.layers[l];
    if (!baseline) {
      fn(base + "slc.W_s", layer.slc.W_s);
      fn(base + "slc.W_phi", layer.slc.W_phi);
    }
    for (size_t k = 0; k < layer.slc.theta_s.size(); ++k)
      fn(base + "slc.theta_s." + std::to_string(k), layer.slc.theta_s[k]);
    for (size_t k = 0; k < layer.slc.theta_d.size(); ++k)
      fn(base + "slc.theta_d." + std::to_string(k), layer.slc.theta_d[k]);
    fn(base + "gru.W_z", layer.gru.W_z);
    fn(base + "gru.W_r", layer.gru.W_r);
    fn(base + "gru.W_h", layer.gru.W_h);
    fn(base + "gru.U_z", layer.gru.U_z);
    fn(base + "gru.U_r", layer.gru.U_r);
    fn(base + "gru.U_h", layer.gru.U_h);
    fn(base + "gru.b_z", layer.gru.b_z);
    fn(base + "gru.b_r", layer.gru.b_r);
    fn(base + "gru.b_h", layer.gru.b_h);
  }
  fn("head.W", p.head_w);
  fn("head.b", p.head_b);
}

inline void for_each_param(const ModelParams& p,
                           const std::function<void(const std::string&, const Tensor&)>& fn) {
  for_each_param(const_cast<ModelParams&>(p),
                 [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

struct DetectorLayerVars {
  SlcLayerVars slc;
  GruVars gru;
};

struct BoundModel {
  std::vector<DetectorLayerVars> layers;
  Var head_w, head_b;
  Var a_fixed_hat;  // baseline only: normalized fully connected adjacency
  std::vector<std::pair<std::string, Var>> registry;  // canonical order
};

inline BoundModel bind_model(Tape& t, const ModelParams& p) {
  BoundModel m;
  m.layers.resize(p.layers.size());
  std::map<std::string, Var> by_name;
  for_each_param(p, [&](const std::string& name, const Tensor& tensor) {
    Var v = t.leaf(tensor);
    by_name[name] = v;
    m.registry.emplace_back(name, v);
  });
  const bool baseline = p.cfg.kind == ModelKind::kBaselineGcn;
  for (size_t l = 0; l < p.layers.size(); ++l) {
    const std::string base = "layer" + std::to_string(l) + ".";
    DetectorLayerVars& lv = m.layers[l];
    if (!baseline) {
      lv.slc.W_s = by_name[base + "slc.W_s"];
      lv.slc.W_phi = by_name[base + "slc.W_phi"];
    }
    for (size_t k = 0; k < p.layers[l].slc.theta_s.size(); ++k)
      lv.slc.theta_s.push_back(by_name[base + "slc.theta_s." + std::to_string(k)]);
    for (size_t k = 0; k < p.layers[l].slc.theta_d.size(); ++k)
      lv.slc.theta_d.push_back(by_name[base + "slc.theta_d." + std::to_string(k)]);
    lv.gru = GruVars{by_name[base + "gru.W_z"], by_name[base + "gru.W_r"],
                     by_name[base + "gru.W_h"], by_name[base + "gru.U_z"],
                     by_name[base + "gru.U_r"], by_name[base + "gru.U_h"],
                     by_name[base + "gru.b_z"], by_name[base + "gru.b_r"],
                     by_name[base + "gru.b_h"]};
  }
  if (baseline)
    m.a_fixed_hat = t.constant(normalize_adjacency_plain(
        Tensor::full({p.cfg.n_stations, p.cfg.n_stations}, 1.0 / p.cfg.n_stations)));
  m.head_w = by_name["head.W"];
  m.head_b = by_name["head.b"];
  return m;
}

// Window data (N x P x 3) rearranged to the network's P x N x C input layout.
inline Tensor window_to_input(const WaveformWindow& w) {
  Tensor x = Tensor::zeros({w.n_samples, w.n_stations, 3});
  for (int s = 0; s < w.n_stations; ++s)
    for (int t = 0; t < w.n_samples; ++t)
      for (int c = 0; c < 3; ++c) x.at(t, s, c) = w.at(s, t, c);
  return x;
}

// Full detector graph on an already-bound model: per-layer spatial step over
// every timestep, GRU across time, dropout between layers in train mode,
// then the shared linear head and sigmoid. Returns P x N x 1 probabilities.
inline Var detector_probs(Tape& t, const BoundModel& m, const ModelConfig& cfg,
                          Var input_pnc, RunMode mode, Rng* dropout_rng) {
  const Tensor& in = t.value(input_pnc);
  check_arg(in.rank() == 3 && in.dim(1) == cfg.n_stations && in.dim(2) == cfg.input_dim,
            "detector: input dims do not match the architecture, got " + in.shape_str());
  const bool baseline = cfg.kind == ModelKind::kBaselineGcn;
  Var x = input_pnc;
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const DetectorLayerVars& lv = m.layers[l];
    Var s = baseline ? gcn_baseline_spatial_seq(t, x, m.a_fixed_hat, lv.slc.theta_s)
                     : slc_spatial_forward_seq(t, x, lv.slc);
    Var h = gru_sequence(t, s, lv.gru);
    if (mode == RunMode::kTrain && cfg.dropout_rate > 0.0) {
      check_arg(dropout_rng != nullptr, "detector: train mode needs a dropout rng");
      h = dropout(h, cfg.dropout_rate, *dropout_rng);
    }
    x = h;
  }
  Var logits = add(matmul(x, m.head_w), m.head_b);
  return sigmoid(logits);
}

inline DetectionSeries extract_series(const Tensor& probs_pn1) {
  DetectionSeries out = DetectionSeries::zeros(probs_pn1.dim(1), probs_pn1.dim(0));
  for (int step = 0; step < probs_pn1.dim(0); ++step)
    for (int s = 0; s < probs_pn1.dim(1); ++s) out.at(s, step) = probs_pn1.at(step, s, 0);
  return out;
}

// Value-level forward. Train mode applies seeded dropout; infer mode is
// deterministic.
inline DetectionSeries detector_forward(const WaveformWindow& window,
                                        const ModelParams& params,
                                        RunMode mode = RunMode::kInfer, uint64_t seed = 0) {
  Tape t(false);
  BoundModel m = bind_model(t, params);
  Rng rng(mix_seed(seed, 0xD409u));
  Var probs = detector_probs(t, m, params.cfg, t.constant(window_to_input(window)), mode,
                             &rng);
  return extract_series(t.value(probs));
}

inline DetectionSeries baseline_gcn_forward(const WaveformWindow& window,
                                            const ModelParams& params,
                                            RunMode mode = RunMode::kInfer,
                                            uint64_t seed = 0) {
  check_arg(params.cfg.kind == ModelKind::kBaselineGcn,
            "baseline_gcn_forward: params are not a baseline model");
  return detector_forward(window, params, mode, seed);
}

// ---------------------------------------------------------------------------
// checkpoint format: text manifest, then named float32 blobs
// ---------------------------------------------------------------------------

constexpr const char* kCheckpointMagic = "EQDET-CKPT";
constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const ModelConfig& c = params.cfg;
  out << kCheckpointMagic << " v" << kCheckpointSchemaVersion << "\n";
  out << "schema_version=" << kCheckpointSchemaVersion << "\n";
  out << "kind=" << (c.kind == ModelKind::kSlc ? "slc" : "baseline") << "\n";
  out << "n_stations=" << c.n_stations << "\n";
  out << "input_dim=" << c.input_dim << "\n";
  out << "hidden_dim=" << c.hidden_dim << "\n";
  out << "n_layers=" << c.n_layers << "\n";
  out << "k_order=" << c.k_order << "\n";
  out << "dropout=" << detail::fmt_double(c.dropout_rate) << "\n";
  for_each_param(params, [&](const std::string& name, const Tensor& t) {
    out << "blob=" << name << ":" << t.numel() * 4 << "\n";
  });
  out << "end\n";
  for_each_param(params, [&](const std::string& name, const Tensor& t) {
    (void)name;
    std::vector<float> f(t.v.size());
    for (size_t i = 0; i < t.v.size(); ++i) f[i] = static_cast<float>(t.v[i]);
    out.write(reinterpret_cast<const char*>(f.data()),
              static_cast<std::streamsize>(f.size() * sizeof(float)));
  });
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kCheckpointMagic, 0) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint (bad magic)");

  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, int64_t>> blobs;
  while (std::getline(in, line)) {
    if (line == "end") break;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("load_checkpoint: malformed manifest line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "blob") {
      const size_t colon = value.rfind(':');
      if (colon == std::string::npos)
        throw std::runtime_error("load_checkpoint: malformed blob declaration '" + line + "'");
      blobs.emplace_back(value.substr(0, colon), std::stoll(value.substr(colon + 1)));
    } else {
      fields[key] = value;
    }
  }
  if (line != "end")
    throw std::runtime_error("load_checkpoint: manifest not terminated by 'end'");

  auto need = [&fields, &path](const std::string& key) {
    auto it = fields.find(key);
    if (it == fields.end())
      throw std::runtime_error("load_checkpoint: " + path + " missing field '" + key + "'");
    return it->second;
  };
  if (std::stoi(need("schema_version")) != kCheckpointSchemaVersion)
    throw std::runtime_error("load_checkpoint: unsupported schema_version " +
                             fields["schema_version"]);
  ModelConfig cfg;
  const std::string kind = need("kind");
  if (kind == "slc")
    cfg.kind = ModelKind::kSlc;
  else if (kind == "baseline")
    cfg.kind = ModelKind::kBaselineGcn;
  else
    throw std::runtime_error("load_checkpoint: unknown kind '" + kind + "'");
  cfg.n_stations = std::stoi(need("n_stations"));
  cfg.input_dim = std::stoi(need("input_dim"));
  cfg.hidden_dim = std::stoi(need("hidden_dim"));
  cfg.n_layers = std::stoi(need("n_layers"));
  cfg.k_order = std::stoi(need("k_order"));
  cfg.dropout_rate = std::stod(need("dropout"));

  ModelParams params = init_model(cfg, 0);
  size_t blob_idx = 0;
  for_each_param(params, [&](const std::string& name, Tensor& t) {
    if (blob_idx >= blobs.size())
      throw std::runtime_error("load_checkpoint: missing blob '" + name + "'");
    const auto& [bname, bytes] = blobs[blob_idx++];
    if (bname != name)
      throw std::runtime_error("load_checkpoint: expected blob '" + name + "', found '" +
                               bname + "'");
    if (bytes != t.numel() * 4)
      throw std::runtime_error("load_checkpoint: blob '" + name + "' has " +
                               std::to_string(bytes) + " bytes, expected " +
                               std::to_string(t.numel() * 4));
    std::vector<float> f(t.v.size());
    in.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(f.size() * sizeof(float)))
      throw std::runtime_error("load_checkpoint: truncated payload in blob '" + name + "'");
    for (size_t i = 0; i < f.size(); ++i) t.v[i] = static_cast<double>(f[i]);
  });
  if (blob_idx != blobs.size())
    throw std::runtime_error("load_checkpoint: " + std::to_string(blobs.size() - blob_idx) +
                             " extra blob declarations");
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("load_checkpoint: trailing bytes after last blob");
  return params;
}

// FNV-1a over a file's bytes; used to fingerprint checkpoints.
inline uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_hash: cannot open " + path);
  uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace eqdet
