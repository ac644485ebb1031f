// eqdet: synthetic multi-station earthquake detection pipeline.
// Subcommands: synth | preprocess | train | eval | detect | sweep

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "eqdet/config.hpp"
#include "eqdet/dataset.hpp"
#include "eqdet/detector.hpp"
#include "eqdet/io.hpp"
#include "eqdet/stream.hpp"
#include "eqdet/train.hpp"

namespace {

using namespace eqdet;

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

Config load_config(const std::string& path) {
  if (path.empty()) return Config{};
  return Config::load(path);
}

ModelConfig model_config_from(const Config& cfg, int n_stations, const std::string& kind_flag) {
  ModelConfig mc;
  const std::string kind = kind_flag.empty() ? cfg.get_str("model.kind", "slc") : kind_flag;
  if (kind == "slc")
    mc.kind = ModelKind::kSlc;
  else if (kind == "baseline")
    mc.kind = ModelKind::kBaselineGcn;
  else
    throw std::runtime_error("config: field model.kind must be 'slc' or 'baseline', got '" +
                             kind + "'");
  mc.n_stations = n_stations;
  mc.input_dim = 3;
  mc.hidden_dim = static_cast<int>(cfg.get_int("model.hidden_dim", 32));
  mc.n_layers = static_cast<int>(cfg.get_int("model.n_layers", 5));
  mc.k_order = static_cast<int>(cfg.get_int("model.k_order", 3));
  mc.dropout_rate = cfg.get_double("model.dropout", 0.2);
  return mc;
}

TrainConfig train_config_from(const Config& cfg, uint64_t seed) {
  TrainConfig tc;
  tc.learning_rate = cfg.get_double("train.learning_rate", 1e-3);
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 8));
  tc.epochs = static_cast<int>(cfg.get_int("train.epochs", 3));
  tc.seed = seed;
  tc.augment = cfg.get_bool("train.augment", true);
  tc.max_shift_samples = static_cast<int>(cfg.get_int("train.max_shift_samples", 125));
  tc.augment_noise_mean = cfg.get_double("train.augment_noise_mean", 0.001);
  tc.positive_weight = cfg.get_double("train.positive_weight", 1.0);
  return tc;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw std::runtime_error("config: field " + field + " has a bad entry '" + item + "'");
    }
  }
  if (out.empty()) throw std::runtime_error("config: field " + field + " is empty");
  return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& field) {
  std::vector<int> out;
  for (double v : parse_double_list(text, field)) out.push_back(static_cast<int>(v));
  return out;
}

int cmd_synth(const Config& cfg, const std::string& out_dir, uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  const int n_stations = static_cast<int>(cfg.get_int("synth.n_stations", 13));
  const double extent = cfg.get_double("synth.extent_km", 60.0);
  const int n_events = static_cast<int>(cfg.get_int("synth.n_events", 250));
  const double spacing = cfg.get_double("synth.event_spacing_s", 24.0);
  const double first_origin = cfg.get_double("synth.first_origin_s", 30.0);
  const double noise_std = cfg.get_double("synth.noise_std", 0.05);
  const double amp_lo = cfg.get_double("synth.amp_lo", 0.7);
  const double amp_hi = cfg.get_double("synth.amp_hi", 1.6);
  const double tail = cfg.get_double("synth.tail_s", 40.0);

  StationGeometry geo = generate_network(n_stations, extent, seed);
  EventCatalog cat = generate_catalog(n_events, extent, spacing, first_origin, amp_lo,
                                      amp_hi, mix_seed(seed, 1));
  const double duration = first_origin + n_events * spacing + tail;
  RawTraceSet traces = synth_waveforms(geo, cat, duration, noise_std, mix_seed(seed, 2));

  std::vector<std::string> ids;
  for (const auto& s : geo.stations) ids.push_back(s.id);
  write_container(traces, ids, out_dir + "/waveforms.eqw");
  write_geometry_csv(geo, out_dir + "/geometry.csv");
  write_catalog_csv(cat, out_dir + "/catalog.csv");
  write_picks_csv(picks_from_catalog(geo, cat), out_dir + "/picks.csv");
  std::cout << "synth: " << n_stations << " stations, " << n_events << " events, "
            << fmt(duration) << " s at " << fmt(traces.sample_rate_hz) << " Hz -> "
            << out_dir << "\n";
  return 0;
}

int cmd_preprocess(const Config& cfg, const std::string& container_path,
                   const std::string& picks_path, const std::string& out_dir,
                   uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  FileSource src(container_path);
  std::vector<PickRow> picks = read_picks_csv(picks_path);

  WindowingConfig wc;
  wc.window_s = cfg.get_double("preprocess.window_s", 20.0);
  wc.pre_arrival_min_s = cfg.get_double("preprocess.pre_arrival_min_s", 2.0);
  wc.pre_arrival_max_s = cfg.get_double("preprocess.pre_arrival_max_s", 8.0);
  wc.noise_window_every = static_cast<int>(cfg.get_int("preprocess.noise_window_every", 5));
  wc.test_fraction = cfg.get_double("preprocess.test_fraction", 0.2);
  wc.seed = seed;

  auto [train_ds, test_ds] = build_datasets(src, picks, wc);
  save_dataset(train_ds, out_dir + "/train.eqd");
  save_dataset(test_ds, out_dir + "/test.eqd");
  std::cout << "preprocess: " << train_ds.size() << " train windows, " << test_ds.size()
            << " test windows (P=" << train_ds.n_samples << " at "
            << fmt(train_ds.sample_rate_hz) << " Hz) -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const Config& cfg, const std::string& dataset_path, const std::string& out_dir,
              uint64_t seed, const std::string& kind_flag) {
  std::filesystem::create_directories(out_dir);
  Dataset ds = load_dataset(dataset_path);
  ModelConfig arch = model_config_from(cfg, ds.n_stations, kind_flag);
  TrainConfig tc = train_config_from(cfg, seed);

  TrainResult result = train(ds, arch, tc);
  const std::string tag = arch.kind == ModelKind::kSlc ? "slc" : "baseline";
  const std::string ckpt = out_dir + "/model_" + tag + ".ckpt";
  save_checkpoint(result.params, ckpt);
  write_loss_csv(result.epoch_loss, out_dir + "/loss_" + tag + ".csv");
  std::cout << "train: " << tag << " on " << ds.size() << " windows, "
            << result.epoch_loss.size() << " epochs, final loss "
            << fmt(result.epoch_loss.back()) << " -> " << ckpt << "\n";
  return 0;
}

void eval_one(const std::string& tag, const ModelParams& params, const Dataset& ds,
              const std::vector<double>& mdps, const std::string& out_dir,
              std::ostream& out) {
  if (params.cfg.n_stations != ds.n_stations)
    throw std::runtime_error("eval: checkpoint n_stations=" +
                             std::to_string(params.cfg.n_stations) +
                             " does not match dataset n_stations=" +
                             std::to_string(ds.n_stations));
  std::vector<DetectionSeries> det;
  det.reserve(ds.size());
  for (const auto& w : ds.windows) det.push_back(detector_forward(w, params));
  std::vector<double> scores;
  std::vector<int> labels;
  flatten_scores(det, ds.labels, scores, labels);
  RocCurve curve = roc_curve(scores, labels);
  write_roc_csv(curve, out_dir + "/roc_" + tag + ".csv");

  out << "model=" << tag << " auc=" << fmt(curve.auc) << "\n";
  for (double mdp : mdps) {
    RateCounts r = tpr_fpr_at_mdp(scores, labels, mdp);
    out << "model=" << tag << " mdp=" << fmt(mdp)
        << " tpr=" << (r.tpr ? fmt(*r.tpr) : "undefined")
        << " fpr=" << (r.fpr ? fmt(*r.fpr) : "undefined") << "\n";
  }
  RocPoint best = optimal_mdp(curve);
  out << "model=" << tag << " optimal_mdp=" << fmt(best.threshold)
      << " tpr=" << fmt(best.tpr) << " fpr=" << fmt(best.fpr) << "\n";
}

int cmd_eval(const Config& cfg, const std::string& dataset_path, const std::string& ckpt,
             const std::string& baseline_ckpt, const std::string& out_dir, double mdp_flag) {
  std::filesystem::create_directories(out_dir);
  Dataset ds = load_dataset(dataset_path);
  std::vector<double> mdps =
      parse_double_list(cfg.get_str("eval.mdps", "0.55,0.6,0.71"), "eval.mdps");
  if (mdp_flag >= 0.0) mdps.push_back(mdp_flag);

  std::ostringstream summary;
  ModelParams params = load_checkpoint(ckpt);
  eval_one(params.cfg.kind == ModelKind::kSlc ? "slc" : "baseline", params, ds, mdps,
           out_dir, summary);
  if (!baseline_ckpt.empty()) {
    ModelParams bparams = load_checkpoint(baseline_ckpt);
    eval_one(bparams.cfg.kind == ModelKind::kSlc ? "slc" : "baseline", bparams, ds, mdps,
             out_dir, summary);
  }
  std::cout << summary.str();
  std::ofstream sf(out_dir + "/eval_summary.txt");
  sf << summary.str();
  return 0;
}

int cmd_detect(const Config& cfg, const std::string& input, const std::string& ckpt,
               const std::string& out_path, double window_s, double stride_s) {
  ModelParams params = load_checkpoint(ckpt);
  StreamConfig sc;
  sc.window_s = window_s > 0.0 ? window_s : cfg.get_double("stream.window_s", 20.0);
  sc.stride_s = stride_s > 0.0 ? stride_s : cfg.get_double("stream.stride_s", sc.window_s / 4.0);

  std::unique_ptr<WaveSource> src;
  if (input == "-") {
    std::stringstream buffer;
    buffer << std::cin.rdbuf();
    ContainerHeader h = read_container_header(buffer, "detect: <stdin>");
    RawTraceSet traces;
    traces.sample_rate_hz = h.sample_rate_hz;
    traces.start_time_s = h.start_time_s;
    traces.n_stations = h.n_stations;
    traces.n_samples = h.n_samples;
    traces.traces.resize(static_cast<size_t>(h.payload_bytes / sizeof(float)));
    buffer.read(reinterpret_cast<char*>(traces.traces.data()), h.payload_bytes);
    if (buffer.gcount() != h.payload_bytes)
      throw std::runtime_error("detect: <stdin> payload truncated");
    src = std::make_unique<MemorySource>(std::move(traces), h.station_ids);
  } else {
    src = std::make_unique<FileSource>(input);
  }

  std::ofstream file_out;
  std::ostream* out = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    file_out.open(out_path);
    if (!file_out) throw std::runtime_error("detect: cannot open " + out_path);
    out = &file_out;
  }
  const std::vector<std::string>& ids = src->station_ids();
  *out << "time_s,station_id,probability\n";
  sliding_window_detect(*src, params, sc, [&](const DetectionRow& r) {
    *out << fmt(r.time_s) << "," << ids[static_cast<size_t>(r.station)] << ","
         << fmt(r.probability) << "\n";
  });
  return 0;
}

int cmd_sweep(const Config& cfg, const std::string& dataset_path, const std::string& out_path,
              uint64_t seed) {
  Dataset ds = load_dataset(dataset_path);
  ModelConfig arch = model_config_from(cfg, ds.n_stations, "");
  TrainConfig tc = train_config_from(cfg, seed);
  tc.epochs = static_cast<int>(cfg.get_int("sweep.epochs", tc.epochs));

  SweepSpace space;
  space.n_layers = parse_int_list(cfg.get_str("sweep.n_layers", "2"), "sweep.n_layers");
  space.hidden_dim = parse_int_list(cfg.get_str("sweep.hidden_dim", "8"), "sweep.hidden_dim");
  space.k_order = parse_int_list(cfg.get_str("sweep.k_order", "2"), "sweep.k_order");
  space.learning_rate =
      parse_double_list(cfg.get_str("sweep.learning_rate", "1e-3"), "sweep.learning_rate");
  space.batch_size = parse_int_list(cfg.get_str("sweep.batch_size", "8"), "sweep.batch_size");
  const int k_folds = static_cast<int>(cfg.get_int("sweep.k_folds", 5));

  std::vector<SweepResult> results = grid_sweep(ds, arch, tc, space, k_folds);

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json rec;
    rec["n_layers"] = r.point.n_layers;
    rec["hidden_dim"] = r.point.hidden_dim;
    rec["k_order"] = r.point.k_order;
    rec["learning_rate"] = r.point.learning_rate;
    rec["batch_size"] = r.point.batch_size;
    rec["mean_val_auc"] = r.mean_val_auc;
    rec["fold_aucs"] = r.fold_aucs;
    j.push_back(rec);
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("sweep: cannot open " + out_path);
  out << j.dump(2) << "\n";
  std::cout << "sweep: " << results.size() << " configurations, best mean AUC "
            << fmt(results.front().mean_val_auc) << " -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph detector for multi-station seismic waveforms"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", container, picks, dataset, ckpt, baseline_ckpt;
  std::string input, detect_out, model_kind;
  int64_t seed_flag = -1;
  double window_s = -1.0, stride_s = -1.0, mdp = -1.0;

  app.add_option("--config", config_path, "configuration file (sectioned key = value)");
  app.add_option("--seed", seed_flag, "seed override");

  CLI::App* synth = app.add_subcommand("synth", "generate synthetic network + waveforms");
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI::App* pre = app.add_subcommand("preprocess", "window + preprocess a waveform container");
  pre->add_option("--container", container, "waveform container")->required();
  pre->add_option("--picks", picks, "picks CSV")->required();
  pre->add_option("--out", out_dir, "output directory")->required();

  CLI::App* tr = app.add_subcommand("train", "train a detector on a windowed dataset");
  tr->add_option("--dataset", dataset, "training dataset (.eqd)")->required();
  tr->add_option("--out", out_dir, "output directory")->required();
  tr->add_option("--model", model_kind, "slc or baseline (overrides config)");

  CLI::App* ev = app.add_subcommand("eval", "ROC / AUC / MDP evaluation");
  ev->add_option("--dataset", dataset, "evaluation dataset (.eqd)")->required();
  ev->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  ev->add_option("--baseline-checkpoint", baseline_ckpt, "baseline checkpoint (optional)");
  ev->add_option("--out", out_dir, "output directory")->required();
  ev->add_option("--mdp", mdp, "extra detection threshold to report");

  CLI::App* de = app.add_subcommand("detect", "sliding-window streaming detection");
  de->add_option("--input", input, "waveform container path, or - for stdin")->required();
  de->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  de->add_option("--out", detect_out, "output CSV path, or - for stdout");
  de->add_option("--window-s", window_s, "window length in seconds");
  de->add_option("--stride-s", stride_s, "stride in seconds");

  CLI::App* sw = app.add_subcommand("sweep", "grid hyper-parameter sweep with k-fold CV");
  sw->add_option("--dataset", dataset, "training dataset (.eqd)")->required();
  sw->add_option("--out", out_dir, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = load_config(config_path);
    const uint64_t seed =
        seed_flag >= 0 ? static_cast<uint64_t>(seed_flag)
                       : static_cast<uint64_t>(cfg.get_int("seed", 42));
    if (synth->parsed()) return cmd_synth(cfg, out_dir, seed);
    if (pre->parsed()) return cmd_preprocess(cfg, container, picks, out_dir, seed);
    if (tr->parsed()) return cmd_train(cfg, dataset, out_dir, seed, model_kind);
    if (ev->parsed()) return cmd_eval(cfg, dataset, ckpt, baseline_ckpt, out_dir, mdp);
    if (de->parsed()) return cmd_detect(cfg, input, ckpt, detect_out, window_s, stride_s);
    if (sw->parsed()) return cmd_sweep(cfg, dataset, out_dir, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
