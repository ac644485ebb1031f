// Acceptance suite: runs every gate the project must clear, one line each.
// Exit code 0 only if all criteria pass.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "eqdet/dataset.hpp"
#include "eqdet/detector.hpp"
#include "eqdet/gradcheck.hpp"
#include "eqdet/io.hpp"
#include "eqdet/stream.hpp"
#include "eqdet/train.hpp"
#include "oracles.hpp"

using namespace eqdet;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  std::string name;
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, x);
  return buf;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng.normal(0.0, scale);
  return t;
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m = oracle::zeros(t.dim(0), t.dim(1));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j) m[static_cast<size_t>(i)][static_cast<size_t>(j)] = t.at(i, j);
  return m;
}

bool file_bytes_equal(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return fa && fb && sa.str() == sb.str();
}

// ---------------------------------------------------------------------------
// 1. gradient correctness on the toy detector
// ---------------------------------------------------------------------------
Criterion gradient_correctness() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.kind = ModelKind::kSlc;
  cfg.n_stations = 3;
  cfg.input_dim = 3;
  cfg.hidden_dim = 4;
  cfg.n_layers = 2;
  cfg.k_order = 2;
  cfg.dropout_rate = 0.2;  // inference-mode loss: dropout inactive
  ModelParams params = init_model(cfg, 101);

  const int P = 8;
  Rng rng(102);
  Tensor input = random_tensor({P, cfg.n_stations, 3}, rng);
  Tensor target = Tensor::zeros({P, cfg.n_stations, 1});
  for (double& y : target.v) y = rng.uniform() < 0.4 ? 1.0 : 0.0;

  std::vector<std::string> names;
  for_each_param(params, [&names](const std::string& n, Tensor&) { names.push_back(n); });

  int64_t coords = 0;
  int skipped = 0;
  double worst = 0.0;
  std::string worst_name = "-";
  bool all_pass = true;
  for (const std::string& which : names) {
    auto f = [&](Tape& t, Var v) {
      std::map<std::string, Var> by_name;
      for_each_param(params, [&](const std::string& n, Tensor& tensor) {
        by_name[n] = n == which ? v : t.constant(tensor);
      });
      BoundModel m;
      m.layers.resize(params.layers.size());
      for (size_t l = 0; l < params.layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l) + ".";
        m.layers[l].slc.W_s = by_name[base + "slc.W_s"];
        m.layers[l].slc.W_phi = by_name[base + "slc.W_phi"];
        for (int k = 0; k < cfg.k_order; ++k) {
          m.layers[l].slc.theta_s.push_back(by_name[base + "slc.theta_s." + std::to_string(k)]);
          m.layers[l].slc.theta_d.push_back(by_name[base + "slc.theta_d." + std::to_string(k)]);
        }
        m.layers[l].gru = GruVars{by_name[base + "gru.W_z"], by_name[base + "gru.W_r"],
                                  by_name[base + "gru.W_h"], by_name[base + "gru.U_z"],
                                  by_name[base + "gru.U_r"], by_name[base + "gru.U_h"],
                                  by_name[base + "gru.b_z"], by_name[base + "gru.b_r"],
                                  by_name[base + "gru.b_h"]};
      }
      m.head_w = by_name["head.W"];
      m.head_b = by_name["head.b"];
      Var probs = detector_probs(t, m, cfg, t.constant(input), RunMode::kInfer, nullptr);
      return bce_mean(probs, target);
    };
    Tensor x0;
    for_each_param(params, [&](const std::string& n, Tensor& tensor) {
      if (n == which) x0 = tensor;
    });
    GradCheckReport rep = grad_check(f, x0, 1e-5, 1e-4);
    coords += rep.compared;
    skipped += rep.skipped;
    if (rep.worst_rel > worst) {
      worst = rep.worst_rel;
      worst_name = which;
    }
    if (!rep.pass) all_pass = false;
  }
  const double secs = seconds_since(t0);
  Criterion c;
  c.name = "gradient-correctness";
  c.pass = all_pass && secs < 60.0;
  c.detail = std::to_string(names.size()) + " tensors / " + std::to_string(coords) +
             " coordinates vs central differences, worst rel " + fmt(worst) + " (" +
             worst_name + "), " + std::to_string(skipped) + " kinks skipped, " +
             fmt(secs, "%.1f") + " s (limit 60)";
  return c;
}

// ---------------------------------------------------------------------------
// 2. oracle equivalence on seeded instances of dimension <= 8
// ---------------------------------------------------------------------------
Criterion oracle_equivalence() {
  std::vector<std::string> fails;
  std::ostringstream detail;

  {  // cheb_basis vs explicit matrix polynomials, 1e-10
    Rng rng(201);
    Tensor a = Tensor::zeros({5, 5});
    for (int i = 0; i < 5; ++i)
      for (int j = i; j < 5; ++j) {
        const double x = rng.normal(0.0, 0.4);
        a.at(i, j) = x;
        a.at(j, i) = x;
      }
    const double rho = oracle::spectral_radius_ref(to_mat(a));
    for (double& x : a.v) x /= (rho * 1.2);
    Tape t;
    auto basis = cheb_basis(t, t.leaf(a), 4);
    double err = 0.0;
    for (int k = 0; k < 4; ++k) {
      oracle::Mat want = oracle::cheb_explicit(to_mat(a), k);
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
          err = std::max(err, std::abs(t.value(basis[static_cast<size_t>(k)]).at(i, j) -
                                       want[static_cast<size_t>(i)][static_cast<size_t>(j)]));
    }
    detail << "cheb " << fmt(err);
    if (err > 1e-10) fails.push_back("cheb_basis");
  }
  {  // dynamic_adjacency vs triple loop, 1e-13
    Rng rng(202);
    Tensor x = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({3, 3}, rng);
    Tape t;
    const Tensor& got = t.value(dynamic_adjacency(t, t.leaf(x), t.leaf(w)));
    double err = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double want = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) want += x.at(i, a) * w.at(a, b) * x.at(j, b);
        err = std::max(err, std::abs(got.at(i, j) - want));
      }
    detail << ", w_dyn " << fmt(err);
    if (err > 1e-13) fails.push_back("dynamic_adjacency");
  }
  {  // gru_sequence vs unrolled scalar oracle, 1e-12
    Rng rng(203);
    GruParams p = init_gru_params(3, 4, rng);
    Tensor xs = random_tensor({5, 2, 3}, rng);
    Tape t;
    GruVars gv{t.leaf(p.W_z), t.leaf(p.W_r), t.leaf(p.W_h), t.leaf(p.U_z), t.leaf(p.U_r),
               t.leaf(p.U_h), t.leaf(p.b_z), t.leaf(p.b_r), t.leaf(p.b_h)};
    const Tensor& got = t.value(gru_sequence(t, t.leaf(xs), gv));
    double err = 0.0;
    for (int s = 0; s < 2; ++s) {
      oracle::Vec h(4, 0.0);
      for (int step = 0; step < 5; ++step) {
        oracle::Vec x(3);
        for (int j = 0; j < 3; ++j) x[static_cast<size_t>(j)] = xs.at(step, s, j);
        h = oracle::gru_cell_ref(x, h, to_mat(p.W_z), to_mat(p.W_r), to_mat(p.W_h),
                                 to_mat(p.U_z), to_mat(p.U_r), to_mat(p.U_h), p.b_z.v,
                                 p.b_r.v, p.b_h.v);
        for (int j = 0; j < 4; ++j)
          err = std::max(err, std::abs(got.at(step, s, j) - h[static_cast<size_t>(j)]));
      }
    }
    detail << ", gru " << fmt(err);
    if (err > 1e-12) fails.push_back("gru_sequence");
  }
  {  // slc_spatial_forward vs straight-line reimplementation, 1e-10
    Rng rng(204);
    SlcLayerParams p = init_slc_params(4, 3, 2, 3, rng);
    Tensor x = random_tensor({4, 3}, rng);
    Tape t;
    SlcLayerVars lv;
    lv.W_s = t.leaf(p.W_s);
    lv.W_phi = t.leaf(p.W_phi);
    for (const auto& th : p.theta_s) lv.theta_s.push_back(t.leaf(th));
    for (const auto& th : p.theta_d) lv.theta_d.push_back(t.leaf(th));
    const Tensor& got = t.value(slc_spatial_forward(t, t.leaf(x), lv));
    std::vector<oracle::Mat> ts, td;
    for (const auto& th : p.theta_s) ts.push_back(to_mat(th));
    for (const auto& th : p.theta_d) td.push_back(to_mat(th));
    oracle::Mat want = oracle::slc_spatial_ref(to_mat(x), to_mat(p.W_s), to_mat(p.W_phi), ts, td);
    double err = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j)
        err = std::max(err, std::abs(got.at(i, j) - want[static_cast<size_t>(i)][static_cast<size_t>(j)]));
    detail << ", slc " << fmt(err);
    if (err > 1e-10) fails.push_back("slc_spatial_forward");
  }
  {  // roc auc vs brute-force pairwise counting, 1e-12
    Rng rng(205);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 64; ++i) {
      scores.push_back(std::round(rng.uniform() * 16.0) / 16.0);
      labels.push_back(rng.uniform() < 0.45 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    const double got = roc_curve(scores, labels).auc;
    const double want = oracle::auc_pairwise(scores, labels);
    detail << ", auc " << fmt(std::abs(got - want));
    if (std::abs(got - want) > 1e-12) fails.push_back("roc_curve");
  }

  Criterion c;
  c.name = "oracle-equivalence";
  c.pass = fails.empty();
  c.detail = "max abs errors: " + detail.str();
  if (!fails.empty()) {
    c.detail += "; failed:";
    for (const auto& f : fails) c.detail += " " + f;
  }
  return c;
}

// ---------------------------------------------------------------------------
// 3. preprocessing fidelity
// ---------------------------------------------------------------------------
Criterion preprocessing_fidelity() {
  std::vector<std::string> fails;
  const double fs = 200.0;
  const int n = 4000;
  constexpr double pi = 3.14159265358979323846;

  auto sine = [&](double f) {
    std::vector<double> x(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = std::sin(2.0 * pi * f * i / fs);
    return x;
  };
  auto steady_amp = [&](const std::vector<double>& y) {
    double m = 0.0;
    for (size_t i = y.size() / 4; i < 3 * y.size() / 4; ++i) m = std::max(m, std::abs(y[i]));
    return m;
  };

  BandpassDesign d = design_bandpass(fs);
  const double amp4 = steady_amp(bandpass_2_8(sine(4.0), fs));
  const double amp02 = steady_amp(bandpass_2_8(sine(0.2), fs));
  const double want4 = d.magnitude(4.0) * d.magnitude(4.0);
  const double want02 = d.magnitude(0.2) * d.magnitude(0.2);
  if (!(amp4 >= 0.9 && amp4 <= 1.05)) fails.push_back("4Hz passband");
  if (std::abs(amp4 - want4) > 0.01) fails.push_back("4Hz vs analytic");
  if (!(amp02 <= 0.01)) fails.push_back("0.2Hz stopband");
  if (amp02 > 2.0 * want02 + 1e-6) fails.push_back("0.2Hz vs analytic");

  const size_t out_len = downsample_8x(sine(5.0)).size();
  if (out_len != 500) fails.push_back("decimation length");

  PickSet picks;
  picks.picks.push_back(std::make_pair(10.0, 14.0));
  LabelSeries l = label_series(picks, 0.0, 500, 25.0);
  bool labels_ok = true;
  for (int t = 0; t < 500; ++t)
    if (l.at(0, t) != ((t >= 250 && t <= 390) ? 1 : 0)) labels_ok = false;
  if (!labels_ok) fails.push_back("label window");

  Criterion c;
  c.name = "preprocessing-fidelity";
  c.pass = fails.empty();
  c.detail = "4Hz amp " + fmt(amp4) + " (analytic " + fmt(want4) + "), 0.2Hz amp " +
             fmt(amp02) + " (analytic " + fmt(want02) + "), 20s@200Hz -> " +
             std::to_string(out_len) + " samples, labels 250..390 " +
             (labels_ok ? "exact" : "WRONG");
  if (!fails.empty()) {
    c.detail += "; failed:";
    for (const auto& f : fails) c.detail += " " + f;
  }
  return c;
}

// shared synthetic pipeline pieces --------------------------------------------

struct PipelineArtifacts {
  std::string dir;
  Dataset train_ds, test_ds;
  double synth_s = 0.0, preprocess_s = 0.0;
};

PipelineArtifacts make_pipeline_data(const std::string& work_dir, uint64_t seed) {
  PipelineArtifacts art;
  art.dir = work_dir;
  std::filesystem::create_directories(work_dir);

  auto t0 = Clock::now();
  StationGeometry geo = generate_network(13, 60.0, seed);
  EventCatalog cat = generate_catalog(250, 60.0, 24.0, 30.0, 0.7, 1.6, mix_seed(seed, 1));
  RawTraceSet traces =
      synth_waveforms(geo, cat, 30.0 + 250 * 24.0 + 40.0, 0.05, mix_seed(seed, 2));
  std::vector<std::string> ids;
  for (const auto& s : geo.stations) ids.push_back(s.id);
  write_container(traces, ids, work_dir + "/waveforms.eqw");
  art.synth_s = seconds_since(t0);

  t0 = Clock::now();
  MemorySource src(std::move(traces), ids);
  WindowingConfig wc;
  wc.test_fraction = 0.2;
  wc.seed = seed;
  auto [train_ds, test_ds] = build_datasets(src, picks_from_catalog(geo, cat), wc);
  art.train_ds = std::move(train_ds);
  art.test_ds = std::move(test_ds);
  save_dataset(art.train_ds, work_dir + "/train.eqd");
  save_dataset(art.test_ds, work_dir + "/test.eqd");
  art.preprocess_s = seconds_since(t0);
  return art;
}

ModelConfig pipeline_arch(ModelKind kind) {
  ModelConfig arch;
  arch.kind = kind;
  arch.n_stations = 13;
  arch.hidden_dim = 8;
  arch.n_layers = 2;
  arch.k_order = 2;
  arch.dropout_rate = 0.2;
  return arch;
}

TrainConfig pipeline_train_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 4;
  cfg.epochs = 3;
  cfg.seed = seed;
  cfg.augment = true;
  cfg.max_shift_samples = 125;
  return cfg;
}

struct EvalNumbers {
  double auc = 0.0, tpr = 0.0, fpr = 0.0, mdp = 0.0;
};

EvalNumbers evaluate(const ModelParams& params, const Dataset& ds) {
  std::vector<DetectionSeries> det;
  det.reserve(ds.size());
  for (const auto& w : ds.windows) det.push_back(detector_forward(w, params));
  std::vector<double> scores;
  std::vector<int> labels;
  flatten_scores(det, ds.labels, scores, labels);
  RocCurve curve = roc_curve(scores, labels);
  RocPoint best = optimal_mdp(curve);
  return {curve.auc, best.tpr, best.fpr, best.threshold};
}

// ---------------------------------------------------------------------------
// 4. overfit capability
// ---------------------------------------------------------------------------
Criterion overfit_capability(const PipelineArtifacts& art) {
  const auto t0 = Clock::now();
  Dataset four = subset(art.train_ds, {0, 1, 2, 3});
  ModelConfig arch = pipeline_arch(ModelKind::kSlc);
  arch.n_layers = 1;
  arch.dropout_rate = 0.0;
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;  // pinned by the gate
  cfg.batch_size = 4;
  cfg.epochs = 300;  // 300 full-batch steps, within the 500-step budget
  cfg.augment = false;
  cfg.seed = 7;
  TrainResult r = train(four, arch, cfg);

  double final_bce = 0.0;
  for (size_t w = 0; w < four.size(); ++w)
    final_bce += bce_loss(detector_forward(four.windows[w], r.params), four.labels[w]);
  final_bce /= static_cast<double>(four.size());
  const double secs = seconds_since(t0);

  int first_below = -1;
  for (size_t i = 0; i < r.step_loss.size(); ++i)
    if (r.step_loss[i] < 0.05) {
      first_below = static_cast<int>(i);
      break;
    }

  Criterion c;
  c.name = "overfit-capability";
  c.pass = final_bce < 0.05 && secs < 300.0;
  c.detail = "4 windows, 300 Adam steps at lr 1e-2: BCE " + fmt(r.step_loss.front()) +
             " -> " + fmt(final_bce) + " (first < 0.05 at step " +
             std::to_string(first_below) + "), " + fmt(secs, "%.0f") + " s (limit 300)";
  return c;
}

// ---------------------------------------------------------------------------
// 5 + 6. synthetic end-to-end and the directional claim
// ---------------------------------------------------------------------------
struct PipelineResults {
  Criterion end_to_end;
  Criterion directional;
};

PipelineResults pipeline_criteria(PipelineArtifacts& art) {
  PipelineResults out;

  // end-to-end with the first seed, stage-timed
  const uint64_t seed0 = 42;
  auto t0 = Clock::now();
  TrainResult slc0 = train(art.train_ds, pipeline_arch(ModelKind::kSlc),
                           pipeline_train_config(seed0));
  const double train_s = seconds_since(t0);
  save_checkpoint(slc0.params, art.dir + "/model_slc_seed42.ckpt");

  t0 = Clock::now();
  EvalNumbers e = evaluate(slc0.params, art.test_ds);
  const double eval_s = seconds_since(t0);
  const double total = art.synth_s + art.preprocess_s + train_s + eval_s;

  out.end_to_end.name = "synthetic-end-to-end";
  out.end_to_end.pass = e.auc >= 0.90 && e.tpr >= 0.85 && e.fpr <= 0.20 && total <= 900.0;
  out.end_to_end.detail =
      "13 stations, 200 train / 50 test events: AUC " + fmt(e.auc) + " (>= 0.90), optimal MDP " +
      fmt(e.mdp) + " -> TPR " + fmt(e.tpr) + " (>= 0.85), FPR " + fmt(e.fpr) +
      " (<= 0.20); synth " + fmt(art.synth_s, "%.0f") + " s + preprocess " +
      fmt(art.preprocess_s, "%.0f") + " s + train " + fmt(train_s, "%.0f") +
      " s + eval " + fmt(eval_s, "%.0f") + " s = " + fmt(total, "%.0f") + " s (limit 900)";

  // directional claim over three seeds, matched hyper-parameters
  const std::vector<uint64_t> seeds = {42, 43, 44};
  std::vector<double> slc_aucs = {e.auc}, base_aucs;
  for (size_t i = 1; i < seeds.size(); ++i) {
    TrainResult r = train(art.train_ds, pipeline_arch(ModelKind::kSlc),
                          pipeline_train_config(seeds[i]));
    slc_aucs.push_back(evaluate(r.params, art.test_ds).auc);
  }
  for (uint64_t s : seeds) {
    TrainResult r = train(art.train_ds, pipeline_arch(ModelKind::kBaselineGcn),
                          pipeline_train_config(s));
    base_aucs.push_back(evaluate(r.params, art.test_ds).auc);
    if (s == seeds[0]) save_checkpoint(r.params, art.dir + "/model_baseline_seed42.ckpt");
  }
  double slc_mean = 0.0, base_mean = 0.0;
  std::ostringstream lists;
  lists << "slc {";
  for (size_t i = 0; i < slc_aucs.size(); ++i) {
    slc_mean += slc_aucs[i] / static_cast<double>(slc_aucs.size());
    lists << (i ? " " : "") << fmt(slc_aucs[i]);
  }
  lists << "} vs baseline {";
  for (size_t i = 0; i < base_aucs.size(); ++i) {
    base_mean += base_aucs[i] / static_cast<double>(base_aucs.size());
    lists << (i ? " " : "") << fmt(base_aucs[i]);
  }
  lists << "}";

  out.directional.name = "directional-claim";
  out.directional.pass = slc_mean >= base_mean;
  out.directional.detail = "mean test AUC over seeds 42/43/44: " + fmt(slc_mean) +
                           " vs " + fmt(base_mean) + "; " + lists.str();
  return out;
}

// ---------------------------------------------------------------------------
// 7. determinism and formats
// ---------------------------------------------------------------------------
Criterion determinism_and_formats(PipelineArtifacts& art) {
  std::vector<std::string> fails;

  // same-seed training twice: byte-identical checkpoints
  {
    Dataset small = subset(art.train_ds, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    ModelConfig arch = pipeline_arch(ModelKind::kSlc);
    TrainConfig cfg = pipeline_train_config(5);
    cfg.epochs = 1;
    TrainResult a = train(small, arch, cfg);
    TrainResult b = train(small, arch, cfg);
    save_checkpoint(a.params, art.dir + "/det_a.ckpt");
    save_checkpoint(b.params, art.dir + "/det_b.ckpt");
    if (!file_bytes_equal(art.dir + "/det_a.ckpt", art.dir + "/det_b.ckpt"))
      fails.push_back("same-seed checkpoints differ");
  }

  // container round-trip bit-exactness
  {
    StationGeometry geo = generate_network(4, 30.0, 71);
    EventCatalog cat = generate_catalog(3, 30.0, 30.0, 15.0, 0.8, 1.4, 72);
    RawTraceSet traces = synth_waveforms(geo, cat, 120.0, 0.03, 73);
    std::vector<std::string> ids;
    for (const auto& s : geo.stations) ids.push_back(s.id);
    write_container(traces, ids, art.dir + "/rt1.eqw");
    std::vector<std::string> ids2;
    RawTraceSet back = read_container(art.dir + "/rt1.eqw", &ids2);
    write_container(back, ids2, art.dir + "/rt2.eqw");
    if (!file_bytes_equal(art.dir + "/rt1.eqw", art.dir + "/rt2.eqw"))
      fails.push_back("container round-trip not bit-exact");
  }

  // checkpoint round-trip bit-exactness
  {
    ModelParams p = load_checkpoint(art.dir + "/model_slc_seed42.ckpt");
    save_checkpoint(p, art.dir + "/model_slc_seed42_rt.ckpt");
    if (!file_bytes_equal(art.dir + "/model_slc_seed42.ckpt",
                          art.dir + "/model_slc_seed42_rt.ckpt"))
      fails.push_back("checkpoint round-trip not bit-exact");
  }

  // streaming detect equals batch windowed evaluation exactly
  {
    StationGeometry geo = generate_network(13, 60.0, 81);
    EventCatalog cat = generate_catalog(4, 60.0, 30.0, 20.0, 0.8, 1.4, 82);
    RawTraceSet traces = synth_waveforms(geo, cat, 160.0, 0.05, 83);
    std::vector<std::string> ids;
    for (const auto& s : geo.stations) ids.push_back(s.id);
    MemorySource src(traces, ids);
    ModelParams params = load_checkpoint(art.dir + "/model_slc_seed42.ckpt");

    StreamConfig sc;
    sc.window_s = 20.0;
    sc.stride_s = 5.0;
    std::vector<DetectionRow> rows;
    sliding_window_detect(src, params, sc,
                          [&rows](const DetectionRow& r) { rows.push_back(r); });

    std::map<std::pair<int64_t, int>, std::pair<double, int>> acc;
    MemorySource src2(traces, ids);
    for (int64_t start = 0; start + 4000 <= src2.n_samples(); start += 1000) {
      DetectionSeries det = detector_forward(preprocess_window(src2.read_window(start, 4000)), params);
      for (int t = 0; t < det.n_samples; ++t)
        for (int s = 0; s < det.n_stations; ++s) {
          auto& slot = acc[{start / 8 + t, s}];
          slot.first += det.at(s, t);
          slot.second += 1;
        }
    }
    bool exact = rows.size() == acc.size();
    for (const auto& r : rows) {
      if (!exact) break;
      const int64_t idx = static_cast<int64_t>(std::llround(r.time_s * 25.0));
      auto it = acc.find({idx, r.station});
      if (it == acc.end() || r.probability != it->second.first / it->second.second)
        exact = false;
    }
    if (!exact) fails.push_back("streaming != batch evaluation");
  }

  Criterion c;
  c.name = "determinism-and-formats";
  c.pass = fails.empty();
  c.detail = fails.empty()
                 ? "same-seed checkpoints byte-identical; container and checkpoint "
                   "round-trips bit-exact; streaming detect == batch evaluation exactly"
                 : "";
  for (const auto& f : fails) c.detail += (c.detail.empty() ? "" : "; ") + f;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  std::string work_dir = "acceptance_work";
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--work-dir") work_dir = argv[i + 1];

  const auto t_start = Clock::now();
  std::vector<Criterion> results;
  try {
    results.push_back(gradient_correctness());
    results.push_back(oracle_equivalence());
    results.push_back(preprocessing_fidelity());

    PipelineArtifacts art = make_pipeline_data(work_dir, 42);
    results.push_back(overfit_capability(art));
    PipelineResults pr = pipeline_criteria(art);
    results.push_back(pr.end_to_end);
    results.push_back(pr.directional);
    results.push_back(determinism_and_formats(art));
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }

  bool all = true;
  for (const auto& c : results) {
    std::printf("[%s] %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    all = all && c.pass;
  }
  std::printf("%s (%d/%d criteria, %.0f s total)\n", all ? "ACCEPTED" : "REJECTED",
              static_cast<int>(std::count_if(results.begin(), results.end(),
                                             [](const Criterion& c) { return c.pass; })),
              static_cast<int>(results.size()), seconds_since(t_start));
  return all ? 0 : 1;
}
