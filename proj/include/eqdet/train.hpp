#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "eqdet/detector.hpp"
#include "eqdet/eval.hpp"
#include "eqdet/preprocess.hpp"

namespace eqdet {

// Windowed training/evaluation set: preprocessed 25 Hz windows plus labels.
struct Dataset {
  int n_stations = 0;
  int n_samples = 0;  // P per window
  double sample_rate_hz = 25.0;
  std::vector<std::string> station_ids;
  std::vector<WaveformWindow> windows;
  std::vector<LabelSeries> labels;

  size_t size() const { return windows.size(); }
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int epochs = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  bool augment = true;
  int max_shift_samples = 125;  // 25% of the default 500-sample window
  double augment_noise_mean = 0.001;
  double positive_weight = 1.0;

  void validate() const {
    check_arg(learning_rate > 0.0, "train config: learning_rate must be > 0");
    check_arg(batch_size >= 1, "train config: batch_size must be >= 1");
    check_arg(epochs >= 1, "train config: epochs must be >= 1");
    check_arg(positive_weight > 0.0, "train config: positive_weight must be > 0");
  }
};

// Plain (non-tape) mean binary cross-entropy, the evaluation-side mirror of
// the training loss.
inline double bce_loss(const DetectionSeries& pred, const LabelSeries& target,
                       double pos_weight = 1.0) {
  check_arg(pred.n_stations == target.n_stations && pred.n_samples == target.n_samples,
            "bce_loss: prediction and target shapes differ");
  check_arg(!pred.probs.empty(), "bce_loss: empty prediction");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double s = 0.0;
  for (size_t i = 0; i < pred.probs.size(); ++i) {
    const double p = std::min(hi, std::max(lo, pred.probs[i]));
    const double y = static_cast<double>(target.labels[i]);
    s -= pos_weight * y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return s / static_cast<double>(pred.probs.size());
}

// ---------------------------------------------------------------------------
// Adam with bias correction
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<std::string> names;
  std::vector<Tensor> m, v;
  int64_t step = 0;
};

inline AdamState init_adam(ModelParams& params) {
  AdamState st;
  for_each_param(params, [&st](const std::string& name, Tensor& t) {
    st.names.push_back(name);
    st.m.push_back(Tensor::zeros(t.shape));
    st.v.push_back(Tensor::zeros(t.shape));
  });
  return st;
}

// One update over aligned parameter/gradient lists. Throws on non-finite
// gradients, naming the offending parameter.
inline void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& st, const TrainConfig& cfg) {
  check_arg(params.size() == grads.size() && params.size() == st.m.size(),
            "adam_step: parameter/gradient list size mismatch");
  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& theta = *params[p];
    const Tensor& g = grads[p];
    check_arg(theta.same_shape(g),
              "adam_step: gradient shape mismatch for " + st.names[p]);
    Tensor& m = st.m[p];
    Tensor& v = st.v[p];
    for (size_t i = 0; i < theta.v.size(); ++i) {
      const double gi = g.v[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("adam_step: non-finite gradient in " + st.names[p]);
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      theta.v[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> step_loss;   // loss of every batch, in order
};

namespace detail {

inline Tensor labels_to_target(const LabelSeries& l) {
  Tensor t = Tensor::zeros({l.n_samples, l.n_stations, 1});
  for (int s = 0; s < l.n_stations; ++s)
    for (int step = 0; step < l.n_samples; ++step)
      t.at(step, s, 0) = static_cast<double>(l.at(s, step));
  return t;
}

}  // namespace detail

// Trains a detector with Adam on mean BCE. Fully deterministic under
// cfg.seed: initialization, batch order, augmentation, and dropout all derive
// their streams from it.
inline TrainResult train(const Dataset& ds, const ModelConfig& arch,
                         const TrainConfig& cfg) {
  cfg.validate();
  check_arg(!ds.windows.empty(), "train: empty dataset");
  check_arg(ds.windows.size() == ds.labels.size(), "train: windows/labels mismatch");
  check_arg(ds.n_stations == arch.n_stations,
            "train: dataset station count does not match the architecture");

  TrainResult res;
  res.params = init_model(arch, cfg.seed);
  AdamState adam = init_adam(res.params);

  std::vector<Tensor*> param_ptrs;
  for_each_param(res.params,
                 [&param_ptrs](const std::string&, Tensor& t) { param_ptrs.push_back(&t); });

  std::vector<int> order(ds.windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.seed, 0x54FFu, static_cast<uint64_t>(epoch)));
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

    double epoch_acc = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> grad_acc;
      for (Tensor* p : param_ptrs) grad_acc.push_back(Tensor::zeros(p->shape));
      double batch_loss = 0.0;

      for (size_t bi = start; bi < stop; ++bi) {
        const int idx = order[bi];
        const WaveformWindow* w = &ds.windows[static_cast<size_t>(idx)];
        const LabelSeries* l = &ds.labels[static_cast<size_t>(idx)];
        WaveformWindow aug_w;
        LabelSeries aug_l;
        if (cfg.augment) {
          auto [aw, al] =
              augment(*w, *l, cfg.max_shift_samples,
                      mix_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x10001u + 0xA7,
                               static_cast<uint64_t>(idx)),
                      cfg.augment_noise_mean);
          aug_w = std::move(aw);
          aug_l = std::move(al);
          w = &aug_w;
          l = &aug_l;
        }

        Tape tape;
        BoundModel bound = bind_model(tape, res.params);
        Rng dropout_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch) * 0x20003u + 0xD0,
                                 static_cast<uint64_t>(idx)));
        Var probs = detector_probs(tape, bound, res.params.cfg,
                                   tape.constant(window_to_input(*w)), RunMode::kTrain,
                                   &dropout_rng);
        Var loss = bce_mean(probs, detail::labels_to_target(*l), cfg.positive_weight);
        batch_loss += tape.value(loss).v[0];
        tape.backward(loss);
        for (size_t p = 0; p < bound.registry.size(); ++p) {
          const Tensor g = tape.grad(bound.registry[p].second);
          for (size_t i = 0; i < g.v.size(); ++i) grad_acc[p].v[i] += g.v[i];
        }
      }

      const double inv = 1.0 / static_cast<double>(stop - start);
      for (Tensor& g : grad_acc)
        for (double& x : g.v) x *= inv;
      adam_step(param_ptrs, grad_acc, adam, cfg);

      batch_loss *= inv;
      res.step_loss.push_back(batch_loss);
      epoch_acc += batch_loss;
      ++n_batches;
    }
    res.epoch_loss.push_back(epoch_acc / n_batches);
  }
  return res;
}

// ---------------------------------------------------------------------------
// k-fold split and hyper-parameter grid sweep
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<int> train_idx;
  std::vector<int> val_idx;
};

inline std::vector<Fold> kfold_split(int n_items, int k, uint64_t seed) {
  check_arg(k >= 2, "kfold_split: k must be >= 2");
  check_arg(n_items >= k, "kfold_split: dataset smaller than k");
  std::vector<int> order(static_cast<size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0xF01Du));
  for (int i = n_items - 1; i > 0; --i)
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);

  std::vector<Fold> folds(static_cast<size_t>(k));
  for (int f = 0; f < k; ++f) {
    const int lo = static_cast<int>(static_cast<int64_t>(n_items) * f / k);
    const int hi = static_cast<int>(static_cast<int64_t>(n_items) * (f + 1) / k);
    for (int i = 0; i < n_items; ++i) {
      if (i >= lo && i < hi)
        folds[static_cast<size_t>(f)].val_idx.push_back(order[static_cast<size_t>(i)]);
      else
        folds[static_cast<size_t>(f)].train_idx.push_back(order[static_cast<size_t>(i)]);
    }
  }
  return folds;
}

inline Dataset subset(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.n_stations = ds.n_stations;
  out.n_samples = ds.n_samples;
  out.sample_rate_hz = ds.sample_rate_hz;
  out.station_ids = ds.station_ids;
  for (int i : idx) {
    out.windows.push_back(ds.windows[static_cast<size_t>(i)]);
    out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
  }
  return out;
}

// Pooled AUC of a model over a dataset.
inline double evaluate_auc(const ModelParams& params, const Dataset& ds) {
  std::vector<DetectionSeries> det;
  det.reserve(ds.windows.size());
  for (const auto& w : ds.windows) det.push_back(detector_forward(w, params));
  std::vector<double> scores;
  std::vector<int> labels;
  flatten_scores(det, ds.labels, scores, labels);
  return roc_curve(scores, labels).auc;
}

struct SweepPoint {
  int n_layers;
  int hidden_dim;
  int k_order;
  double learning_rate;
  int batch_size;
};

struct SweepResult {
  SweepPoint point;
  double mean_val_auc = 0.0;
  std::vector<double> fold_aucs;
};

struct SweepSpace {
  std::vector<int> n_layers{2};
  std::vector<int> hidden_dim{8};
  std::vector<int> k_order{2};
  std::vector<double> learning_rate{1e-3};
  std::vector<int> batch_size{8};
};

// Exhaustive grid over the swept knobs, each point scored by k-fold
// cross-validated AUC. Results come back sorted best first; ties keep grid
// order, so ranking is deterministic under the seed.
inline std::vector<SweepResult> grid_sweep(const Dataset& ds, const ModelConfig& base_arch,
                                           const TrainConfig& base_cfg,
                                           const SweepSpace& space, int k_folds = 5) {
  check_arg(!space.n_layers.empty() && !space.hidden_dim.empty() &&
                !space.k_order.empty() && !space.learning_rate.empty() &&
                !space.batch_size.empty(),
            "grid_sweep: empty sweep space");
  std::vector<Fold> folds =
      kfold_split(static_cast<int>(ds.size()), k_folds, base_cfg.seed);

  std::vector<SweepResult> results;
  for (int nl : space.n_layers)
    for (int hd : space.hidden_dim)
      for (int ko : space.k_order)
        for (double lr : space.learning_rate)
          for (int bs : space.batch_size) {
            SweepResult r;
            r.point = {nl, hd, ko, lr, bs};
            for (const Fold& fold : folds) {
              ModelConfig arch = base_arch;
              arch.n_layers = nl;
              arch.hidden_dim = hd;
              arch.k_order = ko;
              TrainConfig cfg = base_cfg;
              cfg.learning_rate = lr;
              cfg.batch_size = bs;
              const Dataset train_ds = subset(ds, fold.train_idx);
              const Dataset val_ds = subset(ds, fold.val_idx);
              TrainResult tr = train(train_ds, arch, cfg);
              r.fold_aucs.push_back(evaluate_auc(tr.params, val_ds));
            }
            r.mean_val_auc = 0.0;
            for (double a : r.fold_aucs) r.mean_val_auc += a;
            r.mean_val_auc /= static_cast<double>(r.fold_aucs.size());
            results.push_back(std::move(r));
          }
  std::stable_sort(results.begin(), results.end(),
                   [](const SweepResult& a, const SweepResult& b) {
                     return a.mean_val_auc > b.mean_val_auc;
                   });
  return results;
}

}  // namespace eqdet
