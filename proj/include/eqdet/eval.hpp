#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "eqdet/detector.hpp"
#include "eqdet/preprocess.hpp"
#include "eqdet/tensor.hpp"

namespace eqdet {

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending: (0,0) ... (1,1)
  double auc = 0.0;
};

// ROC by sweeping the distinct scores as thresholds (classification rule:
// positive iff score > threshold), plus a final below-minimum threshold so
// the curve reaches (1,1). AUC by trapezoidal integration over FPR.
inline RocCurve roc_curve(const std::vector<double>& scores,
                          const std::vector<int>& labels) {
  check_arg(scores.size() == labels.size(), "roc_curve: scores/labels size mismatch");
  check_arg(!scores.empty(), "roc_curve: empty input");
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    check_arg(y == 0 || y == 1, "roc_curve: labels must be 0 or 1");
    (y == 1 ? n_pos : n_neg) += 1;
  }
  check_arg(n_pos > 0 && n_neg > 0,
            "roc_curve: need at least one positive and one negative label");

  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&scores](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    // threshold at this score: positives are the strictly greater ones seen so far
    curve.points.push_back({scores[order[i]], static_cast<double>(fp) / n_neg,
                            static_cast<double>(tp) / n_pos});
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
  }
  const double vmin = scores[order.back()];
  curve.points.push_back({vmin - 1.0, 1.0, 1.0});

  double auc = 0.0;
  for (size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint& a = curve.points[k - 1];
    const RocPoint& b = curve.points[k];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

struct RateCounts {
  std::optional<double> tpr;  // empty when there are no positives
  std::optional<double> fpr;  // empty when there are no negatives
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

// Per-timestep classification at a minimum detection probability: predicted
// positive iff prob > mdp (strict).
inline RateCounts tpr_fpr_at_mdp(const std::vector<double>& probs,
                                 const std::vector<int>& labels, double mdp) {
  check_arg(probs.size() == labels.size(), "tpr_fpr_at_mdp: size mismatch");
  check_arg(mdp >= 0.0 && mdp <= 1.0, "tpr_fpr_at_mdp: mdp must be in [0,1]");
  RateCounts r;
  for (size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] > mdp;
    if (labels[i] == 1)
      (pred ? r.tp : r.fn) += 1;
    else
      (pred ? r.fp : r.tn) += 1;
  }
  if (r.tp + r.fn > 0) r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.fp + r.tn > 0) r.fpr = static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn);
  return r;
}

// Flattens detection series and label series over all stations/timesteps.
inline void flatten_scores(const std::vector<DetectionSeries>& det,
                           const std::vector<LabelSeries>& lab,
                           std::vector<double>& scores, std::vector<int>& labels) {
  check_arg(det.size() == lab.size(), "flatten_scores: series count mismatch");
  for (size_t w = 0; w < det.size(); ++w) {
    check_arg(det[w].n_stations == lab[w].n_stations &&
                  det[w].n_samples == lab[w].n_samples,
              "flatten_scores: window shape mismatch");
    for (size_t i = 0; i < det[w].probs.size(); ++i) {
      scores.push_back(det[w].probs[i]);
      labels.push_back(lab[w].labels[i]);
    }
  }
}

// The threshold whose (FPR, TPR) point lies nearest the ideal (0, 1) corner;
// ties go to the higher threshold.
inline RocPoint optimal_mdp(const RocCurve& curve) {
  check_arg(!curve.points.empty(), "optimal_mdp: empty curve");
  const RocPoint* best = &curve.points[0];
  double best_d2 = best->fpr * best->fpr + (1.0 - best->tpr) * (1.0 - best->tpr);
  for (const RocPoint& p : curve.points) {
    const double d2 = p.fpr * p.fpr + (1.0 - p.tpr) * (1.0 - p.tpr);
    if (d2 < best_d2 - 1e-15 ||
        (std::abs(d2 - best_d2) <= 1e-15 && p.threshold > best->threshold)) {
      best = &p;
      best_d2 = d2;
    }
  }
  return *best;
}

}  // namespace eqdet
