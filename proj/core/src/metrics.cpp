#include "geomae/metrics.hpp"

#include <cmath>

namespace geomae {

Index ConfusionMatrix::total() const {
  Index n = 0;
  for (Index c : counts) n += c;
  return n;
}

ConfusionMatrix confusion(const std::vector<Index>& pred, const std::vector<Index>& truth,
                          Index n_classes) {
  GEOMAE_CHECK(pred.size() == truth.size(), "confusion: prediction/truth length mismatch");
  GEOMAE_CHECK(n_classes > 0, "confusion: need at least one class");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Index p = pred[i], t = truth[i];
    GEOMAE_CHECK(p >= 0 && p < n_classes && t >= 0 && t < n_classes,
                 "confusion: label out of range at position " + std::to_string(i));
    cm.at(t, p) += 1;
  }
  return cm;
}

ClassificationScores scores(const ConfusionMatrix& cm, bool include_zero_support) {
  GEOMAE_CHECK(cm.total() > 0, "scores: empty confusion matrix");
  const Index k = cm.n_classes;
  ClassificationScores s;
  s.per_class_iou.assign(static_cast<std::size_t>(k), 0.0);
  s.per_class_f1.assign(static_cast<std::size_t>(k), 0.0);

  Index diag = 0;
  double weighted_f1_acc = 0.0;
  Index support_total = 0;
  double iou_sum = 0.0, f1_sum = 0.0, prec_sum = 0.0, rec_sum = 0.0;
  Index counted = 0;

  for (Index c = 0; c < k; ++c) {
    const Index tp = cm.at(c, c);
    diag += tp;
    Index fp = 0, fn = 0;
    for (Index o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    const Index support = tp + fn;
    const double iou = (tp + fp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp + fn) : 0.0;
    const double f1 = (2 * tp + fp + fn) > 0 ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn) : 0.0;
    const double prec = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = support > 0 ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    s.per_class_iou[static_cast<std::size_t>(c)] = iou;
    s.per_class_f1[static_cast<std::size_t>(c)] = f1;
    weighted_f1_acc += static_cast<double>(support) * f1;
    support_total += support;
    if (support > 0 || include_zero_support) {
      iou_sum += iou;
      f1_sum += f1;
      prec_sum += prec;
      rec_sum += rec;
      ++counted;
    }
  }
  GEOMAE_CHECK(counted > 0, "scores: no class has support");
  s.overall_acc = static_cast<double>(diag) / static_cast<double>(cm.total());
  s.miou = iou_sum / static_cast<double>(counted);
  s.macro_f1 = f1_sum / static_cast<double>(counted);
  s.weighted_f1 = support_total > 0 ? weighted_f1_acc / static_cast<double>(support_total) : 0.0;
  s.precision = prec_sum / static_cast<double>(counted);
  s.recall = rec_sum / static_cast<double>(counted);
  return s;
}

RegressionScores regression_scores(const std::vector<double>& pred,
                                   const std::vector<double>& truth) {
  GEOMAE_CHECK(pred.size() == truth.size(), "regression_scores: length mismatch");
  GEOMAE_CHECK(pred.size() >= 2, "regression_scores: need at least two samples");
  const double n = static_cast<double>(pred.size());
  double se = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    se += d * d;
    mean += truth[i];
  }
  mean /= n;
  double var = 0.0;
  for (double t : truth) var += (t - mean) * (t - mean);
  GEOMAE_CHECK(var > 0.0, "regression_scores: zero-variance truth makes R^2 undefined");
  RegressionScores s;
  s.rmse = std::sqrt(se / n);
  s.r2 = 1.0 - se / var;
  return s;
}

}  // namespace geomae
