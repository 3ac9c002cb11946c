#pragma once

#include <map>
#include <string>
#include <vector>

#include "geomae/tensor.hpp"

namespace geomae {

/// Rows are truth, columns are prediction.
struct ConfusionMatrix {
  Index n_classes = 0;
  std::vector<Index> counts;  // row-major [n_classes, n_classes]

  explicit ConfusionMatrix(Index n)
      : n_classes(n), counts(static_cast<std::size_t>(n * n), 0) {}
  Index& at(Index truth, Index pred) { return counts[static_cast<std::size_t>(truth * n_classes + pred)]; }
  Index at(Index truth, Index pred) const { return counts[static_cast<std::size_t>(truth * n_classes + pred)]; }
  Index total() const;
};

ConfusionMatrix confusion(const std::vector<Index>& pred, const std::vector<Index>& truth,
                          Index n_classes);

struct ClassificationScores {
  double overall_acc = 0.0;
  std::vector<double> per_class_iou;
  double miou = 0.0;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double precision = 0.0;  // macro over supported classes
  double recall = 0.0;
};

/// IoU_c = TP/(TP+FP+FN), F1_c = 2TP/(2TP+FP+FN); weighted F1 weights by
/// true-class support. Classes without support are excluded from macro
/// averages unless include_zero_support, which counts them as zero.
ClassificationScores scores(const ConfusionMatrix& cm, bool include_zero_support = false);

struct RegressionScores {
  double rmse = 0.0;
  double r2 = 0.0;
};

RegressionScores regression_scores(const std::vector<double>& pred,
                                   const std::vector<double>& truth);

}  // namespace geomae
