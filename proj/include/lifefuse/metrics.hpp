#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace lifefuse {

struct Metrics {
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double auc = 0.0;
};

// Area under the ROC curve by sweeping a threshold over the distinct score
// values (ties grouped, which traces the tie segment as one diagonal step)
// and integrating TPR over FPR with the trapezoid rule. A single-class truth
// vector has no curve; 0.5 is returned for it.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("roc_auc: scores and labels differ in length");
  }
  if (scores.empty()) throw std::invalid_argument("roc_auc: empty input");
  std::size_t pos = 0;
  for (int y : labels) pos += (y != 0) ? 1u : 0u;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return 0.5;

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double tp = 0.0, fp = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double group_tp = 0.0, group_fp = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] != 0) group_tp += 1.0; else group_fp += 1.0;
      ++j;
    }
    const double tpr0 = tp / pos, fpr0 = fp / neg;
    tp += group_tp;
    fp += group_fp;
    const double tpr1 = tp / pos, fpr1 = fp / neg;
    area += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
    i = j;
  }
  return area;
}

// Thresholded counts at 0.5; a score exactly at the threshold predicts
// class 0. Precision and recall fall back to 0 when their denominator
// is empty.
inline Metrics compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("compute_metrics: scores and labels differ in length");
  }
  if (scores.empty()) throw std::invalid_argument("compute_metrics: empty input");
  Metrics m;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > 0.5;
    const bool truth = labels[i] != 0;
    if (pred && truth) ++m.true_positive;
    else if (pred && !truth) ++m.false_positive;
    else if (!pred && !truth) ++m.true_negative;
    else ++m.false_negative;
  }
  const double n = static_cast<double>(scores.size());
  m.accuracy = (m.true_positive + m.true_negative) / n;
  const std::size_t pred_pos = m.true_positive + m.false_positive;
  const std::size_t truth_pos = m.true_positive + m.false_negative;
  m.precision = pred_pos ? static_cast<double>(m.true_positive) / pred_pos : 0.0;
  m.recall = truth_pos ? static_cast<double>(m.true_positive) / truth_pos : 0.0;
  m.auc = roc_auc(scores, labels);
  return m;
}

}  // namespace lifefuse
