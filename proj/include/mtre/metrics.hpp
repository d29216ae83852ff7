#pragma once

#include <span>
#include <string>
#include <vector>

namespace mtre {

/// Scores paired with binary labels (1 = positive / truthful).
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const;
  std::size_t positives() const;
  std::size_t negatives() const { return labels.size() - positives(); }
};

/// Mann-Whitney AUROC with midrank tie correction, O(n log n).
double auroc(const ScoredSet& set);

double f1(std::span<const int> predictions, std::span<const int> labels);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// prediction = score >= threshold
std::vector<int> threshold_predictions(std::span<const double> scores, double threshold);

/// TPR - FPR of the rule score >= threshold.
double youden_index(const ScoredSet& set, double threshold);

/// Threshold maximizing the Youden index over the observed scores and +inf,
/// ties going to the smallest threshold.
double youden_cutoff(const ScoredSet& set);

/// Step-wise average precision (area under the precision-recall curve),
/// thresholds taken at distinct scores.
double average_precision(const ScoredSet& set);

/// F1 of the rule score >= t, where t is the smallest observed score (or
/// +inf) whose false-positive rate does not exceed `target_fpr`.
double f1_at_fpr(const ScoredSet& set, double target_fpr);

}  // namespace mtre
