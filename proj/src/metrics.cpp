#include "mtre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mtre/error.hpp"

namespace mtre {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_both_labels(const ScoredSet& set, const char* what) {
  set.validate();
  if (set.positives() == 0 || set.negatives() == 0) {
    throw ConfigError(std::string(what) + " needs both labels present");
  }
}

}  // namespace

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) throw ConfigError("scores and labels differ in length");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("non-finite score");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ConfigError("labels must be 0 or 1");
  }
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

double auroc(const ScoredSet& set) {
  require_both_labels(set, "auroc");
  const std::size_t n = set.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });

  // Twice the midrank keeps everything in exact integer arithmetic.
  double rank2_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && set.scores[order[j]] == set.scores[order[i]]) ++j;
    const double twice_midrank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (set.labels[order[k]] == 1) rank2_sum += twice_midrank;
    }
    i = j;
  }
  const auto pos = static_cast<double>(set.positives());
  const auto neg = static_cast<double>(set.negatives());
  const double u2 = rank2_sum - pos * (pos + 1.0);
  return u2 / (2.0 * pos * neg);
}

double f1(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ConfigError("f1: length mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    tp += predictions[i] == 1 && labels[i] == 1;
    fp += predictions[i] == 1 && labels[i] == 0;
    fn += predictions[i] == 0 && labels[i] == 1;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ConfigError("accuracy: length mismatch");
  if (labels.empty()) throw ConfigError("accuracy of an empty sequence");
  long hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> threshold_predictions(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

double youden_index(const ScoredSet& set, double threshold) {
  require_both_labels(set, "youden_index");
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    if (set.scores[i] >= threshold) (set.labels[i] == 1 ? tp : fp) += 1;
  }
  return static_cast<double>(tp) / static_cast<double>(set.positives()) -
         static_cast<double>(fp) / static_cast<double>(set.negatives());
}

double youden_cutoff(const ScoredSet& set) {
  require_both_labels(set, "youden_cutoff");
  const std::size_t n = set.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });

  const auto pos = static_cast<long>(set.positives());
  const auto neg = static_cast<long>(set.negatives());
  // Sweep thresholds from +inf downwards; J is compared as tp*neg - fp*pos
  // to avoid rounding in ties.
  long tp = 0, fp = 0;
  long best_num = 0;
  double best = kInf;
  std::size_t i = 0;
  while (i < n) {
    const double thr = set.scores[order[i]];
    while (i < n && set.scores[order[i]] == thr) {
      (set.labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    const long num = tp * neg - fp * pos;
    if (num >= best_num) {  // later thresholds are smaller, so >= prefers them
      best_num = num;
      best = thr;
    }
  }
  return best;
}

double average_precision(const ScoredSet& set) {
  require_both_labels(set, "average_precision");
  const std::size_t n = set.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  const auto pos = static_cast<double>(set.positives());
  long tp = 0, fp = 0;
  double ap = 0.0, prev_recall = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const double thr = set.scores[order[i]];
    while (i < n && set.scores[order[i]] == thr) {
      (set.labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double f1_at_fpr(const ScoredSet& set, double target_fpr) {
  require_both_labels(set, "f1_at_fpr");
  const std::size_t n = set.scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] > set.scores[b]; });
  const auto pos = static_cast<long>(set.positives());
  const auto neg = static_cast<double>(set.negatives());
  // FPR only grows as the threshold sweeps down, so the last admissible
  // threshold is the smallest one.
  long tp = 0, fp = 0, best_tp = 0, best_fp = 0;
  std::size_t i = 0;
  while (i < n) {
    const double thr = set.scores[order[i]];
    while (i < n && set.scores[order[i]] == thr) {
      (set.labels[order[i]] == 1 ? tp : fp) += 1;
      ++i;
    }
    if (static_cast<double>(fp) / neg > target_fpr) break;
    best_tp = tp;
    best_fp = fp;
  }
  const long denom = 2 * best_tp + best_fp + (pos - best_tp);
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(best_tp) / static_cast<double>(denom);
}

}  // namespace mtre
