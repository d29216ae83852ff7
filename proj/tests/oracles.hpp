#pragma once

// Slow, independent reference implementations used to check the library.
// Nothing here calls into the code under test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "mtre/dataset.hpp"

namespace oracle {

inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// J scaled by (positives * negatives), so ties compare exactly.
inline long youden_scaled(const std::vector<double>& scores, const std::vector<int>& labels,
                          double threshold) {
  long tp = 0, fp = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      ++pos;
      tp += pred;
    } else {
      ++neg;
      fp += pred;
    }
  }
  return tp * neg - fp * pos;
}

// Every distinct score plus +inf; highest J wins, ties go to the smallest threshold.
inline double youden_scan(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::vector<double> candidates = scores;
  candidates.push_back(std::numeric_limits<double>::infinity());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best = candidates.back();
  long best_j = youden_scaled(scores, labels, best);
  for (double c : candidates) {
    const long j = youden_scaled(scores, labels, c);
    if (j > best_j || (j == best_j && c < best)) {
      best = c;
      best_j = j;
    }
  }
  return best;
}

inline std::vector<long double> softmax_row(const mtre::LogitMatrix& logits, int row) {
  std::vector<long double> p(static_cast<std::size_t>(logits.cols()));
  long double mx = logits(row, 0);
  for (Eigen::Index v = 0; v < logits.cols(); ++v) mx = std::max<long double>(mx, logits(row, v));
  long double z = 0;
  for (Eigen::Index v = 0; v < logits.cols(); ++v) {
    p[static_cast<std::size_t>(v)] = std::exp(static_cast<long double>(logits(row, v)) - mx);
    z += p[static_cast<std::size_t>(v)];
  }
  for (auto& x : p) x /= z;
  return p;
}

inline long double kl(const std::vector<long double>& p, const std::vector<long double>& q) {
  long double total = 0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] > 0) total += p[v] * std::log(p[v] / q[v]);
  }
  return total;
}

struct NaiveCurve {
  std::vector<std::optional<double>> values;
  std::vector<long> pairs;
};

// Pair-by-pair mean KL(first || second) at each position, first = label `first_label`.
inline NaiveCurve kl_curve(const std::vector<mtre::SentenceRecord>& records, int t_cap,
                           int first_label) {
  NaiveCurve out;
  for (int t = 1; t <= t_cap; ++t) {
    long double sum = 0;
    long pairs = 0;
    for (const auto& a : records) {
      if (a.label != first_label || a.num_tokens() < t) continue;
      const auto p = softmax_row(a.logits, t - 1);
      for (const auto& b : records) {
        if (b.label == first_label || b.num_tokens() < t) continue;
        sum += kl(p, softmax_row(b.logits, t - 1));
        ++pairs;
      }
    }
    out.pairs.push_back(pairs);
    out.values.push_back(pairs ? std::optional<double>(static_cast<double>(sum / pairs)) : std::nullopt);
  }
  return out;
}

struct Stop {
  double evidence;
  int tau;
};

// Literal replay of the sequential rule.
inline Stop early_stop(const std::vector<double>& llrs, double c_u, double c_b, int t_max) {
  const int limit = std::min<int>(t_max, static_cast<int>(llrs.size()));
  double running = 0.0;
  for (int t = 1; t <= limit; ++t) {
    running += llrs[static_cast<std::size_t>(t - 1)];
    if (running >= c_u || running <= c_b) return {running, t};
  }
  return {running, limit};
}

// Mean logistic loss of z / c against labels, written from scratch.
inline double temperature_loss(const std::vector<double>& z, const std::vector<int>& y, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double m = (y[i] == 1 ? 1.0 : -1.0) * z[i] / c;
    total += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return total / static_cast<double>(z.size());
}

inline double temperature_scan(const std::vector<double>& z, const std::vector<int>& y,
                               int points = 500) {
  const double lo = std::log(1e-3), hi = std::log(1e3);
  double best_c = 1.0, best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < points; ++i) {
    const double c = std::exp(lo + (hi - lo) * i / (points - 1));
    const double v = temperature_loss(z, y, c);
    if (v < best) {
      best = v;
      best_c = c;
    }
  }
  return best_c;
}

// Central differences of f around x.
template <typename F>
Eigen::VectorXd numeric_gradient(F&& f, Eigen::VectorXd x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

}  // namespace oracle
