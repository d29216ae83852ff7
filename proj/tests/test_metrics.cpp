#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "mtre/error.hpp"
#include "mtre/metrics.hpp"

using namespace mtre;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ScoredSet random_set(std::mt19937_64& gen, int max_n, bool ties) {
  ScoredSet s;
  const int n = 2 + static_cast<int>(gen() % static_cast<std::uint64_t>(max_n - 1));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    s.scores.push_back(ties ? std::round(nd(gen) * 2.0) / 2.0 : nd(gen));
    s.labels.push_back(static_cast<int>(gen() % 2));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  return s;
}

}  // namespace

TEST_CASE("auroc examples") {
  CHECK(auroc({{0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}}) == 0.75);
  CHECK(auroc({{2, 2, 2, 2, 2}, {1, 0, 1, 0, 0}}) == 0.5);
  CHECK(auroc({{0.1, 0.2, 5, 6}, {0, 0, 1, 1}}) == 1.0);
  CHECK_THROWS_AS(auroc({{1, 2}, {1, 1}}), ConfigError);
  CHECK_THROWS_AS(auroc({{1, 2}, {1}}), ConfigError);
}

TEST_CASE("auroc agrees with pair counting") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_set(gen, 40, trial % 2 == 0);
    CHECK(std::abs(auroc(s) - oracle::auroc(s.scores, s.labels)) <= 1e-12);
  }
}

TEST_CASE("auroc is rank based") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = random_set(gen, 30, false);
    const double base = auroc(s);
    ScoredSet t = s;
    for (auto& x : t.scores) x = std::exp(3.0 * x) + 7.0;
    CHECK(auroc(t) == doctest::Approx(base).epsilon(1e-12));
    for (auto& x : t.scores) x = -x;
    CHECK(auroc(t) + base == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("f1 and accuracy") {
  const std::vector<int> y{1, 0, 1, 1, 0};
  CHECK(f1(y, y) == 1.0);
  CHECK(f1(std::vector<int>{0, 0, 0}, std::vector<int>{0, 0, 0}) == 0.0);
  // TP=1, FP=1, FN=1.
  CHECK(f1(std::vector<int>{1, 1, 0}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK(accuracy(y, y) == 1.0);
  CHECK(accuracy(std::vector<int>{1, 0}, std::vector<int>{0, 1}) == 0.0);
  CHECK(accuracy(std::vector<int>{1, 0, 1, 0}, std::vector<int>{1, 0, 0, 1}) == 0.5);
  CHECK_THROWS(accuracy(std::vector<int>{}, std::vector<int>{}));
  CHECK_THROWS(f1(std::vector<int>{1}, std::vector<int>{1, 0}));
}

TEST_CASE("youden cutoff examples") {
  CHECK(youden_cutoff({{0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}}) == 0.8);
  CHECK(youden_cutoff({{3, 3, 3}, {1, 0, 1}}) == 3.0);
  // Anti-correlated scores: J=0 is the best reachable, attained both by 0.1
  // (everything positive) and by +inf; ties go to the smaller threshold.
  const ScoredSet anti{{0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}};
  CHECK(youden_index(anti, kInf) == 0.0);
  CHECK(youden_index(anti, 0.1) == 0.0);
  CHECK(youden_cutoff(anti) == oracle::youden_scan(anti.scores, anti.labels));
  CHECK(youden_cutoff(anti) == 0.1);
}

TEST_CASE("youden cutoff matches the exhaustive scan") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_set(gen, 25, trial % 3 == 0);
    const double cut = youden_cutoff(s);
    CHECK(cut == oracle::youden_scan(s.scores, s.labels));
    const double j = youden_index(s, cut);
    for (double c : s.scores) CHECK(j >= youden_index(s, c) - 1e-12);
  }
}

TEST_CASE("threshold predictions use greater-or-equal") {
  const std::vector<double> s{0.1, 0.5, 0.7};
  CHECK(threshold_predictions(s, 0.5) == std::vector<int>{0, 1, 1});
  CHECK(threshold_predictions(s, kInf) == std::vector<int>{0, 0, 0});
}

TEST_CASE("average precision") {
  CHECK(average_precision({{0.9, 0.8, 0.1}, {1, 1, 0}}) == 1.0);
  // Ranking: 1 (pos), 0.5 (neg), 0.2 (pos) -> precision 1 at rank 1 and 2/3 at rank 3.
  CHECK(average_precision({{1.0, 0.5, 0.2}, {1, 0, 1}}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
}

TEST_CASE("f1 at a false-positive budget") {
  // Perfect separation reaches F1 = 1 without any false positive.
  CHECK(f1_at_fpr({{0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}}, 0.1) == 1.0);
  // Oracle: the smallest candidate threshold whose FPR stays within budget.
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_set(gen, 20, trial % 2 == 0);
    const double budget = 0.25;
    double chosen = kInf;
    for (double c : s.scores) {
      const auto pred = threshold_predictions(s.scores, c);
      double fp = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) fp += pred[i] == 1 && s.labels[i] == 0;
      if (fp / static_cast<double>(s.negatives()) <= budget) chosen = std::min(chosen, c);
    }
    const double best = f1(threshold_predictions(s.scores, chosen), s.labels);
    CHECK(f1_at_fpr(s, budget) == doctest::Approx(best).epsilon(1e-12));
  }
}
