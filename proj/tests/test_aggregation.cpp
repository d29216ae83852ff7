#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "mtre/aggregation.hpp"
#include "mtre/error.hpp"

using namespace mtre;
using testing::make_record;

namespace {

ReliabilityHead random_probe(int dim, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, scale);
  auto head = ReliabilityHead::make_probe(dim);
  head.set_parameters(Eigen::VectorXd::NullaryExpr(dim + 1, [&] { return nd(gen); }));
  return head;
}

}  // namespace

TEST_CASE("token log-likelihood ratio") {
  CHECK(token_llr(0.5) == 0.0);
  const double s2 = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(token_llr(s2) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(token_llr(0.9) == doctest::Approx(2.197225).epsilon(1e-6));
  CHECK(std::abs(token_llr(1.0 - kProbClamp)) < 13.82);
  CHECK_THROWS_AS(token_llr(1.0), ConfigError);
  CHECK_THROWS_AS(token_llr(0.0), ConfigError);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int i = 0; i < 100; ++i) {
    const double p = u(gen);
    CHECK(token_llr(1.0 - p) == doctest::Approx(-token_llr(p)).epsilon(1e-12));
  }
}

TEST_CASE("masked evidence sums") {
  const std::vector<double> zeros{0, 0, 0};
  const std::vector<int> ones{1, 1, 1};
  CHECK(aggregate_evidence(zeros, ones, 3) == 0.0);
  const std::vector<double> llrs{1.0, -0.5, 2.0};
  CHECK(aggregate_evidence(llrs, std::vector<int>{1, 1, 0}, 3) == 0.5);
  CHECK(aggregate_evidence(llrs, std::vector<int>{0, 0, 0}, 3) == 0.0);
  CHECK_THROWS(aggregate_evidence(llrs, ones, 4));
}

TEST_CASE("evidence prefix consistency") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(gen() % 12);
    std::vector<double> llrs(static_cast<std::size_t>(n));
    std::vector<int> mask(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      llrs[static_cast<std::size_t>(t)] = nd(gen);
      mask[static_cast<std::size_t>(t)] = static_cast<int>(gen() % 3 != 0);
    }
    for (int t = 2; t <= n; ++t) {
      const double step = aggregate_evidence(llrs, mask, t) - aggregate_evidence(llrs, mask, t - 1);
      const auto i = static_cast<std::size_t>(t - 1);
      CHECK(step == doctest::Approx(mask[i] * llrs[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("MAP decision") {
  CHECK(decide(0.0, 0.0) == 1);
  CHECK(decide(-0.0001, 0.0) == 0);
  CHECK(decide(5.0, 10.0) == 0);
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int i = 0; i < 200; ++i) {
    const double l = nd(gen);
    for (double c : {1e-3, 0.5, 7.0, 1e6}) CHECK(decide(c * l) == decide(l));
  }
}

TEST_CASE("neutral head gives zero evidence and a truthful decision") {
  const auto head = ReliabilityHead::make_probe(5);
  const auto r = make_record("n", 0, 7, 5, 1);
  const auto ev = classify_sentence(head, r, 10);
  CHECK(ev.result.score == 0.0);
  CHECK(ev.result.decision == 1);
  CHECK(ev.result.tau == 7);
  CHECK(ev.result.method == "mtre");
}

TEST_CASE("temperature scales the evidence") {
  const auto head = random_probe(6, 4);
  for (int i = 0; i < 30; ++i) {
    const auto r = make_record("r", i % 2, 8, 6, 100 + i);
    const auto one = classify_sentence(head, r, 10, 1.0);
    const auto two = classify_sentence(head, r, 10, 2.0);
    CHECK(two.result.score == doctest::Approx(one.result.score / 2.0).epsilon(1e-13));
    CHECK(two.result.decision == one.result.decision);
  }
  CHECK_THROWS_AS(classify_sentence(head, make_record("x", 1, 2, 6, 1), 10, 0.0), ConfigError);
}

TEST_CASE("token cap truncates the trace") {
  const auto head = random_probe(4, 5);
  const auto r = make_record("long", 1, 12, 4, 6);
  const auto ev = classify_sentence(head, r, 10);
  CHECK(ev.trace.llrs.size() == 10);
  CHECK(ev.trace.cumulative.size() == 10);
  CHECK(ev.result.tau == 10);
  auto changed = r;
  changed.logits.bottomRows(2).setConstant(40.0f);
  CHECK(classify_sentence(head, changed, 10).result == ev.result);
}

TEST_CASE("trace cumulative values match the masked prefix sums") {
  const auto head = random_probe(4, 6);
  auto r = make_record("m", 1, 6, 4, 7);
  r.logits.row(2).setZero();
  const auto ev = classify_sentence(head, r, 10);
  CHECK(ev.trace.mask == std::vector<int>{1, 1, 0, 1, 1, 1});
  for (int t = 1; t <= 6; ++t) {
    CHECK(ev.trace.cumulative[static_cast<std::size_t>(t - 1)] ==
          doctest::Approx(aggregate_evidence(ev.trace.llrs, ev.trace.mask, t)).epsilon(1e-14));
  }
}

TEST_CASE("zero rows change nothing") {
  const auto head = random_probe(5, 8, 2.0);
  std::mt19937_64 gen(9);
  for (int i = 0; i < 40; ++i) {
    const int len = 1 + static_cast<int>(gen() % 12);
    const auto r = make_record("p" + std::to_string(i), i % 2, len, 5, gen());
    const auto padded = testing::pad(r, 1 + static_cast<int>(gen() % 6));
    const auto a = classify_sentence(head, r, 10);
    const auto b = classify_sentence(head, padded, 10);
    CHECK(a.result == b.result);
  }
}

TEST_CASE("flipping every probability negates the evidence") {
  const auto head = random_probe(5, 10);
  auto flipped = head;
  flipped.set_parameters(-head.parameters());
  for (int i = 0; i < 20; ++i) {
    const auto r = make_record("f", 1, 9, 5, 200 + i);
    CHECK(classify_sentence(flipped, r, 10).result.score ==
          doctest::Approx(-classify_sentence(head, r, 10).result.score).epsilon(1e-9));
  }
}

TEST_CASE("batch classification matches one-by-one and results round-trip") {
  const auto head = random_probe(4, 11);
  std::vector<SentenceRecord> rs;
  for (int i = 0; i < 25; ++i) rs.push_back(make_record("s" + std::to_string(i), i % 2, 1 + i % 11, 4, i));
  const auto batch = classify_sentences(head, rs, 10, 1.3, 0.0, 4);
  std::vector<DetectionResult> results;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(batch[i].result == classify_sentence(head, rs[i], 10, 1.3).result);
    results.push_back(batch[i].result);
  }
  results[3].decision.reset();
  results[4].tau.reset();
  testing::TempDir dir;
  write_results_jsonl(results, dir / "r.jsonl");
  CHECK(read_results_jsonl(dir / "r.jsonl") == results);
}
