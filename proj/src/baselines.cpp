#include "mtre/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "mtre/divergence.hpp"
#include "mtre/error.hpp"
#include "mtre/log.hpp"
#include "mtre/metrics.hpp"

namespace mtre {
namespace {

double chosen_log_prob(const SentenceRecord& record, int row) {
  const Eigen::VectorXd lp = log_softmax(record.logits.row(row).transpose().cast<double>());
  return lp(record.token_ids.at(static_cast<std::size_t>(row)));
}

void require_token_ids(const SentenceRecord& record) {
  if (static_cast<int>(record.token_ids.size()) != record.num_tokens()) {
    throw DataError("sentence '" + record.id + "': token_ids missing or incomplete");
  }
}

}  // namespace

void PTrueConfig::validate(int vocab_size) const {
  if (true_token_id < 0 || true_token_id >= vocab_size || false_token_id < 0 ||
      false_token_id >= vocab_size) {
    throw ConfigError("p_true: token ids must lie in [0, vocab_size)");
  }
  if (true_token_id == false_token_id) throw ConfigError("p_true: true and false token ids must differ");
  if (answer_position < 1) throw ConfigError("p_true: answer_position must be >= 1");
}

double seq_logprob(const SentenceRecord& record, int t_cap) {
  require_token_ids(record);
  if (t_cap < 1) throw ConfigError("t_cap must be >= 1");
  const int len = std::min(record.num_tokens(), t_cap);
  double total = 0.0;
  for (int t = 0; t < len; ++t) total += chosen_log_prob(record, t);
  return total / len;
}

double p_true_score(const SentenceRecord& record, const PTrueConfig& config) {
  config.validate(static_cast<int>(record.logits.cols()));
  if (config.answer_position > record.num_tokens()) {
    throw ConfigError("sentence '" + record.id + "': answer_position " +
                      std::to_string(config.answer_position) + " beyond its " +
                      std::to_string(record.num_tokens()) + " tokens");
  }
  const int row = config.answer_position - 1;
  const double a = record.logits(row, config.true_token_id);
  const double b = record.logits(row, config.false_token_id);
  // Negative differences are mirrored so that swapping the ids gives exactly 1 - score.
  const double d = a - b;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  return 1.0 - 1.0 / (1.0 + std::exp(d));
}

double token_sar(const SentenceRecord& record, int t_cap) {
  require_token_ids(record);
  if (t_cap < 1) throw ConfigError("t_cap must be >= 1");
  const int len = std::min(record.num_tokens(), t_cap);
  std::vector<double> weights(static_cast<std::size_t>(len), 1.0);
  if (record.relevance) {
    std::copy_n(record.relevance->begin(), len, weights.begin());
  } else {
    logger().debug("token_sar: sentence '{}' has no relevance weights; using uniform", record.id);
  }
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  if (!(weight_sum > 0.0)) {
    throw DataError("sentence '" + record.id + "': relevance is all zero over the scored tokens");
  }
  double score = 0.0;
  for (int t = 0; t < len; ++t) {
    score += (weights[static_cast<std::size_t>(t)] / weight_sum) * -chosen_log_prob(record, t);
  }
  return score;
}

bool higher_is_reliable(std::string_view method) {
  if (method == kTokenSar) return false;
  if (method == kSeqLogprob || method == kPTrue || method == kFirstTokenProbe || method == "mtre" ||
      method == "mtre_tau") {
    return true;
  }
  throw ConfigError("unknown method '" + std::string(method) + "'");
}

double reliability_score(std::string_view method, double score) {
  return higher_is_reliable(method) ? score : -score;
}

FirstTokenProbe first_token_probe(const std::vector<SentenceRecord>& train_records,
                                  const std::vector<SentenceRecord>& eval_records,
                                  const TrainConfig& config) {
  std::vector<TokenExample> examples;
  examples.reserve(train_records.size());
  for (const auto& r : train_records) {
    examples.push_back({r.logits.row(0).transpose().cast<double>(), r.label, r.id, 1});
  }
  TrainResult trained = train_reliability_head(examples, config, HeadKind::probe);

  ScoredSet train_set;
  for (const auto& r : train_records) {
    train_set.scores.push_back(predict_token(trained.head, r.logits.row(0).transpose().cast<double>()));
    train_set.labels.push_back(r.label);
  }
  const double threshold = youden_cutoff(train_set);

  FirstTokenProbe out{trained.head, threshold, {}};
  for (const auto& r : eval_records) {
    const double p = predict_token(trained.head, r.logits.row(0).transpose().cast<double>());
    out.results.push_back({r.id, kFirstTokenProbe, p, decide(p, threshold), std::nullopt});
  }
  return out;
}

std::vector<DetectionResult> score_records(std::string_view method,
                                           const std::vector<SentenceRecord>& records, int t_cap,
                                           const PTrueConfig* p_true) {
  std::vector<DetectionResult> out;
  out.reserve(records.size());
  std::size_t uniform = 0;
  for (const auto& r : records) {
    if (method == kTokenSar && !r.relevance) ++uniform;
    double score = 0.0;
    if (method == kSeqLogprob) {
      score = seq_logprob(r, t_cap);
    } else if (method == kTokenSar) {
      score = token_sar(r, t_cap);
    } else if (method == kPTrue) {
      if (p_true == nullptr) throw ConfigError("p_true requires true/false token ids");
      score = p_true_score(r, *p_true);
    } else {
      throw ConfigError("score_records: unsupported method '" + std::string(method) + "'");
    }
    out.push_back({r.id, std::string(method), score, std::nullopt, std::nullopt});
  }
  if (uniform > 0) {
    logger().warn("token_sar: {} of {} sentences have no relevance weights; using uniform", uniform,
                  records.size());
  }
  return out;
}

double apply_youden_decisions(std::string_view method, const std::vector<DetectionResult>& train,
                              const std::vector<int>& train_labels,
                              std::vector<DetectionResult>& results) {
  ScoredSet set;
  set.labels = train_labels;
  for (const auto& r : train) set.scores.push_back(reliability_score(method, r.score));
  const double threshold = youden_cutoff(set);
  for (auto& r : results) r.decision = decide(reliability_score(method, r.score), threshold);
  return threshold;
}

}  // namespace mtre
