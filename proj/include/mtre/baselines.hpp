#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mtre/aggregation.hpp"
#include "mtre/classifier.hpp"
#include "mtre/dataset.hpp"

namespace mtre {

inline constexpr const char* kSeqLogprob = "seq_logprob";
inline constexpr const char* kFirstTokenProbe = "lp_first_token";
inline constexpr const char* kPTrue = "p_true";
inline constexpr const char* kTokenSar = "token_sar";

/// Verdict-token ids for P(True) extraction.
struct PTrueConfig {
  int true_token_id = 0;
  int false_token_id = 1;
  int answer_position = 1;

  void validate(int vocab_size) const;
};

/// Mean chosen-token log-probability over the first min(T, t_cap) tokens.
double seq_logprob(const SentenceRecord& record, int t_cap = kDefaultTokenCap);

/// exp(a) / (exp(a) + exp(b)) for the true/false verdict logits.
double p_true_score(const SentenceRecord& record, const PTrueConfig& config);

/// Relevance-weighted chosen-token NLL. Higher means less reliable. Missing
/// relevance falls back to uniform weights.
double token_sar(const SentenceRecord& record, int t_cap = kDefaultTokenCap);

/// Whether larger raw scores of `method` indicate a more reliable response.
bool higher_is_reliable(std::string_view method);

/// Raw score re-oriented so that larger always means more reliable.
double reliability_score(std::string_view method, double score);

struct FirstTokenProbe {
  ReliabilityHead head;
  double threshold = 0.0;  // Youden cutoff on training scores
  std::vector<DetectionResult> results;
};

/// Logistic-regression probe on position-1 logits only.
FirstTokenProbe first_token_probe(const std::vector<SentenceRecord>& train_records,
                                  const std::vector<SentenceRecord>& eval_records,
                                  const TrainConfig& config);

/// Scores every record with one of the training-free baselines
/// (seq_logprob, p_true, token_sar); decisions are left empty.
std::vector<DetectionResult> score_records(std::string_view method,
                                           const std::vector<SentenceRecord>& records, int t_cap,
                                           const PTrueConfig* p_true = nullptr);

/// Youden cutoff of the oriented training scores, applied to `results`.
/// Returns the cutoff (in oriented units).
double apply_youden_decisions(std::string_view method, const std::vector<DetectionResult>& train,
                              const std::vector<int>& train_labels,
                              std::vector<DetectionResult>& results);

}  // namespace mtre
