#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtre/classifier.hpp"
#include "mtre/dataset.hpp"
#include "mtre/error.hpp"

namespace mtre {

/// Per-token evidence for one sentence. `llrs` are already divided by the
/// temperature; `cumulative` is their masked prefix sum.
struct EvidenceTrace {
  std::vector<double> llrs;
  std::vector<double> cumulative;
  std::vector<int> mask;
  int tau = 1;
  int decision = 0;
};

/// Uniform result record shared by MTRE and the baselines.
struct DetectionResult {
  std::string sentence_id;
  std::string method;
  double score = 0.0;
  std::optional<int> decision;
  std::optional<int> tau;

  bool operator==(const DetectionResult&) const = default;
};

struct SentenceEvidence {
  DetectionResult result;
  EvidenceTrace trace;
};

/// Log-odds ln(p / (1 - p)) of a clamped probability.
template <typename Scalar>
Scalar token_llr(Scalar p) {
  const Scalar lo = static_cast<Scalar>(kProbClamp);
  if (!(p >= lo && p <= Scalar(1) - lo)) {
    throw ConfigError("token_llr: probability outside [pclamp, 1 - pclamp]");
  }
  return std::log(p) - std::log1p(-p);
}

/// Sum of mask_t * llrs_t over the first `tau` tokens.
double aggregate_evidence(std::span<const double> llrs, std::span<const int> mask, int tau);

/// MAP rule: 1 (truthful) iff evidence >= delta.
inline int decide(double evidence, double delta = 0.0) { return evidence >= delta ? 1 : 0; }

/// Tokens of `record` that are scored under a cap of `t_cap`: trailing
/// padding rows are trimmed before capping.
int scored_length(const std::vector<int>& mask, int t_cap);

/// Masked, temperature-scaled token LLRs m_t * z_t / temperature over the
/// scored prefix of a sentence.
struct TokenEvidence {
  std::vector<double> llrs;  // unmasked z_t / temperature
  std::vector<int> mask;
  std::vector<double> masked() const;
};
TokenEvidence token_evidence(const ReliabilityHead& head, const SentenceRecord& record, int t_cap,
                             double temperature = 1.0, double epsilon = kDefaultMaskEpsilon);

/// Full MTRE scoring of one sentence: evidence over the whole scored prefix
/// and the MAP decision against `delta`.
SentenceEvidence classify_sentence(const ReliabilityHead& head, const SentenceRecord& record,
                                   int t_cap, double temperature = 1.0, double delta = 0.0,
                                   double epsilon = kDefaultMaskEpsilon);

std::vector<SentenceEvidence> classify_sentences(const ReliabilityHead& head,
                                                 const std::vector<SentenceRecord>& records,
                                                 int t_cap, double temperature = 1.0,
                                                 double delta = 0.0, int threads = 0);

/// One JSON object per line: {"id", "method", "score", "decision", "tau"}.
void write_results_jsonl(std::span<const DetectionResult> results, const std::filesystem::path& path);
std::vector<DetectionResult> read_results_jsonl(const std::filesystem::path& path);

}  // namespace mtre
