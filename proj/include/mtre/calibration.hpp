#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtre/aggregation.hpp"
#include "mtre/classifier.hpp"
#include "mtre/dataset.hpp"
#include "mtre/metrics.hpp"

namespace mtre {

enum class ObjectiveKind { auroc, pr_auc, f1_at_fpr };

/// Sentence-level metric maximized by the stopping-threshold search.
struct Objective {
  ObjectiveKind kind = ObjectiveKind::auroc;
  double target_fpr = 0.1;  // f1_at_fpr only

  /// "auroc", "pr_auc" or "f1_at_fpr(<target>)".
  std::string to_string() const;
  static Objective parse(const std::string& text);
  double evaluate(const ScoredSet& set) const;
};

/// One out-of-fold token LLR (unscaled) with its sentence label.
struct OofRow {
  std::string sentence_id;
  int position = 1;
  double z = 0.0;
  int label = 0;
  int fold = 0;
  int mask = 1;
};

/// Which sentences trained and which were scored by the head of one fold.
struct FoldProvenance {
  int fold = 0;
  std::vector<std::string> trained_on;
  std::vector<std::string> scored;
};

/// OOF LLR rows, stored contiguously per sentence in position order.
struct OofLlrTable {
  std::vector<OofRow> rows;
  std::vector<FoldProvenance> provenance;

  struct SentenceRows {
    std::string id;
    int label = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
  };
  std::vector<SentenceRows> sentences() const;

  /// Concatenates another table (e.g. LLRs kept from earlier folds).
  void append(const OofLlrTable& other);
  /// Each (sentence, position) once, positions 1..n contiguous per sentence.
  void validate() const;
};

struct CalibrationParams {
  double c_star = 1.0;
  double c_u = std::numeric_limits<double>::infinity();
  double c_b = -std::numeric_limits<double>::infinity();
  int t_max = kDefaultTokenCap;
  Objective objective;
  int k_cv = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// JSON with keys c_star, c_u, c_b, t_max, objective, k_cv, seed,
/// format_version; infinite thresholds are written as "inf" / "-inf".
void save_calibration(const CalibrationParams& params, const std::filesystem::path& path);
CalibrationParams load_calibration(const std::filesystem::path& path);

/// Flattens `records` into token examples and trains a head on them.
TrainResult train_head_on_records(const std::vector<const SentenceRecord*>& records, int t_cap,
                                  const TrainConfig& config, HeadKind kind,
                                  const AttentionArch& arch = {});

struct FoldSummary {
  int fold = 0;
  std::size_t train_sentences = 0;
  std::size_t scored_sentences = 0;
  std::optional<double> oof_auroc;  // of unscaled final evidence
};

/// For each fold, trains on the complement and scores the fold's sentences.
OofLlrTable collect_oof_llrs(const std::vector<SentenceRecord>& records,
                             const FoldAssignment& folds, const TrainConfig& config, HeadKind kind,
                             const AttentionArch& arch, int t_cap,
                             std::vector<FoldSummary>* summaries = nullptr,
                             const OofLlrTable* seed_table = nullptr);

inline constexpr double kTemperatureLo = 1e-3;
inline constexpr double kTemperatureHi = 1e3;
inline constexpr double kTemperatureTol = 1e-6;

/// Token-broadcast BCE of sigmoid(z / c) against sentence labels, over
/// unmasked rows.
double temperature_objective(const OofLlrTable& table, double c);

struct TemperatureFit {
  double c_star = 1.0;
  double objective = 0.0;
  bool at_bracket_edge = false;
  std::optional<std::string> warning;
};

/// Golden-section search over ln C in [ln 1e-3, ln 1e3].
TemperatureFit fit_temperature(const OofLlrTable& table);

struct StopResult {
  double evidence = 0.0;
  int tau = 1;
};

/// Accumulates `llrs` until the running sum reaches c_u or falls to c_b,
/// or min(t_max, length) tokens are consumed.
StopResult early_stop_trace(std::span<const double> llrs, double c_u, double c_b, int t_max);

struct ThresholdGrid {
  std::vector<double> c_u;
  std::vector<double> c_b;
  std::vector<int> t_max;
};

/// Deciles of |final calibrated evidence| (and their negatives) plus
/// +/-inf, with t_max in 1..t_cap.
ThresholdGrid default_threshold_grid(const OofLlrTable& table, double c_star, int t_cap);

struct StoppingFit {
  double c_u = 0.0;
  double c_b = 0.0;
  int t_max = 1;
  double objective = 0.0;
  double mean_tau = 0.0;
};

/// Exhaustive search over grid triples; ties go to smaller mean tau, then
/// smaller c_u, then larger c_b, then smaller t_max.
StoppingFit fit_stopping_thresholds(const OofLlrTable& table, double c_star,
                                    const Objective& objective, const ThresholdGrid& grid,
                                    int threads = 0);

struct CalibrateOptions {
  int k_cv = 5;
  TrainConfig train;
  HeadKind kind = HeadKind::probe;
  AttentionArch arch;
  int t_cap = kDefaultTokenCap;
  Objective objective;
  std::uint64_t split_seed = 0;
  int threads = 0;
};

struct Calibration {
  ReliabilityHead head;
  CalibrationParams params;
  OofLlrTable table;
  std::vector<FoldSummary> folds;
  TemperatureFit temperature;
  StoppingFit stopping;
};

/// Cross-fit collection, temperature fit, threshold search, then a final
/// head retrained on every record.
Calibration calibrate(const std::vector<SentenceRecord>& records, const CalibrateOptions& options);

/// MTRE-tau inference on one sentence with calibrated parameters.
SentenceEvidence classify_sentence_early_stop(const ReliabilityHead& head,
                                              const SentenceRecord& record, int t_cap,
                                              const CalibrationParams& params,
                                              double delta = 0.0);

}  // namespace mtre
