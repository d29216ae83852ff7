#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mtre {

/// Row-major logit block: one row per generated token, one column per
/// vocabulary entry. Stored as float32, the on-disk precision.
using LogitMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kDefaultMaskEpsilon = 1e-8;
inline constexpr int kDefaultTokenCap = 10;

struct DatasetMeta {
  int vocab_size = 0;
  int max_tokens = 0;
  std::string value_encoding = "f32le";

  bool operator==(const DatasetMeta&) const = default;
};

/// One model response with its per-token logits.
struct SentenceRecord {
  std::string id;
  int label = 0;  // 1 = truthful, 0 = hallucinated
  std::optional<std::string> group;
  std::vector<std::int32_t> token_ids;
  std::optional<std::vector<double>> relevance;
  LogitMatrix logits;

  int num_tokens() const { return static_cast<int>(logits.rows()); }
  bool operator==(const SentenceRecord& other) const;
};

/// One (logit vector, inherited sentence label) pair.
struct TokenExample {
  Eigen::VectorXd features;
  int label = 0;
  std::string sentence_id;
  int position = 1;  // 1-based token index within the sentence
};

struct FoldAssignment {
  std::map<std::string, int> fold_of;
  int k_cv = 0;
  std::uint64_t seed = 0;

  /// Records whose fold equals `fold`, preserving input order.
  std::vector<const SentenceRecord*> members(const std::vector<SentenceRecord>& records,
                                             int fold) const;
  std::vector<const SentenceRecord*> complement(const std::vector<SentenceRecord>& records,
                                                int fold) const;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<SentenceRecord> records;
};

/// Throws DataError naming the offending sentence when an invariant fails.
void validate_meta(const DatasetMeta& meta);
void validate_record(const DatasetMeta& meta, const SentenceRecord& record);

/// Reads meta.json, manifest.jsonl and logits.bin from `root`.
Dataset load_dataset(const std::filesystem::path& root);

/// Writes the three container files; every record is validated before the
/// first byte is written.
void save_dataset(const DatasetMeta& meta, const std::vector<SentenceRecord>& records,
                  const std::filesystem::path& root);

/// Flattens sentences into token examples (first min(T_i, t_cap) tokens of
/// each sentence) and returns them in a seeded shuffled order.
std::vector<TokenExample> build_token_dataset(const std::vector<const SentenceRecord*>& records,
                                              int t_cap, std::uint64_t seed);
std::vector<TokenExample> build_token_dataset(const std::vector<SentenceRecord>& records,
                                              int t_cap, std::uint64_t seed);

/// m_t = 1 iff ||logits_t||_2 > epsilon.
std::vector<int> pad_mask(const SentenceRecord& record, double epsilon = kDefaultMaskEpsilon);

/// Position of the last unmasked token (at least 1). Trailing zero-norm rows
/// are padding and never count towards a sentence's length.
int effective_length(const std::vector<int>& mask);

/// Assigns every sentence to one of k_cv folds, balancing each label class
/// across folds.
FoldAssignment split_stratified(const std::vector<SentenceRecord>& records, int k_cv,
                                std::uint64_t seed);

}  // namespace mtre
