#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "mtre/dataset.hpp"

namespace mtre {

/// Synthetic logit-sequence generator settings. Before `onset` the rows of
/// both labels come from the same distribution; from `onset` on, truthful
/// rows are shifted by +signal_strength (RMS per coordinate) along a fixed
/// random direction and hallucinated rows by -signal_strength.
struct SynthConfig {
  int vocab_size = 64;
  int num_sentences = 200;
  int min_tokens = 10;
  int max_tokens = 10;
  int onset = 6;
  double signal_strength = 3.0;
  double noise_scale = 1.0;
  double positive_fraction = 0.5;
  int num_groups = 0;  // 0 leaves group tags empty; otherwise "g0".."g<n-1>" round-robin
  bool emit_relevance = false;
  std::uint64_t seed = 0;
  // Seeds the base logits and signal direction. Unset means `seed`; sharing it
  // across configs gives independent draws from the same generator.
  std::optional<std::uint64_t> structure_seed;

  void validate() const;
};

/// Structural ground truth of a generator configuration.
struct GroundTruth {
  int vocab_size = 0;
  int num_sentences = 0;
  int min_tokens = 0;
  int max_tokens = 0;
  int onset = 0;
  double signal_strength = 0.0;
  double noise_scale = 0.0;
  double positive_fraction = 0.0;
  int num_groups = 0;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> structure_seed;
  double signal_shift_norm = 0.0;      // ||shift|| = signal_strength * sqrt(V)
  double per_token_dprime = 0.0;       // class separation along the direction, in noise units
  double per_token_bayes_auroc = 0.5;  // best single-token AUROC at or after onset
  std::string base_model;
  std::string signal_direction;

  bool operator==(const GroundTruth&) const = default;
};

Dataset generate(const SynthConfig& config);
GroundTruth describe(const SynthConfig& config);

nlohmann::ordered_json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& j);

}  // namespace mtre
