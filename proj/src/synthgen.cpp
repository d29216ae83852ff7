#include "mtre/synthgen.hpp"

#include <cmath>
#include <cstdio>

#include "mtre/error.hpp"
#include "mtre/parallel.hpp"
#include "mtre/rng.hpp"

namespace mtre {

void SynthConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("synth: vocab_size must be >= 2");
  if (num_sentences < 1) throw ConfigError("synth: num_sentences must be >= 1");
  if (min_tokens < 1 || max_tokens < min_tokens) {
    throw ConfigError("synth: need 1 <= min_tokens <= max_tokens");
  }
  if (onset < 1 || onset > max_tokens) {
    throw ConfigError("synth: onset " + std::to_string(onset) + " must lie in [1, max_tokens=" +
                      std::to_string(max_tokens) + "]");
  }
  if (!(signal_strength >= 0.0) || !std::isfinite(signal_strength)) {
    throw ConfigError("synth: signal_strength must be >= 0");
  }
  if (!(noise_scale > 0.0) || !std::isfinite(noise_scale)) throw ConfigError("synth: noise_scale must be > 0");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
    throw ConfigError("synth: positive_fraction must lie in (0, 1)");
  }
  if (num_groups < 0) throw ConfigError("synth: num_groups must be >= 0");
}

Dataset generate(const SynthConfig& config) {
  config.validate();
  const int vocab = config.vocab_size;

  Rng structure(derive_seed(config.structure_seed.value_or(config.seed), "structure"));
  Eigen::MatrixXd base(config.max_tokens, vocab);
  for (int t = 0; t < config.max_tokens; ++t) {
    for (int v = 0; v < vocab; ++v) base(t, v) = structure.normal();
  }
  Eigen::VectorXd direction(vocab);
  for (int v = 0; v < vocab; ++v) direction(v) = structure.normal();
  direction *= std::sqrt(static_cast<double>(vocab)) / direction.norm();

  const auto n = static_cast<std::size_t>(config.num_sentences);
  const auto positives = static_cast<std::size_t>(
      std::clamp(std::llround(config.positive_fraction * config.num_sentences), 0LL,
                 static_cast<long long>(n)));
  std::vector<int> labels(n, 0);
  std::fill_n(labels.begin(), positives, 1);
  Rng label_rng(derive_seed(config.seed, "labels"));
  label_rng.shuffle(labels);

  Dataset ds;
  ds.meta = {vocab, config.max_tokens, "f32le"};
  ds.records.resize(n);
  const std::uint64_t sentence_seed = derive_seed(config.seed, "sentences");

  parallel_for(n, 0, [&](std::size_t i) {
    Rng rng(derive_seed(sentence_seed, static_cast<std::uint64_t>(i)));
    SentenceRecord& r = ds.records[i];
    char id[32];
    std::snprintf(id, sizeof(id), "s%06zu", i);
    r.id = id;
    r.label = labels[i];
    if (config.num_groups > 0) r.group = "g" + std::to_string(i % static_cast<std::size_t>(config.num_groups));

    const int span = config.max_tokens - config.min_tokens + 1;
    const int len = config.min_tokens + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(span)));
    r.logits.resize(len, vocab);
    r.token_ids.resize(static_cast<std::size_t>(len));
    const double sign = r.label == 1 ? 1.0 : -1.0;
    Eigen::VectorXd row(vocab);
    Eigen::VectorXd weights(vocab);
    for (int t = 0; t < len; ++t) {
      for (int v = 0; v < vocab; ++v) row(v) = base(t, v) + config.noise_scale * rng.normal();
      if (t + 1 >= config.onset) row += sign * config.signal_strength * direction;
      r.logits.row(t) = row.transpose().cast<float>();
      const Eigen::VectorXd stored = r.logits.row(t).transpose().cast<double>();
      weights = (stored.array() - stored.maxCoeff()).exp();
      r.token_ids[static_cast<std::size_t>(t)] =
          static_cast<std::int32_t>(rng.categorical(weights.data(), static_cast<std::size_t>(vocab)));
    }
    if (config.emit_relevance) {
      std::vector<double> rel(static_cast<std::size_t>(len));
      for (auto& w : rel) w = rng.uniform(0.1, 1.0);
      r.relevance = std::move(rel);
    }
  });
  return ds;
}

GroundTruth describe(const SynthConfig& config) {
  GroundTruth g;
  g.vocab_size = config.vocab_size;
  g.num_sentences = config.num_sentences;
  g.min_tokens = config.min_tokens;
  g.max_tokens = config.max_tokens;
  g.onset = config.onset;
  g.signal_strength = config.signal_strength;
  g.noise_scale = config.noise_scale;
  g.positive_fraction = config.positive_fraction;
  g.num_groups = config.num_groups;
  g.seed = config.seed;
  g.structure_seed = config.structure_seed;
  g.signal_shift_norm = config.signal_strength * std::sqrt(static_cast<double>(config.vocab_size));
  g.per_token_dprime = 2.0 * g.signal_shift_norm / config.noise_scale;
  // AUROC of two unit-variance Gaussians d' apart: Phi(d' / sqrt 2).
  g.per_token_bayes_auroc = 0.5 * std::erfc(-g.per_token_dprime / 2.0);
  g.base_model = "per-position base logits ~ N(0,1) per coordinate, shared by all sentences; "
                 "iid N(0, noise_scale^2) noise per coordinate";
  g.signal_direction = "fixed random direction scaled to norm sqrt(vocab_size); +signal for "
                       "label 1 and -signal for label 0 at positions >= onset";
  return g;
}

nlohmann::ordered_json to_json(const GroundTruth& g) {
  nlohmann::ordered_json j;
  j["vocab_size"] = g.vocab_size;
  j["num_sentences"] = g.num_sentences;
  j["min_tokens"] = g.min_tokens;
  j["max_tokens"] = g.max_tokens;
  j["onset"] = g.onset;
  j["signal_strength"] = g.signal_strength;
  j["noise_scale"] = g.noise_scale;
  j["positive_fraction"] = g.positive_fraction;
  j["num_groups"] = g.num_groups;
  j["seed"] = g.seed;
  if (g.structure_seed) j["structure_seed"] = *g.structure_seed;
  j["signal_shift_norm"] = g.signal_shift_norm;
  j["per_token_dprime"] = g.per_token_dprime;
  j["per_token_bayes_auroc"] = g.per_token_bayes_auroc;
  j["base_model"] = g.base_model;
  j["signal_direction"] = g.signal_direction;
  return j;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth g;
  g.vocab_size = j.at("vocab_size").get<int>();
  g.num_sentences = j.at("num_sentences").get<int>();
  g.min_tokens = j.at("min_tokens").get<int>();
  g.max_tokens = j.at("max_tokens").get<int>();
  g.onset = j.at("onset").get<int>();
  g.signal_strength = j.at("signal_strength").get<double>();
  g.noise_scale = j.at("noise_scale").get<double>();
  g.positive_fraction = j.at("positive_fraction").get<double>();
  g.num_groups = j.at("num_groups").get<int>();
  g.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("structure_seed")) g.structure_seed = j.at("structure_seed").get<std::uint64_t>();
  g.signal_shift_norm = j.at("signal_shift_norm").get<double>();
  g.per_token_dprime = j.at("per_token_dprime").get<double>();
  g.per_token_bayes_auroc = j.at("per_token_bayes_auroc").get<double>();
  g.base_model = j.at("base_model").get<std::string>();
  g.signal_direction = j.at("signal_direction").get<std::string>();
  return g;
}

}  // namespace mtre
