#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtre/dataset.hpp"

namespace mtre {

/// Predictions are clamped to [kProbClamp, 1 - kProbClamp], which bounds a
/// single token's log-odds at about +/-13.8.
inline constexpr double kProbClamp = 1e-6;

enum class HeadKind { probe, attention };
enum class OptimizerKind { sgd, adam };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 200;
  int batch_size = 32;
  double weight_decay = 1e-4;  // lambda in the L2 penalty
  double dropout_rate = 0.1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;

  void validate() const;
};

/// Shape of the attention head. The input vector is split into
/// `sequence_chunks` equal pieces (zero-padded), each projected to one
/// sequence element; with the default of 1 the attention sees a length-1
/// sequence.
struct AttentionArch {
  int embed_dim = 512;
  int num_heads = 8;
  int num_layers = 3;
  int mlp_dim = 512;
  int sequence_chunks = 1;

  void validate() const;
  bool operator==(const AttentionArch&) const = default;
};

struct ProbeParams {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

/// Token-level reliability head f(x) -> P(truthful | logit vector).
///
/// All trainable parameters live in one flat vector; the probe layout is
/// [weights..., bias], the attention layout is documented in
/// attention_head.cpp.
class ReliabilityHead {
 public:
  /// Linear probe initialized at zero.
  static ReliabilityHead make_probe(int input_dim);
  /// Attention head with fan-in scaled uniform initialization.
  static ReliabilityHead make_attention(int input_dim, const AttentionArch& arch,
                                        std::uint64_t seed);

  HeadKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  const AttentionArch& arch() const { return arch_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  void set_parameters(const Eigen::VectorXd& params);
  Eigen::Index num_parameters() const { return params_.size(); }

  /// Training provenance carried into the serialized header.
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  ProbeParams probe_params() const;

  /// Pre-sigmoid score, inference mode (no dropout).
  double logit(const Eigen::Ref<const Eigen::VectorXd>& features) const;

  /// Scores for every row of `features` (rows are examples).
  Eigen::VectorXd logits(const Eigen::Ref<const Eigen::MatrixXd>& features) const;

  /// Mean clamped BCE of the batch plus lambda * ||theta||^2. When `grad` is
  /// non-null it receives d(loss)/d(theta). `dropout_seed` enables training
  /// dropout at `dropout_rate` for the attention head.
  double loss_and_gradient(const Eigen::Ref<const Eigen::MatrixXd>& features,
                           const Eigen::Ref<const Eigen::VectorXd>& labels, double lambda,
                           Eigen::VectorXd* grad,
                           std::optional<std::uint64_t> dropout_seed = std::nullopt) const;

 private:
  ReliabilityHead(HeadKind kind, int input_dim, AttentionArch arch, Eigen::VectorXd params)
      : kind_(kind), input_dim_(input_dim), arch_(arch), params_(std::move(params)) {}

  HeadKind kind_;
  int input_dim_;
  AttentionArch arch_;
  Eigen::VectorXd params_;
};

struct TrainResult {
  ReliabilityHead head;
  std::vector<double> loss_history;  // mean minibatch loss per epoch
};

/// Trains a head for exactly `config.epochs` passes over `examples` in a
/// seeded batch order. Throws NumericError on a non-finite loss.
TrainResult train_reliability_head(std::span<const TokenExample> examples,
                                   const TrainConfig& config, HeadKind kind,
                                   const AttentionArch& arch = {});

/// Clamped reliability probability for one logit vector.
double predict_token(const ReliabilityHead& head, const Eigen::Ref<const Eigen::VectorXd>& features);

/// Regularized BCE objective over a batch.
double loss(const ReliabilityHead& head, std::span<const TokenExample> batch, double lambda);

/// Clamped sigmoid and the matching per-example BCE and dBCE/dz.
double clamped_sigmoid(double z);
double clamped_bce(double z, double label);
double clamped_bce_grad(double z, double label);

/// Stacks example features into a matrix (rows are examples).
Eigen::MatrixXd feature_matrix(std::span<const TokenExample> examples);
Eigen::VectorXd label_vector(std::span<const TokenExample> examples);

/// Binary head file: "MTREHEAD", u32 version, u32 header length, JSON
/// header, then float32 little-endian parameters.
void save_head(const ReliabilityHead& head, const std::filesystem::path& path);
ReliabilityHead load_head(const std::filesystem::path& path,
                          std::optional<int> expected_input_dim = std::nullopt);

}  // namespace mtre
