#include "mtre/classifier.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "attention_head.hpp"
#include "mtre/error.hpp"
#include "mtre/rng.hpp"

namespace mtre {
namespace {

using nlohmann::json;

constexpr char kHeadMagic[8] = {'M', 'T', 'R', 'E', 'H', 'E', 'A', 'D'};
constexpr std::uint32_t kHeadVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double ez = std::exp(z);
  return ez / (1.0 + ez);
}

std::uint32_t le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

std::string to_string(HeadKind kind) { return kind == HeadKind::probe ? "probe" : "attention"; }

HeadKind head_kind_from_string(const std::string& name) {
  if (name == "probe") return HeadKind::probe;
  if (name == "attention") return HeadKind::attention;
  throw ConfigError("unknown head kind '" + name + "' (expected probe or attention)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam" || name == "adaptive-moment") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
}

void AttentionArch::validate() const {
  if (embed_dim < 1 || num_heads < 1 || num_layers < 0 || mlp_dim < 1 || sequence_chunks < 1) {
    throw ConfigError("attention architecture sizes must be positive");
  }
  if (embed_dim % num_heads != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
                      std::to_string(num_heads));
  }
}

double clamped_sigmoid(double z) {
  return std::clamp(sigmoid(z), kProbClamp, 1.0 - kProbClamp);
}

double clamped_bce(double z, double label) {
  // p and 1-p are computed separately so that neither loses precision.
  const double p = std::clamp(sigmoid(z), kProbClamp, 1.0 - kProbClamp);
  const double q = std::clamp(sigmoid(-z), kProbClamp, 1.0 - kProbClamp);
  return -(label * std::log(p) + (1.0 - label) * std::log(q));
}

double clamped_bce_grad(double z, double label) {
  const double p = sigmoid(z);
  // Past the clamp on the correct side the loss is flat. On the wrong side the
  // logistic gradient is kept so a saturated mistake can still be undone.
  if ((p > 1.0 - kProbClamp && label == 1.0) || (p < kProbClamp && label == 0.0)) return 0.0;
  return p - label;
}

ReliabilityHead ReliabilityHead::make_probe(int input_dim) {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  return ReliabilityHead(HeadKind::probe, input_dim, AttentionArch{},
                         Eigen::VectorXd::Zero(input_dim + 1));
}

ReliabilityHead ReliabilityHead::make_attention(int input_dim, const AttentionArch& arch,
                                                std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  arch.validate();
  ReliabilityHead head(HeadKind::attention, input_dim, arch,
                       detail::attention_init(input_dim, arch, seed));
  head.seed = seed;
  return head;
}

void ReliabilityHead::set_parameters(const Eigen::VectorXd& params) {
  if (params.size() != params_.size()) {
    throw ConfigError("parameter vector has " + std::to_string(params.size()) + " entries, head expects " +
                      std::to_string(params_.size()));
  }
  params_ = params;
}

ProbeParams ReliabilityHead::probe_params() const {
  if (kind_ != HeadKind::probe) throw ConfigError("probe_params on a non-probe head");
  return {params_.head(input_dim_), params_(input_dim_)};
}

double ReliabilityHead::logit(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (features.size() != input_dim_) {
    throw ConfigError("feature dimension " + std::to_string(features.size()) + " != head input " +
                      std::to_string(input_dim_));
  }
  if (kind_ == HeadKind::probe) return params_.head(input_dim_).dot(features) + params_(input_dim_);
  return detail::attention_logit(params_, input_dim_, arch_, features);
}

Eigen::VectorXd ReliabilityHead::logits(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
  if (features.cols() != input_dim_) {
    throw ConfigError("feature dimension " + std::to_string(features.cols()) + " != head input " +
                      std::to_string(input_dim_));
  }
  if (kind_ == HeadKind::probe) {
    return (features * params_.head(input_dim_)).array() + params_(input_dim_);
  }
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out(i) = detail::attention_logit(params_, input_dim_, arch_, features.row(i).transpose());
  }
  return out;
}

double ReliabilityHead::loss_and_gradient(const Eigen::Ref<const Eigen::MatrixXd>& features,
                                          const Eigen::Ref<const Eigen::VectorXd>& labels,
                                          double lambda, Eigen::VectorXd* grad,
                                          std::optional<std::uint64_t> dropout_seed) const {
  const Eigen::Index n = features.rows();
  if (n == 0) throw ConfigError("loss over an empty batch");
  if (labels.size() != n) throw ConfigError("labels and features disagree in length");
  if (features.cols() != input_dim_) {
    throw ConfigError("feature dimension " + std::to_string(features.cols()) + " != head input " +
                      std::to_string(input_dim_));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad != nullptr) grad->setZero(params_.size());

  double total = 0.0;
  if (kind_ == HeadKind::probe) {
    const Eigen::VectorXd z = logits(features);
    Eigen::VectorXd dz(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      total += clamped_bce(z(i), labels(i));
      dz(i) = clamped_bce_grad(z(i), labels(i)) * inv_n;
    }
    if (grad != nullptr) {
      grad->head(input_dim_) = features.transpose() * dz;
      (*grad)(input_dim_) = dz.sum();
    }
  } else {
    std::optional<Rng> rng;
    if (dropout_seed) rng.emplace(*dropout_seed);
    for (Eigen::Index i = 0; i < n; ++i) {
      total += detail::attention_example_loss(params_, input_dim_, arch_,
                                              features.row(i).transpose(), labels(i),
                                              rng ? &*rng : nullptr, dropout_rate, grad, inv_n);
    }
  }
  if (grad != nullptr && lambda != 0.0) *grad += 2.0 * lambda * params_;
  return total * inv_n + lambda * params_.squaredNorm();
}

Eigen::MatrixXd feature_matrix(std::span<const TokenExample> examples) {
  if (examples.empty()) return {};
  Eigen::MatrixXd x(static_cast<Eigen::Index>(examples.size()), examples.front().features.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = examples[i].features.transpose();
  }
  return x;
}

Eigen::VectorXd label_vector(std::span<const TokenExample> examples) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) y(static_cast<Eigen::Index>(i)) = examples[i].label;
  return y;
}

double predict_token(const ReliabilityHead& head, const Eigen::Ref<const Eigen::VectorXd>& features) {
  return clamped_sigmoid(head.logit(features));
}

double loss(const ReliabilityHead& head, std::span<const TokenExample> batch, double lambda) {
  if (batch.empty()) throw ConfigError("loss over an empty batch");
  return head.loss_and_gradient(feature_matrix(batch), label_vector(batch), lambda, nullptr);
}

TrainResult train_reliability_head(std::span<const TokenExample> examples,
                                   const TrainConfig& config, HeadKind kind,
                                   const AttentionArch& arch) {
  config.validate();
  if (examples.empty()) throw ConfigError("train_reliability_head: no training examples");
  const int dim = static_cast<int>(examples.front().features.size());
  for (const auto& ex : examples) {
    if (ex.features.size() != dim) throw DataError("training examples have mixed feature sizes");
  }

  ReliabilityHead head = kind == HeadKind::probe
                             ? ReliabilityHead::make_probe(dim)
                             : ReliabilityHead::make_attention(dim, arch, derive_seed(config.seed, "init"));
  head.seed = config.seed;
  head.dropout_rate = config.dropout_rate;

  TrainResult result{head, {}};
  Eigen::VectorXd theta = head.parameters();
  Eigen::VectorXd grad;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long step = 0;

  Rng order_rng(derive_seed(config.seed, "batches"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  const auto n = examples.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const Eigen::Index width = dim;

  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = order_rng.permutation(n);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const auto count = static_cast<Eigen::Index>(std::min(batch, n - start));
      x.resize(count, width);
      y.resize(count);
      for (Eigen::Index i = 0; i < count; ++i) {
        const auto& ex = examples[order[start + static_cast<std::size_t>(i)]];
        x.row(i) = ex.features.transpose();
        y(i) = ex.label;
      }
      result.head.set_parameters(theta);
      std::optional<std::uint64_t> drop_seed;
      if (kind == HeadKind::attention && config.dropout_rate > 0.0) drop_seed = dropout_rng.next_u64();
      const double value = result.head.loss_and_gradient(x, y, config.weight_decay, &grad, drop_seed);
      if (!std::isfinite(value) || !grad.allFinite()) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batches + 1));
      }
      ++step;
      if (config.optimizer == OptimizerKind::sgd) {
        theta -= config.learning_rate * grad;
      } else {
        m1 = beta1 * m1 + (1.0 - beta1) * grad;
        m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        theta.array() -= config.learning_rate * (m1.array() / c1) /
                         ((m2.array() / c2).sqrt() + adam_eps);
      }
      if (!theta.allFinite()) {
        throw NumericError("non-finite parameters after epoch " + std::to_string(epoch + 1) +
                           ", batch " + std::to_string(batches + 1));
      }
      epoch_loss += value;
      ++batches;
    }
    result.loss_history.push_back(epoch_loss / batches);
  }
  result.head.set_parameters(theta);
  return result;
}

void save_head(const ReliabilityHead& head, const std::filesystem::path& path) {
  json header = {{"kind", to_string(head.kind())},
                 {"input_dim", head.input_dim()},
                 {"num_parameters", head.num_parameters()},
                 {"dropout_rate", head.dropout_rate},
                 {"seed", head.seed}};
  if (head.kind() == HeadKind::attention) {
    const auto& a = head.arch();
    header["embed_dim"] = a.embed_dim;
    header["num_heads"] = a.num_heads;
    header["num_layers"] = a.num_layers;
    header["mlp_dim"] = a.mlp_dim;
    header["sequence_chunks"] = a.sequence_chunks;
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write head file " + path.string());
  out.write(kHeadMagic, sizeof(kHeadMagic));
  const std::uint32_t version = le32(kHeadVersion);
  const std::uint32_t length = le32(static_cast<std::uint32_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&length), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < head.num_parameters(); ++i) {
    const auto bits = le32(std::bit_cast<std::uint32_t>(static_cast<float>(head.parameters()(i))));
    out.write(reinterpret_cast<const char*>(&bits), 4);
  }
  if (!out) throw DataError("I/O failure writing head file " + path.string());
}

ReliabilityHead load_head(const std::filesystem::path& path, std::optional<int> expected_input_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open head file " + path.string());
  char magic[8];
  std::uint32_t version = 0, length = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&length), 4);
  if (!in || std::memcmp(magic, kHeadMagic, 8) != 0) throw DataError(path.string() + ": not a head file");
  if (le32(version) != kHeadVersion) throw DataError(path.string() + ": unsupported head version");
  std::string text(le32(length), '\0');
  in.read(text.data(), static_cast<std::streamsize>(text.size()));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": bad header: " + e.what());
  }

  const int dim = header.at("input_dim").get<int>();
  if (expected_input_dim && *expected_input_dim != dim) {
    throw DataError(path.string() + ": head input_dim " + std::to_string(dim) +
                    " does not match dataset vocab_size " + std::to_string(*expected_input_dim));
  }
  const HeadKind kind = head_kind_from_string(header.at("kind").get<std::string>());
  ReliabilityHead head = ReliabilityHead::make_probe(dim);
  if (kind == HeadKind::attention) {
    AttentionArch a;
    a.embed_dim = header.at("embed_dim").get<int>();
    a.num_heads = header.at("num_heads").get<int>();
    a.num_layers = header.at("num_layers").get<int>();
    a.mlp_dim = header.at("mlp_dim").get<int>();
    a.sequence_chunks = header.at("sequence_chunks").get<int>();
    head = ReliabilityHead::make_attention(dim, a, 0);
  }
  const auto count = header.at("num_parameters").get<Eigen::Index>();
  if (count != head.num_parameters()) throw DataError(path.string() + ": parameter count mismatch");

  Eigen::VectorXd params(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), 4);
    params(i) = std::bit_cast<float>(le32(bits));
  }
  if (!in) throw DataError(path.string() + ": truncated parameter block");
  if (!params.allFinite()) throw DataError(path.string() + ": non-finite parameter");
  head.set_parameters(params);
  head.dropout_rate = header.value("dropout_rate", 0.0);
  head.seed = header.value("seed", std::uint64_t{0});
  return head;
}

}  // namespace mtre
