#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "mtre/classifier.hpp"
#include "mtre/rng.hpp"

namespace mtre::detail {

Eigen::Index attention_parameter_count(int input_dim, const AttentionArch& arch);

Eigen::VectorXd attention_init(int input_dim, const AttentionArch& arch, std::uint64_t seed);

double attention_logit(const Eigen::VectorXd& params, int input_dim, const AttentionArch& arch,
                       const Eigen::Ref<const Eigen::VectorXd>& x);

/// One training-mode pass for a single example. Returns the clamped BCE and
/// adds `scale * dBCE/dtheta` into `grad` when it is non-null. Dropout masks
/// are drawn from `dropout` when it is non-null.
double attention_example_loss(const Eigen::VectorXd& params, int input_dim,
                              const AttentionArch& arch, const Eigen::Ref<const Eigen::VectorXd>& x,
                              double label, Rng* dropout, double dropout_rate,
                              Eigen::VectorXd* grad, double scale);

}  // namespace mtre::detail
