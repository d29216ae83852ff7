#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtre/dataset.hpp"
#include "mtre/error.hpp"

namespace mtre {

/// Softmax with max-subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out = (logits.array() - mx).exp().matrix();
  out /= out.sum();
  return out;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = logits.maxCoeff();
  const Scalar lse = mx + std::log((logits.array() - mx).exp().sum());
  return (logits.array() - lse).matrix();
}

/// KL(p || q) = sum_v p_v ln(p_v / q_v), with 0 ln 0 = 0.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl(const Eigen::MatrixBase<DerivedP>& p,
                             const Eigen::MatrixBase<DerivedQ>& q) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != q.size()) throw ConfigError("kl: length mismatch");
  Scalar total(0);
  for (Eigen::Index v = 0; v < p.size(); ++v) {
    const Scalar pv = p(v);
    if (pv > Scalar(0)) total += pv * (std::log(pv) - std::log(q(v)));
  }
  return total;
}

/// Which label's responses supply the first KL argument.
enum class KlDirection { hallucinated_first, truthful_first };

struct KLCurve {
  std::string group_tag;
  std::vector<std::optional<double>> values;  // index t-1; empty where a class has no response
  std::vector<long> pair_counts;
};

struct KlOptions {
  int t_cap = kDefaultTokenCap;
  KlDirection direction = KlDirection::hallucinated_first;
  /// Split by SentenceRecord::group; otherwise every record is in one group.
  bool split_by_group = false;
  int threads = 0;
};

inline constexpr const char* kAverageCurveTag = "average";
inline constexpr const char* kUngroupedTag = "all";

/// Mean pairwise KL between the next-token distributions of hallucinated and
/// truthful responses at each position, one curve per group followed by the
/// cross-group average when more than one group contributes.
std::vector<KLCurve> positionwise_kl_curve(const std::vector<SentenceRecord>& records,
                                           const KlOptions& options = {});

/// CSV with header group,t,kl_mean,pair_count; gaps leave kl_mean empty.
void write_kl_csv(std::span<const KLCurve> curves, const std::filesystem::path& path);

}  // namespace mtre
