#include "mtre/divergence.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "mtre/log.hpp"
#include "mtre/parallel.hpp"

namespace mtre {
namespace {

struct PositionResult {
  std::optional<double> value;
  long pairs = 0;
};

// Mean over all (a, b) pairs of KL(p_a || q_b), using
//   sum_ab KL = |B| sum_a sum_v p_av log p_av - sum_v (sum_a p_av)(sum_b log q_bv).
PositionResult mean_pairwise_kl(const std::vector<const SentenceRecord*>& first,
                                const std::vector<const SentenceRecord*>& second, int row) {
  PositionResult out;
  out.pairs = static_cast<long>(first.size()) * static_cast<long>(second.size());
  if (out.pairs == 0) return out;
  const Eigen::Index vocab = first.front()->logits.cols();

  double self_term = 0.0;
  Eigen::VectorXd prob_sum = Eigen::VectorXd::Zero(vocab);
  for (const SentenceRecord* r : first) {
    const Eigen::VectorXd lp = log_softmax(r->logits.row(row).transpose().cast<double>());
    const Eigen::VectorXd p = lp.array().exp().matrix();
    self_term += p.dot(lp);
    prob_sum += p;
  }
  Eigen::VectorXd logq_sum = Eigen::VectorXd::Zero(vocab);
  for (const SentenceRecord* r : second) {
    logq_sum += log_softmax(r->logits.row(row).transpose().cast<double>());
  }
  const double total = static_cast<double>(second.size()) * self_term - prob_sum.dot(logq_sum);
  out.value = std::max(0.0, total / static_cast<double>(out.pairs));
  return out;
}

KLCurve group_curve(const std::string& tag, const std::vector<const SentenceRecord*>& members,
                    const KlOptions& options) {
  KLCurve curve;
  curve.group_tag = tag;
  curve.values.resize(static_cast<std::size_t>(options.t_cap));
  curve.pair_counts.resize(static_cast<std::size_t>(options.t_cap));
  const int first_label = options.direction == KlDirection::hallucinated_first ? 0 : 1;

  parallel_for(static_cast<std::size_t>(options.t_cap), options.threads, [&](std::size_t idx) {
    const int t = static_cast<int>(idx) + 1;
    std::vector<const SentenceRecord*> first, second;
    for (const SentenceRecord* r : members) {
      if (r->num_tokens() < t) continue;
      (r->label == first_label ? first : second).push_back(r);
    }
    const PositionResult res = mean_pairwise_kl(first, second, t - 1);
    curve.values[idx] = res.value;
    curve.pair_counts[idx] = res.pairs;
  });
  return curve;
}

}  // namespace

std::vector<KLCurve> positionwise_kl_curve(const std::vector<SentenceRecord>& records,
                                           const KlOptions& options) {
  if (options.t_cap < 1) throw ConfigError("t_cap must be >= 1");
  std::map<std::string, std::vector<const SentenceRecord*>> groups;
  if (options.split_by_group) {
    const bool any_group = std::any_of(records.begin(), records.end(),
                                       [](const SentenceRecord& r) { return r.group.has_value(); });
    if (!any_group) throw ConfigError("group split requested but no record carries a group tag");
    for (const auto& r : records) groups[r.group.value_or(kUngroupedTag)].push_back(&r);
  } else {
    for (const auto& r : records) groups[kUngroupedTag].push_back(&r);
  }

  std::vector<KLCurve> curves;
  for (const auto& [tag, members] : groups) {
    const bool has0 = std::any_of(members.begin(), members.end(), [](auto* r) { return r->label == 0; });
    const bool has1 = std::any_of(members.begin(), members.end(), [](auto* r) { return r->label == 1; });
    if (!has0 || !has1) {
      logger().warn("kl: group '{}' lacks one label entirely; skipped", tag);
      continue;
    }
    curves.push_back(group_curve(tag, members, options));
  }
  if (curves.empty()) throw ConfigError("kl: no group contains both labels");

  if (curves.size() > 1) {
    KLCurve avg;
    avg.group_tag = kAverageCurveTag;
    for (int t = 0; t < options.t_cap; ++t) {
      double sum = 0.0;
      int count = 0;
      long pairs = 0;
      for (const auto& c : curves) {
        pairs += c.pair_counts[static_cast<std::size_t>(t)];
        if (const auto& v = c.values[static_cast<std::size_t>(t)]) {
          sum += *v;
          ++count;
        }
      }
      avg.values.push_back(count > 0 ? std::optional<double>(sum / count) : std::nullopt);
      avg.pair_counts.push_back(pairs);
    }
    curves.push_back(std::move(avg));
  }
  return curves;
}

void write_kl_csv(std::span<const KLCurve> curves, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "group,t,kl_mean,pair_count\n";
  out << std::setprecision(17);
  for (const auto& c : curves) {
    for (std::size_t t = 0; t < c.values.size(); ++t) {
      out << c.group_tag << ',' << t + 1 << ',';
      if (c.values[t]) out << *c.values[t];
      out << ',' << c.pair_counts[t] << '\n';
    }
  }
  if (!out) throw DataError("I/O failure writing " + path.string());
}

}  // namespace mtre
