#include "mtre/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "mtre/error.hpp"
#include "mtre/log.hpp"
#include "mtre/parallel.hpp"
#include "mtre/rng.hpp"

namespace mtre {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kCalibrationFormat = 1;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

nlohmann::ordered_json encode_threshold(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

double decode_threshold(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw DataError("calibration: bad threshold string '" + s + "'");
  }
  return v.get<double>();
}

// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::vector<double>> calibrated_sequences(const OofLlrTable& table, double c_star,
                                                      std::vector<int>* labels) {
  std::vector<std::vector<double>> seqs;
  for (const auto& s : table.sentences()) {
    std::vector<double> seq;
    for (std::size_t i = s.begin; i < s.end; ++i) {
      seq.push_back(table.rows[i].mask * (table.rows[i].z / c_star));
    }
    seqs.push_back(std::move(seq));
    if (labels != nullptr) labels->push_back(s.label);
  }
  return seqs;
}

}  // namespace

std::string Objective::to_string() const {
  switch (kind) {
    case ObjectiveKind::auroc:
      return "auroc";
    case ObjectiveKind::pr_auc:
      return "pr_auc";
    case ObjectiveKind::f1_at_fpr: {
      std::ostringstream out;
      out << "f1_at_fpr(" << target_fpr << ")";
      return out.str();
    }
  }
  return "auroc";
}

Objective Objective::parse(const std::string& text) {
  if (text == "auroc") return {ObjectiveKind::auroc, 0.1};
  if (text == "pr_auc") return {ObjectiveKind::pr_auc, 0.1};
  if (text == "f1_at_fpr") return {ObjectiveKind::f1_at_fpr, 0.1};
  const std::string prefix = "f1_at_fpr(";
  if (text.rfind(prefix, 0) == 0 && text.back() == ')') {
    const std::string inner = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    try {
      std::size_t used = 0;
      const double target = std::stod(inner, &used);
      if (used == inner.size() && target >= 0.0 && target <= 1.0) {
        return {ObjectiveKind::f1_at_fpr, target};
      }
    } catch (const std::exception&) {
    }
  }
  throw ConfigError("unknown objective '" + text + "' (auroc, pr_auc, f1_at_fpr(<fpr>))");
}

double Objective::evaluate(const ScoredSet& set) const {
  switch (kind) {
    case ObjectiveKind::auroc:
      return auroc(set);
    case ObjectiveKind::pr_auc:
      return average_precision(set);
    case ObjectiveKind::f1_at_fpr:
      return f1_at_fpr(set, target_fpr);
  }
  return auroc(set);
}

std::vector<OofLlrTable::SentenceRows> OofLlrTable::sentences() const {
  std::vector<SentenceRows> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].sentence_id == rows[i].sentence_id) ++j;
    out.push_back({rows[i].sentence_id, rows[i].label, i, j});
    i = j;
  }
  return out;
}

void OofLlrTable::append(const OofLlrTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  provenance.insert(provenance.end(), other.provenance.begin(), other.provenance.end());
}

void OofLlrTable::validate() const {
  std::set<std::string> seen;
  for (const auto& s : sentences()) {
    if (!seen.insert(s.id).second) {
      throw DataError("OOF table: sentence '" + s.id + "' appears in two separate row blocks");
    }
    for (std::size_t i = s.begin; i < s.end; ++i) {
      if (rows[i].position != static_cast<int>(i - s.begin) + 1) {
        throw DataError("OOF table: sentence '" + s.id + "' positions are not 1..n");
      }
      if (rows[i].label != s.label) throw DataError("OOF table: label changes within '" + s.id + "'");
    }
  }
}

void CalibrationParams::validate() const {
  if (!(c_star > 0.0) || !std::isfinite(c_star)) throw ConfigError("calibration: c_star must be positive");
  if (!(c_b < 0.0 && 0.0 < c_u)) throw ConfigError("calibration: thresholds must satisfy c_b < 0 < c_u");
  if (t_max < 1) throw ConfigError("calibration: t_max must be >= 1");
}

void save_calibration(const CalibrationParams& params, const std::filesystem::path& path) {
  params.validate();
  nlohmann::ordered_json j;
  j["c_star"] = params.c_star;
  j["c_u"] = encode_threshold(params.c_u);
  j["c_b"] = encode_threshold(params.c_b);
  j["t_max"] = params.t_max;
  j["objective"] = params.objective.to_string();
  j["k_cv"] = params.k_cv;
  j["seed"] = params.seed;
  j["format_version"] = kCalibrationFormat;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("I/O failure writing " + path.string());
}

CalibrationParams load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open calibration file " + path.string());
  CalibrationParams p;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format_version").get<int>() != kCalibrationFormat) {
      throw DataError(path.string() + ": unsupported format_version");
    }
    p.c_star = j.at("c_star").get<double>();
    p.c_u = decode_threshold(j.at("c_u"));
    p.c_b = decode_threshold(j.at("c_b"));
    p.t_max = j.at("t_max").get<int>();
    p.objective = Objective::parse(j.at("objective").get<std::string>());
    p.k_cv = j.at("k_cv").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

TrainResult train_head_on_records(const std::vector<const SentenceRecord*>& records, int t_cap,
                                  const TrainConfig& config, HeadKind kind,
                                  const AttentionArch& arch) {
  const auto examples = build_token_dataset(records, t_cap, derive_seed(config.seed, "shuffle"));
  return train_reliability_head(examples, config, kind, arch);
}

OofLlrTable collect_oof_llrs(const std::vector<SentenceRecord>& records,
                             const FoldAssignment& folds, const TrainConfig& config, HeadKind kind,
                             const AttentionArch& arch, int t_cap,
                             std::vector<FoldSummary>* summaries, const OofLlrTable* seed_table) {
  for (const auto& r : records) {
    if (!folds.fold_of.contains(r.id)) {
      throw ConfigError("fold assignment does not cover sentence '" + r.id + "'");
    }
  }
  OofLlrTable table;
  if (seed_table != nullptr) table = *seed_table;

  for (int fold = 0; fold < folds.k_cv; ++fold) {
    const auto train = folds.complement(records, fold);
    const auto scored = folds.members(records, fold);
    const bool has0 = std::any_of(train.begin(), train.end(), [](auto* r) { return r->label == 0; });
    const bool has1 = std::any_of(train.begin(), train.end(), [](auto* r) { return r->label == 1; });
    if (!has0 || !has1) {
      throw ConfigError("fold " + std::to_string(fold) +
                        ": training complement lacks one of the labels");
    }
    TrainConfig fold_config = config;
    fold_config.seed = derive_seed(config.seed, static_cast<std::uint64_t>(fold + 1));
    const TrainResult trained = train_head_on_records(train, t_cap, fold_config, kind, arch);

    FoldProvenance prov;
    prov.fold = fold;
    for (const auto* r : train) prov.trained_on.push_back(r->id);

    ScoredSet fold_scores;
    for (const auto* r : scored) {
      const TokenEvidence ev = token_evidence(trained.head, *r, t_cap);
      double total = 0.0;
      for (std::size_t t = 0; t < ev.llrs.size(); ++t) {
        table.rows.push_back({r->id, static_cast<int>(t) + 1, ev.llrs[t], r->label, fold, ev.mask[t]});
        total += ev.mask[t] * ev.llrs[t];
      }
      prov.scored.push_back(r->id);
      fold_scores.scores.push_back(total);
      fold_scores.labels.push_back(r->label);
    }
    table.provenance.push_back(std::move(prov));

    FoldSummary summary{fold, train.size(), scored.size(), std::nullopt};
    if (fold_scores.positives() > 0 && fold_scores.negatives() > 0) summary.oof_auroc = auroc(fold_scores);
    if (summary.oof_auroc) {
      logger().info("fold {}: trained on {} sentences, scored {}, OOF AUROC {:.4f}", fold,
                    summary.train_sentences, summary.scored_sentences, *summary.oof_auroc);
    } else {
      logger().info("fold {}: trained on {} sentences, scored {}, OOF AUROC n/a", fold,
                    summary.train_sentences, summary.scored_sentences);
    }
    if (summaries != nullptr) summaries->push_back(summary);
  }
  table.validate();
  return table;
}

double temperature_objective(const OofLlrTable& table, double c) {
  double total = 0.0;
  long count = 0;
  for (const auto& row : table.rows) {
    if (row.mask == 0) continue;
    const double s = row.z / c;
    total += row.label == 1 ? softplus(-s) : softplus(s);
    ++count;
  }
  if (count == 0) throw ConfigError("temperature objective over an empty table");
  return total / static_cast<double>(count);
}

TemperatureFit fit_temperature(const OofLlrTable& table) {
  bool has0 = false, has1 = false;
  for (const auto& row : table.rows) {
    if (row.mask == 0) continue;
    (row.label == 1 ? has1 : has0) = true;
  }
  if (!has0 && !has1) throw ConfigError("fit_temperature: empty table");

  auto f = [&](double log_c) { return temperature_objective(table, std::exp(log_c)); };
  double a = std::log(kTemperatureLo), b = std::log(kTemperatureHi);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > kTemperatureTol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  double best_log = 0.5 * (a + b);
  double best = f(best_log);
  // Never return something worse than the bracket edges.
  for (double edge : {std::log(kTemperatureLo), std::log(kTemperatureHi)}) {
    const double fe = f(edge);
    if (fe < best) {
      best = fe;
      best_log = edge;
    }
  }

  TemperatureFit fit;
  fit.c_star = std::exp(best_log);
  fit.objective = best;
  fit.at_bracket_edge = best_log - std::log(kTemperatureLo) <= 2 * kTemperatureTol ||
                        std::log(kTemperatureHi) - best_log <= 2 * kTemperatureTol;
  if (!has0 || !has1) {
    fit.warning = "single-label OOF table; temperature objective is degenerate";
  } else if (fit.at_bracket_edge) {
    fit.warning = "temperature fit reached the bracket edge (C* = " + std::to_string(fit.c_star) + ")";
  }
  if (fit.warning) logger().warn("calibration: {}", *fit.warning);
  return fit;
}

StopResult early_stop_trace(std::span<const double> llrs, double c_u, double c_b, int t_max) {
  if (llrs.empty()) throw ConfigError("early_stop_trace: empty sequence");
  if (t_max < 1) throw ConfigError("early_stop_trace: t_max must be >= 1");
  if (!(c_b < 0.0 && 0.0 < c_u)) throw ConfigError("early_stop_trace: thresholds must satisfy c_b < 0 < c_u");
  const int cap = std::min(t_max, static_cast<int>(llrs.size()));
  double running = 0.0;
  for (int t = 1; t <= cap; ++t) {
    running += llrs[static_cast<std::size_t>(t - 1)];
    if (running >= c_u || running <= c_b) return {running, t};
  }
  return {running, cap};
}

ThresholdGrid default_threshold_grid(const OofLlrTable& table, double c_star, int t_cap) {
  const auto seqs = calibrated_sequences(table, c_star, nullptr);
  std::vector<double> magnitudes;
  for (const auto& seq : seqs) {
    double total = 0.0;
    for (double z : seq) total += z;
    magnitudes.push_back(std::abs(total));
  }
  std::sort(magnitudes.begin(), magnitudes.end());

  ThresholdGrid grid;
  if (!magnitudes.empty()) {
    for (int k = 1; k <= 9; ++k) {
      const double q = quantile(magnitudes, k / 10.0);
      if (q > 0.0 && (grid.c_u.empty() || q != grid.c_u.back())) grid.c_u.push_back(q);
    }
  }
  grid.c_u.push_back(kInf);
  for (double u : grid.c_u) grid.c_b.push_back(-u);
  for (int t = 1; t <= t_cap; ++t) grid.t_max.push_back(t);
  return grid;
}

StoppingFit fit_stopping_thresholds(const OofLlrTable& table, double c_star,
                                    const Objective& objective, const ThresholdGrid& grid,
                                    int threads) {
  if (grid.c_u.empty() || grid.c_b.empty() || grid.t_max.empty()) {
    throw ConfigError("fit_stopping_thresholds: empty grid");
  }
  for (double u : grid.c_u) {
    if (!(u > 0.0)) throw ConfigError("fit_stopping_thresholds: upper thresholds must be > 0");
  }
  for (double b : grid.c_b) {
    if (!(b < 0.0)) throw ConfigError("fit_stopping_thresholds: lower thresholds must be < 0");
  }
  std::vector<int> labels;
  const auto seqs = calibrated_sequences(table, c_star, &labels);
  if (seqs.empty()) throw ConfigError("fit_stopping_thresholds: empty table");

  struct Triple {
    double c_u, c_b;
    int t_max;
  };
  std::vector<Triple> triples;
  for (double u : grid.c_u) {
    for (double b : grid.c_b) {
      for (int t : grid.t_max) triples.push_back({u, b, t});
    }
  }

  std::vector<StoppingFit> fits(triples.size());
  parallel_for(triples.size(), threads, [&](std::size_t k) {
    const auto& tr = triples[k];
    ScoredSet set;
    set.labels = labels;
    set.scores.reserve(seqs.size());
    long tau_sum = 0;
    for (const auto& seq : seqs) {
      const StopResult r = early_stop_trace(seq, tr.c_u, tr.c_b, tr.t_max);
      set.scores.push_back(r.evidence);
      tau_sum += r.tau;
    }
    fits[k] = {tr.c_u, tr.c_b, tr.t_max, objective.evaluate(set),
               static_cast<double>(tau_sum) / static_cast<double>(seqs.size())};
  });

  auto better = [](const StoppingFit& a, const StoppingFit& b) {
    if (a.objective != b.objective) return a.objective > b.objective;
    if (a.mean_tau != b.mean_tau) return a.mean_tau < b.mean_tau;
    if (a.c_u != b.c_u) return a.c_u < b.c_u;
    if (a.c_b != b.c_b) return a.c_b > b.c_b;
    return a.t_max < b.t_max;
  };
  StoppingFit best = fits.front();
  for (const auto& f : fits) {
    if (better(f, best)) best = f;
  }
  return best;
}

Calibration calibrate(const std::vector<SentenceRecord>& records, const CalibrateOptions& options) {
  if (options.k_cv < 2) throw ConfigError("K_cv must be >= 2");
  options.train.validate();
  const FoldAssignment folds = split_stratified(records, options.k_cv, options.split_seed);

  std::vector<FoldSummary> summaries;
  OofLlrTable table = collect_oof_llrs(records, folds, options.train, options.kind, options.arch,
                                       options.t_cap, &summaries);
  const TemperatureFit temperature = fit_temperature(table);
  const ThresholdGrid grid = default_threshold_grid(table, temperature.c_star, options.t_cap);
  const StoppingFit stopping = fit_stopping_thresholds(table, temperature.c_star, options.objective,
                                                       grid, options.threads);
  logger().info("calibration: C* = {:.6g}, C_u = {}, C_b = {}, T_max = {}, OOF {} = {:.4f}, mean tau = {:.3f}",
                temperature.c_star, stopping.c_u, stopping.c_b, stopping.t_max,
                options.objective.to_string(), stopping.objective, stopping.mean_tau);

  std::vector<const SentenceRecord*> all;
  for (const auto& r : records) all.push_back(&r);
  TrainResult final_head = train_head_on_records(all, options.t_cap, options.train, options.kind,
                                                 options.arch);

  CalibrationParams params;
  params.c_star = temperature.c_star;
  params.c_u = stopping.c_u;
  params.c_b = stopping.c_b;
  params.t_max = stopping.t_max;
  params.objective = options.objective;
  params.k_cv = options.k_cv;
  params.seed = options.split_seed;
  params.validate();

  return {std::move(final_head.head), params, std::move(table), std::move(summaries), temperature,
          stopping};
}

SentenceEvidence classify_sentence_early_stop(const ReliabilityHead& head,
                                              const SentenceRecord& record, int t_cap,
                                              const CalibrationParams& params, double delta) {
  const TokenEvidence ev = token_evidence(head, record, t_cap, params.c_star);
  const std::vector<double> masked = ev.masked();
  const StopResult stop = early_stop_trace(masked, params.c_u, params.c_b, params.t_max);

  SentenceEvidence out;
  auto& trace = out.trace;
  trace.llrs = ev.llrs;
  trace.mask = ev.mask;
  double running = 0.0;
  for (double z : masked) {
    running += z;
    trace.cumulative.push_back(running);
  }
  trace.tau = stop.tau;
  trace.decision = decide(stop.evidence, delta);
  out.result = {record.id, "mtre_tau", stop.evidence, trace.decision, stop.tau};
  return out;
}

}  // namespace mtre
