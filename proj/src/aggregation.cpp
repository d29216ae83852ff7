#include "mtre/aggregation.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mtre/parallel.hpp"

namespace mtre {

double aggregate_evidence(std::span<const double> llrs, std::span<const int> mask, int tau) {
  if (llrs.size() != mask.size()) throw ConfigError("aggregate_evidence: length mismatch");
  if (tau < 1 || tau > static_cast<int>(llrs.size())) {
    throw ConfigError("aggregate_evidence: tau " + std::to_string(tau) + " outside [1, " +
                      std::to_string(llrs.size()) + "]");
  }
  double total = 0.0;
  for (int t = 0; t < tau; ++t) total += mask[static_cast<std::size_t>(t)] * llrs[static_cast<std::size_t>(t)];
  return total;
}

int scored_length(const std::vector<int>& mask, int t_cap) {
  if (t_cap < 1) throw ConfigError("t_cap must be >= 1");
  return std::min(effective_length(mask), t_cap);
}

std::vector<double> TokenEvidence::masked() const {
  std::vector<double> out(llrs.size());
  for (std::size_t t = 0; t < llrs.size(); ++t) out[t] = mask[t] * llrs[t];
  return out;
}

TokenEvidence token_evidence(const ReliabilityHead& head, const SentenceRecord& record, int t_cap,
                             double temperature, double epsilon) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const std::vector<int> full_mask = pad_mask(record, epsilon);
  const int n = scored_length(full_mask, t_cap);
  TokenEvidence ev;
  ev.llrs.resize(static_cast<std::size_t>(n));
  ev.mask.assign(full_mask.begin(), full_mask.begin() + n);
  for (int t = 0; t < n; ++t) {
    const Eigen::VectorXd x = record.logits.row(t).transpose().cast<double>();
    ev.llrs[static_cast<std::size_t>(t)] = token_llr(predict_token(head, x)) / temperature;
  }
  return ev;
}

SentenceEvidence classify_sentence(const ReliabilityHead& head, const SentenceRecord& record,
                                   int t_cap, double temperature, double delta, double epsilon) {
  TokenEvidence ev = token_evidence(head, record, t_cap, temperature, epsilon);
  SentenceEvidence out;
  auto& trace = out.trace;
  trace.llrs = std::move(ev.llrs);
  trace.mask = std::move(ev.mask);
  trace.cumulative.resize(trace.llrs.size());
  double running = 0.0;
  for (std::size_t t = 0; t < trace.llrs.size(); ++t) {
    running += trace.mask[t] * trace.llrs[t];
    trace.cumulative[t] = running;
  }
  trace.tau = static_cast<int>(trace.llrs.size());
  trace.decision = decide(running, delta);
  out.result = {record.id, "mtre", running, trace.decision, trace.tau};
  return out;
}

std::vector<SentenceEvidence> classify_sentences(const ReliabilityHead& head,
                                                 const std::vector<SentenceRecord>& records,
                                                 int t_cap, double temperature, double delta,
                                                 int threads) {
  std::vector<SentenceEvidence> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    out[i] = classify_sentence(head, records[i], t_cap, temperature, delta);
  });
  return out;
}

void write_results_jsonl(std::span<const DetectionResult> results, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : results) {
    nlohmann::ordered_json row;
    row["id"] = r.sentence_id;
    row["method"] = r.method;
    row["score"] = r.score;
    row["decision"] = r.decision ? nlohmann::ordered_json(*r.decision) : nlohmann::ordered_json(nullptr);
    row["tau"] = r.tau ? nlohmann::ordered_json(*r.tau) : nlohmann::ordered_json(nullptr);
    out << row.dump() << '\n';
  }
  if (!out) throw DataError("I/O failure writing " + path.string());
}

std::vector<DetectionResult> read_results_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<DetectionResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    DetectionResult r;
    r.sentence_id = row.at("id").get<std::string>();
    r.method = row.at("method").get<std::string>();
    r.score = row.at("score").get<double>();
    if (!row.at("decision").is_null()) r.decision = row.at("decision").get<int>();
    if (!row.at("tau").is_null()) r.tau = row.at("tau").get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mtre
