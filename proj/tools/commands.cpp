#include "commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "mtre/aggregation.hpp"
#include "mtre/error.hpp"
#include "mtre/log.hpp"
#include "mtre/metrics.hpp"
#include "mtre/parallel.hpp"
#include "mtre/rng.hpp"

namespace mtre::cli {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kHeadFile = "head.bin";
constexpr const char* kLossFile = "train_loss.csv";
constexpr const char* kCalibrationFile = "calibration.json";
constexpr const char* kResultsFile = "results.jsonl";
constexpr const char* kMetricsFile = "metrics.json";
constexpr const char* kKlFile = "kl_curve.csv";
constexpr const char* kGroundTruthFile = "ground_truth.json";

const std::vector<std::string> kKnownMethods = {"mtre",      "mtre_tau", kSeqLogprob,
                                                kFirstTokenProbe, kPTrue,    kTokenSar};

void reject_unknown(const json& section, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  if (!section.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in '" + where + "'");
  }
}

template <typename T>
void read(const json& section, const char* key, T& target, const std::string& where) {
  if (!section.contains(key)) return;
  try {
    target = section.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + where + "." + key + "': " + e.what());
  }
}

void read_path(const json& section, const char* key, fs::path& target, const std::string& where) {
  std::string s;
  if (!section.contains(key)) return;
  read(section, key, s, where);
  target = s;
}

void apply_train_section(const json& t, RunConfig& c) {
  reject_unknown(t, {"data", "kind", "learning_rate", "epochs", "batch_size", "weight_decay",
                     "dropout_rate", "optimizer", "attention"},
                 "train");
  read_path(t, "data", c.train_root, "train");
  if (t.contains("kind")) c.kind = head_kind_from_string(t.at("kind").get<std::string>());
  read(t, "learning_rate", c.train.learning_rate, "train");
  read(t, "epochs", c.train.epochs, "train");
  read(t, "batch_size", c.train.batch_size, "train");
  read(t, "weight_decay", c.train.weight_decay, "train");
  read(t, "dropout_rate", c.train.dropout_rate, "train");
  if (t.contains("optimizer")) c.train.optimizer = optimizer_from_string(t.at("optimizer").get<std::string>());
  if (t.contains("attention")) {
    const auto& a = t.at("attention");
    reject_unknown(a, {"embed_dim", "num_heads", "num_layers", "mlp_dim", "sequence_chunks"},
                   "train.attention");
    read(a, "embed_dim", c.arch.embed_dim, "train.attention");
    read(a, "num_heads", c.arch.num_heads, "train.attention");
    read(a, "num_layers", c.arch.num_layers, "train.attention");
    read(a, "mlp_dim", c.arch.mlp_dim, "train.attention");
    read(a, "sequence_chunks", c.arch.sequence_chunks, "train.attention");
  }
}

void require_dir(const fs::path& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " not set");
  if (!fs::is_directory(path)) throw ConfigError(what + " does not exist: " + path.string());
}

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " not set");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " does not exist: " + path.string());
}

void ensure_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string());
}

std::vector<const SentenceRecord*> pointers(const std::vector<SentenceRecord>& records) {
  std::vector<const SentenceRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  return out;
}

ordered_json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

struct MetricsRow {
  std::string method;
  double accuracy = 0.0;
  double f1_value = 0.0;
  std::optional<double> auroc_value;
  double threshold = 0.0;
};

MetricsRow summarize(const std::string& method, const std::vector<DetectionResult>& results,
                     const std::vector<int>& labels, double threshold) {
  MetricsRow row{method, 0.0, 0.0, std::nullopt, threshold};
  std::vector<int> decisions;
  ScoredSet set;
  set.labels = labels;
  for (const auto& r : results) {
    decisions.push_back(r.decision.value_or(0));
    set.scores.push_back(reliability_score(method, r.score));
  }
  row.accuracy = accuracy(decisions, labels);
  row.f1_value = f1(decisions, labels);
  if (set.positives() > 0 && set.negatives() > 0) row.auroc_value = auroc(set);
  return row;
}

void add_train_flags(CLI::App* sub, std::optional<std::string>& kind, std::optional<int>& epochs,
                     std::optional<double>& lr, std::optional<int>& batch,
                     std::optional<double>& wd, std::optional<double>& dropout,
                     std::optional<std::string>& optimizer) {
  sub->add_option("--kind", kind, "Head kind: probe or attention");
  sub->add_option("--epochs", epochs, "Training epochs");
  sub->add_option("--lr", lr, "Learning rate");
  sub->add_option("--batch-size", batch, "Minibatch size");
  sub->add_option("--weight-decay", wd, "L2 penalty lambda");
  sub->add_option("--dropout", dropout, "Dropout rate (attention head)");
  sub->add_option("--optimizer", optimizer, "sgd or adam");
}

}  // namespace

void apply_config_json(const json& doc, RunConfig& c) {
  reject_unknown(doc, {"seed", "out", "threads", "t_cap", "synth", "train", "calibrate", "eval", "kl"},
                 "<root>");
  read(doc, "seed", c.seed, "<root>");
  read_path(doc, "out", c.out, "<root>");
  read(doc, "threads", c.threads, "<root>");
  read(doc, "t_cap", c.t_cap, "<root>");
  if (doc.contains("synth")) {
    const auto& s = doc.at("synth");
    reject_unknown(s, {"vocab_size", "num_sentences", "min_tokens", "max_tokens", "tokens", "onset",
                       "signal_strength", "noise_scale", "positive_fraction", "num_groups",
                       "emit_relevance", "structure_seed"},
                   "synth");
    read(s, "vocab_size", c.synth.vocab_size, "synth");
    read(s, "num_sentences", c.synth.num_sentences, "synth");
    if (s.contains("tokens")) {
      read(s, "tokens", c.synth.max_tokens, "synth");
      c.synth.min_tokens = c.synth.max_tokens;
    }
    read(s, "min_tokens", c.synth.min_tokens, "synth");
    read(s, "max_tokens", c.synth.max_tokens, "synth");
    read(s, "onset", c.synth.onset, "synth");
    read(s, "signal_strength", c.synth.signal_strength, "synth");
    read(s, "noise_scale", c.synth.noise_scale, "synth");
    read(s, "positive_fraction", c.synth.positive_fraction, "synth");
    read(s, "num_groups", c.synth.num_groups, "synth");
    read(s, "emit_relevance", c.synth.emit_relevance, "synth");
    if (s.contains("structure_seed")) {
      std::uint64_t v = 0;
      read(s, "structure_seed", v, "synth");
      c.structure_seed = v;
    }
  }
  if (doc.contains("train")) apply_train_section(doc.at("train"), c);
  if (doc.contains("calibrate")) {
    const auto& s = doc.at("calibrate");
    reject_unknown(s, {"data", "k_cv", "objective"}, "calibrate");
    read_path(s, "data", c.train_root, "calibrate");
    read(s, "k_cv", c.k_cv, "calibrate");
    if (s.contains("objective")) c.objective = Objective::parse(s.at("objective").get<std::string>());
  }
  if (doc.contains("eval")) {
    const auto& s = doc.at("eval");
    reject_unknown(s, {"train", "test", "head", "calibration", "methods", "delta", "p_true"}, "eval");
    read_path(s, "train", c.train_root, "eval");
    read_path(s, "test", c.test_root, "eval");
    read_path(s, "head", c.head_path, "eval");
    read_path(s, "calibration", c.calibration_path, "eval");
    read(s, "methods", c.methods, "eval");
    read(s, "delta", c.delta, "eval");
    if (s.contains("p_true")) {
      const auto& p = s.at("p_true");
      reject_unknown(p, {"true_token_id", "false_token_id", "answer_position"}, "eval.p_true");
      PTrueConfig cfg;
      read(p, "true_token_id", cfg.true_token_id, "eval.p_true");
      read(p, "false_token_id", cfg.false_token_id, "eval.p_true");
      read(p, "answer_position", cfg.answer_position, "eval.p_true");
      c.p_true = cfg;
    }
  }
  if (doc.contains("kl")) {
    const auto& s = doc.at("kl");
    reject_unknown(s, {"data", "group_split", "direction"}, "kl");
    read_path(s, "data", c.test_root, "kl");
    read(s, "group_split", c.group_split, "kl");
    if (s.contains("direction")) {
      const auto d = s.at("direction").get<std::string>();
      if (d == "hallucinated_first") {
        c.direction = KlDirection::hallucinated_first;
      } else if (d == "truthful_first") {
        c.direction = KlDirection::truthful_first;
      } else {
        throw ConfigError("config: kl.direction must be hallucinated_first or truthful_first");
      }
    }
  }
}

int cmd_synth(const RunConfig& config, std::ostream& out) {
  SynthConfig synth = config.synth;
  synth.seed = derive_seed(config.seed, "synth");
  // Mapped like the global seed, so `--structure-seed 7` matches a dataset made with `--seed 7`.
  if (config.structure_seed) synth.structure_seed = derive_seed(*config.structure_seed, "synth");
  const Dataset ds = generate(synth);
  ensure_out(config.out);
  save_dataset(ds.meta, ds.records, config.out);
  std::ofstream truth(config.out / kGroundTruthFile, std::ios::binary);
  truth << to_json(describe(synth)).dump(2) << '\n';
  if (!truth) throw DataError("cannot write " + (config.out / kGroundTruthFile).string());
  out << "wrote " << ds.records.size() << " sentences to " << config.out.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  require_dir(config.train_root, "train root");
  const Dataset ds = load_dataset(config.train_root);
  if (ds.records.empty()) throw DataError("train root holds no sentences: " + config.train_root.string());
  TrainConfig train = config.train;
  train.seed = derive_seed(config.seed, "train");
  const TrainResult result =
      train_head_on_records(pointers(ds.records), config.t_cap, train, config.kind, config.arch);

  ensure_out(config.out);
  save_head(result.head, config.out / kHeadFile);
  std::ofstream csv(config.out / kLossFile, std::ios::binary);
  csv << "epoch,loss\n" << std::setprecision(17);
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    csv << e + 1 << ',' << result.loss_history[e] << '\n';
  }
  if (!csv) throw DataError("cannot write " + (config.out / kLossFile).string());
  out << "trained " << to_string(config.kind) << " head on " << ds.records.size() << " sentences ("
      << result.loss_history.size() << " epochs)\n";
  return 0;
}

int cmd_calibrate(const RunConfig& config, std::ostream& out) {
  if (config.k_cv < 2) throw ConfigError("K_cv must be >= 2 (got " + std::to_string(config.k_cv) + ")");
  require_dir(config.train_root, "train root");
  const Dataset ds = load_dataset(config.train_root);

  CalibrateOptions options;
  options.k_cv = config.k_cv;
  options.train = config.train;
  options.train.seed = derive_seed(config.seed, "train");
  options.kind = config.kind;
  options.arch = config.arch;
  options.t_cap = config.t_cap;
  options.objective = config.objective;
  options.split_seed = derive_seed(config.seed, "split");
  options.threads = config.threads;
  const Calibration cal = calibrate(ds.records, options);

  ensure_out(config.out);
  save_calibration(cal.params, config.out / kCalibrationFile);
  save_head(cal.head, config.out / kHeadFile);
  out << "calibrated: C* = " << cal.params.c_star << ", C_u = " << cal.params.c_u
      << ", C_b = " << cal.params.c_b << ", T_max = " << cal.params.t_max << '\n';
  return 0;
}

int cmd_eval(const RunConfig& config, std::ostream& out) {
  require_dir(config.test_root, "test root");
  if (config.methods.empty()) throw ConfigError("eval: no methods selected");
  for (const auto& m : config.methods) {
    if (std::find(kKnownMethods.begin(), kKnownMethods.end(), m) == kKnownMethods.end()) {
      throw ConfigError("eval: unknown method '" + m + "'");
    }
  }
  auto wants = [&](const char* m) {
    return std::find(config.methods.begin(), config.methods.end(), m) != config.methods.end();
  };
  const bool needs_head = wants("mtre") || wants("mtre_tau");
  const bool needs_train = wants(kSeqLogprob) || wants(kTokenSar) || wants(kPTrue) || wants(kFirstTokenProbe);
  if (needs_head) require_file(config.head_path, "head file (required by mtre/mtre_tau)");
  if (wants("mtre_tau")) require_file(config.calibration_path, "calibration file (required by mtre_tau)");
  if (needs_train) require_dir(config.train_root, "train root (required by baselines)");
  if (wants(kPTrue) && !config.p_true) throw ConfigError("eval: p_true requires eval.p_true token ids");

  const Dataset test = load_dataset(config.test_root);
  std::optional<Dataset> train;
  if (needs_train) train = load_dataset(config.train_root);
  std::optional<ReliabilityHead> head;
  if (needs_head) head = load_head(config.head_path, test.meta.vocab_size);
  std::optional<CalibrationParams> params;
  if (!config.calibration_path.empty()) {
    require_file(config.calibration_path, "calibration file");
    params = load_calibration(config.calibration_path);
  }

  std::vector<int> labels, train_labels;
  for (const auto& r : test.records) labels.push_back(r.label);
  if (train) {
    for (const auto& r : train->records) train_labels.push_back(r.label);
  }

  std::vector<DetectionResult> all_results;
  std::vector<MetricsRow> rows;
  for (const auto& method : config.methods) {
    std::vector<DetectionResult> results(test.records.size());
    double threshold = config.delta;
    if (method == "mtre") {
      const double temperature = params ? params->c_star : 1.0;
      parallel_for(test.records.size(), config.threads, [&](std::size_t i) {
        results[i] = classify_sentence(*head, test.records[i], config.t_cap, temperature, config.delta).result;
      });
    } else if (method == "mtre_tau") {
      parallel_for(test.records.size(), config.threads, [&](std::size_t i) {
        results[i] =
            classify_sentence_early_stop(*head, test.records[i], config.t_cap, *params, config.delta).result;
      });
    } else if (method == kFirstTokenProbe) {
      TrainConfig tc = config.train;
      tc.seed = derive_seed(config.seed, "train");
      FirstTokenProbe probe = first_token_probe(train->records, test.records, tc);
      results = std::move(probe.results);
      threshold = probe.threshold;
    } else {
      const PTrueConfig* pt = config.p_true ? &*config.p_true : nullptr;
      const auto train_scores = score_records(method, train->records, config.t_cap, pt);
      results = score_records(method, test.records, config.t_cap, pt);
      threshold = apply_youden_decisions(method, train_scores, train_labels, results);
    }
    rows.push_back(summarize(method, results, labels, threshold));
    all_results.insert(all_results.end(), results.begin(), results.end());
  }

  ensure_out(config.out);
  write_results_jsonl(all_results, config.out / kResultsFile);
  ordered_json report = ordered_json::array();
  for (const auto& row : rows) {
    ordered_json j;
    j["method"] = row.method;
    j["split"] = "test";
    j["accuracy"] = row.accuracy;
    j["f1"] = row.f1_value;
    j["auroc"] = row.auroc_value ? ordered_json(*row.auroc_value) : ordered_json(nullptr);
    j["threshold"] = number_or_inf(row.threshold);
    report.push_back(j);
  }
  std::ofstream metrics(config.out / kMetricsFile, std::ios::binary);
  metrics << report.dump(2) << '\n';
  if (!metrics) throw DataError("cannot write " + (config.out / kMetricsFile).string());

  out << std::left << std::setw(16) << "method" << std::right << std::setw(10) << "accuracy"
      << std::setw(10) << "f1" << std::setw(10) << "auroc" << std::setw(14) << "threshold" << '\n';
  out << std::fixed;
  for (const auto& row : rows) {
    out << std::left << std::setw(16) << row.method << std::right << std::setprecision(4)
        << std::setw(10) << row.accuracy << std::setw(10) << row.f1_value << std::setw(10);
    if (row.auroc_value) {
      out << *row.auroc_value;
    } else {
      out << "n/a";
    }
    out << std::setw(14) << row.threshold << '\n';
  }
  out.unsetf(std::ios::fixed);
  return 0;
}

int cmd_kl(const RunConfig& config, std::ostream& out) {
  require_dir(config.test_root, "kl data root");
  const Dataset ds = load_dataset(config.test_root);
  KlOptions options;
  options.t_cap = config.t_cap;
  options.direction = config.direction;
  options.split_by_group = config.group_split;
  options.threads = config.threads;
  const auto curves = positionwise_kl_curve(ds.records, options);
  ensure_out(config.out);
  write_kl_csv(curves, config.out / kKlFile);
  out << "wrote " << curves.size() << " curve(s) to " << (config.out / kKlFile).string() << '\n';
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-token reliability estimation for hallucination detection", "mtre"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads, t_cap;
  for (CLI::App* target : {&app}) {
    target->add_option("--config", config_path, "JSON config file");
    target->add_option("--seed", seed, "Global seed");
    target->add_option("--out", out_dir, "Output directory");
    target->add_option("--threads", threads, "Worker cap (0 = all cores)");
    target->add_option("--t-cap", t_cap, "Token cap per sentence");
  }

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "Train a token-level reliability head");
  auto* calib = app.add_subcommand("calibrate", "Cross-fit temperature and stopping thresholds");
  auto* eval = app.add_subcommand("eval", "Score a test set with the selected methods");
  auto* kl = app.add_subcommand("kl", "Positionwise KL divergence curve");
  for (auto* sub : {synth, train, calib, eval, kl}) sub->fallthrough();

  std::optional<int> vocab, sentences, tokens, min_tokens, max_tokens, onset, groups;
  std::optional<double> signal, noise, pos_fraction;
  bool relevance = false;
  synth->add_option("--vocab-size", vocab);
  synth->add_option("--num-sentences", sentences);
  synth->add_option("--tokens", tokens, "Fixed tokens per sentence");
  synth->add_option("--min-tokens", min_tokens);
  synth->add_option("--max-tokens", max_tokens);
  synth->add_option("--onset", onset);
  synth->add_option("--signal", signal);
  synth->add_option("--noise", noise);
  synth->add_option("--positive-fraction", pos_fraction);
  synth->add_option("--groups", groups);
  synth->add_flag("--relevance", relevance, "Emit random relevance weights");
  std::optional<std::uint64_t> structure_seed;
  synth->add_option("--structure-seed", structure_seed,
                    "Global seed whose base logits and signal direction to reuse");

  std::optional<std::string> data, kind, optimizer;
  std::optional<int> epochs, batch, k_cv;
  std::optional<double> lr, wd, dropout;
  std::optional<std::string> objective;
  train->add_option("--data", data, "Training dataset directory");
  add_train_flags(train, kind, epochs, lr, batch, wd, dropout, optimizer);
  calib->add_option("--data", data, "Training dataset directory");
  add_train_flags(calib, kind, epochs, lr, batch, wd, dropout, optimizer);
  calib->add_option("--k-cv", k_cv, "Number of stratified folds");
  calib->add_option("--objective", objective, "auroc, pr_auc or f1_at_fpr(<fpr>)");

  std::optional<std::string> train_root, test_root, head_path, cal_path, methods;
  std::optional<double> delta;
  std::optional<std::vector<int>> p_true_ids;
  std::optional<int> answer_position;
  eval->add_option("--train", train_root, "Training dataset (baselines)");
  eval->add_option("--test", test_root, "Test dataset");
  eval->add_option("--head", head_path, "Head file");
  eval->add_option("--calibration", cal_path, "Calibration JSON");
  eval->add_option("--methods", methods, "Comma-separated methods");
  eval->add_option("--delta", delta, "MAP threshold");
  eval->add_option("--p-true-ids", p_true_ids, "true,false verdict token ids")->delimiter(',')->expected(2);
  eval->add_option("--answer-position", answer_position);
  add_train_flags(eval, kind, epochs, lr, batch, wd, dropout, optimizer);

  bool group_split = false;
  std::optional<std::string> direction;
  kl->add_option("--data", data, "Dataset directory");
  kl->add_flag("--group-split", group_split, "One curve per group tag");
  kl->add_option("--direction", direction, "hallucinated_first or truthful_first");

  std::vector<std::string> argv_rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_rest.begin(), argv_rest.end());
  try {
    app.parse(argv_rest);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::config);
  }

  try {
    RunConfig config;
    if (config_path) {
      std::ifstream in(*config_path);
      if (!in) throw ConfigError("cannot open config file " + *config_path);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + *config_path + ": " + e.what());
      }
      apply_config_json(doc, config);
    }
    if (seed) config.seed = *seed;
    if (out_dir) config.out = *out_dir;
    if (threads) config.threads = *threads;
    if (t_cap) config.t_cap = *t_cap;
    if (config.t_cap < 1) throw ConfigError("t_cap must be >= 1");
    set_default_threads(config.threads);

    if (vocab) config.synth.vocab_size = *vocab;
    if (sentences) config.synth.num_sentences = *sentences;
    if (tokens) config.synth.min_tokens = config.synth.max_tokens = *tokens;
    if (min_tokens) config.synth.min_tokens = *min_tokens;
    if (max_tokens) config.synth.max_tokens = *max_tokens;
    if (onset) config.synth.onset = *onset;
    if (signal) config.synth.signal_strength = *signal;
    if (noise) config.synth.noise_scale = *noise;
    if (pos_fraction) config.synth.positive_fraction = *pos_fraction;
    if (groups) config.synth.num_groups = *groups;
    if (relevance) config.synth.emit_relevance = true;
    if (structure_seed) config.structure_seed = *structure_seed;

    if (kind) config.kind = head_kind_from_string(*kind);
    if (epochs) config.train.epochs = *epochs;
    if (lr) config.train.learning_rate = *lr;
    if (batch) config.train.batch_size = *batch;
    if (wd) config.train.weight_decay = *wd;
    if (dropout) config.train.dropout_rate = *dropout;
    if (optimizer) config.train.optimizer = optimizer_from_string(*optimizer);
    if (k_cv) config.k_cv = *k_cv;
    if (objective) config.objective = Objective::parse(*objective);

    if (train_root) config.train_root = *train_root;
    if (test_root) config.test_root = *test_root;
    if (head_path) config.head_path = *head_path;
    if (cal_path) config.calibration_path = *cal_path;
    if (methods) {
      config.methods.clear();
      std::stringstream ss(*methods);
      std::string m;
      while (std::getline(ss, m, ',')) {
        if (!m.empty()) config.methods.push_back(m);
      }
    }
    if (delta) config.delta = *delta;
    if (p_true_ids) {
      PTrueConfig pt = config.p_true.value_or(PTrueConfig{});
      pt.true_token_id = (*p_true_ids)[0];
      pt.false_token_id = (*p_true_ids)[1];
      config.p_true = pt;
    }
    if (answer_position) {
      PTrueConfig pt = config.p_true.value_or(PTrueConfig{});
      pt.answer_position = *answer_position;
      config.p_true = pt;
    }
    if (group_split) config.group_split = true;
    if (direction) {
      if (*direction == "hallucinated_first") {
        config.direction = KlDirection::hallucinated_first;
      } else if (*direction == "truthful_first") {
        config.direction = KlDirection::truthful_first;
      } else {
        throw ConfigError("--direction must be hallucinated_first or truthful_first");
      }
    }

    if (synth->parsed()) return cmd_synth(config, out);
    if (train->parsed()) {
      if (data) config.train_root = *data;
      return cmd_train(config, out);
    }
    if (calib->parsed()) {
      if (data) config.train_root = *data;
      return cmd_calibrate(config, out);
    }
    if (eval->parsed()) return cmd_eval(config, out);
    if (kl->parsed()) {
      if (data) config.test_root = *data;
      return cmd_kl(config, out);
    }
    return static_cast<int>(ErrorKind::config);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::data);
  }
}

}  // namespace mtre::cli
