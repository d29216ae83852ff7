#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtre/baselines.hpp"
#include "mtre/calibration.hpp"
#include "mtre/classifier.hpp"
#include "mtre/divergence.hpp"
#include "mtre/synthgen.hpp"

namespace mtre::cli {

/// Everything one invocation needs, merged from the JSON config file and
/// command-line flags (flags win).
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  int threads = 0;
  int t_cap = kDefaultTokenCap;

  SynthConfig synth;
  std::optional<std::uint64_t> structure_seed;  // global-seed units, see cmd_synth

  std::filesystem::path train_root;
  std::filesystem::path test_root;
  std::filesystem::path head_path;
  std::filesystem::path calibration_path;

  HeadKind kind = HeadKind::probe;
  AttentionArch arch;
  TrainConfig train;

  int k_cv = 5;
  Objective objective;

  std::vector<std::string> methods{"mtre"};
  double delta = 0.0;
  std::optional<PTrueConfig> p_true;

  bool group_split = false;
  KlDirection direction = KlDirection::hallucinated_first;
};

/// Applies one JSON config document onto `config`. Unknown keys are errors.
void apply_config_json(const nlohmann::json& doc, RunConfig& config);

int cmd_synth(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_calibrate(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, std::ostream& out);
int cmd_kl(const RunConfig& config, std::ostream& out);

/// Full command line (args[0] is the program name). Returns the exit code:
/// 0 success, 2 config/validation, 3 data, 4 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mtre::cli
