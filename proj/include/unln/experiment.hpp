#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unln/optim.hpp"

namespace unln {

struct DataConfig {
  std::string generator = "synthetic";  // "synthetic" or "cifar10"
  int classes = 10;
  int per_class = 600;
  int height = 16;
  int width = 16;
  std::string dir;  // cifar10 directory
};

struct PoisonConfig {
  std::string variant = "none";
  // none | classwise-random-noise | classwise-regions | one-pixel |
  // samplewise-random | adversarial
  double epsilon = 8.0 / 255.0;
  int patches = 4;             // classwise-regions
  std::string norm = "linf";   // samplewise-random: "linf" or "l2"
  int steps = 30;              // adversarial PGD steps
  double step_size = -1.0;     // adversarial; < 0 means epsilon/10
};

struct AttackSection {
  std::string method = "none";  // none | ortho-proj | adv-train | class-avg-sub
  double epsilon = 8.0 / 255.0;  // adv-train ball
  int steps = 3;                 // adv-train PGD steps
  double step_size = -1.0;       // adv-train; < 0 means 2*epsilon/steps
  SgdConfig linear;              // ortho-proj linear model stage
  std::optional<SgdConfig> victim;  // attack victim override
};

struct ProbesSection {
  bool perturbations = false;
  bool images = false;
  bool weight_viz = true;
  bool class_averages = false;
  bool any() const { return perturbations || images || class_averages; }
};

struct DfrSection {
  bool enabled = false;
  double subset_fraction = 0.1;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string scale = "desk";  // "desk" or "full"
  std::string output = "runs";
  DataConfig data;
  PoisonConfig poison;
  SgdConfig victim;  // standard training config
  AttackSection attack;
  ProbesSection probes;
  DfrSection dfr;

  // Strict parse: unknown keys are rejected, referenced paths are checked.
  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text, const std::string& origin);

  // Canonical JSON of everything that defines the run identity (excludes the
  // output directory). Also echoed into summary.json.
  std::string canonical_json() const;
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> scale;
};

struct StageSet {
  bool gen_data = false;
  bool gen_poison = false;
  bool probe = false;
  bool train = false;
  bool attack = false;
  bool dfr = false;
  bool clean_baseline = false;

  static StageSet for_command(const std::string& command);
};

struct RunOutcome {
  std::string run_dir;
  bool skipped_existing = false;
};

// Executes the requested stages, writing artifacts under
// <output>/<run-id>/. Throws ConfigError / FormatError / NumericalError on
// stage failures after writing a FAILED marker; never overwrites a completed
// run directory.
RunOutcome run_experiment(const ExperimentConfig& cfg, const StageSet& stages);
RunOutcome run_experiment_file(const std::string& config_path, const CliOverrides& overrides,
                               const std::string& command);

// Consolidated comparison table over run directories: one row per run with
// poison, attack, final test accuracy, max-DFR accuracy and probe accuracy.
// Writes report.csv and report.txt under out_dir and streams the text table.
// Malformed summaries are skipped with a warning. Returns rows written.
int report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
           std::ostream& text_out);

}  // namespace unln
