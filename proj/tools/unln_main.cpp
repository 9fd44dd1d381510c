#include <CLI11.hpp>
#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "unln/error.hpp"
#include "unln/experiment.hpp"

namespace {

void apply_thread_cap() {
  const char* env = std::getenv("UNLN_THREADS");
  if (!env) return;
  try {
    const long v = std::stol(env);
    if (v >= 1) omp_set_num_threads(static_cast<int>(std::min(v, 256L)));
  } catch (...) {
    std::cerr << "unln: warning: ignoring invalid UNLN_THREADS=" << env << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"unln: generate, audit and break unlearnable image datasets"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scale;
  std::uint64_t seed = 0;

  const std::vector<std::pair<std::string, std::string>> pipeline_cmds = {
      {"gen-data", "generate and save the clean dataset"},
      {"gen-poison", "generate perturbations and the poisoned train set"},
      {"probe", "run linear-separability probes"},
      {"train", "train the victim on the configured data"},
      {"attack", "run the configured attack plus a clean baseline"},
      {"dfr", "train with checkpoints and run the DFR sweep"},
      {"run", "full pipeline: generate, poison, probe, train, attack, dfr"},
  };
  for (const auto& [name, desc] : pipeline_cmds) {
    CLI::App* c = app.add_subcommand(name, desc);
    c->add_option("--config", config_path, "experiment config (JSON)")->required();
    c->add_option("--seed", seed, "override the root seed");
    c->add_option("--out", out_dir, "output root directory");
    c->add_option("--scale", scale, "desk or full")
        ->check(CLI::IsMember({"desk", "full"}));
  }

  std::vector<std::string> report_dirs;
  std::string report_out = ".";
  CLI::App* rep = app.add_subcommand("report", "consolidate run summaries into a table");
  rep->add_option("dirs", report_dirs, "run directories containing summary.json");
  rep->add_option("--out", report_out, "directory for report.csv and report.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (sub->get_name() == "report") {
      unln::report(report_dirs, report_out, std::cout);
      return 0;
    }
    unln::CliOverrides ov;
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--out")) ov.out = out_dir;
    if (sub->count("--scale")) ov.scale = scale;
    const unln::RunOutcome outcome =
        unln::run_experiment_file(config_path, ov, sub->get_name());
    std::cout << (outcome.skipped_existing ? "run already complete: " : "run directory: ")
              << outcome.run_dir << "\n";
    return 0;
  } catch (const unln::ConfigError& e) {
    std::cerr << "unln: config error: " << e.what() << "\n";
    return 2;
  } catch (const unln::ShapeError& e) {
    std::cerr << "unln: config error: " << e.what() << "\n";
    return 2;
  } catch (const unln::FormatError& e) {
    std::cerr << "unln: data format error: " << e.what() << "\n";
    return 3;
  } catch (const unln::NumericalError& e) {
    std::cerr << "unln: numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unln: error: " << e.what() << "\n";
    return 1;
  }
}
