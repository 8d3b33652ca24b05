// fpme: command-line driver for the fractional porous-medium toolkit.
//
//   fpme <verify-operator|forward|asymptotics|recover|all> --config FILE [--out DIR]
//        [--seed N] [--jobs N] [--strict]
//
// Exit codes: 0 all checks passed, 1 numerical failure, 2 configuration error.

#include "fpme/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <cstdio>

namespace {

int run(const std::string& command, const std::string& config_path, const std::string& out_dir,
        std::optional<std::uint64_t> seed, int jobs, bool strict) {
  fpme::ExperimentConfig cfg = fpme::load_config(config_path);
  if (seed) {
    cfg.raw["seed"] = *seed;
    cfg.seed = *seed;
    cfg.hash = fpme::content_hash(cfg.raw);
  }
  fpme::RunOptions opts;
  opts.out = out_dir.empty() ? std::filesystem::path(cfg.output_directory) : std::filesystem::path(out_dir);
  opts.jobs = std::max(1, jobs);
  opts.strict = strict;
  fpme::ExperimentContext ctx(std::move(cfg), opts);

  std::vector<fpme::StageResult> stages;
  if (command == "verify-operator")
    stages.push_back(fpme::cmd_verify_operator(ctx));
  else if (command == "forward")
    stages.push_back(fpme::cmd_forward(ctx));
  else if (command == "asymptotics")
    stages.push_back(fpme::cmd_asymptotics(ctx));
  else if (command == "recover")
    stages.push_back(fpme::cmd_recover(ctx));
  else
    stages = fpme::cmd_all(ctx);

  for (const auto& s : stages) {
    fmt::print("{:<16} {}\n", s.stage, s.pass ? "pass" : "FAIL");
    for (const auto& w : s.warnings) fmt::print("  warning: {}\n", w);
  }
  return fpme::exit_status(stages, strict);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fractional porous-medium equation: forward solves, asymptotics and recovery"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed_value = 0;
  int jobs = 1;
  bool strict = false;
  std::string command;

  for (const char* name : {"verify-operator", "forward", "asymptotics", "recover", "all"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "Experiment configuration (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory (default: outputs.directory of the config)");
    sub->add_option("--seed", seed_value, "Override the configured seed");
    sub->add_option("--jobs", jobs, "Concurrent jobs")->check(CLI::PositiveNumber);
    sub->add_flag("--strict", strict, "Treat warnings as failures");
    sub->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::optional<std::uint64_t> seed;
  for (CLI::App* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) seed = seed_value;

  try {
    return run(command, config_path, out_dir, seed, jobs, strict);
  } catch (const fpme::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const fpme::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
