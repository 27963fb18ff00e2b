#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "limi/error.hpp"

namespace fs = std::filesystem;
using namespace limi::cli;

namespace {

int exit_code(const limi::Error& e) {
  switch (e.kind()) {
    case limi::ErrorKind::kConfig:
      return kConfigError;
    case limi::ErrorKind::kIo:
      return kIoError;
    case limi::ErrorKind::kNumeric:
      return kNumericAbort;
    default:
      return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local and global mutual-information pretraining experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "limi 0.1.0");

  fs::path config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::string arm;
  std::optional<fs::path> checkpoint;
  fs::path results_dir;

  auto add_common = [&](CLI::App* sub, bool with_arm) {
    sub->add_option("--config", config_path, "Experiment config file")->required();
    sub->add_option("--seed", seed, "Override the master seed");
    sub->add_option("--out", out, "Override the output directory");
    if (with_arm) sub->add_option("--arm", arm, "Arm filter, e.g. local-mi/cpc/frozen");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate datasets and ground-truth MI");
  add_common(gen, false);
  auto* est = app.add_subcommand("estimate-mi", "Train a critic on Gaussian pairs");
  add_common(est, false);
  auto* pre = app.add_subcommand("pretrain", "Pretrain encoders and critic");
  add_common(pre, true);
  auto* probe = app.add_subcommand("probe", "Train and evaluate a downstream probe");
  add_common(probe, true);
  probe->add_option("--checkpoint", checkpoint, "Pretrained model checkpoint");
  auto* matrix = app.add_subcommand("matrix", "Run every arm over every seed");
  add_common(matrix, true);
  auto* report = app.add_subcommand("report", "Summarize a matrix results directory");
  report->add_option("dir", results_dir, "Matrix output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (report->parsed()) return cmd_report(results_dir);

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--out")) overrides.out = out;
    if (sub->get_option_no_throw("--arm") && sub->count("--arm")) overrides.arm = arm;
    const limi::ExperimentConfig config = load(config_path, overrides);

    if (gen->parsed()) return cmd_gen_data(config);
    if (est->parsed()) return cmd_estimate_mi(config);
    if (pre->parsed()) return cmd_pretrain(config, overrides.arm);
    if (probe->parsed()) return cmd_probe(config, overrides.arm, checkpoint);
    if (matrix->parsed()) return cmd_matrix(config);
  } catch (const limi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
