#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "limi/config.hpp"

namespace limi::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kIoError = 3,
  kNumericAbort = 4,
  kIncomplete = 5,
};

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> arm;
};

/// Loads the config file and applies the overrides (and LIMI_THREADS).
ExperimentConfig load(const std::filesystem::path& path, const Overrides& o);

int cmd_gen_data(const ExperimentConfig& c);
int cmd_estimate_mi(const ExperimentConfig& c);
int cmd_pretrain(const ExperimentConfig& c, const std::optional<std::string>& arm);
int cmd_probe(const ExperimentConfig& c, const std::optional<std::string>& arm,
              const std::optional<std::filesystem::path>& checkpoint);
int cmd_matrix(const ExperimentConfig& c);
int cmd_report(const std::filesystem::path& results_dir);

}  // namespace limi::cli
