#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "limi/model.hpp"
#include "limi/synthetic_world.hpp"
#include "limi/trainer.hpp"

namespace limi {

/// Everything a CLI run needs. The text form is sectioned key = value
/// lines; see docs/formats.md for the key list and canonical layout.
struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 0;  // master seed
  std::string out_dir = "out";

  WorldConfig world;           // [world]
  DataConfig data;             // [data]
  ModelConfig model;           // [encoder] and [critic]
  TrainConfig train;           // [train]
  ProbeConfig probe;           // [probe]
  GaussianTrainConfig gaussian;  // [gaussian]

  // [matrix]
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string arms;  // substring filter over arm ids; empty keeps all
  std::size_t threads = 1;

  ExperimentConfig();

  /// Copies dependent values (image size, vocabulary, run seeds) between
  /// sections. Called by the parser; call again after editing fields.
  void sync();
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&);
};

/// Parses config text. Unknown sections or keys, duplicates, malformed
/// values and failed validation raise ConfigError carrying the line number
/// (0 for whole-file checks). `source` prefixes messages.
ExperimentConfig parse_config(std::istream& in, std::string_view source = "config");
ExperimentConfig parse_config_string(std::string_view text,
                                     std::string_view source = "config");
/// Throws IoError when the file cannot be read.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text: every section and key in fixed order, shortest
/// round-trip numbers. parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

/// FNV-1a of the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

/// Hash of the settings that determine a pretrained model: master seed,
/// world, data, encoder, critic and train sections.
std::uint64_t pretrain_hash(const ExperimentConfig& config);

/// The experiment matrix described by the config (arms filtered, threads
/// as configured).
MatrixConfig matrix_config(const ExperimentConfig& config);

}  // namespace limi
