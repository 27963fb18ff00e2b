#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "limi/synthetic_world.hpp"

namespace limi {

/// Text header of a dataset file; the binary records follow the "end" line.
/// Layout documented in docs/formats.md.
struct DatasetHeader {
  std::uint32_t version = 1;
  std::string split;
  std::uint64_t samples = 0;
  std::uint64_t image_size = 0;
  std::uint64_t regions = 0;
  std::uint64_t seed = 0;
  std::uint64_t world_hash = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<WorldSample> samples;
};

/// Throws DimensionError if a sample disagrees with the header shapes.
void write_dataset(std::ostream& out, const DatasetHeader& header,
                   std::span<const WorldSample> samples);
/// Throws IoError on a malformed or truncated file.
Dataset read_dataset(std::istream& in);

void write_dataset_file(const std::filesystem::path& path, const DatasetHeader& header,
                        std::span<const WorldSample> samples);
Dataset read_dataset_file(const std::filesystem::path& path);

/// region,mi_patch_hidden,mi_sentence_hidden,mi_patch_sentence
void write_oracle_csv(std::ostream& out, std::span<const RegionOracle> rows);

/// Lower-case 16-digit hexadecimal.
std::string hex64(std::uint64_t v);

}  // namespace limi
