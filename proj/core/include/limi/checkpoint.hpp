#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "limi/model.hpp"
#include "limi/param_vector.hpp"

namespace limi {

/// Named parameter groups plus the provenance needed to reload them.
/// Binary layout documented in docs/formats.md.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, ParamVector>> groups;

  bool has(std::string_view name) const;
  const ParamVector& group(std::string_view name) const;
  void set(std::string name, ParamVector params);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws IoError on bad magic, unknown version or truncation.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Groups "image", "text", "critic".
Checkpoint model_checkpoint(const Model& model, std::uint64_t config_hash, std::uint64_t seed);
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace limi
