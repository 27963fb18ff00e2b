#pragma once

#include <string_view>
#include <vector>

#include "limi/critic.hpp"
#include "limi/encoders.hpp"

namespace limi {

enum class Objective { kLocal, kGlobal };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

struct ModelConfig {
  ImageEncoderConfig image;
  TextEncoderConfig text;
  std::vector<std::size_t> local_critic_hidden{32, 16};
  std::vector<std::size_t> global_critic_hidden{64, 32};

  /// Local critic sees (grid cell, sentence); global sees (pooled image
  /// feature, mean sentence feature).
  MlpSpec critic(Objective objective) const;
  std::size_t critic_image_dim(Objective objective) const;
  void validate() const;
};

/// Image encoder, text encoder and critic parameters.
struct Model {
  ParamVector image;
  ParamVector text;
  ParamVector critic;

  friend bool operator==(const Model&, const Model&) = default;
};

Model make_model(const ModelConfig& cfg, Objective objective);
Model init_model(const ModelConfig& cfg, Objective objective, Rng& rng);

struct PairRef {
  const ImageSample* image = nullptr;
  const ReportSample* report = nullptr;
};

}  // namespace limi
