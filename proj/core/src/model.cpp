#include "limi/model.hpp"

#include <string>

#include "limi/error.hpp"

namespace limi {

std::string_view to_string(Objective o) {
  return o == Objective::kLocal ? "local" : "global";
}

Objective parse_objective(std::string_view s) {
  if (s == "local") return Objective::kLocal;
  if (s == "global") return Objective::kGlobal;
  throw InvalidArgument("unknown objective '" + std::string(s) + "' (local | global)");
}

MlpSpec ModelConfig::critic(Objective objective) const {
  return objective == Objective::kLocal
             ? critic_spec(image.grid_channels(), text.text_dim, local_critic_hidden)
             : critic_spec(image.global_dim, text.text_dim, global_critic_hidden);
}

std::size_t ModelConfig::critic_image_dim(Objective objective) const {
  return objective == Objective::kLocal ? image.grid_channels() : image.global_dim;
}

void ModelConfig::validate() const {
  image.validate();
  text.validate();
  critic(Objective::kLocal).validate();
  critic(Objective::kGlobal).validate();
}

Model make_model(const ModelConfig& cfg, Objective objective) {
  cfg.validate();
  return Model{make_image_encoder_params(cfg.image), make_text_encoder_params(cfg.text),
               make_critic_params(cfg.critic(objective))};
}

Model init_model(const ModelConfig& cfg, Objective objective, Rng& rng) {
  Model m = make_model(cfg, objective);
  init_image_encoder(m.image, cfg.image, rng);
  init_text_encoder(m.text, cfg.text, rng);
  init_critic(m.critic, cfg.critic(objective), rng);
  return m;
}

}  // namespace limi
