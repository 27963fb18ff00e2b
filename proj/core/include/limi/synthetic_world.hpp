#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "limi/encoders.hpp"
#include "limi/matrix.hpp"
#include "limi/rng.hpp"

namespace limi {

/// Discrete region/sentence world. Each region n carries a hidden status
/// H_n; its image patch symbol is emitted from (H_n, V_img) and its sentence
/// symbol from (H_n, V_txt), where V_img / V_txt are per-sample nuisances
/// independent of every H_n.
struct WorldConfig {
  std::size_t n_regions = 4;
  std::size_t hidden_cardinality = 3;
  std::size_t image_noise_levels = 2;
  std::size_t text_noise_levels = 2;
  /// 0: emissions independent of H_n. 1: deterministic, distinct per (H, V).
  double signal_strength = 0.5;

  std::size_t image_size = 32;
  std::size_t grid_side = 4;
  double pixel_noise = 0.1;
  std::size_t background_textures = 4;
  /// Background tiles take values 0.5 +- background_contrast / 2; region
  /// textures use 0.2 / 0.8.
  double background_contrast = 0.6;

  std::size_t content_tokens = 2;
  std::size_t filler_tokens = 2;
  std::size_t filler_vocab = 8;

  std::size_t patch_symbols() const { return hidden_cardinality * image_noise_levels; }
  std::size_t sentence_symbols() const { return hidden_cardinality * text_noise_levels; }
  std::size_t tile_size() const { return image_size / grid_side; }
  /// Token ids below this bound are all the world can emit.
  std::size_t vocab_size() const;
  void validate() const;
};

struct GenerativeWorld {
  WorldConfig config;
  std::vector<double> hidden_prior;
  std::vector<double> image_noise_prior;
  std::vector<double> text_noise_prior;
  /// Grid cell (row-major) holding each region's tile.
  std::vector<std::size_t> region_cells;
  /// Sentence slot of each region in the report.
  std::vector<std::size_t> region_to_sentence;
  /// Per region: rows indexed h * |V_img| + v, columns patch symbols.
  std::vector<Matrix> patch_emission;
  /// Per region: rows indexed h * |V_txt| + v, columns sentence symbols.
  std::vector<Matrix> sentence_emission;
  /// Tile pixels for region n, patch symbol a at [n * patch_symbols + a].
  std::vector<std::vector<double>> patch_textures;
  std::vector<std::vector<double>> background_textures;

  std::uint64_t hash() const;
};

struct WorldSample {
  std::vector<std::size_t> hiddens;
  std::size_t image_noise = 0;
  std::size_t text_noise = 0;
  std::vector<std::size_t> patch_symbols;     // per region
  std::vector<std::size_t> sentence_symbols;  // per region
  ImageSample image;
  ReportSample report;
  std::vector<int> labels;  // per region
};

GenerativeWorld sample_world(const WorldConfig& config, Rng& rng);

/// Binary task label for a hidden status: upper half of the cardinality.
int hidden_label(std::size_t hidden, std::size_t cardinality);

/// Latent draw only (no pixels, no tokens).
WorldSample sample_latents(const GenerativeWorld& world, Rng& rng);
/// Fills image, report and labels from the latents.
void render(const GenerativeWorld& world, WorldSample& sample, Rng& rng);

/// n i.i.d. samples. Sample i uses its own stream derived from one draw of
/// `rng`, so any sample can be regenerated independently.
std::vector<WorldSample> generate_dataset(const GenerativeWorld& world, std::size_t n,
                                          Rng& rng);

// -- exact information quantities ------------------------------------------

/// sum p(a,b) log(p(a,b) / (p(a) p(b))), 0 log 0 := 0. Throws unless entries
/// are non-negative and sum to 1 within 1e-12 (relative to the table size).
double true_mi_discrete(const Matrix& joint);
/// H(A) + H(B) - H(A,B): an independent route to the same value.
double mi_from_entropies(const Matrix& joint);
double entropy(std::span<const double> p);

/// Exact joints for region n: rows patch symbol, columns hidden value.
Matrix patch_hidden_joint(const GenerativeWorld& world, std::size_t region);
/// Rows sentence symbol, columns hidden value.
Matrix sentence_hidden_joint(const GenerativeWorld& world, std::size_t region);
/// Rows patch symbol, columns sentence symbol.
Matrix patch_sentence_joint(const GenerativeWorld& world, std::size_t region);

struct RegionOracle {
  std::size_t region = 0;
  double mi_patch_hidden = 0.0;
  double mi_sentence_hidden = 0.0;
  double mi_patch_sentence = 0.0;
};

std::vector<RegionOracle> world_oracle(const GenerativeWorld& world);

/// Chain rule on raw patch symbols for one region n, with z = (z_n, rest):
/// I(z; H_n) versus I(z_n; H_n) + I(rest; H_n | z_n), all by enumeration.
struct ChainRuleResult {
  double mi_full = 0.0;         // I((z_n, rest); H_n)
  double mi_local = 0.0;        // I(z_n; H_n)
  double mi_conditional = 0.0;  // I(rest; H_n | z_n)
  double residual = 0.0;        // |mi_full - mi_local - mi_conditional|
  double slack = 0.0;           // mi_full - mi_local
};

ChainRuleResult chain_rule_check(const GenerativeWorld& world, std::size_t region,
                                 std::size_t max_states = 1'000'000);
std::vector<ChainRuleResult> chain_rule_check(const GenerativeWorld& world,
                                              std::size_t max_states = 1'000'000);

}  // namespace limi
