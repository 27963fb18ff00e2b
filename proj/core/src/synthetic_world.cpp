#include "limi/synthetic_world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "limi/error.hpp"

namespace limi {

std::size_t WorldConfig::vocab_size() const {
  return n_regions * sentence_symbols() * content_tokens + filler_vocab;
}

void WorldConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw InvalidArgument("world: " + what);
  };
  need(n_regions >= 1, "n_regions must be >= 1");
  need(hidden_cardinality >= 1, "hidden_cardinality must be >= 1");
  need(image_noise_levels >= 1, "image_noise_levels must be >= 1");
  need(text_noise_levels >= 1, "text_noise_levels must be >= 1");
  need(signal_strength >= 0.0 && signal_strength <= 1.0, "signal_strength must lie in [0, 1]");
  need(grid_side >= 1, "grid_side must be >= 1");
  need(n_regions <= grid_side * grid_side, "more regions than grid cells");
  need(image_size % grid_side == 0, "image_size must be a multiple of grid_side");
  need(pixel_noise >= 0.0, "pixel_noise must be >= 0");
  need(background_textures >= 1, "background_textures must be >= 1");
  need(background_contrast >= 0.0 && background_contrast <= 1.0,
       "background_contrast must lie in [0, 1]");
  need(content_tokens >= 1, "content_tokens must be >= 1");
  need(filler_tokens == 0 || filler_vocab >= 1, "filler tokens need a filler vocabulary");
}

namespace {

std::vector<double> uniform_prior(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

std::vector<double> dirichlet_ones(std::size_t n, Rng& rng) {
  std::vector<double> q(n);
  double total = 0.0;
  for (auto& x : q) {
    x = -std::log(1.0 - rng.uniform());
    total += x;
  }
  for (auto& x : q) x /= total;
  return q;
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

// Row (h * levels + v) = s * onehot(pi(row)) + (1 - s) * q, q shared by rows.
Matrix emission_table(std::size_t hidden, std::size_t levels, double s, Rng& rng) {
  const std::size_t symbols = hidden * levels;
  const auto pi = permutation(symbols, rng);
  const auto q = dirichlet_ones(symbols, rng);
  Matrix t(symbols, symbols);
  for (std::size_t r = 0; r < symbols; ++r) {
    for (std::size_t a = 0; a < symbols; ++a) t(r, a) = (1.0 - s) * q[a];
    t(r, pi[r]) += s;
  }
  return t;
}

std::vector<double> binary_texture(std::size_t pixels, double contrast, Rng& rng) {
  std::vector<double> t(pixels);
  for (auto& x : t) x = 0.5 + (rng.uniform() < 0.5 ? -0.5 : 0.5) * contrast;
  return t;
}

std::size_t draw(std::span<const double> p, Rng& rng) {
  const double u = rng.uniform();
  double c = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    c += p[i];
    if (u < c) return i;
  }
  return p.size() - 1;
}

void check_distribution(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw InvalidArgument(std::string(what) + ": negative or NaN entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw InvalidArgument(std::string(what) + ": entries sum to " + std::to_string(total));
  }
}

}  // namespace

GenerativeWorld sample_world(const WorldConfig& config, Rng& rng) {
  config.validate();
  GenerativeWorld w;
  w.config = config;
  w.hidden_prior = uniform_prior(config.hidden_cardinality);
  w.image_noise_prior = uniform_prior(config.image_noise_levels);
  w.text_noise_prior = uniform_prior(config.text_noise_levels);

  const auto cells = permutation(config.grid_side * config.grid_side, rng);
  w.region_cells.assign(cells.begin(), cells.begin() + config.n_regions);
  w.region_to_sentence = permutation(config.n_regions, rng);

  const std::size_t tile_pixels = config.tile_size() * config.tile_size();
  for (std::size_t n = 0; n < config.n_regions; ++n) {
    w.patch_emission.push_back(emission_table(config.hidden_cardinality,
                                              config.image_noise_levels,
                                              config.signal_strength, rng));
    w.sentence_emission.push_back(emission_table(config.hidden_cardinality,
                                                 config.text_noise_levels,
                                                 config.signal_strength, rng));
    for (std::size_t a = 0; a < config.patch_symbols(); ++a)
      w.patch_textures.push_back(binary_texture(tile_pixels, 0.6, rng));
  }
  for (std::size_t t = 0; t < config.background_textures; ++t)
    w.background_textures.push_back(
        binary_texture(tile_pixels, config.background_contrast, rng));
  return w;
}

std::uint64_t GenerativeWorld::hash() const {
  const auto& c = config;
  const std::uint64_t ints[] = {c.n_regions,      c.hidden_cardinality, c.image_noise_levels,
                                c.text_noise_levels, c.image_size,     c.grid_side,
                                c.background_textures, c.content_tokens, c.filler_tokens,
                                c.filler_vocab};
  std::uint64_t h = fnv1a(ints, sizeof ints);
  const double reals[] = {c.signal_strength, c.pixel_noise, c.background_contrast};
  h = fnv1a(reals, sizeof reals, h);
  auto mix_doubles = [&h](std::span<const double> v) {
    h = fnv1a(v.data(), v.size() * sizeof(double), h);
  };
  auto mix_sizes = [&h](const std::vector<std::size_t>& v) {
    for (std::uint64_t x : v) h = fnv1a(&x, sizeof x, h);
  };
  mix_doubles(hidden_prior);
  mix_doubles(image_noise_prior);
  mix_doubles(text_noise_prior);
  mix_sizes(region_cells);
  mix_sizes(region_to_sentence);
  for (const auto& t : patch_emission) mix_doubles(t.data);
  for (const auto& t : sentence_emission) mix_doubles(t.data);
  for (const auto& t : patch_textures) mix_doubles(t);
  for (const auto& t : background_textures) mix_doubles(t);
  return h;
}

int hidden_label(std::size_t hidden, std::size_t cardinality) {
  return 2 * hidden >= cardinality ? 1 : 0;
}

WorldSample sample_latents(const GenerativeWorld& world, Rng& rng) {
  const auto& c = world.config;
  WorldSample s;
  s.image_noise = draw(world.image_noise_prior, rng);
  s.text_noise = draw(world.text_noise_prior, rng);
  for (std::size_t n = 0; n < c.n_regions; ++n) {
    const std::size_t h = draw(world.hidden_prior, rng);
    s.hiddens.push_back(h);
    s.patch_symbols.push_back(
        draw(world.patch_emission[n].row(h * c.image_noise_levels + s.image_noise), rng));
    s.sentence_symbols.push_back(
        draw(world.sentence_emission[n].row(h * c.text_noise_levels + s.text_noise), rng));
    s.labels.push_back(hidden_label(h, c.hidden_cardinality));
  }
  return s;
}

void render(const GenerativeWorld& world, WorldSample& s, Rng& rng) {
  const auto& c = world.config;
  const std::size_t side = c.image_size;
  const std::size_t tile = c.tile_size();
  const std::size_t cells = c.grid_side * c.grid_side;

  std::vector<const std::vector<double>*> texture(cells, nullptr);
  for (std::size_t n = 0; n < c.n_regions; ++n)
    texture[world.region_cells[n]] =
        &world.patch_textures[n * c.patch_symbols() + s.patch_symbols[n]];
  for (auto& t : texture)
    if (t == nullptr) t = &world.background_textures[rng.index(c.background_textures)];

  s.image = ImageSample{side, side, std::vector<double>(side * side)};
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const std::size_t y0 = (cell / c.grid_side) * tile;
    const std::size_t x0 = (cell % c.grid_side) * tile;
    for (std::size_t y = 0; y < tile; ++y)
      for (std::size_t x = 0; x < tile; ++x)
        s.image.pixels[(y0 + y) * side + x0 + x] = (*texture[cell])[y * tile + x];
  }
  if (c.pixel_noise > 0.0)
    for (auto& p : s.image.pixels) p = std::clamp(p + c.pixel_noise * rng.normal(), 0.0, 1.0);

  const std::size_t content_ids = c.n_regions * c.sentence_symbols() * c.content_tokens;
  s.report.sentences.assign(c.n_regions, {});
  for (std::size_t n = 0; n < c.n_regions; ++n) {
    auto& sentence = s.report.sentences[world.region_to_sentence[n]];
    const std::size_t base = (n * c.sentence_symbols() + s.sentence_symbols[n]) * c.content_tokens;
    for (std::size_t t = 0; t < c.content_tokens; ++t)
      sentence.push_back(static_cast<std::uint32_t>(base + t));
    for (std::size_t t = 0; t < c.filler_tokens; ++t)
      sentence.push_back(static_cast<std::uint32_t>(content_ids + rng.index(c.filler_vocab)));
  }
}

std::vector<WorldSample> generate_dataset(const GenerativeWorld& world, std::size_t n,
                                          Rng& rng) {
  if (n == 0) throw InvalidArgument("generate_dataset: n must be >= 1");
  const std::uint64_t base = rng.engine()();
  std::vector<WorldSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng sample_rng(base, "sample", i);
    WorldSample s = sample_latents(world, sample_rng);
    render(world, s, sample_rng);
    out.push_back(std::move(s));
  }
  return out;
}

// -- exact information quantities ------------------------------------------

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

namespace {

void marginals(const Matrix& joint, std::vector<double>& pa, std::vector<double>& pb) {
  pa.assign(joint.rows, 0.0);
  pb.assign(joint.cols, 0.0);
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b) {
      pa[a] += joint(a, b);
      pb[b] += joint(a, b);
    }
}

}  // namespace

double true_mi_discrete(const Matrix& joint) {
  check_distribution(joint.data, "joint table");
  std::vector<double> pa, pb;
  marginals(joint, pa, pb);
  double mi = 0.0;
  for (std::size_t a = 0; a < joint.rows; ++a)
    for (std::size_t b = 0; b < joint.cols; ++b) {
      const double p = joint(a, b);
      if (p > 0.0) mi += p * std::log(p / (pa[a] * pb[b]));
    }
  return std::max(mi, 0.0);
}

double mi_from_entropies(const Matrix& joint) {
  check_distribution(joint.data, "joint table");
  std::vector<double> pa, pb;
  marginals(joint, pa, pb);
  return entropy(pa) + entropy(pb) - entropy(joint.data);
}

namespace {

// p(symbol | h) with the nuisance marginalized: rows h, columns symbols.
Matrix symbol_given_hidden(const Matrix& emission, std::span<const double> noise_prior,
                           std::size_t hidden) {
  const std::size_t levels = noise_prior.size();
  Matrix out(hidden, emission.cols);
  for (std::size_t h = 0; h < hidden; ++h)
    for (std::size_t v = 0; v < levels; ++v)
      axpy(noise_prior[v], emission.row(h * levels + v), out.row(h));
  return out;
}

Matrix symbol_hidden_joint(const Matrix& emission, std::span<const double> noise_prior,
                           std::span<const double> hidden_prior) {
  const Matrix cond = symbol_given_hidden(emission, noise_prior, hidden_prior.size());
  Matrix joint(cond.cols, cond.rows);
  for (std::size_t h = 0; h < cond.rows; ++h)
    for (std::size_t a = 0; a < cond.cols; ++a) joint(a, h) = hidden_prior[h] * cond(h, a);
  return joint;
}

void check_region(const GenerativeWorld& world, std::size_t region) {
  if (region >= world.config.n_regions) {
    throw InvalidArgument("region " + std::to_string(region) + " out of range");
  }
}

}  // namespace

Matrix patch_hidden_joint(const GenerativeWorld& world, std::size_t region) {
  check_region(world, region);
  return symbol_hidden_joint(world.patch_emission[region], world.image_noise_prior,
                             world.hidden_prior);
}

Matrix sentence_hidden_joint(const GenerativeWorld& world, std::size_t region) {
  check_region(world, region);
  return symbol_hidden_joint(world.sentence_emission[region], world.text_noise_prior,
                             world.hidden_prior);
}

Matrix patch_sentence_joint(const GenerativeWorld& world, std::size_t region) {
  check_region(world, region);
  const std::size_t hidden = world.hidden_prior.size();
  const Matrix pa = symbol_given_hidden(world.patch_emission[region], world.image_noise_prior,
                                        hidden);
  const Matrix pb = symbol_given_hidden(world.sentence_emission[region],
                                        world.text_noise_prior, hidden);
  Matrix joint(pa.cols, pb.cols);
  for (std::size_t h = 0; h < hidden; ++h)
    for (std::size_t a = 0; a < pa.cols; ++a) {
      const double w = world.hidden_prior[h] * pa(h, a);
      axpy(w, pb.row(h), joint.row(a));
    }
  return joint;
}

std::vector<RegionOracle> world_oracle(const GenerativeWorld& world) {
  std::vector<RegionOracle> out;
  for (std::size_t n = 0; n < world.config.n_regions; ++n) {
    out.push_back({n, true_mi_discrete(patch_hidden_joint(world, n)),
                   true_mi_discrete(sentence_hidden_joint(world, n)),
                   true_mi_discrete(patch_sentence_joint(world, n))});
  }
  return out;
}

ChainRuleResult chain_rule_check(const GenerativeWorld& world, std::size_t region,
                                 std::size_t max_states) {
  check_region(world, region);
  const auto& c = world.config;
  const std::size_t hidden = c.hidden_cardinality;
  const std::size_t levels = c.image_noise_levels;
  const std::size_t symbols = c.patch_symbols();

  std::size_t rest_states = 1;
  for (std::size_t m = 1; m < c.n_regions; ++m) {
    if (rest_states > max_states / symbols) {
      throw InvalidArgument("chain_rule_check: state space exceeds " +
                            std::to_string(max_states));
    }
    rest_states *= symbols;
  }
  if (rest_states * symbols * hidden > max_states) {
    throw InvalidArgument("chain_rule_check: state space exceeds " + std::to_string(max_states));
  }

  // Per other region and nuisance level: p(symbol | v), hidden marginalized.
  std::vector<std::size_t> others;
  for (std::size_t m = 0; m < c.n_regions; ++m)
    if (m != region) others.push_back(m);
  std::vector<Matrix> other_given_v;
  for (std::size_t m : others) {
    Matrix t(levels, symbols);
    for (std::size_t v = 0; v < levels; ++v)
      for (std::size_t h = 0; h < hidden; ++h)
        axpy(world.hidden_prior[h], world.patch_emission[m].row(h * levels + v), t.row(v));
    other_given_v.push_back(std::move(t));
  }

  // rest_given_v(v, r): product over the other regions, r in mixed radix.
  Matrix rest_given_v(levels, rest_states, 1.0);
  for (std::size_t v = 0; v < levels; ++v)
    for (std::size_t r = 0; r < rest_states; ++r) {
      std::size_t code = r;
      double p = 1.0;
      for (const auto& t : other_given_v) {
        p *= t(v, code % symbols);
        code /= symbols;
      }
      rest_given_v(v, r) = p;
    }

  // joint[(a, r), h] = sum_v p(v) p(h) p(a | h, v) p(r | v)
  const Matrix& own = world.patch_emission[region];
  Matrix joint(symbols * rest_states, hidden);
  for (std::size_t a = 0; a < symbols; ++a)
    for (std::size_t r = 0; r < rest_states; ++r)
      for (std::size_t h = 0; h < hidden; ++h) {
        double p = 0.0;
        for (std::size_t v = 0; v < levels; ++v)
          p += world.image_noise_prior[v] * own(h * levels + v, a) * rest_given_v(v, r);
        joint(a * rest_states + r, h) = world.hidden_prior[h] * p;
      }

  // Renormalize away float drift so the table passes the 1e-12 check; the
  // drift is far below the tolerances of any downstream comparison.
  double total = std::accumulate(joint.data.begin(), joint.data.end(), 0.0);
  for (auto& x : joint.data) x /= total;

  Matrix local(symbols, hidden);
  for (std::size_t a = 0; a < symbols; ++a)
    for (std::size_t r = 0; r < rest_states; ++r)
      axpy(1.0, joint.row(a * rest_states + r), local.row(a));

  ChainRuleResult res;
  res.mi_full = true_mi_discrete(joint);
  res.mi_local = true_mi_discrete(local);

  // I(rest; H | a) = sum p(a, r, h) log[p(a, r, h) p(a) / (p(a, h) p(a, r))]
  double cond = 0.0;
  for (std::size_t a = 0; a < symbols; ++a) {
    double pa = 0.0;
    for (std::size_t h = 0; h < hidden; ++h) pa += local(a, h);
    for (std::size_t r = 0; r < rest_states; ++r) {
      const auto row = joint.row(a * rest_states + r);
      double par = 0.0;
      for (double x : row) par += x;
      for (std::size_t h = 0; h < hidden; ++h) {
        const double p = row[h];
        if (p > 0.0) cond += p * std::log(p * pa / (local(a, h) * par));
      }
    }
  }
  res.mi_conditional = cond;
  res.slack = res.mi_full - res.mi_local;
  res.residual = std::abs(res.mi_full - res.mi_local - res.mi_conditional);
  return res;
}

std::vector<ChainRuleResult> chain_rule_check(const GenerativeWorld& world,
                                              std::size_t max_states) {
  std::vector<ChainRuleResult> out;
  for (std::size_t n = 0; n < world.config.n_regions; ++n)
    out.push_back(chain_rule_check(world, n, max_states));
  return out;
}

}  // namespace limi
