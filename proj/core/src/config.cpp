#include "limi/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "limi/error.hpp"
#include "limi/eval.hpp"
#include "limi/rng.hpp"

namespace limi {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::size_t to_size(std::string_view s) { return static_cast<std::size_t>(to_u64(s)); }

double to_double(std::string_view s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a finite number, got '" + std::string(s) + "'");
  }
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::vector<std::size_t> to_size_list(std::string_view s) {
  std::vector<std::size_t> out;
  for (auto item : split_list(s)) out.push_back(to_size(item));
  return out;
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string from_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

/// Parses an enum through its library parser, mapping its error to ConfigError.
template <typename Fn>
auto enum_value(std::string_view s, Fn parse) {
  try {
    return parse(s);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

/// The single source of truth for keys, their order and their types.
std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  auto add = [&](std::string section, std::string key, std::function<void(std::string_view)> set,
                 std::function<std::string()> get) {
    f.push_back({std::move(section), std::move(key), std::move(set), std::move(get)});
  };
  auto size_field = [&](std::string section, std::string key, std::size_t& ref) {
    add(std::move(section), std::move(key), [&ref](std::string_view s) { ref = to_size(s); },
        [&ref] { return std::to_string(ref); });
  };
  auto double_field = [&](std::string section, std::string key, double& ref) {
    add(std::move(section), std::move(key), [&ref](std::string_view s) { ref = to_double(s); },
        [&ref] { return format_double(ref); });
  };
  auto bool_field = [&](std::string section, std::string key, bool& ref) {
    add(std::move(section), std::move(key), [&ref](std::string_view s) { ref = to_bool(s); },
        [&ref] { return from_bool(ref); });
  };
  auto size_list_field = [&](std::string section, std::string key, std::vector<std::size_t>& ref) {
    add(std::move(section), std::move(key),
        [&ref](std::string_view s) { ref = to_size_list(s); }, [&ref] { return from_list(ref); });
  };
  auto bound_field = [&](std::string section, BoundType& ref) {
    add(std::move(section), "bound",
        [&ref](std::string_view s) { ref = enum_value(s, parse_bound_type); },
        [&ref] { return std::string(to_string(ref)); });
  };

  add("run", "seed", [&c](std::string_view s) { c.seed = to_u64(s); },
      [&c] { return std::to_string(c.seed); });
  add("run", "out", [&c](std::string_view s) { c.out_dir = std::string(s); },
      [&c] { return c.out_dir; });

  auto& w = c.world;
  size_field("world", "n_regions", w.n_regions);
  size_field("world", "hidden_cardinality", w.hidden_cardinality);
  size_field("world", "image_noise_levels", w.image_noise_levels);
  size_field("world", "text_noise_levels", w.text_noise_levels);
  double_field("world", "signal_strength", w.signal_strength);
  size_field("world", "image_size", w.image_size);
  size_field("world", "grid_side", w.grid_side);
  double_field("world", "pixel_noise", w.pixel_noise);
  size_field("world", "background_textures", w.background_textures);
  double_field("world", "background_contrast", w.background_contrast);
  size_field("world", "content_tokens", w.content_tokens);
  size_field("world", "filler_tokens", w.filler_tokens);
  size_field("world", "filler_vocab", w.filler_vocab);

  size_field("data", "n_pretrain", c.data.n_pretrain);
  size_field("data", "n_labeled", c.data.n_labeled);
  size_field("data", "n_test", c.data.n_test);

  auto& img = c.model.image;
  auto& txt = c.model.text;
  size_list_field("encoder", "local_channels", img.local_channels);
  size_field("encoder", "global_channels", img.global_channels);
  size_field("encoder", "global_dim", img.global_dim);
  size_field("encoder", "embed_dim", txt.embed_dim);
  size_field("encoder", "text_hidden", txt.hidden);
  size_field("encoder", "text_dim", txt.text_dim);

  size_list_field("critic", "local_hidden", c.model.local_critic_hidden);
  size_list_field("critic", "global_hidden", c.model.global_critic_hidden);

  auto& t = c.train;
  add("train", "objective", [&t](std::string_view s) { t.objective = enum_value(s, parse_objective); },
      [&t] { return std::string(to_string(t.objective)); });
  bound_field("train", t.bound);
  size_field("train", "batch_size", t.batch_size);
  size_field("train", "epochs", t.epochs_pretrain);
  double_field("train", "learning_rate", t.learning_rate);
  bool_field("train", "ema_correction", t.ema_correction);
  size_field("train", "k_negatives", t.k_negatives);

  auto& p = c.probe;
  add("probe", "mode", [&p](std::string_view s) { p.mode = enum_value(s, parse_probe_mode); },
      [&p] { return std::string(to_string(p.mode)); });
  size_field("probe", "epochs", p.epochs);
  size_field("probe", "batch_size", p.batch_size);
  double_field("probe", "learning_rate", p.learning_rate);
  size_field("probe", "baseline_epoch_factor", p.baseline_epoch_factor);

  auto& g = c.gaussian;
  add("gaussian", "rho",
      [&g](std::string_view s) {
        g.pairs.rho.clear();
        for (auto item : split_list(s)) g.pairs.rho.push_back(to_double(item));
      },
      [&g] { return from_list(g.pairs.rho); });
  size_field("gaussian", "n_samples", g.pairs.n_samples);
  bound_field("gaussian", g.bound);
  size_field("gaussian", "k_negatives", g.k_negatives);
  size_field("gaussian", "batch_size", g.batch_size);
  size_field("gaussian", "steps", g.steps);
  size_list_field("gaussian", "critic_hidden", g.critic_hidden);
  double_field("gaussian", "learning_rate", g.learning_rate);
  size_field("gaussian", "smoothing_window", g.smoothing_window);
  bool_field("gaussian", "ema_correction", g.ema_correction);

  add("matrix", "seeds",
      [&c](std::string_view s) {
        c.seeds.clear();
        for (auto item : split_list(s)) c.seeds.push_back(to_u64(item));
      },
      [&c] { return from_list(c.seeds); });
  add("matrix", "arms", [&c](std::string_view s) { c.arms = std::string(s); },
      [&c] { return c.arms; });
  size_field("matrix", "threads", c.threads);
  return f;
}

}  // namespace

ExperimentConfig::ExperimentConfig() { sync(); }

void ExperimentConfig::sync() {
  model.image.image_size = world.image_size;
  model.text.vocab_size = world.vocab_size();
  gaussian.pairs.dim = gaussian.pairs.rho.size();
  gaussian.pairs.seed = seed;
  train.seed = seed;
  probe.seed = seed;
}

void ExperimentConfig::validate() const {
  try {
    world.validate();
    data.validate();
    model.validate();
    train.validate();
    probe.validate();
    gaussian.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (model.image.image_size != world.image_size) {
    throw ConfigError("encoder image size differs from world image_size");
  }
  if (model.image.grid_side() != world.grid_side) {
    throw ConfigError("world grid_side " + std::to_string(world.grid_side) +
                      " differs from the encoder grid side " +
                      std::to_string(model.image.grid_side()));
  }
  if (model.text.vocab_size < world.vocab_size()) {
    throw ConfigError("encoder vocabulary is smaller than the world's");
  }
  if (seeds.empty()) throw ConfigError("matrix: seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("matrix: seeds must be distinct");
  }
  if (threads < 1) throw ConfigError("matrix: threads must be >= 1");
  if (filter_arms(all_arms(), arms).empty()) {
    throw ConfigError("matrix: arm filter '" + arms + "' selects no arm");
  }
  if (out_dir.empty()) throw ConfigError("run: out must not be empty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

ExperimentConfig parse_config(std::istream& in, std::string_view source) {
  ExperimentConfig c;
  auto table = fields(c);
  std::map<std::pair<std::string, std::string>, Field*> index;
  std::set<std::string> sections;
  for (auto& f : table) {
    index[{f.section, f.key}] = &f;
    sections.insert(f.section);
  }
  const std::string prefix = std::string(source) + ": ";
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(prefix + "unterminated section header", line_no);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!sections.count(section)) {
        throw ConfigError(prefix + "unknown section [" + section + "]", line_no);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(prefix + "expected 'key = value'", line_no);
    }
    if (section.empty()) throw ConfigError(prefix + "key outside of any section", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = index.find({section, key});
    if (it == index.end()) {
      throw ConfigError(prefix + "unknown key '" + key + "' in [" + section + "]", line_no);
    }
    if (!seen.insert({section, key}).second) {
      throw ConfigError(prefix + "duplicate key '" + key + "' in [" + section + "]", line_no);
    }
    try {
      it->second->set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(prefix + section + "." + key + ": " + e.what(), line_no);
    }
  }
  c.sync();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  }
  return c;
}

ExperimentConfig parse_config_string(std::string_view text, std::string_view source) {
  std::istringstream in{std::string(text)};
  return parse_config(in, source);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  return parse_config(in, path.string());
}

std::string serialize_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get() << '\n';
  }
  return out.str();
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return fnv1a(serialize_config(config));
}

std::uint64_t pretrain_hash(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  const ExperimentConfig defaults;
  c.out_dir = defaults.out_dir;
  c.probe = defaults.probe;
  c.gaussian = defaults.gaussian;
  c.seeds = defaults.seeds;
  c.arms = defaults.arms;
  c.threads = defaults.threads;
  return config_hash(c);
}

MatrixConfig matrix_config(const ExperimentConfig& config) {
  MatrixConfig m;
  m.world = config.world;
  m.data = config.data;
  m.model = config.model;
  m.train = config.train;
  m.probe = config.probe;
  m.master_seed = config.seed;
  m.seeds = config.seeds;
  m.arms = filter_arms(all_arms(), config.arms);
  m.threads = config.threads;
  return m;
}

}  // namespace limi
