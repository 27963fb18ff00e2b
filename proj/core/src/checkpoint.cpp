#include "limi/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "limi/error.hpp"

namespace limi {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'I', 'M', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 32;

template <typename T>
void put(std::ostream& out, T v) {
  std::array<char, sizeof(T)> b{};
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), b.size());
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  std::array<unsigned char, sizeof(T)> b{};
  in.read(reinterpret_cast<char*>(b.data()), b.size());
  if (in.gcount() != static_cast<std::streamsize>(b.size())) {
    throw IoError("checkpoint: truncated file");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  if (n > 4096) throw IoError("checkpoint: name too long");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (in.gcount() != static_cast<std::streamsize>(n)) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

bool Checkpoint::has(std::string_view name) const {
  for (const auto& [n, p] : groups)
    if (n == name) return true;
  return false;
}

const ParamVector& Checkpoint::group(std::string_view name) const {
  for (const auto& [n, p] : groups)
    if (n == name) return p;
  throw IoError("checkpoint: no parameter group '" + std::string(name) + "'");
}

void Checkpoint::set(std::string name, ParamVector params) {
  for (auto& [n, p] : groups)
    if (n == name) {
      p = std::move(params);
      return;
    }
  groups.emplace_back(std::move(name), std::move(params));
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint64_t>(out, ckpt.seed);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.groups.size()));
  for (const auto& [name, params] : ckpt.groups) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.segments().size()));
    for (const auto& seg : params.segments()) {
      put_string(out, seg.name);
      put<std::uint32_t>(out, static_cast<std::uint32_t>(seg.shape.size()));
      for (auto d : seg.shape) put<std::uint64_t>(out, d);
      for (double v : params.segment(seg.name)) put(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!out) throw IoError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw IoError("checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != Checkpoint::kVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.config_hash = get<std::uint64_t>(in);
  c.seed = get<std::uint64_t>(in);
  const auto n_groups = get<std::uint32_t>(in);
  for (std::uint32_t g = 0; g < n_groups; ++g) {
    std::string name = get_string(in);
    ParamVector params;
    const auto n_segments = get<std::uint32_t>(in);
    for (std::uint32_t s = 0; s < n_segments; ++s) {
      std::string seg_name = get_string(in);
      const auto rank = get<std::uint32_t>(in);
      if (rank > 8) throw IoError("checkpoint: segment rank out of range");
      std::vector<std::size_t> shape(rank);
      std::uint64_t count = 1;
      for (auto& d : shape) {
        const auto v = get<std::uint64_t>(in);
        if (v > kMaxCount || count * v > kMaxCount) throw IoError("checkpoint: segment too large");
        d = static_cast<std::size_t>(v);
        count *= v;
      }
      if (params.has(seg_name)) throw IoError("checkpoint: duplicate segment " + seg_name);
      params.add_segment(seg_name, shape);
      for (double& v : params.segment(seg_name)) v = std::bit_cast<double>(get<std::uint64_t>(in));
    }
    if (c.has(name)) throw IoError("checkpoint: duplicate group " + name);
    c.groups.emplace_back(std::move(name), std::move(params));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Checkpoint model_checkpoint(const Model& model, std::uint64_t config_hash, std::uint64_t seed) {
  Checkpoint c;
  c.config_hash = config_hash;
  c.seed = seed;
  c.set("image", model.image);
  c.set("text", model.text);
  c.set("critic", model.critic);
  return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  return Model{ckpt.group("image"), ckpt.group("text"), ckpt.group("critic")};
}

}  // namespace limi
