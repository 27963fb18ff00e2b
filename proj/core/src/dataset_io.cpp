#include "limi/dataset_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "limi/error.hpp"
#include "limi/eval.hpp"

namespace limi {

namespace {

constexpr const char* kMagic = "limi-dataset";

/// Little-endian byte writer/reader independent of host order.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }

 private:
  template <typename T>
  void put(T v) {
    std::array<char, sizeof(T)> b{};
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(b.data(), b.size());
  }
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

 private:
  template <typename T>
  T get() {
    std::array<unsigned char, sizeof(T)> b{};
    in_.read(reinterpret_cast<char*>(b.data()), b.size());
    if (in_.gcount() != static_cast<std::streamsize>(b.size())) {
      throw IoError("dataset: truncated record data");
    }
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }
  std::istream& in_;
};

void check_shape(const WorldSample& s, const DatasetHeader& h) {
  const auto r = h.regions;
  if (s.hiddens.size() != r || s.patch_symbols.size() != r || s.sentence_symbols.size() != r ||
      s.labels.size() != r || s.report.sentences.size() != r) {
    throw DimensionError("dataset: sample region count differs from header");
  }
  if (s.image.height != h.image_size || s.image.width != h.image_size ||
      s.image.pixels.size() != h.image_size * h.image_size) {
    throw DimensionError("dataset: sample image size differs from header");
  }
}

std::uint64_t parse_field(const std::string& line, const std::string& key, bool hex = false) {
  std::istringstream in(line);
  std::string k;
  std::string v;
  if (!(in >> k >> v) || k != key) throw IoError("dataset: expected header field '" + key + "'");
  try {
    std::size_t used = 0;
    const std::uint64_t out = std::stoull(v, &used, hex ? 16 : 10);
    if (used != v.size()) throw IoError("");
    return out;
  } catch (const std::exception&) {
    throw IoError("dataset: bad value for header field '" + key + "'");
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_dataset(std::ostream& out, const DatasetHeader& header,
                   std::span<const WorldSample> samples) {
  if (samples.size() != header.samples) {
    throw DimensionError("dataset: header sample count differs from the data");
  }
  for (const auto& s : samples) check_shape(s, header);
  out << kMagic << ' ' << header.version << '\n'
      << "split " << header.split << '\n'
      << "samples " << header.samples << '\n'
      << "image_size " << header.image_size << '\n'
      << "regions " << header.regions << '\n'
      << "seed " << header.seed << '\n'
      << "world_hash " << hex64(header.world_hash) << '\n'
      << "end\n";
  Writer w(out);
  for (const auto& s : samples) {
    for (auto h : s.hiddens) w.u32(static_cast<std::uint32_t>(h));
    w.u32(static_cast<std::uint32_t>(s.image_noise));
    w.u32(static_cast<std::uint32_t>(s.text_noise));
    for (auto a : s.patch_symbols) w.u32(static_cast<std::uint32_t>(a));
    for (auto b : s.sentence_symbols) w.u32(static_cast<std::uint32_t>(b));
    for (int l : s.labels) w.u32(static_cast<std::uint32_t>(l));
    for (double p : s.image.pixels) w.f64(p);
    for (const auto& sentence : s.report.sentences) {
      w.u32(static_cast<std::uint32_t>(sentence.size()));
      for (auto t : sentence) w.u32(t);
    }
  }
  if (!out) throw IoError("dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  Dataset d;
  auto& h = d.header;
  std::string line;
  auto next = [&]() -> const std::string& {
    if (!std::getline(in, line)) throw IoError("dataset: truncated header");
    return line;
  };
  h.version = static_cast<std::uint32_t>(parse_field(next(), kMagic));
  if (h.version != 1) throw IoError("dataset: unsupported version " + std::to_string(h.version));
  {
    std::istringstream s(next());
    std::string k;
    if (!(s >> k >> h.split) || k != "split") throw IoError("dataset: expected header field 'split'");
  }
  h.samples = parse_field(next(), "samples");
  h.image_size = parse_field(next(), "image_size");
  h.regions = parse_field(next(), "regions");
  h.seed = parse_field(next(), "seed");
  h.world_hash = parse_field(next(), "world_hash", true);
  if (next() != "end") throw IoError("dataset: expected 'end' after the header");

  constexpr std::uint64_t kLimit = 1u << 30;
  if (h.samples > kLimit || h.regions > 4096 || h.image_size > 4096) {
    throw IoError("dataset: header sizes out of range");
  }
  Reader r(in);
  d.samples.resize(h.samples);
  for (auto& s : d.samples) {
    s.hiddens.resize(h.regions);
    s.patch_symbols.resize(h.regions);
    s.sentence_symbols.resize(h.regions);
    s.labels.resize(h.regions);
    for (auto& v : s.hiddens) v = r.u32();
    s.image_noise = r.u32();
    s.text_noise = r.u32();
    for (auto& v : s.patch_symbols) v = r.u32();
    for (auto& v : s.sentence_symbols) v = r.u32();
    for (auto& v : s.labels) v = static_cast<int>(r.u32());
    s.image.height = s.image.width = h.image_size;
    s.image.pixels.resize(h.image_size * h.image_size);
    for (auto& p : s.image.pixels) p = r.f64();
    s.report.sentences.resize(h.regions);
    for (auto& sentence : s.report.sentences) {
      const std::uint32_t len = r.u32();
      if (len > kLimit) throw IoError("dataset: sentence length out of range");
      sentence.resize(len);
      for (auto& t : sentence) t = r.u32();
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError("dataset: trailing bytes");
  return d;
}

void write_dataset_file(const std::filesystem::path& path, const DatasetHeader& header,
                        std::span<const WorldSample> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_dataset(out, header, samples);
}

Dataset read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return read_dataset(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_oracle_csv(std::ostream& out, std::span<const RegionOracle> rows) {
  out << "region,mi_patch_hidden,mi_sentence_hidden,mi_patch_sentence\n";
  for (const auto& r : rows) {
    out << r.region << ',' << format_double(r.mi_patch_hidden) << ','
        << format_double(r.mi_sentence_hidden) << ',' << format_double(r.mi_patch_sentence)
        << '\n';
  }
}

}  // namespace limi
