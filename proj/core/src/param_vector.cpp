#include "limi/param_vector.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "limi/error.hpp"
#include "limi/matrix.hpp"
#include "limi/rng.hpp"

namespace limi {

std::size_t Segment::size() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::size_t ParamVector::add_segment(std::string name,
                                     std::vector<std::size_t> shape) {
  if (has(name)) throw InvalidArgument("duplicate parameter segment: " + name);
  Segment seg{std::move(name), values_.size(), std::move(shape)};
  if (seg.shape.empty() || seg.size() == 0) {
    throw InvalidArgument("empty parameter segment: " + seg.name);
  }
  values_.resize(values_.size() + seg.size(), 0.0);
  segments_.push_back(std::move(seg));
  return segments_.back().offset;
}

bool ParamVector::has(std::string_view name) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [&](const Segment& s) { return s.name == name; });
}

const Segment& ParamVector::layout(std::string_view name) const {
  for (const auto& s : segments_)
    if (s.name == name) return s;
  throw InvalidArgument("unknown parameter segment: " + std::string(name));
}

std::span<double> ParamVector::segment(std::string_view name) {
  const auto& s = layout(name);
  return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamVector::segment(std::string_view name) const {
  const auto& s = layout(name);
  return std::span<const double>(values_).subspan(s.offset, s.size());
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  z.fill(0.0);
  return z;
}

bool ParamVector::same_layout(const ParamVector& other) const {
  return segments_ == other.segments_ && values_.size() == other.values_.size();
}

void ParamVector::validate() const {
  std::size_t expected = 0;
  for (const auto& s : segments_) {
    if (s.offset != expected) {
      throw InvalidArgument("segment " + s.name + " does not tile the layout");
    }
    expected += s.size();
  }
  if (expected != values_.size()) {
    throw InvalidArgument("segments do not cover the parameter vector");
  }
  if (!all_finite(values_)) throw NumericError("non-finite parameter value");
}

void ParamVector::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::vector<std::string> segments_with_prefix(
    const ParamVector& params, std::span<const std::string> prefixes) {
  std::vector<std::string> out;
  for (const auto& s : params.segments()) {
    for (const auto& p : prefixes) {
      if (s.name.starts_with(p)) {
        out.push_back(s.name);
        break;
      }
    }
  }
  return out;
}

std::uint64_t segment_hash(const ParamVector& params,
                           std::span<const std::string> names) {
  std::uint64_t h = fnv1a(std::string_view{});
  for (const auto& s : params.segments()) {
    if (std::find(names.begin(), names.end(), s.name) == names.end()) continue;
    h = fnv1a(s.name, h);
    const auto v = params.segment(s.name);
    h = fnv1a(v.data(), v.size_bytes(), h);
  }
  return h;
}

}  // namespace limi
