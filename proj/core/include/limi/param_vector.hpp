#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace limi {

/// A named slice of a ParamVector.
struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;

  std::size_t size() const;

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Flat parameter storage with a named-segment layout. Segments are appended
/// in order, so they tile the value array with no gaps or overlaps.
class ParamVector {
 public:
  ParamVector() = default;

  /// Appends a zero-filled segment; returns its offset.
  std::size_t add_segment(std::string name, std::vector<std::size_t> shape);

  bool has(std::string_view name) const;
  const Segment& layout(std::string_view name) const;
  std::span<double> segment(std::string_view name);
  std::span<const double> segment(std::string_view name) const;

  const std::vector<Segment>& segments() const { return segments_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Same layout, all values zero.
  ParamVector zeros_like() const;
  bool same_layout(const ParamVector& other) const;

  /// Throws unless the layout tiles the values exactly and all are finite.
  void validate() const;

  void fill(double v);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
  std::vector<Segment> segments_;
};

/// Names of segments that start with any of `prefixes`.
std::vector<std::string> segments_with_prefix(const ParamVector& params,
                                              std::span<const std::string> prefixes);

/// Hash of the raw bytes of the named segments (in layout order).
std::uint64_t segment_hash(const ParamVector& params,
                           std::span<const std::string> names);

}  // namespace limi
