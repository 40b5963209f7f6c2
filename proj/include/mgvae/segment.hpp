#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mgvae {

// Half-open frame interval [begin, end).
struct Interval {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::uint32_t length() const noexcept { return end - begin; }
  bool contains(const Interval& other) const noexcept {
    return begin <= other.begin && other.end <= end;
  }
  bool operator==(const Interval&) const = default;
};

// Ordered list of intervals that tile [0, frames) without gaps. Construction
// does not validate; call validate() (or tiles()) before use on untrusted data.
class SegmentSpec {
 public:
  SegmentSpec() = default;
  explicit SegmentSpec(std::vector<Interval> intervals) : intervals_(std::move(intervals)) {}

  static SegmentSpec whole(std::uint32_t frames);
  static SegmentSpec from_lengths(std::span<const std::uint32_t> lengths);

  std::size_t size() const noexcept { return intervals_.size(); }
  bool empty() const noexcept { return intervals_.empty(); }
  const Interval& operator[](std::size_t i) const { return intervals_[i]; }
  std::span<const Interval> intervals() const noexcept { return intervals_; }
  auto begin() const noexcept { return intervals_.begin(); }
  auto end() const noexcept { return intervals_.end(); }

  // End frame of the last interval (0 when empty).
  std::uint32_t frames() const noexcept { return intervals_.empty() ? 0 : intervals_.back().end; }

  bool tiles(std::uint32_t frames) const noexcept;
  // Throws SegmentError describing the first violation.
  void validate(std::uint32_t frames) const;

  // Segment index owning each frame.
  std::vector<std::uint32_t> frame_to_segment() const;

  bool operator==(const SegmentSpec&) const = default;

 private:
  std::vector<Interval> intervals_;
};

// For each fine interval, index of the coarse interval containing it. Throws
// SegmentError if some fine interval straddles a coarse boundary.
std::vector<std::uint32_t> parent_index(const SegmentSpec& fine, const SegmentSpec& coarse);

}  // namespace mgvae
