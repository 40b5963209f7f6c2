#include "mgvae/segment.hpp"

#include "mgvae/error.hpp"

#include <string>

namespace mgvae {

SegmentSpec SegmentSpec::whole(std::uint32_t frames) { return SegmentSpec({{0, frames}}); }

SegmentSpec SegmentSpec::from_lengths(std::span<const std::uint32_t> lengths) {
  std::vector<Interval> out;
  out.reserve(lengths.size());
  std::uint32_t at = 0;
  for (auto len : lengths) {
    out.push_back({at, at + len});
    at += len;
  }
  return SegmentSpec(std::move(out));
}

bool SegmentSpec::tiles(std::uint32_t frames) const noexcept {
  try {
    validate(frames);
    return true;
  } catch (const SegmentError&) {
    return false;
  }
}

void SegmentSpec::validate(std::uint32_t frames) const {
  if (intervals_.empty()) throw SegmentError("segment spec is empty");
  std::uint32_t expected = 0;
  for (std::size_t k = 0; k < intervals_.size(); ++k) {
    const auto& iv = intervals_[k];
    if (iv.begin != expected) {
      throw SegmentError("interval " + std::to_string(k) + " starts at " +
                         std::to_string(iv.begin) + ", expected " + std::to_string(expected));
    }
    if (iv.end <= iv.begin) {
      throw SegmentError("interval " + std::to_string(k) + " is empty");
    }
    expected = iv.end;
  }
  if (expected != frames) {
    throw SegmentError("segments cover " + std::to_string(expected) + " frames, sequence has " +
                       std::to_string(frames));
  }
}

std::vector<std::uint32_t> SegmentSpec::frame_to_segment() const {
  std::vector<std::uint32_t> out(frames());
  for (std::uint32_t k = 0; k < intervals_.size(); ++k) {
    for (auto t = intervals_[k].begin; t < intervals_[k].end; ++t) out[t] = k;
  }
  return out;
}

std::vector<std::uint32_t> parent_index(const SegmentSpec& fine, const SegmentSpec& coarse) {
  std::vector<std::uint32_t> out;
  out.reserve(fine.size());
  std::uint32_t p = 0;
  for (std::size_t k = 0; k < fine.size(); ++k) {
    while (p < coarse.size() && coarse[p].end <= fine[k].begin) ++p;
    if (p == coarse.size() || !coarse[p].contains(fine[k])) {
      throw SegmentError("word interval " + std::to_string(k) + " crosses a phrase boundary");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace mgvae
