#pragma once

#include "mgvae/corpus.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mgvae::metrics {

// Which acoustic channels each metric reads. Distortion channels are the
// cepstral ones: everything except pitch, voicing and the energy analogue.
struct ChannelMap {
  std::vector<std::uint32_t> cepstral;
  std::uint32_t pitch = 0;
  std::uint32_t voicing = 1;

  static ChannelMap from_roles(const corpus::ChannelRoles& roles, std::uint32_t acoustic_dim);
  void validate(std::size_t acoustic_dim) const;  // throws ConfigError
};

// (10 / ln 10) * mean over frames of sqrt(2 * sum_d (x - y)^2).
Real mcd(const Tensor& reference, const Tensor& synthesized, const ChannelMap& channels);

// Per utterance and cepstral channel, |var(ref) - var(syn)| over frames
// (population variance); averaged over channels, then over utterances.
Real gvd(std::span<const Tensor> references, std::span<const Tensor> synthesized, const ChannelMap& channels);

// RMSE of the pitch channel over frames voiced in the reference (voicing
// channel > 0.5). Empty when no frame is voiced.
std::optional<Real> f0_rmse(const Tensor& reference, const Tensor& synthesized, const ChannelMap& channels);

// Leave-one-out nearest-centroid accuracy of latents (one row each) against
// style labels 0..S-1. The held-out item is removed from its own centroid;
// ties go to the lowest style index. Needs at least two styles, every used
// label with at least two items. Throws ConfigError.
Real style_separation(const Tensor& latents, std::span<const std::size_t> labels);

struct Summary {
  Real mean = 0;
  Real std_error = 0;  // sample std / sqrt(n); 0 for n < 2
  std::size_t count = 0;
};
Summary summarize(std::span<const Real> values);

struct ReportRow {
  std::string system;
  Summary mcd, gvd, f0_rmse;
};

std::string format_table(std::span<const ReportRow> rows);
std::string report_json(std::span<const ReportRow> rows);

}  // namespace mgvae::metrics
