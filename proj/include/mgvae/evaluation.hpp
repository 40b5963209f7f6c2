#pragma once

#include "mgvae/metrics.hpp"
#include "mgvae/pipelines.hpp"

namespace mgvae::evaluation {

// Rows of the evaluation table. Oracle rows decode posterior means of one
// level; predicted rows take the oracle z_u and let the step-2 converters
// predict the finer levels; mode rows are text-only synthesis.
enum class SystemKind { oracle, predicted, mode };

struct System {
  SystemKind kind = SystemKind::mode;
  model::Level level = model::Level::word;     // oracle rows
  bool autoregressive = true;                  // predicted rows
  pipelines::Mode mode = pipelines::Mode::FG;  // mode rows
  std::string name() const;
};

// "oracle-utterance", "oracle-phrase", "oracle-word", "predicted-CP",
// "predicted-CP+AR", then the six modes.
std::vector<System> all_systems();
// Comma-separated names, or "all". Throws ConfigError.
std::vector<System> parse_systems(const std::string& text);

struct Options {
  Real temperature = 0;  // posterior/prior means by default
  std::uint64_t seed = 0;
};

// Acoustic features one system produces for an utterance.
Tensor system_output(const Models& models, const corpus::SegmentedUtterance& u, const System& system,
                     const Options& options, std::size_t item);

metrics::ReportRow evaluate(const Models& models, std::span<const corpus::SegmentedUtterance* const> items,
                            const System& system, const metrics::ChannelMap& channels, const Options& options = {});

// Posterior means of z_u for the given items, one row each.
Tensor utterance_latents(const Models& models, std::span<const corpus::SegmentedUtterance* const> items);

}  // namespace mgvae::evaluation
