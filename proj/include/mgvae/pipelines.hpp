#pragma once

#include "mgvae/models.hpp"

#include <optional>
#include <string_view>

namespace mgvae::pipelines {

using model::Level;

enum class Mode { FG, FG_AR, FG_CP, FG_CP_AR, MG_CP, MG_CP_AR };

inline constexpr std::array<Mode, 6> kModes{Mode::FG,    Mode::FG_AR, Mode::FG_CP,
                                            Mode::FG_CP_AR, Mode::MG_CP, Mode::MG_CP_AR};

const char* mode_name(Mode mode);  // "FG+CP+AR" etc.
// Accepts "FG+CP+AR" or "FG_CP_AR", any case. Throws ConfigError.
Mode parse_mode(std::string_view text);
bool multi_grained(Mode mode);

struct Request {
  Mode mode = Mode::MG_CP_AR;
  std::optional<Tensor> z_u;  // [1, D_z]; multi-grained modes only
  Real temperature = 1;
  // Noise for utterance, phrase and word levels. Missing levels are drawn
  // from Rng(seed) in that order, one full block per level whether used or not.
  std::uint64_t seed = 0;
  std::array<std::optional<Tensor>, 3> eps;
};

struct LevelTrace {
  Level level;
  Tensor mean, log_var;  // prior distribution the latents were drawn from
};

struct Result {
  Mode mode;
  std::optional<Tensor> z_u, z_p;  // multi-grained modes only
  Tensor z_w;                      // [M, D_z]
  Tensor features;                 // [T, D_ac]
  std::vector<LevelTrace> trace;
};

// Text-only synthesis. Throws ModelError for a mode whose networks are not
// trained or for z_u with a fixed-grained mode, ShapeError for bad shapes.
Result synthesize(const Models& models, const corpus::SegmentedUtterance& u, const Request& request);

// Word latents only (no decoding).
Tensor sample_word_latents(const Models& models, const corpus::SegmentedUtterance& u, const Request& request);

// Mean squared distance between consecutive rows. Needs at least two rows.
Real smoothness(const Tensor& z);

}  // namespace mgvae::pipelines
