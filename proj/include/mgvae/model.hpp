#pragma once

#include "mgvae/corpus.hpp"
#include "mgvae/nn.hpp"

#include <array>
#include <optional>
#include <string>

namespace mgvae::model {

enum class Level { utterance = 0, phrase = 1, word = 2 };
inline constexpr std::array<Level, 3> kLevels{Level::utterance, Level::phrase, Level::word};
const char* level_name(Level level);

struct ModelConfig {
  std::uint32_t acoustic_dim = 12;
  std::uint32_t linguistic_dim = 16;
  std::uint32_t latent_dim = 2;
  std::uint32_t input_width = 32;      // encoder/decoder input FC width
  std::uint32_t encoder_hidden = 32;   // per direction
  std::uint32_t decoder_hidden = 32;
  std::uint32_t rate_hidden = 16;      // rate converters, per direction
  std::uint32_t converter_hidden = 16;
  std::uint32_t prior_width = 32;      // conditional prior FC width
  bool residual = true;
  bool share_decoder = true;
  std::array<Real, 3> kl_weight{1, 1, 1};  // utterance, phrase, word

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  void validate() const;  // throws ConfigError
  bool operator==(const ModelConfig&) const = default;
};

// Diagonal Gaussian per segment: both [K, D_z].
struct Gaussian {
  ad::Var mean;
  ad::Var log_var;
};

struct Encoder {
  Level level = Level::utterance;
  nn::Dense acoustic_in, linguistic_in;
  nn::Recurrent rnn0, rnn1;
  nn::Dense mean_head, log_var_head;
};

struct Decoder {
  nn::Dense linguistic_in, latent_in;
  nn::Recurrent rnn0, rnn1;
  nn::Dense out;
};

// Parameters live under "enc.<level>." and "dec." (or "dec.<level>." without
// sharing).
struct Vae {
  ModelConfig config;
  std::array<Encoder, 3> encoders;
  std::array<Decoder, 3> decoders;  // identical copies when shared

  static Vae create(ParameterSet& params, const ModelConfig& config, Rng& rng);
  const Encoder& encoder(Level l) const { return encoders[static_cast<int>(l)]; }
  const Decoder& decoder(Level l) const { return decoders[static_cast<int>(l)]; }
};

// Segmentation of an utterance at a level (whole utterance is one segment).
SegmentSpec level_segments(const corpus::SegmentedUtterance& u, Level level);
std::size_t level_count(const corpus::SegmentedUtterance& u, Level level);
// For each segment at `level`, its row in the next coarser level.
std::vector<std::uint32_t> coarse_index(const corpus::SegmentedUtterance& u, Level level);

// Posterior at a level. Phrase and word levels with residual connections need
// the sampled coarser latents (z_u for phrases, Z_p for words); their mean is
// the coarser latent (no gradient) plus the head output.
Gaussian encode(Session& s, const Vae& vae, const corpus::SegmentedUtterance& u, Level level,
                std::optional<ad::Var> coarse = std::nullopt);

// z = mean + exp(log_var / 2) * eps.
ad::Var reparameterize(const Gaussian& g, ad::Var eps);
ad::Var reparameterize(Session& s, const Gaussian& g, const Tensor& eps);

// Frame-rate acoustic prediction from Y and one latent row per segment.
ad::Var decode(Session& s, const Decoder& dec, ad::Var y, ad::Var z, const SegmentSpec& seg);
ad::Var decode(Session& s, const Vae& vae, Level level, const corpus::SegmentedUtterance& u, ad::Var z);

// KL(N(mean, exp(log_var)) || N(0, I)) summed over dims, averaged over rows.
ad::Var kl_standard_normal(const Gaussian& g);
// KL(q || p) between diagonal Gaussians, summed over dims, averaged over rows.
ad::Var kl_gaussians(const Gaussian& q, const Gaussian& p);

struct ElboTerms {
  ad::Var loss;
  ad::Var reconstruction;  // mean squared error over frames and channels
  ad::Var kl;
  Gaussian posterior;
  ad::Var z;
};

ElboTerms elbo_loss(Session& s, const Vae& vae, const corpus::SegmentedUtterance& u, Level level,
                    const Tensor& eps, std::optional<ad::Var> coarse = std::nullopt);

// Standard-normal noise for the three levels of one utterance.
struct LevelNoise {
  std::array<Tensor, 3> eps;
  static LevelNoise draw(const corpus::SegmentedUtterance& u, std::size_t latent_dim, Rng& rng);
  static LevelNoise zeros(const corpus::SegmentedUtterance& u, std::size_t latent_dim);
  const Tensor& at(Level l) const { return eps[static_cast<int>(l)]; }
};

struct MultiLevelTerms {
  ad::Var total;
  std::array<ElboTerms, 3> levels;
};

// Sum of the three ELBOs; each finer encoder receives the coarser sample drawn
// in the same pass.
MultiLevelTerms multi_level_loss(Session& s, const Vae& vae, const corpus::SegmentedUtterance& u,
                                 const LevelNoise& noise);

// Posterior means at every level, cascading means (not samples) into the
// residual encoders.
struct LatentSet {
  Tensor z_u;  // [1, D_z]
  Tensor z_p;  // [N, D_z]
  Tensor z_w;  // [M, D_z]
};
LatentSet posterior_means(const ParameterSet& params, const Vae& vae, const corpus::SegmentedUtterance& u);

}  // namespace mgvae::model
