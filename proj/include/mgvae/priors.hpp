#pragma once

#include "mgvae/model.hpp"

namespace mgvae::priors {

using model::Gaussian;
using model::Level;

// Two bidirectional recurrent layers over Y, mean-pooled to one row per
// segment of the target level.
struct RateConverter {
  Level level = Level::utterance;
  nn::Recurrent rnn0, rnn1;
  std::size_t out_width() const { return rnn1.out_width(); }
};

// Three FC layers; the last emits [mean | log_var]. With feedback, step t
// also sees the latent emitted at step t-1.
struct ConditionalPrior {
  nn::Dense fc0, fc1, out;
  std::size_t latent_dim = 0;
  bool feedback = false;
};

// Finer-level converter: a bidirectional layer over [embedding | coarse
// latent], then a unidirectional layer whose step input is
// [bidirectional output | coarse latent | previous latent] (the previous
// latent is omitted for the non-autoregressive variant), then mean/log-var
// heads. The mean is the coarse latent plus the head output when residual.
struct LatentConverter {
  Level level = Level::phrase;
  bool autoregressive = true;
  bool residual = true;
  nn::Recurrent bi, uni;
  nn::Dense mean_head, log_var_head;
  std::size_t latent_dim = 0;
};

// Unidirectional layer over previous latents only, no text conditioning.
struct ArPrior {
  nn::Recurrent uni;
  nn::Dense out;
  std::size_t latent_dim = 0;
};

// Step-2 parameters, all under "prior.".
struct PriorNetwork {
  std::array<RateConverter, 3> rates;
  ConditionalPrior utterance_prior;
  LatentConverter phrase_ar, word_ar, phrase_flat, word_flat;

  static PriorNetwork create(ParameterSet& params, const model::ModelConfig& config, Rng& rng);
  const RateConverter& rate(Level l) const { return rates[static_cast<int>(l)]; }
  const LatentConverter& converter(Level l, bool autoregressive) const;
};

// Word-level baselines, all under "base.": AR prior, conditional prior, and
// conditional prior with feedback. The two conditional priors share one rate
// converter.
struct BaselinePriors {
  RateConverter word_rate;
  ArPrior ar;
  ConditionalPrior cp, cp_ar;

  static BaselinePriors create(ParameterSet& params, const model::ModelConfig& config, Rng& rng);
};

ad::Var embed_level(Session& s, const RateConverter& rate, const corpus::SegmentedUtterance& u);

// p(z_u | Y).
Gaussian prior_utterance(Session& s, const PriorNetwork& net, const corpus::SegmentedUtterance& u);

enum class Feedback { teacher_forced, free_running, scheduled };

struct SampleOptions {
  Feedback feedback = Feedback::free_running;
  const Tensor* oracle = nullptr;  // [K, D_z]; needed unless free running
  const Tensor* eps = nullptr;     // [K, D_z] standard normal; null means zero noise
  Real temperature = 1;
  Real teacher_prob = 1;  // scheduled: chance of feeding the oracle at each step
  Rng* coin = nullptr;    // scheduled: source of the per-step coin flips
};

struct SequenceOutput {
  Gaussian dist;          // per-step distribution, [K, D_z] each
  ad::Var samples;        // mean + exp(log_var / 2) * temperature * eps
  std::vector<bool> teacher;  // per step: oracle fed back (step 0 is always zero feedback)
};

// Finer latents from coarser ones. `coarse` has one row per coarse segment,
// `parent` maps each fine segment to its coarse row, `emb` has one row per
// fine segment. The coarse latents are treated as constants.
SequenceOutput convert(Session& s, const LatentConverter& conv, ad::Var coarse, std::span<const std::uint32_t> parent,
                       ad::Var emb, const SampleOptions& options);
// Convenience: phrase latents from z_u, or word latents from Z_p.
SequenceOutput convert(Session& s, const PriorNetwork& net, Level level, bool autoregressive,
                       const corpus::SegmentedUtterance& u, ad::Var coarse, const SampleOptions& options);

SequenceOutput ar_prior(Session& s, const ArPrior& prior, std::size_t steps, const SampleOptions& options);
SequenceOutput conditional_prior(Session& s, const ConditionalPrior& prior, ad::Var emb, const SampleOptions& options);

// Mean over segments of KL(q || p) with q held fixed.
ad::Var converter_fit_loss(const Gaussian& posterior, const Gaussian& predicted);

struct Schedule {
  Real p_min = 0.1;
  Real decay_epochs = 10;  // 0 means p_min from the first epoch
  void validate() const;
  bool operator==(const Schedule&) const = default;
};
// Teacher-forcing probability max(p_min, 1 - epoch / decay_epochs).
Real scheduled_sampling_ratio(std::size_t epoch, const Schedule& schedule);

}  // namespace mgvae::priors
