#pragma once

#include "mgvae/models.hpp"

#include <filesystem>
#include <map>
#include <ostream>

namespace mgvae::trainer {

enum class Precision { f64, f32 };

struct TrainConfig {
  Real learning_rate = 1e-3;
  std::uint32_t batch_size = 8;
  std::uint32_t step1_epochs = 50;
  std::uint32_t step2_epochs = 10;
  std::uint32_t baseline_epochs = 10;
  priors::Schedule schedule;
  std::uint64_t seed = 1;
  std::uint32_t checkpoint_every = 0;  // epochs between checkpoints; 0 saves only at the end
  std::uint32_t patience = 0;          // step-1 early stopping on validation loss; 0 disables
  Precision precision = Precision::f64;  // f32 rounds parameters after every update

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);  // missing keys keep defaults
  void validate() const;  // throws ConfigError
  bool operator==(const TrainConfig&) const = default;
};

struct EpochRecord {
  std::string phase;  // step1, step2, baselines
  std::uint32_t epoch = 0;  // 1-based
  std::map<std::string, Real> train;  // epoch means over training items
  // Validation losses with fixed per-item noise; step-2/baseline fits are
  // teacher-forced against fixed posterior samples.
  std::map<std::string, Real> valid;
  double seconds = 0;

  std::string to_json(bool with_time = true) const;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;
};

struct TrainOptions {
  std::ostream* log = nullptr;            // one JSON record per epoch
  std::filesystem::path model_dir;        // empty: no checkpoints written
};

// Step 1: encoders and decoder on the training split. Throws
// TrainingDiverged on a non-finite loss or gradient after restoring (and
// saving) the last completed epoch's parameters.
TrainLog train_step1(Models& models, const corpus::Corpus& corpus, const TrainConfig& config,
                     const TrainOptions& options = {});
// Step 2: utterance prior and latent converters against frozen posteriors.
TrainLog train_step2(Models& models, const corpus::Corpus& corpus, const TrainConfig& config,
                     const TrainOptions& options = {});
// Word-level AR prior, conditional prior and conditional AR prior.
TrainLog train_baselines(Models& models, const corpus::Corpus& corpus, const TrainConfig& config,
                         const TrainOptions& options = {});

// Mean multi-level loss with fixed per-item noise.
Real step1_validation_loss(const Models& models, std::span<const corpus::SegmentedUtterance* const> items,
                           std::uint64_t seed);

// Posterior parameters of the frozen encoders with the residual parent term
// removed, so a posterior given any coarse sample is gather(coarse) + delta.
struct PosteriorCache {
  std::array<Tensor, 3> delta, log_var;
  static PosteriorCache compute(const Models& models, const corpus::SegmentedUtterance& u);
};

// Oracle latents for one utterance: posterior samples cascading samples (eps
// null: posterior means cascading means). Also returns posterior means given
// the sampled coarser latents.
struct OracleLatents {
  std::array<Tensor, 3> z, mean;
};
OracleLatents sample_oracle(const PosteriorCache& cache, const corpus::SegmentedUtterance& u, bool residual,
                            const std::array<Tensor, 3>* eps);

}  // namespace mgvae::trainer
