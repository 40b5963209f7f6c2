#pragma once

#include "mgvae/priors.hpp"

#include <filesystem>

namespace mgvae {

// Parameter groups, one checkpoint file each.
inline const std::vector<std::string> kStep1Groups{"enc.", "dec."};
inline const std::vector<std::string> kStep2Groups{"prior."};
inline const std::vector<std::string> kBaselineGroups{"base."};

// Every network of the system over one shared parameter set. All groups are
// always allocated; the flags record which ones hold trained weights.
struct Models {
  model::ModelConfig config;
  ParameterSet params;
  model::Vae vae;
  priors::PriorNetwork prior;
  priors::BaselinePriors baselines;
  bool has_step1 = false;
  bool has_step2 = false;
  bool has_baselines = false;

  // Groups are initialized from independent streams derived from the seed,
  // so each group's initial values do not depend on the others. Initial
  // values are rounded to float.
  static Models create(const model::ModelConfig& config, std::uint64_t seed);

  // Model directory: step1.ckpt (required), step2.ckpt and baselines.ckpt
  // (optional).
  static Models load(const std::filesystem::path& dir);
  void save_group(const std::filesystem::path& dir, std::span<const std::string> group) const;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::span<const std::string> group);

}  // namespace mgvae
