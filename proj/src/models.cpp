#include "mgvae/models.hpp"

#include "mgvae/checkpoint.hpp"
#include "mgvae/error.hpp"

namespace mgvae {

namespace {

const char* group_kind(std::span<const std::string> group) {
  if (group.size() == kStep1Groups.size() && group[0] == kStep1Groups[0]) return "step1";
  if (!group.empty() && group[0] == kStep2Groups[0]) return "step2";
  if (!group.empty() && group[0] == kBaselineGroups[0]) return "baselines";
  throw ConfigError("unknown parameter group");
}

Rng group_rng(std::uint64_t seed, std::uint64_t group) {
  std::seed_seq seq{seed, group};
  return Rng(seq);
}

}  // namespace

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::span<const std::string> group) {
  return dir / (std::string(group_kind(group)) + ".ckpt");
}

Models Models::create(const model::ModelConfig& config, std::uint64_t seed) {
  Models m;
  m.config = config;
  auto r1 = group_rng(seed, 1);
  m.vae = model::Vae::create(m.params, config, r1);
  auto r2 = group_rng(seed, 2);
  m.prior = priors::PriorNetwork::create(m.params, config, r2);
  auto r3 = group_rng(seed, 3);
  m.baselines = priors::BaselinePriors::create(m.params, config, r3);
  // Start from values a checkpoint can hold exactly.
  const std::vector<std::string> all{""};
  m.params.round_to_float(all);
  return m;
}

Models Models::load(const std::filesystem::path& dir) {
  const auto step1 = read_checkpoint(checkpoint_path(dir, kStep1Groups));
  if (step1.kind != "step1") throw FormatError("step1.ckpt holds a " + step1.kind + " checkpoint");
  const auto config = model::ModelConfig::from_json(step1.config_json);
  auto m = create(config, 0);
  apply_checkpoint(step1, m.params, kStep1Groups);
  m.has_step1 = true;
  for (auto* group : {&kStep2Groups, &kBaselineGroups}) {
    const auto path = checkpoint_path(dir, *group);
    if (!std::filesystem::exists(path)) continue;
    const auto ckpt = read_checkpoint(path);
    if (ckpt.kind != group_kind(*group)) throw FormatError(path.string() + " holds a " + ckpt.kind + " checkpoint");
    if (!(model::ModelConfig::from_json(ckpt.config_json) == config)) {
      throw FormatError(path.string() + " was trained with a different model config");
    }
    apply_checkpoint(ckpt, m.params, *group);
    (group == &kStep2Groups ? m.has_step2 : m.has_baselines) = true;
  }
  return m;
}

void Models::save_group(const std::filesystem::path& dir, std::span<const std::string> group) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(checkpoint_path(dir, group), group_kind(group), config.to_json(), params, group);
}

}  // namespace mgvae
