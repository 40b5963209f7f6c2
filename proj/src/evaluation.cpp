#include "mgvae/evaluation.hpp"

#include "mgvae/error.hpp"

#include <sstream>

namespace mgvae::evaluation {

using corpus::SegmentedUtterance;
using model::Level;

std::string System::name() const {
  switch (kind) {
    case SystemKind::oracle: return std::string("oracle-") + model::level_name(level);
    case SystemKind::predicted: return autoregressive ? "predicted-CP+AR" : "predicted-CP";
    case SystemKind::mode: return pipelines::mode_name(mode);
  }
  return "?";
}

std::vector<System> all_systems() {
  std::vector<System> out;
  for (auto l : model::kLevels) out.push_back({SystemKind::oracle, l, true, pipelines::Mode::FG});
  out.push_back({SystemKind::predicted, Level::word, false, pipelines::Mode::FG});
  out.push_back({SystemKind::predicted, Level::word, true, pipelines::Mode::FG});
  for (auto m : pipelines::kModes) out.push_back({SystemKind::mode, Level::word, true, m});
  return out;
}

std::vector<System> parse_systems(const std::string& text) {
  if (text == "all") return all_systems();
  std::vector<System> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    bool found = false;
    for (const auto& s : all_systems()) {
      if (s.name() == part) {
        out.push_back(s);
        found = true;
      }
    }
    if (!found) out.push_back({SystemKind::mode, Level::word, true, pipelines::parse_mode(part)});
  }
  if (out.empty()) throw ConfigError("no systems selected");
  return out;
}

Tensor system_output(const Models& m, const SegmentedUtterance& u, const System& system, const Options& options,
                     std::size_t item) {
  if (system.kind == SystemKind::oracle) {
    if (!m.has_step1) throw ModelError("oracle rows need step-1 weights");
    const auto z = model::posterior_means(m.params, m.vae, u);
    const Tensor& latent = system.level == Level::utterance ? z.z_u : system.level == Level::phrase ? z.z_p : z.z_w;
    auto s = Session::inference(m.params);
    return model::decode(s, m.vae, system.level, u, s.constant(latent)).value();
  }
  pipelines::Request r;
  r.temperature = options.temperature;
  std::seed_seq seq{options.seed, static_cast<std::uint64_t>(item)};
  std::array<std::uint64_t, 1> drawn{};
  seq.generate(drawn.begin(), drawn.end());
  r.seed = drawn[0];
  if (system.kind == SystemKind::predicted) {
    r.mode = system.autoregressive ? pipelines::Mode::MG_CP_AR : pipelines::Mode::MG_CP;
    if (!m.has_step1) throw ModelError("predicted rows need step-1 weights");
    r.z_u = model::posterior_means(m.params, m.vae, u).z_u;
  } else {
    r.mode = system.mode;
  }
  return pipelines::synthesize(m, u, r).features;
}

metrics::ReportRow evaluate(const Models& m, std::span<const SegmentedUtterance* const> items, const System& system,
                            const metrics::ChannelMap& channels, const Options& options) {
  if (items.empty()) throw ConfigError("nothing to evaluate");
  std::vector<Real> mcd, gvd, f0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& u = *items[i];
    const Tensor out = system_output(m, u, system, options, i);
    mcd.push_back(metrics::mcd(u.acoustic, out, channels));
    gvd.push_back(metrics::gvd(std::span(&u.acoustic, 1), std::span(&out, 1), channels));
    if (auto e = metrics::f0_rmse(u.acoustic, out, channels)) f0.push_back(*e);
  }
  return {system.name(), metrics::summarize(mcd), metrics::summarize(gvd), metrics::summarize(f0)};
}

Tensor utterance_latents(const Models& m, std::span<const SegmentedUtterance* const> items) {
  Tensor z(items.size(), m.config.latent_dim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto s = Session::inference(m.params);
    const auto mean = model::encode(s, m.vae, *items[i], Level::utterance).mean.value();
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) = mean(0, j);
  }
  return z;
}

}  // namespace mgvae::evaluation
