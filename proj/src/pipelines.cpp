#include "mgvae/pipelines.hpp"

#include "mgvae/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace mgvae::pipelines {

using ad::Var;
using corpus::SegmentedUtterance;

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::FG: return "FG";
    case Mode::FG_AR: return "FG+AR";
    case Mode::FG_CP: return "FG+CP";
    case Mode::FG_CP_AR: return "FG+CP+AR";
    case Mode::MG_CP: return "MG+CP";
    case Mode::MG_CP_AR: return "MG+CP+AR";
  }
  return "?";
}

Mode parse_mode(std::string_view text) {
  std::string norm;
  for (char c : text) norm += c == '_' ? '+' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto m : kModes) {
    if (norm == mode_name(m)) return m;
  }
  throw ConfigError("unknown synthesis mode '" + std::string(text) + "'");
}

bool multi_grained(Mode mode) { return mode == Mode::MG_CP || mode == Mode::MG_CP_AR; }

namespace {

struct Drawn {
  Var z;
  LevelTrace trace;
};

Tensor level_noise(const Request& r, Rng& rng, Level level, std::size_t rows, std::size_t d) {
  Tensor drawn = Tensor::randn(rows, d, rng);
  const auto& given = r.eps[static_cast<int>(level)];
  if (!given) return drawn;
  if (given->rows() != rows || given->cols() != d) {
    throw ShapeError("synthesize", std::string(model::level_name(level)) + " noise " + shape_string(*given) +
                                       ", expected [" + std::to_string(rows) + "," + std::to_string(d) + "]");
  }
  return *given;
}

Tensor scaled(Tensor t, Real k) {
  for (auto& v : t.values()) v = v * k + 0.0;  // + 0: no negative zeros at zero temperature
  return t;
}

void require(bool trained, Mode mode, const char* what) {
  if (!trained) throw ModelError(std::string(mode_name(mode)) + " needs " + what + " weights, which are not loaded");
}

Drawn from_sequence(const priors::SequenceOutput& out, Level level) {
  return {out.samples, {level, out.dist.mean.value(), out.dist.log_var.value()}};
}

struct Latents {
  std::optional<Tensor> z_u, z_p;
  Var z_w;
  std::vector<LevelTrace> trace;
};

Latents draw_latents(Session& s, const Models& m, const SegmentedUtterance& u, const Request& r) {
  const std::size_t d = m.config.latent_dim;
  const bool mg = multi_grained(r.mode);
  if (r.z_u && !mg) throw ModelError(std::string("an utterance latent cannot be given to ") + mode_name(r.mode));
  if (!(r.temperature >= 0) || !std::isfinite(r.temperature)) {
    throw ConfigError("temperature must be finite and non-negative");
  }
  if (mg) require(m.has_step2, r.mode, "step-2 prior");
  if (!mg && r.mode != Mode::FG) require(m.has_baselines, r.mode, "baseline prior");

  Rng rng(r.seed);
  const Tensor eps_u = level_noise(r, rng, Level::utterance, 1, d);
  const Tensor eps_p = level_noise(r, rng, Level::phrase, u.phrases.size(), d);
  const Tensor eps_w = level_noise(r, rng, Level::word, u.words.size(), d);

  priors::SampleOptions free;
  free.feedback = priors::Feedback::free_running;
  free.temperature = r.temperature;

  Latents out;
  const std::size_t words = u.words.size();
  switch (r.mode) {
    case Mode::FG: {
      out.z_w = s.constant(scaled(eps_w, r.temperature));
      out.trace.push_back({Level::word, Tensor(words, d), Tensor(words, d)});
      return out;
    }
    case Mode::FG_AR: {
      free.eps = &eps_w;
      auto d_w = from_sequence(priors::ar_prior(s, m.baselines.ar, words, free), Level::word);
      out.z_w = d_w.z;
      out.trace.push_back(std::move(d_w.trace));
      return out;
    }
    case Mode::FG_CP:
    case Mode::FG_CP_AR: {
      free.eps = &eps_w;
      const auto& cp = r.mode == Mode::FG_CP ? m.baselines.cp : m.baselines.cp_ar;
      auto d_w = from_sequence(priors::conditional_prior(s, cp, priors::embed_level(s, m.baselines.word_rate, u), free),
                               Level::word);
      out.z_w = d_w.z;
      out.trace.push_back(std::move(d_w.trace));
      return out;
    }
    case Mode::MG_CP:
    case Mode::MG_CP_AR: break;
  }

  const bool ar = r.mode == Mode::MG_CP_AR;
  auto p_u = priors::prior_utterance(s, m.prior, u);
  Var z_u;
  if (r.z_u) {
    if (r.z_u->rows() != 1 || r.z_u->cols() != d) {
      throw ShapeError("synthesize", "z_u " + shape_string(*r.z_u) + ", expected [1," + std::to_string(d) + "]");
    }
    z_u = s.constant(*r.z_u);
  } else {
    z_u = model::reparameterize(s, p_u, scaled(eps_u, r.temperature));
  }
  out.trace.push_back({Level::utterance, p_u.mean.value(), p_u.log_var.value()});

  free.eps = &eps_p;
  auto d_p = from_sequence(priors::convert(s, m.prior, Level::phrase, ar, u, z_u, free), Level::phrase);
  out.trace.push_back(std::move(d_p.trace));
  free.eps = &eps_w;
  auto d_w = from_sequence(priors::convert(s, m.prior, Level::word, ar, u, d_p.z, free), Level::word);
  out.trace.push_back(std::move(d_w.trace));
  out.z_u = z_u.value();
  out.z_p = d_p.z.value();
  out.z_w = d_w.z;
  return out;
}

}  // namespace

Tensor sample_word_latents(const Models& models, const SegmentedUtterance& u, const Request& request) {
  auto s = Session::inference(models.params);
  return draw_latents(s, models, u, request).z_w.value();
}

Result synthesize(const Models& models, const SegmentedUtterance& u, const Request& request) {
  require(models.has_step1, request.mode, "step-1 decoder");
  auto s = Session::inference(models.params);
  auto latents = draw_latents(s, models, u, request);
  Var x = model::decode(s, models.vae, Level::word, u, latents.z_w);
  Result r;
  r.mode = request.mode;
  r.z_u = std::move(latents.z_u);
  r.z_p = std::move(latents.z_p);
  r.z_w = latents.z_w.value();
  r.features = x.value();
  r.trace = std::move(latents.trace);
  return r;
}

Real smoothness(const Tensor& z) {
  if (z.rows() < 2) throw ShapeError("smoothness", "needs at least two latents, got " + shape_string(z));
  Real total = 0;
  for (std::size_t t = 1; t < z.rows(); ++t) {
    for (std::size_t j = 0; j < z.cols(); ++j) {
      const Real diff = z(t, j) - z(t - 1, j);
      total += diff * diff;
    }
  }
  return total / static_cast<Real>(z.rows() - 1);
}

}  // namespace mgvae::pipelines
