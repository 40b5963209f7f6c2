#include "mgvae/priors.hpp"

#include "mgvae/error.hpp"

#include <algorithm>
#include <functional>

namespace mgvae::priors {

using ad::Var;
using corpus::SegmentedUtterance;
using nn::Activation;
using nn::Dense;
using nn::Direction;
using nn::Recurrent;

namespace {

RateConverter make_rate(ParameterSet& params, const std::string& p, Level level, const model::ModelConfig& c, Rng& rng) {
  RateConverter r;
  r.level = level;
  r.rnn0 = Recurrent::create(params, p + ".rnn0", c.linguistic_dim, c.rate_hidden, Direction::bidirectional, rng);
  r.rnn1 = Recurrent::create(params, p + ".rnn1", 2 * c.rate_hidden, c.rate_hidden, Direction::bidirectional, rng);
  return r;
}

ConditionalPrior make_cp(ParameterSet& params, const std::string& p, std::size_t in, bool feedback,
                         const model::ModelConfig& c, Rng& rng) {
  ConditionalPrior cp;
  cp.latent_dim = c.latent_dim;
  cp.feedback = feedback;
  const std::size_t width = in + (feedback ? c.latent_dim : 0);
  cp.fc0 = Dense::create(params, p + ".fc0", width, c.prior_width, Activation::tanh, rng);
  cp.fc1 = Dense::create(params, p + ".fc1", c.prior_width, c.prior_width, Activation::tanh, rng);
  cp.out = Dense::create(params, p + ".out", c.prior_width, 2 * c.latent_dim, Activation::linear, rng);
  return cp;
}

LatentConverter make_converter(ParameterSet& params, const std::string& p, Level level, bool autoregressive,
                               const model::ModelConfig& c, Rng& rng) {
  LatentConverter conv;
  conv.level = level;
  conv.autoregressive = autoregressive;
  conv.residual = c.residual;
  conv.latent_dim = c.latent_dim;
  const std::size_t emb = 2 * c.rate_hidden;
  const std::size_t h = c.converter_hidden;
  conv.bi = Recurrent::create(params, p + ".bi", emb + c.latent_dim, h, Direction::bidirectional, rng);
  const std::size_t uni_in = 2 * h + c.latent_dim + (autoregressive ? c.latent_dim : 0);
  conv.uni = Recurrent::create(params, p + ".uni", uni_in, h, Direction::forward, rng);
  conv.mean_head = Dense::create(params, p + ".mean", h, c.latent_dim, Activation::linear, rng);
  conv.log_var_head = Dense::create(params, p + ".log_var", h, c.latent_dim, Activation::linear, rng);
  return conv;
}

Gaussian split_params(Var out, std::size_t d) { return {ad::slice_cols(out, 0, d), ad::slice_cols(out, d, d)}; }

Gaussian cp_forward(Session& s, const ConditionalPrior& cp, Var x) {
  Var h = nn::dense_forward(s, cp.fc1, nn::dense_forward(s, cp.fc0, x));
  return split_params(nn::dense_forward(s, cp.out, h), cp.latent_dim);
}

void check_rows(const Tensor* t, std::size_t rows, std::size_t cols, const char* what) {
  if (t && (t->rows() != rows || t->cols() != cols)) {
    throw ShapeError(what, shape_string(*t) + " for " + std::to_string(rows) + " steps of width " + std::to_string(cols));
  }
}

Var noise_row(Session& s, const SampleOptions& o, std::size_t t, std::size_t d) {
  Tensor e(1, d);
  if (o.eps) {
    for (std::size_t j = 0; j < d; ++j) e(0, j) = o.temperature * (*o.eps)(t, j);
  }
  return s.constant(std::move(e));
}

Var sample(const Gaussian& g, Var scaled_eps) { return g.mean + ad::mul(ad::exp(ad::scale(g.log_var, 0.5)), scaled_eps); }

SequenceOutput all_at_once(Session& s, Gaussian dist, const SampleOptions& o) {
  const std::size_t k = dist.mean.rows(), d = dist.mean.cols();
  check_rows(o.eps, k, d, "sample noise");
  Tensor e(k, d);
  if (o.eps) {
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = o.temperature * (*o.eps)[i];
  }
  SequenceOutput out;
  out.samples = sample(dist, s.constant(std::move(e)));
  out.dist = dist;
  out.teacher.assign(k, false);
  return out;
}

using StepFn = std::function<Gaussian(std::size_t t, Var feedback)>;

// Runs an autoregressive sampler: step t is fed the oracle latent t-1, the
// detached sample t-1, or (at t = 0) zeros, according to the options.
SequenceOutput run_autoregressive(Session& s, std::size_t steps, std::size_t d, const SampleOptions& o,
                                  const StepFn& step) {
  if (steps == 0) throw ShapeError("autoregressive sampling", "zero steps");
  if (o.feedback != Feedback::free_running && !o.oracle) {
    throw ModelError("teacher-forced or scheduled sampling needs oracle latents");
  }
  if (o.feedback == Feedback::scheduled && !o.coin) throw ModelError("scheduled sampling needs a coin source");
  if (o.feedback != Feedback::free_running) check_rows(o.oracle, steps, d, "oracle latents");
  check_rows(o.eps, steps, d, "sample noise");
  std::bernoulli_distribution coin(std::clamp<Real>(o.teacher_prob, 0, 1));

  SequenceOutput out;
  std::vector<Var> means, log_vars, samples;
  Var feedback = s.constant(Tensor(1, d));
  out.teacher.push_back(false);
  for (std::size_t t = 0; t < steps; ++t) {
    const Gaussian g = step(t, feedback);
    Var z = sample(g, noise_row(s, o, t, d));
    means.push_back(g.mean);
    log_vars.push_back(g.log_var);
    samples.push_back(z);
    if (t + 1 == steps) break;
    bool teacher = o.feedback == Feedback::teacher_forced;
    if (o.feedback == Feedback::scheduled) teacher = coin(*o.coin);
    out.teacher.push_back(teacher);
    if (teacher) {
      Tensor row(1, d);
      for (std::size_t j = 0; j < d; ++j) row(0, j) = (*o.oracle)(t, j);
      feedback = s.constant(std::move(row));
    } else {
      feedback = ad::stop_gradient(z);
    }
  }
  out.dist = {ad::concat_rows(means), ad::concat_rows(log_vars)};
  out.samples = ad::concat_rows(samples);
  return out;
}

}  // namespace

PriorNetwork PriorNetwork::create(ParameterSet& params, const model::ModelConfig& c, Rng& rng) {
  c.validate();
  PriorNetwork n;
  n.rates[0] = make_rate(params, "prior.rate.utt", Level::utterance, c, rng);
  n.rates[1] = make_rate(params, "prior.rate.phr", Level::phrase, c, rng);
  n.rates[2] = make_rate(params, "prior.rate.word", Level::word, c, rng);
  n.utterance_prior = make_cp(params, "prior.cp", 2 * c.rate_hidden, false, c, rng);
  n.phrase_ar = make_converter(params, "prior.conv.phr.ar", Level::phrase, true, c, rng);
  n.word_ar = make_converter(params, "prior.conv.word.ar", Level::word, true, c, rng);
  n.phrase_flat = make_converter(params, "prior.conv.phr.flat", Level::phrase, false, c, rng);
  n.word_flat = make_converter(params, "prior.conv.word.flat", Level::word, false, c, rng);
  return n;
}

const LatentConverter& PriorNetwork::converter(Level l, bool autoregressive) const {
  switch (l) {
    case Level::phrase: return autoregressive ? phrase_ar : phrase_flat;
    case Level::word: return autoregressive ? word_ar : word_flat;
    case Level::utterance: break;
  }
  throw ModelError("no latent converter targets the utterance level");
}

BaselinePriors BaselinePriors::create(ParameterSet& params, const model::ModelConfig& c, Rng& rng) {
  c.validate();
  BaselinePriors b;
  b.word_rate = make_rate(params, "base.rate.word", Level::word, c, rng);
  b.ar.latent_dim = c.latent_dim;
  b.ar.uni = Recurrent::create(params, "base.ar.uni", c.latent_dim, c.converter_hidden, Direction::forward, rng);
  b.ar.out = Dense::create(params, "base.ar.out", c.converter_hidden, 2 * c.latent_dim, Activation::linear, rng);
  b.cp = make_cp(params, "base.cp", 2 * c.rate_hidden, false, c, rng);
  b.cp_ar = make_cp(params, "base.cpar", 2 * c.rate_hidden, true, c, rng);
  return b;
}

Var embed_level(Session& s, const RateConverter& rate, const SegmentedUtterance& u) {
  Var y = s.graph().reference(u.linguistic, false);
  Var h = nn::recurrent_forward(s, rate.rnn1, nn::recurrent_forward(s, rate.rnn0, y));
  return nn::segment_mean_pool(h, model::level_segments(u, rate.level));
}

Gaussian prior_utterance(Session& s, const PriorNetwork& net, const SegmentedUtterance& u) {
  return cp_forward(s, net.utterance_prior, embed_level(s, net.rate(Level::utterance), u));
}

SequenceOutput convert(Session& s, const LatentConverter& conv, Var coarse, std::span<const std::uint32_t> parent,
                       Var emb, const SampleOptions& o) {
  const std::size_t k = parent.size(), d = conv.latent_dim;
  if (emb.rows() != k || k == 0) {
    throw ShapeError("convert", "embeddings " + shape_string(emb.value()) + " for " + std::to_string(k) + " segments");
  }
  if (coarse.cols() != d) throw ShapeError("convert", "coarse latents " + shape_string(coarse.value()));
  for (auto p : parent) {
    if (p >= coarse.rows()) {
      throw ShapeError("convert", "segment maps to coarse row " + std::to_string(p) + " of " +
                                      shape_string(coarse.value()));
    }
  }
  Var base = ad::gather_rows(ad::stop_gradient(coarse), std::vector<std::uint32_t>(parent.begin(), parent.end()));
  Var b = nn::recurrent_forward(s, conv.bi, ad::concat_cols({emb, base}));

  if (!conv.autoregressive) {
    Var h = nn::recurrent_forward(s, conv.uni, ad::concat_cols({b, base}));
    Var delta = nn::dense_forward(s, conv.mean_head, h);
    Gaussian g{conv.residual ? base + delta : delta, nn::dense_forward(s, conv.log_var_head, h)};
    return all_at_once(s, g, o);
  }

  auto state = nn::zero_state(s, conv.uni.hidden);
  return run_autoregressive(s, k, d, o, [&](std::size_t t, Var feedback) {
    Var base_t = ad::slice_rows(base, t, 1);
    state = nn::lstm_step(s, conv.uni.fwd, ad::concat_cols({ad::slice_rows(b, t, 1), base_t, feedback}), state);
    Var delta = nn::dense_forward(s, conv.mean_head, state.h);
    return Gaussian{conv.residual ? base_t + delta : delta, nn::dense_forward(s, conv.log_var_head, state.h)};
  });
}

SequenceOutput convert(Session& s, const PriorNetwork& net, Level level, bool autoregressive,
                       const SegmentedUtterance& u, Var coarse, const SampleOptions& options) {
  const auto parent = model::coarse_index(u, level);
  return convert(s, net.converter(level, autoregressive), coarse, parent, embed_level(s, net.rate(level), u), options);
}

SequenceOutput ar_prior(Session& s, const ArPrior& prior, std::size_t steps, const SampleOptions& o) {
  auto state = nn::zero_state(s, prior.uni.hidden);
  return run_autoregressive(s, steps, prior.latent_dim, o, [&](std::size_t, Var feedback) {
    state = nn::lstm_step(s, prior.uni.fwd, feedback, state);
    return split_params(nn::dense_forward(s, prior.out, state.h), prior.latent_dim);
  });
}

SequenceOutput conditional_prior(Session& s, const ConditionalPrior& prior, Var emb, const SampleOptions& o) {
  if (!prior.feedback) return all_at_once(s, cp_forward(s, prior, emb), o);
  return run_autoregressive(s, emb.rows(), prior.latent_dim, o, [&](std::size_t t, Var feedback) {
    return cp_forward(s, prior, ad::concat_cols({ad::slice_rows(emb, t, 1), feedback}));
  });
}

Var converter_fit_loss(const Gaussian& posterior, const Gaussian& predicted) {
  if (posterior.mean.rows() != predicted.mean.rows()) {
    throw ShapeError("converter_fit_loss", std::to_string(posterior.mean.rows()) + " posterior segments vs " +
                                               std::to_string(predicted.mean.rows()) + " predicted");
  }
  return model::kl_gaussians({ad::stop_gradient(posterior.mean), ad::stop_gradient(posterior.log_var)}, predicted);
}

void Schedule::validate() const {
  if (!(p_min >= 0 && p_min <= 1)) throw ConfigError("scheduled sampling p_min must lie in [0, 1]");
  if (!(decay_epochs >= 0)) throw ConfigError("scheduled sampling decay must be non-negative");
}

Real scheduled_sampling_ratio(std::size_t epoch, const Schedule& schedule) {
  schedule.validate();
  if (schedule.decay_epochs == 0) return schedule.p_min;
  return std::max(schedule.p_min, 1 - static_cast<Real>(epoch) / schedule.decay_epochs);
}

}  // namespace mgvae::priors
