#include "mgvae/model.hpp"

#include "mgvae/error.hpp"

#include <json.hpp>

#include <set>

namespace mgvae::model {

using ad::Var;
using corpus::SegmentedUtterance;
using json = nlohmann::json;

namespace {

const char* short_name(Level l) {
  switch (l) {
    case Level::utterance: return "utt";
    case Level::phrase: return "phr";
    case Level::word: return "word";
  }
  return "?";
}

Encoder make_encoder(ParameterSet& params, const ModelConfig& c, Level level, Rng& rng) {
  const std::string p = std::string("enc.") + short_name(level) + ".";
  Encoder e;
  e.level = level;
  e.acoustic_in = nn::Dense::create(params, p + "ac_in", c.acoustic_dim, c.input_width, nn::Activation::linear, rng);
  e.linguistic_in = nn::Dense::create(params, p + "ling_in", c.linguistic_dim, c.input_width, nn::Activation::linear, rng);
  e.rnn0 = nn::Recurrent::create(params, p + "rnn0", c.input_width, c.encoder_hidden, nn::Direction::bidirectional, rng);
  e.rnn1 = nn::Recurrent::create(params, p + "rnn1", 2 * c.encoder_hidden, c.encoder_hidden, nn::Direction::bidirectional, rng);
  e.mean_head = nn::Dense::create(params, p + "mean", 2 * c.encoder_hidden, c.latent_dim, nn::Activation::linear, rng);
  e.log_var_head = nn::Dense::create(params, p + "log_var", 2 * c.encoder_hidden, c.latent_dim, nn::Activation::linear, rng);
  return e;
}

Decoder make_decoder(ParameterSet& params, const ModelConfig& c, const std::string& p, Rng& rng) {
  Decoder d;
  d.linguistic_in = nn::Dense::create(params, p + "ling_in", c.linguistic_dim, c.input_width, nn::Activation::linear, rng);
  d.latent_in = nn::Dense::create(params, p + "z_in", c.latent_dim, c.input_width, nn::Activation::linear, rng);
  d.rnn0 = nn::Recurrent::create(params, p + "rnn0", c.input_width, c.decoder_hidden, nn::Direction::bidirectional, rng);
  d.rnn1 = nn::Recurrent::create(params, p + "rnn1", 2 * c.decoder_hidden, c.decoder_hidden, nn::Direction::bidirectional, rng);
  d.out = nn::Dense::create(params, p + "out", 2 * c.decoder_hidden, c.acoustic_dim, nn::Activation::linear, rng);
  return d;
}

Var features(Session& s, const Tensor& t) { return s.graph().reference(t, false); }

}  // namespace

const char* level_name(Level level) {
  switch (level) {
    case Level::utterance: return "utterance";
    case Level::phrase: return "phrase";
    case Level::word: return "word";
  }
  return "?";
}

std::string ModelConfig::to_json() const {
  json j;
  j["acoustic_dim"] = acoustic_dim;
  j["linguistic_dim"] = linguistic_dim;
  j["latent_dim"] = latent_dim;
  j["input_width"] = input_width;
  j["encoder_hidden"] = encoder_hidden;
  j["decoder_hidden"] = decoder_hidden;
  j["rate_hidden"] = rate_hidden;
  j["converter_hidden"] = converter_hidden;
  j["prior_width"] = prior_width;
  j["residual"] = residual;
  j["share_decoder"] = share_decoder;
  j["kl_weight"] = kl_weight;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = json::parse(text);
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known = {
          "acoustic_dim", "linguistic_dim", "latent_dim", "input_width", "encoder_hidden", "decoder_hidden",
          "rate_hidden", "converter_hidden", "prior_width", "residual", "share_decoder", "kl_weight"};
      if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
    }
    c.acoustic_dim = j.value("acoustic_dim", c.acoustic_dim);
    c.linguistic_dim = j.value("linguistic_dim", c.linguistic_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.input_width = j.value("input_width", c.input_width);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.rate_hidden = j.value("rate_hidden", c.rate_hidden);
    c.converter_hidden = j.value("converter_hidden", c.converter_hidden);
    c.prior_width = j.value("prior_width", c.prior_width);
    c.residual = j.value("residual", c.residual);
    c.share_decoder = j.value("share_decoder", c.share_decoder);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void ModelConfig::validate() const {
  for (auto v : {acoustic_dim, linguistic_dim, latent_dim, input_width, encoder_hidden, decoder_hidden, rate_hidden,
                 converter_hidden, prior_width}) {
    if (v == 0) throw ConfigError("model dimensions must be positive");
  }
  for (auto b : kl_weight) {
    if (!(b >= 0)) throw ConfigError("KL weights must be non-negative");
  }
}

Vae Vae::create(ParameterSet& params, const ModelConfig& config, Rng& rng) {
  config.validate();
  Vae v;
  v.config = config;
  for (auto l : kLevels) v.encoders[static_cast<int>(l)] = make_encoder(params, config, l, rng);
  if (config.share_decoder) {
    const auto shared = make_decoder(params, config, "dec.", rng);
    v.decoders.fill(shared);
  } else {
    for (auto l : kLevels) {
      v.decoders[static_cast<int>(l)] = make_decoder(params, config, std::string("dec.") + short_name(l) + ".", rng);
    }
  }
  return v;
}

SegmentSpec level_segments(const SegmentedUtterance& u, Level level) {
  switch (level) {
    case Level::utterance: return SegmentSpec::whole(u.frames());
    case Level::phrase: return u.phrases;
    case Level::word: return u.words;
  }
  return {};
}

std::size_t level_count(const SegmentedUtterance& u, Level level) {
  switch (level) {
    case Level::utterance: return 1;
    case Level::phrase: return u.phrases.size();
    case Level::word: return u.words.size();
  }
  return 0;
}

std::vector<std::uint32_t> coarse_index(const SegmentedUtterance& u, Level level) {
  switch (level) {
    case Level::utterance: return {};
    case Level::phrase: return std::vector<std::uint32_t>(u.phrases.size(), 0);
    case Level::word: return u.word_phrase;
  }
  return {};
}

Gaussian encode(Session& s, const Vae& vae, const SegmentedUtterance& u, Level level, std::optional<Var> coarse) {
  const auto& e = vae.encoder(level);
  const bool residual = vae.config.residual && level != Level::utterance;
  if (residual && !coarse) {
    throw ModelError(std::string(level_name(level)) + " encoder needs the coarser-level latents");
  }
  Var h = nn::dense_forward(s, e.acoustic_in, features(s, u.acoustic)) +
          nn::dense_forward(s, e.linguistic_in, features(s, u.linguistic));
  h = nn::recurrent_forward(s, e.rnn1, nn::recurrent_forward(s, e.rnn0, h));
  Var pooled = nn::segment_mean_pool(h, level_segments(u, level));
  Var mean = nn::dense_forward(s, e.mean_head, pooled);
  if (residual) {
    const auto parent = coarse_index(u, level);
    const auto expected = level == Level::phrase ? std::size_t{1} : u.phrases.size();
    if (coarse->rows() != expected) {
      throw ShapeError("encode", "coarser latents " + shape_string(coarse->value()) + " for " +
                                     std::to_string(expected) + " coarse segments");
    }
    mean = ad::gather_rows(ad::stop_gradient(*coarse), parent) + mean;
  }
  return {mean, nn::dense_forward(s, e.log_var_head, pooled)};
}

Var reparameterize(const Gaussian& g, Var eps) {
  return g.mean + ad::mul(ad::exp(ad::scale(g.log_var, 0.5)), eps);
}

Var reparameterize(Session& s, const Gaussian& g, const Tensor& eps) {
  if (eps.rows() != g.mean.rows() || eps.cols() != g.mean.cols()) {
    throw ShapeError("reparameterize", "noise " + shape_string(eps) + " for latents " + shape_string(g.mean.value()));
  }
  return reparameterize(g, s.constant(eps));
}

Var decode(Session& s, const Decoder& dec, Var y, Var z, const SegmentSpec& seg) {
  if (y.rows() != seg.frames()) {
    throw ShapeError("decode", "linguistic features " + shape_string(y.value()) + " for segments covering " +
                                   std::to_string(seg.frames()) + " frames");
  }
  Var h = nn::dense_forward(s, dec.linguistic_in, y) +
          nn::broadcast_segments(nn::dense_forward(s, dec.latent_in, z), seg);
  h = nn::recurrent_forward(s, dec.rnn1, nn::recurrent_forward(s, dec.rnn0, h));
  return nn::dense_forward(s, dec.out, h);
}

Var decode(Session& s, const Vae& vae, Level level, const SegmentedUtterance& u, Var z) {
  return decode(s, vae.decoder(level), features(s, u.linguistic), z, level_segments(u, level));
}

Var kl_standard_normal(const Gaussian& g) {
  Var terms = ad::add_scalar(ad::square(g.mean) + ad::exp(g.log_var) - g.log_var, -1.0);
  return ad::scale(ad::sum(terms), 0.5 / static_cast<Real>(g.mean.rows()));
}

Var kl_gaussians(const Gaussian& q, const Gaussian& p) {
  if (q.mean.rows() != p.mean.rows() || q.mean.cols() != p.mean.cols()) {
    throw ShapeError("kl_gaussians", shape_string(q.mean.value()) + " vs " + shape_string(p.mean.value()));
  }
  Var inv_var_p = ad::exp(ad::scale(p.log_var, -1.0));
  Var ratio = ad::mul(ad::exp(q.log_var) + ad::square(q.mean - p.mean), inv_var_p);
  Var terms = ad::add_scalar(p.log_var - q.log_var + ratio, -1.0);
  return ad::scale(ad::sum(terms), 0.5 / static_cast<Real>(q.mean.rows()));
}

ElboTerms elbo_loss(Session& s, const Vae& vae, const SegmentedUtterance& u, Level level, const Tensor& eps,
                    std::optional<Var> coarse) {
  ElboTerms t;
  t.posterior = encode(s, vae, u, level, coarse);
  t.z = reparameterize(s, t.posterior, eps);
  Var x_hat = decode(s, vae, level, u, t.z);
  t.reconstruction = ad::mean(ad::square(x_hat - features(s, u.acoustic)));
  t.kl = kl_standard_normal(t.posterior);
  t.loss = t.reconstruction + ad::scale(t.kl, vae.config.kl_weight[static_cast<int>(level)]);
  return t;
}

LevelNoise LevelNoise::draw(const SegmentedUtterance& u, std::size_t latent_dim, Rng& rng) {
  LevelNoise n;
  for (auto l : kLevels) n.eps[static_cast<int>(l)] = Tensor::randn(level_count(u, l), latent_dim, rng);
  return n;
}

LevelNoise LevelNoise::zeros(const SegmentedUtterance& u, std::size_t latent_dim) {
  LevelNoise n;
  for (auto l : kLevels) n.eps[static_cast<int>(l)] = Tensor(level_count(u, l), latent_dim);
  return n;
}

MultiLevelTerms multi_level_loss(Session& s, const Vae& vae, const SegmentedUtterance& u, const LevelNoise& noise) {
  MultiLevelTerms m;
  std::optional<Var> coarse;
  for (auto l : kLevels) {
    auto& t = m.levels[static_cast<int>(l)];
    t = elbo_loss(s, vae, u, l, noise.at(l), coarse);
    coarse = t.z;
  }
  m.total = m.levels[0].loss + m.levels[1].loss + m.levels[2].loss;
  return m;
}

LatentSet posterior_means(const ParameterSet& params, const Vae& vae, const SegmentedUtterance& u) {
  auto s = Session::inference(params);
  LatentSet out;
  auto g = encode(s, vae, u, Level::utterance);
  out.z_u = g.mean.value();
  g = encode(s, vae, u, Level::phrase, g.mean);
  out.z_p = g.mean.value();
  g = encode(s, vae, u, Level::word, g.mean);
  out.z_w = g.mean.value();
  return out;
}

}  // namespace mgvae::model
