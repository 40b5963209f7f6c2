#include "mgvae/trainer.hpp"

#include "mgvae/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>

namespace mgvae::trainer {

using ad::Var;
using corpus::SegmentedUtterance;
using model::Gaussian;
using model::Level;
using nlohmann::json;

// ---- config ----------------------------------------------------------------

std::string TrainConfig::to_json() const {
  return json{{"learning_rate", learning_rate},
              {"batch_size", batch_size},
              {"step1_epochs", step1_epochs},
              {"step2_epochs", step2_epochs},
              {"baseline_epochs", baseline_epochs},
              {"schedule", {{"p_min", schedule.p_min}, {"decay_epochs", schedule.decay_epochs}}},
              {"seed", seed},
              {"checkpoint_every", checkpoint_every},
              {"patience", patience},
              {"precision", precision == Precision::f32 ? "f32" : "f64"}}
      .dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
      if (key == "learning_rate") c.learning_rate = v.get<Real>();
      else if (key == "batch_size") c.batch_size = v.get<std::uint32_t>();
      else if (key == "step1_epochs") c.step1_epochs = v.get<std::uint32_t>();
      else if (key == "step2_epochs") c.step2_epochs = v.get<std::uint32_t>();
      else if (key == "baseline_epochs") c.baseline_epochs = v.get<std::uint32_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::uint32_t>();
      else if (key == "patience") c.patience = v.get<std::uint32_t>();
      else if (key == "precision") {
        const auto p = v.get<std::string>();
        if (p != "f32" && p != "f64") throw ConfigError("precision must be f32 or f64");
        c.precision = p == "f32" ? Precision::f32 : Precision::f64;
      } else if (key == "schedule") {
        for (const auto& [k, sv] : v.items()) {
          if (k == "p_min") c.schedule.p_min = sv.get<Real>();
          else if (k == "decay_epochs") c.schedule.decay_epochs = sv.get<Real>();
          else throw ConfigError("unknown schedule key '" + k + "'");
        }
      } else {
        throw ConfigError("unknown training config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  schedule.validate();
}

std::string EpochRecord::to_json(bool with_time) const {
  json j{{"phase", phase}, {"epoch", epoch}, {"train", train}, {"valid", valid}};
  if (with_time) j["seconds"] = seconds;
  return j.dump();
}

// ---- oracle latents ------------------------------------------------------------

PosteriorCache PosteriorCache::compute(const Models& m, const SegmentedUtterance& u) {
  auto s = Session::inference(m.params);
  const std::size_t d = m.config.latent_dim;
  PosteriorCache c;
  auto g_u = model::encode(s, m.vae, u, Level::utterance);
  auto g_p = model::encode(s, m.vae, u, Level::phrase, s.constant(Tensor(1, d)));
  auto g_w = model::encode(s, m.vae, u, Level::word, s.constant(Tensor(u.phrases.size(), d)));
  c.delta = {g_u.mean.value(), g_p.mean.value(), g_w.mean.value()};
  c.log_var = {g_u.log_var.value(), g_p.log_var.value(), g_w.log_var.value()};
  return c;
}

OracleLatents sample_oracle(const PosteriorCache& c, const SegmentedUtterance& u, bool residual,
                            const std::array<Tensor, 3>* eps) {
  OracleLatents o;
  for (auto level : model::kLevels) {
    const int l = static_cast<int>(level);
    Tensor mean = c.delta[l];
    if (residual && level != Level::utterance) {
      const auto parent = model::coarse_index(u, level);
      for (std::size_t r = 0; r < mean.rows(); ++r) {
        for (std::size_t j = 0; j < mean.cols(); ++j) mean(r, j) += o.z[l - 1](parent[r], j);
      }
    }
    Tensor z = mean;
    if (eps) {
      const Tensor& e = (*eps)[l];
      for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * c.log_var[l][i]) * e[i];
    }
    o.mean[l] = std::move(mean);
    o.z[l] = std::move(z);
  }
  return o;
}

namespace {

// ---- optimizer -------------------------------------------------------------------

class Adam {
 public:
  Adam(ParameterSet& params, std::vector<ParamId> ids, Real lr) : params_(params), ids_(std::move(ids)), lr_(lr) {
    for (auto id : ids_) {
      const auto& v = params_.value(id);
      m_.emplace_back(v.rows(), v.cols());
      v_.emplace_back(v.rows(), v.cols());
    }
  }

  void step(const std::vector<Tensor>& grads, Real scale) {
    ++t_;
    const Real c1 = 1 - std::pow(kBeta1, static_cast<Real>(t_));
    const Real c2 = 1 - std::pow(kBeta2, static_cast<Real>(t_));
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      auto p = params_.mutable_value(ids_[k]).map().array();
      const auto g = grads[k].map().array() * scale;
      auto m = m_[k].map().array();
      auto v = v_[k].map().array();
      m = kBeta1 * m + (1 - kBeta1) * g;
      v = kBeta2 * v + (1 - kBeta2) * g.square();
      p -= lr_ * (m / c1) / ((v / c2).sqrt() + kEps);
    }
  }

 private:
  static constexpr Real kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ParameterSet& params_;
  std::vector<ParamId> ids_;
  Real lr_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

// ---- generic epoch loop -----------------------------------------------------------

using Stats = std::map<std::string, Real>;

struct Phase {
  std::string name;
  std::uint64_t stream = 0;
  std::span<const std::string> groups;
  std::uint32_t epochs = 0;
  std::size_t items = 0;
  std::function<Stats(std::uint32_t epoch)> begin_epoch;  // returns fields logged with the epoch
  std::function<Var(Session&, std::size_t item, Rng&, Stats&)> item_loss;
  std::function<Stats()> validate;
  std::string early_stop_key;  // empty: no early stopping
};

Rng phase_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream, std::uint64_t{0x7EA1}};
  return Rng(seq);
}

std::vector<Tensor> snapshot(const ParameterSet& params, std::span<const ParamId> ids) {
  std::vector<Tensor> out;
  for (auto id : ids) out.push_back(params.value(id));
  return out;
}

void restore(ParameterSet& params, std::span<const ParamId> ids, const std::vector<Tensor>& values) {
  for (std::size_t k = 0; k < ids.size(); ++k) params.mutable_value(ids[k]) = values[k];
}

void save(Models& m, const Phase& phase, const TrainOptions& o) {
  if (!o.model_dir.empty()) m.save_group(o.model_dir, phase.groups);
}

TrainLog run_phase(Models& m, const TrainConfig& config, const TrainOptions& options, const Phase& phase) {
  config.validate();
  if (phase.items == 0 && phase.epochs > 0) throw ConfigError(phase.name + ": the training split is empty");
  const auto ids = m.params.with_prefix(phase.groups);
  const auto mask = m.params.mask(phase.groups);
  Adam adam(m.params, ids, config.learning_rate);
  Rng rng = phase_rng(config.seed, phase.stream);
  auto last_good = snapshot(m.params, ids);
  auto best = last_good;
  Real best_valid = std::numeric_limits<Real>::infinity();
  std::uint32_t since_best = 0;

  TrainLog log;
  std::vector<std::size_t> order(phase.items);
  for (std::uint32_t epoch = 1; epoch <= phase.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Stats info = phase.begin_epoch ? phase.begin_epoch(epoch) : Stats{};
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    Stats sums;
    auto diverge = [&](const std::string& what) {
      restore(m.params, ids, last_good);
      m.params.round_to_float(phase.groups);
      save(m, phase, options);
      throw TrainingDiverged(phase.name + " diverged in epoch " + std::to_string(epoch) + " (" + what +
                             "); parameters restored to the end of epoch " + std::to_string(epoch - 1));
    };
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + std::size_t{config.batch_size});
      std::vector<Tensor> acc;
      for (auto id : ids) acc.emplace_back(m.params.value(id).rows(), m.params.value(id).cols());
      for (std::size_t b = start; b < end; ++b) {
        Session s(m.params, mask);
        Stats item;
        Var loss = phase.item_loss(s, order[b], rng, item);
        if (!std::isfinite(loss.value().item())) diverge("non-finite loss");
        s.backward(loss);
        const auto grads = s.gradients();
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const auto& g = grads[ids[k].index];
          if (g.empty()) continue;
          if (!g.all_finite()) diverge("non-finite gradient");
          acc[k].map() += g.map();
        }
        for (const auto& [key, v] : item) sums[key] += v;
      }
      adam.step(acc, 1 / static_cast<Real>(end - start));
      if (config.precision == Precision::f32) m.params.round_to_float(phase.groups);
    }
    for (auto id : ids) {
      if (!m.params.value(id).all_finite()) diverge("non-finite parameter");
    }

    EpochRecord rec;
    rec.phase = phase.name;
    rec.epoch = epoch;
    for (const auto& [key, v] : sums) rec.train[key] = v / static_cast<Real>(phase.items);
    rec.train.insert(info.begin(), info.end());
    if (phase.validate) rec.valid = phase.validate();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.log) *options.log << rec.to_json() << '\n' << std::flush;
    last_good = snapshot(m.params, ids);

    if (config.checkpoint_every && epoch % config.checkpoint_every == 0 && !options.model_dir.empty()) {
      ParameterSet copy = m.params;
      std::swap(copy, m.params);
      m.params.round_to_float(phase.groups);
      save(m, phase, options);
      std::swap(copy, m.params);
    }

    const auto key = rec.valid.find(phase.early_stop_key);
    log.epochs.push_back(std::move(rec));
    if (config.patience && key != log.epochs.back().valid.end()) {
      if (key->second < best_valid) {
        best_valid = key->second;
        best = last_good;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        restore(m.params, ids, best);
        log.stopped_early = true;
        break;
      }
    }
  }
  m.params.round_to_float(phase.groups);
  save(m, phase, options);
  return log;
}

std::vector<const SegmentedUtterance*> split(const corpus::Corpus& c, corpus::Split s) { return c.split(s); }

Rng item_rng(std::uint64_t seed, std::uint64_t tag, std::size_t item) {
  std::seed_seq seq{seed, tag, static_cast<std::uint64_t>(item)};
  return Rng(seq);
}

std::array<Tensor, 3> draw_eps(const SegmentedUtterance& u, std::size_t d, Rng& rng) {
  std::array<Tensor, 3> e;
  for (auto l : model::kLevels) e[static_cast<int>(l)] = Tensor::randn(model::level_count(u, l), d, rng);
  return e;
}

Gaussian constant_posterior(Session& s, const OracleLatents& o, const PosteriorCache& c, Level l) {
  return {s.constant(o.mean[static_cast<int>(l)]), s.constant(c.log_var[static_cast<int>(l)])};
}

void require_step1(const Models& m, const std::string& what) {
  if (!m.has_step1) throw ModelError(what + " needs trained step-1 weights");
}

std::vector<PosteriorCache> caches(const Models& m, std::span<const SegmentedUtterance* const> items) {
  std::vector<PosteriorCache> out;
  out.reserve(items.size());
  for (const auto* u : items) out.push_back(PosteriorCache::compute(m, *u));
  return out;
}

// Teacher-forcing options for one autoregressive pass.
priors::SampleOptions ar_options(const Tensor& oracle, const Tensor* eps, Real teacher_prob, Rng* coin) {
  priors::SampleOptions o;
  o.oracle = &oracle;
  o.eps = eps;
  if (coin) {
    o.feedback = priors::Feedback::scheduled;
    o.teacher_prob = teacher_prob;
    o.coin = coin;
  } else {
    o.feedback = priors::Feedback::teacher_forced;
  }
  return o;
}

}  // namespace

Real step1_validation_loss(const Models& m, std::span<const SegmentedUtterance* const> items, std::uint64_t seed) {
  if (items.empty()) throw ConfigError("no validation items");
  Real total = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto rng = item_rng(seed, 0x7A11D, i);
    const auto noise = model::LevelNoise::draw(*items[i], m.config.latent_dim, rng);
    auto s = Session::inference(m.params);
    total += model::multi_level_loss(s, m.vae, *items[i], noise).total.value().item();
  }
  return total / static_cast<Real>(items.size());
}

TrainLog train_step1(Models& m, const corpus::Corpus& corpus, const TrainConfig& config, const TrainOptions& options) {
  const auto train = split(corpus, corpus::Split::train);
  const auto valid = split(corpus, corpus::Split::valid);
  Phase p;
  p.name = "step1";
  p.stream = 1;
  p.groups = kStep1Groups;
  p.epochs = config.step1_epochs;
  p.items = train.size();
  p.item_loss = [&](Session& s, std::size_t i, Rng& rng, Stats& st) {
    const auto& u = *train[i];
    const auto noise = model::LevelNoise::draw(u, m.config.latent_dim, rng);
    auto terms = model::multi_level_loss(s, m.vae, u, noise);
    st["loss"] = terms.total.value().item();
    for (auto l : model::kLevels) {
      const auto& t = terms.levels[static_cast<int>(l)];
      st[std::string("recon.") + model::level_name(l)] = t.reconstruction.value().item();
      st[std::string("kl.") + model::level_name(l)] = t.kl.value().item();
    }
    return terms.total;
  };
  if (!valid.empty()) {
    p.validate = [&] { return Stats{{"loss", step1_validation_loss(m, valid, config.seed)}}; };
    p.early_stop_key = "loss";
  }
  auto log = run_phase(m, config, options, p);
  m.has_step1 = true;
  return log;
}

TrainLog train_step2(Models& m, const corpus::Corpus& corpus, const TrainConfig& config, const TrainOptions& options) {
  require_step1(m, "step 2");
  const auto train = split(corpus, corpus::Split::train);
  const auto valid = split(corpus, corpus::Split::valid);
  const auto train_cache = caches(m, train);
  const auto valid_cache = caches(m, valid);
  const std::size_t d = m.config.latent_dim;
  const bool residual = m.config.residual;
  Real teacher_prob = 1;

  // Fit losses of the utterance prior and the four converters. `coin` null
  // means teacher forcing.
  auto fit = [&](Session& s, const SegmentedUtterance& u, const PosteriorCache& c, const OracleLatents& o,
                 const std::array<Tensor, 3>* eps, Rng* coin, Stats& st) {
    const auto& net = m.prior;
    Var total = priors::converter_fit_loss(constant_posterior(s, o, c, Level::utterance),
                                           priors::prior_utterance(s, net, u));
    st["fit.utterance"] = total.value().item();
    for (auto level : {Level::phrase, Level::word}) {
      const int l = static_cast<int>(level);
      const auto q = constant_posterior(s, o, c, level);
      const auto parent = model::coarse_index(u, level);
      Var coarse = s.constant(o.z[l - 1]);
      Var emb = priors::embed_level(s, net.rate(level), u);
      priors::SampleOptions flat;
      Var f_flat = priors::converter_fit_loss(q, priors::convert(s, net.converter(level, false), coarse, parent, emb, flat).dist);
      const auto opts = ar_options(o.z[l], eps ? &(*eps)[l] : nullptr, teacher_prob, coin);
      Var f_ar = priors::converter_fit_loss(q, priors::convert(s, net.converter(level, true), coarse, parent, emb, opts).dist);
      st[std::string("fit.") + model::level_name(level) + ".flat"] = f_flat.value().item();
      st[std::string("fit.") + model::level_name(level) + ".ar"] = f_ar.value().item();
      total = total + f_flat + f_ar;
    }
    st["fit"] = total.value().item();
    return total;
  };

  Phase p;
  p.name = "step2";
  p.stream = 2;
  p.groups = kStep2Groups;
  p.epochs = config.step2_epochs;
  p.items = train.size();
  p.begin_epoch = [&](std::uint32_t epoch) {
    teacher_prob = priors::scheduled_sampling_ratio(epoch - 1, config.schedule);
    return Stats{{"teacher_prob", teacher_prob}};
  };
  p.item_loss = [&](Session& s, std::size_t i, Rng& rng, Stats& st) {
    const auto& u = *train[i];
    const auto eps = draw_eps(u, d, rng);
    const auto oracle = sample_oracle(train_cache[i], u, residual, &eps);
    const auto own = draw_eps(u, d, rng);  // noise for the converters' own samples
    return fit(s, u, train_cache[i], oracle, &own, &rng, st);
  };
  if (!valid.empty()) {
    p.validate = [&] {
      Stats sums;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        auto s = Session::inference(m.params);
        Stats st;
        auto rng = item_rng(config.seed, 0x7A11D, i);
        const auto eps = draw_eps(*valid[i], d, rng);
        fit(s, *valid[i], valid_cache[i], sample_oracle(valid_cache[i], *valid[i], residual, &eps), nullptr,
            nullptr, st);
        for (const auto& [k, v] : st) sums[k] += v / static_cast<Real>(valid.size());
      }
      return sums;
    };
  }
  auto log = run_phase(m, config, options, p);
  m.has_step2 = true;
  return log;
}

TrainLog train_baselines(Models& m, const corpus::Corpus& corpus, const TrainConfig& config,
                         const TrainOptions& options) {
  require_step1(m, "baseline training");
  const auto train = split(corpus, corpus::Split::train);
  const auto valid = split(corpus, corpus::Split::valid);
  const auto train_cache = caches(m, train);
  const auto valid_cache = caches(m, valid);
  const std::size_t d = m.config.latent_dim;
  const bool residual = m.config.residual;
  Real teacher_prob = 1;
  constexpr int w = static_cast<int>(Level::word);

  auto fit = [&](Session& s, const SegmentedUtterance& u, const PosteriorCache& c, const OracleLatents& o,
                 const Tensor* eps, Rng* coin, Stats& st) {
    const auto& b = m.baselines;
    const auto q = constant_posterior(s, o, c, Level::word);
    const auto opts = ar_options(o.z[w], eps, teacher_prob, coin);
    Var f_ar = priors::converter_fit_loss(q, priors::ar_prior(s, b.ar, u.words.size(), opts).dist);
    Var emb = priors::embed_level(s, b.word_rate, u);
    Var f_cp = priors::converter_fit_loss(q, priors::conditional_prior(s, b.cp, emb, {}).dist);
    Var f_cp_ar = priors::converter_fit_loss(q, priors::conditional_prior(s, b.cp_ar, emb, opts).dist);
    st["fit.ar"] = f_ar.value().item();
    st["fit.cp"] = f_cp.value().item();
    st["fit.cp_ar"] = f_cp_ar.value().item();
    Var total = f_ar + f_cp + f_cp_ar;
    st["fit"] = total.value().item();
    return total;
  };

  Phase p;
  p.name = "baselines";
  p.stream = 3;
  p.groups = kBaselineGroups;
  p.epochs = config.baseline_epochs;
  p.items = train.size();
  p.begin_epoch = [&](std::uint32_t epoch) {
    teacher_prob = priors::scheduled_sampling_ratio(epoch - 1, config.schedule);
    return Stats{{"teacher_prob", teacher_prob}};
  };
  p.item_loss = [&](Session& s, std::size_t i, Rng& rng, Stats& st) {
    const auto& u = *train[i];
    const auto eps = draw_eps(u, d, rng);
    const auto oracle = sample_oracle(train_cache[i], u, residual, &eps);
    const auto own = Tensor::randn(u.words.size(), d, rng);
    return fit(s, u, train_cache[i], oracle, &own, &rng, st);
  };
  if (!valid.empty()) {
    p.validate = [&] {
      Stats sums;
      for (std::size_t i = 0; i < valid.size(); ++i) {
        auto s = Session::inference(m.params);
        Stats st;
        auto rng = item_rng(config.seed, 0x7A11D, i);
        const auto eps = draw_eps(*valid[i], d, rng);
        fit(s, *valid[i], valid_cache[i], sample_oracle(valid_cache[i], *valid[i], residual, &eps), nullptr,
            nullptr, st);
        for (const auto& [k, v] : st) sums[k] += v / static_cast<Real>(valid.size());
      }
      return sums;
    };
  }
  auto log = run_phase(m, config, options, p);
  m.has_baselines = true;
  return log;
}

}  // namespace mgvae::trainer
