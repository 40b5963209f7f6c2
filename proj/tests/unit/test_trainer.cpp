#include "doctest.h"

#include "mgvae/checkpoint.hpp"
#include "mgvae/error.hpp"
#include "mgvae/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace mgvae;
using namespace mgvae::trainer;
namespace fs = std::filesystem;

namespace {

corpus::Corpus tiny_corpus() {
  auto g = corpus::GeneratorConfig::defaults();
  g.utterances_per_style = 20;  // 14 train / 1 valid per style
  g.linguistic_dim = 8;
  g.min_words = 3;
  g.max_words = 4;
  g.min_word_frames = 3;
  g.max_word_frames = 5;
  return corpus::generate_synthetic(g);
}

const corpus::Corpus& shared_corpus() {
  static const auto c = tiny_corpus();
  return c;
}

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.acoustic_dim = 12;
  c.linguistic_dim = 8;
  c.input_width = 6;
  c.encoder_hidden = 4;
  c.decoder_hidden = 4;
  c.rate_hidden = 3;
  c.converter_hidden = 3;
  c.prior_width = 4;
  return c;
}

TrainConfig quick(std::uint32_t epochs = 2) {
  TrainConfig t;
  t.step1_epochs = t.step2_epochs = t.baseline_epochs = epochs;
  t.learning_rate = 1e-2;
  t.seed = 5;
  return t;
}

std::string log_text(const TrainLog& log) {
  std::string out;
  for (const auto& r : log.epochs) out += r.to_json(false) + "\n";
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("training config JSON") {
  TrainConfig c;
  c.learning_rate = 0.5;
  c.schedule.p_min = 0.2;
  c.precision = Precision::f32;
  CHECK(TrainConfig::from_json(c.to_json()) == c);
  CHECK(TrainConfig::from_json("{\"seed\": 9}").seed == 9);
  CHECK_THROWS_AS(TrainConfig::from_json("{\"sed\": 9}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("{\"batch_size\": 0}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("{\"precision\": \"f16\"}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("{\"learning_rate\": -1}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("[1]"), ConfigError);
}

TEST_CASE("step 1 is deterministic and leaves other groups alone") {
  const auto& corpus = shared_corpus();
  auto a = Models::create(tiny_model(), 3);
  auto b = Models::create(tiny_model(), 3);
  const auto prior_sum = a.params.checksum(kStep2Groups);
  const auto base_sum = a.params.checksum(kBaselineGroups);
  std::ostringstream stream;
  TrainOptions o;
  o.log = &stream;
  const auto la = train_step1(a, corpus, quick(), o);
  const auto lb = train_step1(b, corpus, quick());
  CHECK(log_text(la) == log_text(lb));
  CHECK(a.params.checksum(kStep1Groups) == b.params.checksum(kStep1Groups));
  CHECK(a.params.checksum(kStep2Groups) == prior_sum);
  CHECK(a.params.checksum(kBaselineGroups) == base_sum);
  CHECK(a.has_step1);
  REQUIRE(la.epochs.size() == 2);
  CHECK(la.epochs[0].train.count("recon.word") == 1);
  CHECK(la.epochs[0].train.count("kl.utterance") == 1);
  CHECK(la.epochs[0].valid.count("loss") == 1);
  // One JSON line per epoch.
  const auto lines = stream.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);

  auto c = Models::create(tiny_model(), 3);
  auto other = quick();
  other.seed = 6;
  train_step1(c, corpus, other);
  CHECK(c.params.checksum(kStep1Groups) != a.params.checksum(kStep1Groups));
}

TEST_CASE("learning rate zero changes nothing") {
  auto m = Models::create(tiny_model(), 3);
  const auto before = m.params.checksum(kStep1Groups);
  auto t = quick(3);
  t.learning_rate = 0;
  const auto log = train_step1(m, shared_corpus(), t);
  // Initial values are already float-representable, so rounding is a no-op.
  CHECK(m.params.checksum(kStep1Groups) == before);
  CHECK(log.epochs[0].valid.at("loss") == log.epochs[2].valid.at("loss"));
}

TEST_CASE("step 1 lowers the validation loss") {
  auto m = Models::create(tiny_model(), 3);
  const auto valid = shared_corpus().split(corpus::Split::valid);
  const Real before = step1_validation_loss(m, valid, 5);
  const auto log = train_step1(m, shared_corpus(), quick(6));
  CHECK(log.epochs.back().valid.at("loss") < before);
  CHECK(log.epochs.back().train.at("loss") < log.epochs.front().train.at("loss"));
}

TEST_CASE("early stopping") {
  auto m = Models::create(tiny_model(), 3);
  auto t = quick(10);
  t.learning_rate = 0;
  t.patience = 2;
  const auto log = train_step1(m, shared_corpus(), t);
  CHECK(log.stopped_early);
  CHECK(log.epochs.size() == 3);
}

TEST_CASE("step 2 freezes step 1 and baselines") {
  auto m = Models::create(tiny_model(), 3);
  CHECK_THROWS_AS(train_step2(m, shared_corpus(), quick()), ModelError);
  CHECK_THROWS_AS(train_baselines(m, shared_corpus(), quick()), ModelError);
  train_step1(m, shared_corpus(), quick(1));
  const auto s1 = m.params.checksum(kStep1Groups);
  const auto base = m.params.checksum(kBaselineGroups);
  const auto prior = m.params.checksum(kStep2Groups);
  const auto log = train_step2(m, shared_corpus(), quick(3));
  CHECK(m.params.checksum(kStep1Groups) == s1);
  CHECK(m.params.checksum(kBaselineGroups) == base);
  CHECK(m.params.checksum(kStep2Groups) != prior);
  CHECK(m.has_step2);
  // Linear decay from full teacher forcing.
  CHECK(log.epochs[0].train.at("teacher_prob") == 1);
  CHECK(log.epochs[1].train.at("teacher_prob") == doctest::Approx(0.9));
  CHECK(log.epochs[0].train.count("fit.word.ar") == 1);
  CHECK(log.epochs[0].valid.count("fit.phrase.flat") == 1);

  const auto s2 = m.params.checksum(kStep2Groups);
  train_baselines(m, shared_corpus(), quick(2));
  CHECK(m.params.checksum(kStep1Groups) == s1);
  CHECK(m.params.checksum(kStep2Groups) == s2);
  CHECK(m.has_baselines);
}

TEST_CASE("zero decay means free running from the first epoch") {
  auto m = Models::create(tiny_model(), 3);
  train_step1(m, shared_corpus(), quick(1));
  auto t = quick(3);
  t.schedule.decay_epochs = 0;
  t.schedule.p_min = 0.25;
  const auto log = train_baselines(m, shared_corpus(), t);
  for (const auto& r : log.epochs) CHECK(r.train.at("teacher_prob") == 0.25);
}

TEST_CASE("step 2 and baselines are deterministic") {
  auto a = Models::create(tiny_model(), 3);
  train_step1(a, shared_corpus(), quick(1));
  auto b = a;
  CHECK(log_text(train_step2(a, shared_corpus(), quick())) == log_text(train_step2(b, shared_corpus(), quick())));
  CHECK(a.params.checksum(kStep2Groups) == b.params.checksum(kStep2Groups));
  CHECK(log_text(train_baselines(a, shared_corpus(), quick())) ==
        log_text(train_baselines(b, shared_corpus(), quick())));
  CHECK(a.params.checksum(kBaselineGroups) == b.params.checksum(kBaselineGroups));
}

TEST_CASE("trained AR prior fits word posteriors better than untrained") {
  auto m = Models::create(tiny_model(), 3);
  train_step1(m, shared_corpus(), quick(2));
  auto t = quick(6);
  const auto log = train_baselines(m, shared_corpus(), t);
  const auto valid = shared_corpus().split(corpus::Split::valid);
  // Untrained value of the same validation measure.
  auto fresh = Models::create(tiny_model(), 3);
  for (auto id : m.params.with_prefix(kStep1Groups)) fresh.params.mutable_value(id) = m.params.value(id);
  fresh.has_step1 = true;
  auto zero = t;
  zero.baseline_epochs = 1;
  zero.learning_rate = 0;
  const auto untrained = train_baselines(fresh, shared_corpus(), zero);
  CHECK(log.epochs.back().valid.at("fit.ar") < untrained.epochs[0].valid.at("fit.ar"));
  CHECK(log.epochs.back().valid.at("fit.cp") < untrained.epochs[0].valid.at("fit.cp"));
}

TEST_CASE("checkpoints reload to the same validation loss") {
  TempDir dir("mgvae_trainer_ckpt");
  auto m = Models::create(tiny_model(), 3);
  TrainOptions o;
  o.model_dir = dir.path;
  train_step1(m, shared_corpus(), quick(2), o);
  train_step2(m, shared_corpus(), quick(1), o);
  train_baselines(m, shared_corpus(), quick(1), o);
  CHECK(fs::exists(dir.path / "step1.ckpt"));
  CHECK(fs::exists(dir.path / "step2.ckpt"));
  CHECK(fs::exists(dir.path / "baselines.ckpt"));

  const auto loaded = Models::load(dir.path);
  CHECK(loaded.has_step1);
  CHECK(loaded.has_step2);
  CHECK(loaded.has_baselines);
  const auto valid = shared_corpus().split(corpus::Split::valid);
  CHECK(step1_validation_loss(loaded, valid, 11) == step1_validation_loss(m, valid, 11));
  for (const auto& g : {kStep1Groups, kStep2Groups, kBaselineGroups}) {
    CHECK(loaded.params.checksum(g) == m.params.checksum(g));
  }

  // FG has no parameters; the baseline file holds only the three priors.
  const auto base = read_checkpoint(dir.path / "baselines.ckpt");
  for (const auto& [name, t] : base.tensors) {
    CAPTURE(name);
    CHECK(name.rfind("base.", 0) == 0);
    CHECK(name.find("fg") == std::string::npos);
    const bool known = name.rfind("base.rate.word.", 0) == 0 || name.rfind("base.ar.", 0) == 0 ||
                       name.rfind("base.cp.", 0) == 0 || name.rfind("base.cpar.", 0) == 0;
    CHECK(known);
  }
}

TEST_CASE("f32 precision keeps parameters float-representable") {
  auto m = Models::create(tiny_model(), 3);
  auto t = quick(1);
  t.precision = Precision::f32;
  train_step1(m, shared_corpus(), t);
  for (auto id : m.params.with_prefix(kStep1Groups)) {
    for (Real v : m.params.value(id).values()) REQUIRE(static_cast<Real>(static_cast<float>(v)) == v);
  }
}

TEST_CASE("divergence restores the last good parameters") {
  TempDir dir("mgvae_trainer_diverge");
  auto corpus = shared_corpus();
  auto m = Models::create(tiny_model(), 3);
  train_step1(m, corpus, quick(1));
  const auto good = m.params.checksum(kStep1Groups);
  for (auto& u : corpus.utterances) u.acoustic(0, 3) = std::numeric_limits<Real>::quiet_NaN();
  TrainOptions o;
  o.model_dir = dir.path;
  CHECK_THROWS_AS(train_step1(m, corpus, quick(2), o), TrainingDiverged);
  CHECK(m.params.checksum(kStep1Groups) == good);
  CHECK(Models::load(dir.path).params.checksum(kStep1Groups) == good);
}
