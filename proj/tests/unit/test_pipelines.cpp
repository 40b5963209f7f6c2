#include "doctest.h"

#include "mgvae/error.hpp"
#include "mgvae/pipelines.hpp"

#include <cmath>

using namespace mgvae;
using namespace mgvae::pipelines;
using corpus::SegmentedUtterance;

namespace {

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.acoustic_dim = 5;
  c.linguistic_dim = 8;
  c.input_width = 6;
  c.encoder_hidden = 4;
  c.decoder_hidden = 4;
  c.rate_hidden = 3;
  c.converter_hidden = 3;
  c.prior_width = 4;
  return c;
}

Models trained(const model::ModelConfig& c = small_config(), std::uint64_t seed = 4) {
  auto m = Models::create(c, seed);
  m.has_step1 = m.has_step2 = m.has_baselines = true;
  return m;
}

// Four words in two phrases.
SegmentedUtterance four_words() { return corpus::utterance_from_text({{1, 2, 3, 4}, {2, 3, 1, 2}, {2, 2}}, 5, 8); }

}  // namespace

TEST_CASE("mode names round-trip") {
  for (auto m : kModes) CHECK(parse_mode(mode_name(m)) == m);
  CHECK(parse_mode("mg_cp_ar") == Mode::MG_CP_AR);
  CHECK(parse_mode("fg+cp") == Mode::FG_CP);
  CHECK_THROWS_AS(parse_mode("MG"), ConfigError);
  CHECK(multi_grained(Mode::MG_CP));
  CHECK_FALSE(multi_grained(Mode::FG_CP_AR));
}

TEST_CASE("FG latents are i.i.d. standard normal") {
  const auto m = trained();
  const auto u = four_words();
  const std::size_t n = 100000;
  std::array<double, 2> sum{}, sum2{};
  Request r;
  r.mode = Mode::FG;
  for (std::size_t i = 0; i < n; ++i) {
    r.seed = i;
    const auto z = sample_word_latents(m, u, r);
    REQUIRE(z.rows() == 4);
    for (std::size_t w = 0; w < 4; ++w) {
      for (std::size_t d = 0; d < 2; ++d) {
        sum[d] += z(w, d);
        sum2[d] += z(w, d) * z(w, d);
      }
    }
  }
  for (std::size_t d = 0; d < 2; ++d) {
    const double mean = sum[d] / (4.0 * n);
    const double var = sum2[d] / (4.0 * n) - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1) < 0.02);
  }
}

TEST_CASE("FG latents do not depend on the text") {
  const auto m = trained();
  Request r;
  r.mode = Mode::FG;
  r.seed = 9;
  const auto a = sample_word_latents(m, four_words(), r);
  const auto b = sample_word_latents(m, corpus::utterance_from_text({{4, 3, 2, 1}, {1, 1, 5, 2}, {1, 3}}, 5, 8), r);
  CHECK(a == b);
}

TEST_CASE("every mode synthesizes frame-rate features") {
  const auto m = trained();
  const auto u = four_words();
  for (auto mode : kModes) {
    CAPTURE(mode_name(mode));
    Request r;
    r.mode = mode;
    r.seed = 3;
    const auto out = synthesize(m, u, r);
    CHECK(out.features.rows() == u.frames());
    CHECK(out.features.cols() == 5);
    CHECK(out.features.all_finite());
    CHECK(out.z_w.rows() == 4);
    CHECK(out.z_p.has_value() == multi_grained(mode));
    CHECK(out.z_u.has_value() == multi_grained(mode));
    CHECK(out.trace.size() == (multi_grained(mode) ? 3u : 1u));
    if (out.z_p) CHECK(out.z_p->rows() == 2);
    // Same request, same answer.
    CHECK(synthesize(m, u, r).features == out.features);
  }
}

TEST_CASE("temperature zero follows the mean path") {
  const auto m = trained();
  const auto u = four_words();
  Request r;
  r.mode = Mode::MG_CP_AR;
  r.temperature = 0;
  r.z_u = Tensor::from_rows({{0.5, -1}});
  r.seed = 1;
  const auto a = synthesize(m, u, r);
  r.seed = 2;
  const auto b = synthesize(m, u, r);
  CHECK(a.z_w == b.z_w);
  CHECK(a.features == b.features);
  CHECK(*a.z_u == *r.z_u);
  // Word latents equal the trace means.
  CHECK(a.trace.back().mean == a.z_w);

  r.mode = Mode::FG;
  r.z_u.reset();
  CHECK(synthesize(m, u, r).z_w == Tensor(4, 2));
}

TEST_CASE("zero converters cascade the utterance latent") {
  auto m = trained();
  const std::vector<std::string> conv{"prior.conv."};
  for (auto id : m.params.with_prefix(conv)) m.params.mutable_value(id).fill(0);
  const auto u = four_words();
  for (auto mode : {Mode::MG_CP, Mode::MG_CP_AR}) {
    Request r;
    r.mode = mode;
    r.temperature = 0;
    r.z_u = Tensor::from_rows({{1.25, -0.5}});
    const auto out = synthesize(m, u, r);
    for (std::size_t w = 0; w < 4; ++w) {
      CHECK(out.z_w(w, 0) == 1.25);
      CHECK(out.z_w(w, 1) == -0.5);
    }
  }
}

TEST_CASE("trace matches the converters' own outputs") {
  const auto m = trained();
  const auto u = four_words();
  Request r;
  r.mode = Mode::MG_CP;
  r.seed = 5;
  const auto out = synthesize(m, u, r);
  auto s = Session::inference(m.params);
  priors::SampleOptions o;
  o.feedback = priors::Feedback::free_running;
  o.eps = nullptr;
  auto p = priors::convert(s, m.prior, model::Level::phrase, false, u, s.constant(*out.z_u), o);
  CHECK(out.trace[1].mean == p.dist.mean.value());
  auto w = priors::convert(s, m.prior, model::Level::word, false, u, s.constant(*out.z_p), o);
  CHECK(out.trace[2].mean == w.dist.mean.value());
  CHECK(out.trace[2].log_var == w.dist.log_var.value());
}

TEST_CASE("explicit noise overrides the seed") {
  const auto m = trained();
  const auto u = four_words();
  Request r;
  r.mode = Mode::FG;
  r.eps[2] = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}, {7, 8}});
  r.temperature = 0.5;
  CHECK(sample_word_latents(m, u, r) == Tensor::from_rows({{0.5, 1}, {1.5, 2}, {2.5, 3}, {3.5, 4}}));
  r.eps[2] = Tensor(3, 2);
  CHECK_THROWS_AS(sample_word_latents(m, u, r), ShapeError);
}

TEST_CASE("synthesis errors") {
  const auto u = four_words();
  auto m = trained();
  Request r;
  r.mode = Mode::FG_CP;
  r.z_u = Tensor(1, 2);
  CHECK_THROWS_AS(synthesize(m, u, r), ModelError);
  r.mode = Mode::MG_CP;
  r.z_u = Tensor(1, 3);
  CHECK_THROWS_AS(synthesize(m, u, r), ShapeError);
  r.z_u.reset();
  r.temperature = -1;
  CHECK_THROWS_AS(synthesize(m, u, r), ConfigError);
  r.temperature = 1;

  m.has_step2 = false;
  CHECK_THROWS_AS(synthesize(m, u, r), ModelError);
  r.mode = Mode::FG_AR;
  CHECK_NOTHROW(synthesize(m, u, r));
  m.has_baselines = false;
  CHECK_THROWS_AS(synthesize(m, u, r), ModelError);
  r.mode = Mode::FG;
  CHECK_NOTHROW(synthesize(m, u, r));
  m.has_step1 = false;
  CHECK_THROWS_AS(synthesize(m, u, r), ModelError);
}

TEST_CASE("smoothness") {
  CHECK(smoothness(Tensor(5, 2, 0.7)) == 0);
  CHECK(smoothness(Tensor::from_rows({{0}, {1}, {0}})) == 1);
  CHECK(smoothness(Tensor::from_rows({{0, 0}, {3, 4}})) == 25);
  CHECK_THROWS_AS(smoothness(Tensor(1, 2)), ShapeError);
  CHECK_THROWS_AS(smoothness(Tensor()), ShapeError);

  // Independent standard normal rows: 2 per dimension.
  Rng rng(17);
  double total = 0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) total += smoothness(Tensor::randn(2, 2, rng));
  CHECK(std::abs(total / trials - 4) < 0.08);
}
