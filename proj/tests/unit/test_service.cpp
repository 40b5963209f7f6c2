#include "doctest.h"

#include "mgvae/service.hpp"
#include "schema_check.hpp"
#include "tiny.hpp"

#include <httplib.h>

#include <thread>

using namespace mgvae;
using nlohmann::json;

namespace {

const corpus::Corpus& shared_corpus() {
  static const auto c = corpus::generate_synthetic(tiny::generator());
  return c;
}

const Models& shared_models() {
  static const auto m = tiny::trained(shared_corpus());
  return m;
}

const schema_check::Validator& validator() {
  static const schema_check::Validator v(schema_check::load(MGVAE_SOURCE_DIR "/schema/service.schema.json"));
  return v;
}

void check_schema(const std::string& body, const std::string& definition) {
  const auto errors = validator().check(json::parse(body), definition);
  for (const auto& e : errors) MESSAGE(e);
  CHECK(errors.empty());
}

service::Service& loaded(std::size_t max_points = 5) {
  static std::map<std::size_t, std::unique_ptr<service::Service>> cache;
  auto& slot = cache[max_points];
  if (!slot) {
    slot = std::make_unique<service::Service>(service::Options{max_points});
    slot->load(shared_models(), shared_corpus());
  }
  return *slot;
}

json post(const service::Service& svc, const json& body, int expected) {
  const auto r = svc.synthesize(body.dump());
  CHECK(r.status == expected);
  check_schema(r.body, expected == 200 ? "SynthesizeResponse" : "ErrorResponse");
  return json::parse(r.body);
}

}  // namespace

TEST_CASE("service answers 503 until loaded") {
  service::Service svc;
  CHECK_FALSE(svc.loaded());
  auto r = svc.latents();
  CHECK(r.status == 503);
  check_schema(r.body, "ErrorResponse");
  CHECK(svc.synthesize("{\"mode\": \"FG\"}").status == 503);
}

TEST_CASE("latent map") {
  auto& svc = loaded(5);
  const auto r = svc.latents();
  REQUIRE(r.status == 200);
  check_schema(r.body, "LatentMapResponse");
  const auto j = json::parse(r.body);
  // Four styles, five points each.
  CHECK(j["points"].size() == 20);
  CHECK(j["styles"].size() == 4);
  std::map<std::string, int> per_style;
  for (const auto& p : j["points"]) {
    ++per_style[p["style"].get<std::string>()];
    CHECK(p["z_u"][0].get<double>() >= j["ranges"]["x"][0].get<double>());
    CHECK(p["z_u"][1].get<double>() <= j["ranges"]["y"][1].get<double>());
  }
  for (const auto& [style, n] : per_style) CHECK(n == 5);
  CHECK(svc.latents().body == r.body);

  // Fewer utterances than the cap: everything is served.
  auto& all = loaded(1500);
  CHECK(json::parse(all.latents().body)["points"].size() == shared_corpus().utterances.size());

  // Values are the posterior means.
  const auto& first = j["points"][0];
  const auto* u = shared_corpus().find(first["id"].get<std::string>());
  REQUIRE(u != nullptr);
  const auto z = model::posterior_means(shared_models().params, shared_models().vae, *u).z_u;
  CHECK(first["z_u"][0].get<double>() == z(0, 0));
}

TEST_CASE("latent map refuses other latent sizes") {
  service::Service svc;
  svc.load(tiny::trained(shared_corpus(), 3), shared_corpus());
  const auto r = svc.latents();
  CHECK(r.status == 409);
  check_schema(r.body, "ErrorResponse");
  CHECK(json::parse(r.body)["error"].get<std::string>().find("3") != std::string::npos);
}

TEST_CASE("synthesize") {
  auto& svc = loaded();
  const auto& u = shared_corpus().utterances[3];
  json req{{"utterance_id", u.id}, {"mode", "MG+CP+AR"}, {"z_u", {0.5, -0.3}}, {"temperature", 0}, {"seed", 4}};
  const auto a = post(svc, req, 200);
  req["seed"] = 99;
  const auto b = post(svc, req, 200);
  CHECK(a == b);
  CHECK(a["word_latents"].size() == u.words.size());
  CHECK(a["phrase_latents"].size() == u.phrases.size());
  CHECK(a["trajectories"]["pitch"].size() == u.frames());
  CHECK(a["z_u"] == json({0.5, -0.3}));
  CHECK(a["trace"].size() == 3);

  for (const char* mode : {"FG", "FG+AR", "FG+CP", "FG_CP_AR", "MG+CP"}) {
    CAPTURE(mode);
    const auto r = post(svc, {{"utterance_id", u.id}, {"mode", mode}, {"seed", 1}, {"channel", 5}}, 200);
    CHECK(r["word_latents"].size() == u.words.size());
    CHECK(r["trajectories"]["channel"] == 5);
  }

  const auto t = post(svc, {{"text", {{"symbols", {1, 2, 3}}, {"word_frames", {4, 5, 6}}, {"phrase_words", {2, 1}}}},
                            {"mode", "MG+CP"}},
                      200);
  CHECK(t["words"] == 3);
  CHECK(t["frames"] == 15);
}

TEST_CASE("synthesize errors") {
  auto& svc = loaded();
  const auto id = shared_corpus().utterances[0].id;
  post(svc, {{"utterance_id", id}, {"mode", "FG"}, {"z_u", {0, 0}}}, 409);
  post(svc, {{"utterance_id", id}, {"mode", "FG+CP+AR"}, {"z_u", {0, 0}}}, 409);
  post(svc, {{"utterance_id", id}, {"mode", "XG"}}, 400);
  post(svc, {{"utterance_id", id}, {"mode", "MG+CP"}, {"z_u", {0, 0, 0}}}, 400);
  post(svc, {{"utterance_id", id}, {"mode", "MG+CP"}, {"z_u", "a"}}, 400);
  post(svc, {{"utterance_id", id}, {"mode", "MG+CP"}, {"temperature", -1}}, 400);
  post(svc, {{"utterance_id", id}, {"mode", "MG+CP"}, {"channel", 12}}, 400);
  post(svc, {{"utterance_id", id}, {"mode", "MG+CP"}, {"colour", 1}}, 400);
  post(svc, {{"mode", "MG+CP"}}, 400);
  post(svc, {{"utterance_id", "nobody"}, {"mode", "MG+CP"}}, 404);
  post(svc, {{"text", {{"symbols", {1, 2}}, {"word_frames", {4}}, {"phrase_words", {2}}}}, {"mode", "FG"}}, 400);
  post(svc, {{"text", {{"symbols", {1}}, {"word_frames", {4}}, {"phrase_words", {2}}}}, {"mode", "FG"}}, 400);
  CHECK(svc.synthesize("{not json").status == 400);
  CHECK(svc.synthesize("[1, 2]").status == 400);

  // Modes whose weights are missing.
  auto partial = shared_models();
  partial.has_step2 = false;
  service::Service svc2;
  svc2.load(partial, shared_corpus());
  post(svc2, {{"utterance_id", id}, {"mode", "MG+CP+AR"}}, 409);
  post(svc2, {{"utterance_id", id}, {"mode", "FG+AR"}}, 200);
}

TEST_CASE("request schema accepts what the service accepts") {
  json req{{"utterance_id", "x"}, {"mode", "MG+CP"}, {"z_u", {1, 2}}, {"temperature", 0.5}, {"seed", 3}};
  CHECK(validator().check(req, "SynthesizeRequest").empty());
  req["extra"] = 1;
  CHECK_FALSE(validator().check(req, "SynthesizeRequest").empty());
}

TEST_CASE("HTTP round trip") {
  auto& svc = loaded();
  int port = 0;
  std::mutex mu;
  std::condition_variable cv;
  std::thread server([&] {
    svc.listen("127.0.0.1", 0, [&](int p) {
      std::lock_guard lock(mu);
      port = p;
      cv.notify_all();
    });
  });
  {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return port != 0; });
  }
  httplib::Client client("127.0.0.1", port);
  for (int i = 0; i < 50 && !client.Get("/api/latents"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  auto got = client.Get("/api/latents");
  REQUIRE(got);
  CHECK(got->status == 200);
  CHECK(got->body == svc.latents().body);
  const std::string body = json{{"utterance_id", shared_corpus().utterances[1].id}, {"mode", "FG"}, {"seed", 2}}.dump();
  auto posted = client.Post("/api/synthesize", body, "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 200);
  CHECK(posted->body == svc.synthesize(body).body);
  auto conflict = client.Post("/api/synthesize",
                              json{{"utterance_id", shared_corpus().utterances[1].id}, {"mode", "FG"}, {"z_u", {1, 1}}}.dump(),
                              "application/json");
  REQUIRE(conflict);
  CHECK(conflict->status == 409);
  svc.stop();
  server.join();
}
