#include "mgvae/service.hpp"

#include "mgvae/error.hpp"
#include "mgvae/metrics.hpp"
#include "mgvae/pipelines.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <thread>

namespace mgvae::service {

using nlohmann::json;

struct Service::Snapshot {
  Models models;
  corpus::Corpus corpus;
  metrics::ChannelMap channels;
  Response latents;
};

namespace {

Response error(int status, const std::string& message) {
  return {status, json{{"error", message}, {"status", status}}.dump()};
}

json rows_json(const Tensor& t) {
  auto rows = json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) rows.push_back(std::vector<Real>(t.row(r).begin(), t.row(r).end()));
  return rows;
}

json column_json(const Tensor& t, std::size_t c) {
  std::vector<Real> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) out[r] = t(r, c);
  return out;
}

Response latent_map(const Models& m, const corpus::Corpus& c, std::size_t per_style) {
  if (m.config.latent_dim != 2) {
    return error(409, "the latent map needs a two-dimensional utterance latent; this model has " +
                          std::to_string(m.config.latent_dim) + " dimensions");
  }
  auto points = json::array();
  std::array<Real, 2> lo{INFINITY, INFINITY}, hi{-INFINITY, -INFINITY};
  for (const auto& style : c.manifest.styles) {
    std::size_t taken = 0;
    for (std::size_t i = 0; i < c.utterances.size() && taken < per_style; ++i) {
      if (c.manifest.items[i].style != style) continue;
      auto s = Session::inference(m.params);
      const auto z = model::encode(s, m.vae, c.utterances[i], model::Level::utterance).mean.value();
      for (int d = 0; d < 2; ++d) {
        lo[d] = std::min(lo[d], z(0, d));
        hi[d] = std::max(hi[d], z(0, d));
      }
      points.push_back({{"id", c.manifest.items[i].id}, {"style", style}, {"z_u", {z(0, 0), z(0, 1)}}});
      ++taken;
    }
  }
  if (points.empty()) lo = hi = {0, 0};
  return {200, json{{"points", points},
                    {"styles", c.manifest.styles},
                    {"ranges", {{"x", {lo[0], hi[0]}}, {"y", {lo[1], hi[1]}}}}}
                   .dump()};
}

std::vector<std::uint32_t> counts(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) throw ConfigError(std::string("text.") + key + " must be an array");
  std::vector<std::uint32_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_unsigned()) throw ConfigError(std::string("text.") + key + " must hold non-negative integers");
    out.push_back(v.get<std::uint32_t>());
  }
  return out;
}

}  // namespace

Service::Service(Options options) : options_(options), server_(std::make_unique<httplib::Server>()) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Get("/api/latents", [this, send](const httplib::Request&, httplib::Response& res) { send(res, latents()); });
  server_->Post("/api/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, synthesize(req.body));
  });
}

Service::~Service() = default;

void Service::load(Models models, corpus::Corpus corpus) {
  if (!models.has_step1) throw ModelError("the service needs step-1 weights");
  auto snap = std::make_shared<Snapshot>();
  snap->channels = metrics::ChannelMap::from_roles(corpus.manifest.channels, models.config.acoustic_dim);
  snap->latents = latent_map(models, corpus, options_.max_points_per_style);
  snap->models = std::move(models);
  snap->corpus = std::move(corpus);
  std::atomic_store(&snapshot_, std::shared_ptr<const Snapshot>(std::move(snap)));
}

std::shared_ptr<const Service::Snapshot> Service::snapshot() const { return std::atomic_load(&snapshot_); }

bool Service::loaded() const { return snapshot() != nullptr; }

Response Service::latents() const {
  const auto snap = snapshot();
  if (!snap) return error(503, "model not loaded yet");
  return snap->latents;
}

Response Service::synthesize(const std::string& body) const {
  const auto snap = snapshot();
  if (!snap) return error(503, "model not loaded yet");
  const auto& m = snap->models;
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error(400, std::string("request is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "request must be a JSON object");

  pipelines::Request r;
  corpus::SegmentedUtterance u;
  std::size_t channel = snap->channels.cepstral.front();
  try {
    for (const auto& [key, v] : req.items()) {
      if (key != "mode" && key != "utterance_id" && key != "text" && key != "z_u" && key != "temperature" &&
          key != "seed" && key != "channel") {
        throw ConfigError("unknown field '" + key + "'");
      }
    }
    if (!req.contains("mode") || !req["mode"].is_string()) throw ConfigError("mode must be a string");
    r.mode = pipelines::parse_mode(req["mode"].get<std::string>());
    if (req.contains("temperature")) {
      if (!req["temperature"].is_number()) throw ConfigError("temperature must be a number");
      r.temperature = req["temperature"].get<Real>();
    }
    if (req.contains("seed")) {
      if (!req["seed"].is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      r.seed = req["seed"].get<std::uint64_t>();
    }
    if (req.contains("channel")) {
      if (!req["channel"].is_number_unsigned() || req["channel"].get<std::size_t>() >= m.config.acoustic_dim) {
        throw ConfigError("channel must be an acoustic channel index");
      }
      channel = req["channel"].get<std::size_t>();
    }
    if (req.contains("z_u") && !req["z_u"].is_null()) {
      const auto& z = req["z_u"];
      if (!z.is_array() || z.size() != m.config.latent_dim ||
          !std::all_of(z.begin(), z.end(), [](const json& v) { return v.is_number(); })) {
        throw ConfigError("z_u must be an array of " + std::to_string(m.config.latent_dim) + " numbers");
      }
      r.z_u = Tensor::row_vector(z.get<std::vector<Real>>());
    }
    if (req.contains("utterance_id") == req.contains("text")) {
      throw ConfigError("give exactly one of utterance_id and text");
    }
    if (req.contains("utterance_id")) {
      if (!req["utterance_id"].is_string()) throw ConfigError("utterance_id must be a string");
      const auto* found = snap->corpus.find(req["utterance_id"].get<std::string>());
      if (!found) return error(404, "unknown utterance '" + req["utterance_id"].get<std::string>() + "'");
      u = *found;
    } else {
      const auto& t = req["text"];
      if (!t.is_object()) throw ConfigError("text must be an object");
      u = corpus::utterance_from_text({counts(t, "symbols"), counts(t, "word_frames"), counts(t, "phrase_words")},
                                      m.config.acoustic_dim, m.config.linguistic_dim);
    }
  } catch (const std::invalid_argument& e) {  // ConfigError, SegmentError, ShapeError
    return error(400, e.what());
  }
  // Checked ahead of synthesis so the conflict wins over other problems.
  if (r.z_u && !pipelines::multi_grained(r.mode)) {
    return error(409, std::string("z_u cannot be set for fixed-grained mode ") + pipelines::mode_name(r.mode));
  }

  pipelines::Result out;
  try {
    out = pipelines::synthesize(m, u, r);
  } catch (const ModelError& e) {
    return error(409, e.what());
  } catch (const std::invalid_argument& e) {
    return error(400, e.what());
  }

  auto trace = json::array();
  for (const auto& t : out.trace) {
    Tensor var = t.log_var;
    for (auto& v : var.values()) v = std::exp(v);
    trace.push_back({{"level", model::level_name(t.level)}, {"mean", rows_json(t.mean)}, {"variance", rows_json(var)}});
  }
  json j{{"mode", pipelines::mode_name(out.mode)},
         {"id", u.id},
         {"words", u.words.size()},
         {"phrases", u.phrases.size()},
         {"frames", u.frames()},
         {"z_u", out.z_u ? json(std::vector<Real>(out.z_u->values().begin(), out.z_u->values().end())) : json(nullptr)},
         {"word_latents", rows_json(out.z_w)},
         {"phrase_latents", out.z_p ? rows_json(*out.z_p) : json(nullptr)},
         {"trajectories",
          {{"pitch", column_json(out.features, snap->channels.pitch)},
           {"channel", channel},
           {"selected", column_json(out.features, channel)}}},
         {"trace", trace}};
  return {200, j.dump()};
}

bool Service::listen(const std::string& host, int port, const std::function<void(int)>& on_bound) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) return false;
  if (on_bound) on_bound(bound);
  if (stop_requested_) return true;
  return server_->listen_after_bind();
}

void Service::stop() {
  stop_requested_ = true;
  server_->stop();
}

}  // namespace mgvae::service
