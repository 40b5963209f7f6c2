#pragma once

#include "mgvae/models.hpp"

#include <atomic>
#include <functional>
#include <memory>

namespace httplib {
class Server;
}

namespace mgvae::service {

struct Options {
  std::size_t max_points_per_style = 1500;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

// HTTP front end of the latent explorer. Serves 503 until load() publishes a
// model snapshot; afterwards every request reads the same immutable snapshot.
class Service {
 public:
  explicit Service(Options options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  void load(Models models, corpus::Corpus corpus);
  bool loaded() const;

  Response latents() const;                             // GET /api/latents
  Response synthesize(const std::string& body) const;  // POST /api/synthesize

  // Blocks until stop(). Port 0 binds any free port; on_bound receives the
  // port once bound. Returns false if binding fails.
  bool listen(const std::string& host, int port, const std::function<void(int)>& on_bound = {});
  void stop();

 private:
  struct Snapshot;
  std::shared_ptr<const Snapshot> snapshot() const;

  Options options_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stop_requested_{false};
};

}  // namespace mgvae::service
