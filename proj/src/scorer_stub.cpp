#include "tagrw/scorer_stub.hpp"

#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace tagrw {

struct ScorerServer::Impl {
  StubScorer scorer;
  httplib::Server server;
  std::thread worker;

  explicit Impl(StubScorer s) : scorer(s) {
    server.Post("/perplexity", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const std::exception&) {
        res.status = 400;
        res.set_content("{\"error\":\"body is not JSON\"}", "application/json");
        return;
      }
      if (!body.contains("texts") || !body["texts"].is_array()) {
        res.status = 400;
        res.set_content("{\"error\":\"missing texts array\"}", "application/json");
        return;
      }
      nlohmann::json ppls = nlohmann::json::array();
      for (const auto& t : body["texts"])
        ppls.push_back(scorer.perplexity(t.is_string() ? t.get<std::string>() : std::string()));
      nlohmann::json reply;
      reply["perplexities"] = std::move(ppls);
      res.set_content(reply.dump(), "application/json");
    });
  }
};

ScorerServer::ScorerServer(StubScorer scorer) : impl_(std::make_unique<Impl>(scorer)) {}

ScorerServer::~ScorerServer() { stop(); }

int ScorerServer::start(int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port("127.0.0.1");
  } else if (!impl_->server.bind_to_port("127.0.0.1", port)) {
    return -1;
  }
  if (bound <= 0) return -1;
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ScorerServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (impl_ && impl_->worker.joinable()) impl_->worker.join();
}

void ScorerServer::run_blocking(int port) {
  if (!impl_->server.listen("127.0.0.1", port))
    throw std::runtime_error("scorer stub: cannot listen on port " + std::to_string(port));
}

} // namespace tagrw
