// Bundled stand-in for the external LM scorer: a uniform unigram model over
// the training vocabulary served over the same wire protocol, so the RL
// reward path is testable offline.
#pragma once

#include <cstddef>
#include <memory>
#include <string>

namespace tagrw {

/// Uniform unigram model: every token carries probability 1/V, so the
/// per-token perplexity of any text is exactly V.
struct StubScorer {
  std::size_t vocab_size = 1;

  double perplexity(const std::string&) const {
    return static_cast<double>(vocab_size < 1 ? 1 : vocab_size);
  }
};

/// Serves POST {path}/perplexity with {"texts":[...]} ->
/// {"perplexities":[...]} on a background thread.
class ScorerServer {
 public:
  explicit ScorerServer(StubScorer scorer);
  ~ScorerServer();
  ScorerServer(const ScorerServer&) = delete;
  ScorerServer& operator=(const ScorerServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks an ephemeral one) and returns the bound
  /// port once the server accepts connections.
  int start(int port = 0);
  void stop();
  /// Foreground variant for the CLI; blocks until interrupted.
  void run_blocking(int port);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace tagrw
