#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <mutex>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "redirect/scorer.hpp"

namespace redirect {

struct RemoteScorerConfig {
  /// Base URL, e.g. "http://127.0.0.1:8600". The request goes to
  /// <endpoint>/v1/logprob.
  std::string endpoint;
  std::string model;
  std::string auth_token;  // sent as "Authorization: Bearer <token>" when set
  int max_retries = 3;     // attempts after the first one
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds backoff{100};  // doubled after every failed attempt
  std::ptrdiff_t max_in_flight = 8;

  /// Endpoint from REDIRECT_SCORER_URL, token from REDIRECT_SCORER_TOKEN.
  static RemoteScorerConfig from_environment();
};

/// Canonical JSON body of a /v1/logprob request (sorted keys, no spaces).
std::string serialize_logprob_request(std::string_view model, const ScoreRequest& request);

/// Parses a 2xx body. Throws ProtocolError on missing / mistyped fields.
LogProbResult parse_logprob_response(std::string_view body);

/// Client for the neural scorer sidecar. Responses are cached by request
/// body (which embeds the model id), so a repeated request never touches
/// the network.
class RemoteScorer final : public Scorer {
 public:
  explicit RemoteScorer(RemoteScorerConfig config);
  ~RemoteScorer() override;

  LogProbResult score(const ScoreRequest& request) const override;
  std::string model_id() const override { return config_.model; }

  /// HTTP attempts made so far (including failed ones).
  std::size_t network_calls() const { return network_calls_.load(); }
  std::size_t cache_size() const;

 private:
  LogProbResult fetch(const std::string& body) const;

  RemoteScorerConfig config_;
  mutable std::counting_semaphore<1024> in_flight_;
  mutable std::shared_mutex cache_mutex_;
  mutable std::unordered_map<std::string, LogProbResult> cache_;
  mutable std::atomic<std::size_t> network_calls_{0};
};

}  // namespace redirect
