#include "redirect/remote_scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "redirect/error.hpp"

namespace redirect {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string base_path;
};

SplitUrl split_url(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string base = endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, path_start), base};
}

// Releases a semaphore slot on scope exit.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& s) : sem_(s) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& sem_;
};

}  // namespace

RemoteScorerConfig RemoteScorerConfig::from_environment() {
  RemoteScorerConfig cfg;
  if (const char* url = std::getenv("REDIRECT_SCORER_URL")) cfg.endpoint = url;
  if (const char* token = std::getenv("REDIRECT_SCORER_TOKEN")) cfg.auth_token = token;
  return cfg;
}

std::string serialize_logprob_request(std::string_view model, const ScoreRequest& request) {
  json context = json::array();
  for (const auto& turn : request.context)
    context.push_back({{"role", std::string(1, role_char(turn.role))}, {"text", turn.text}});
  json body;
  body["model"] = std::string(model);
  body["context"] = std::move(context);
  body["reply"] = {{"role", std::string(1, role_char(request.reply.role))},
                   {"text", request.reply.text}};
  return body.dump();
}

LogProbResult parse_logprob_response(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("response is not an object");
  auto lp = j.find("total_logprob");
  auto tc = j.find("token_count");
  if (lp == j.end() || !lp->is_number()) throw ProtocolError("response lacks numeric total_logprob");
  if (tc == j.end() || !tc->is_number_integer()) throw ProtocolError("response lacks integer token_count");
  const auto count = tc->get<std::int64_t>();
  if (count < 1) throw ProtocolError("token_count must be positive");
  LogProbResult r;
  r.total_logprob = lp->get<double>();
  r.token_count = static_cast<std::size_t>(count);
  if (!std::isfinite(r.total_logprob)) throw ProtocolError("total_logprob is not finite");
  return r;
}

RemoteScorer::RemoteScorer(RemoteScorerConfig config)
    : config_(std::move(config)), in_flight_(std::clamp<std::ptrdiff_t>(config_.max_in_flight, 1, 1024)) {
  if (config_.endpoint.empty()) throw ConfigError("remote scorer endpoint is not configured");
  if (config_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
}

RemoteScorer::~RemoteScorer() = default;

std::size_t RemoteScorer::cache_size() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

LogProbResult RemoteScorer::score(const ScoreRequest& request) const {
  const std::string body = serialize_logprob_request(config_.model, request);
  {
    std::shared_lock lock(cache_mutex_);
    if (auto it = cache_.find(body); it != cache_.end()) return it->second;
  }
  const LogProbResult result = fetch(body);
  std::unique_lock lock(cache_mutex_);
  cache_.emplace(body, result);
  return result;
}

LogProbResult RemoteScorer::fetch(const std::string& body) const {
  const SplitUrl url = split_url(config_.endpoint);
  const std::string path = url.base_path + "/v1/logprob";
  httplib::Headers headers;
  if (!config_.auth_token.empty())
    headers.emplace("Authorization", "Bearer " + config_.auth_token);

  SlotGuard slot(in_flight_);
  auto backoff = config_.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    ++network_calls_;
    httplib::Client client(url.origin);
    const auto secs = config_.timeout.count() / 1000;
    const auto usecs = (config_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return parse_logprob_response(res->body);
    std::string message = "HTTP " + std::to_string(res->status);
    try {
      const auto j = json::parse(res->body);
      if (j.is_object() && j.contains("error") && j["error"].is_string())
        message += ": " + j["error"].get<std::string>();
    } catch (const json::parse_error&) {
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = message;
      continue;
    }
    throw ProtocolError(message);
  }
  throw TransportError("remote scorer unreachable after " +
                       std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace redirect
