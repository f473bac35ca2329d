#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "redirect/corpus.hpp"

namespace redirect {

struct Turn {
  Role role = Role::A;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// Likelihood query: how probable is `reply` after `context` (oldest first).
struct ScoreRequest {
  std::vector<Turn> context;
  Turn reply;

  friend bool operator==(const ScoreRequest&, const ScoreRequest&) = default;
};

/// Natural-log likelihood of the reply span and the number of tokens it
/// covers, as counted by the model that produced it.
struct LogProbResult {
  double total_logprob = 0.0;
  std::size_t token_count = 1;

  friend bool operator==(const LogProbResult&, const LogProbResult&) = default;
};

/// Reply-likelihood backend. Implementations must be safe to call from
/// several threads at once and deterministic per request.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual LogProbResult score(const ScoreRequest& request) const = 0;
  virtual std::string model_id() const = 0;
};

inline constexpr double kProbabilityEpsilon = 1e-9;

/// Validates the request, scores it, validates the result. Throws
/// ScoringError on an empty reply or a non-finite / zero-token result.
LogProbResult sequence_logprob(const Scorer& scorer, const ScoreRequest& request);

/// Per-token geometric mean exp(total / count) clamped to [eps, 1 - eps].
double reply_probability(const LogProbResult& result);

/// log(p / (1 - p)).
double logit(double p);

}  // namespace redirect
