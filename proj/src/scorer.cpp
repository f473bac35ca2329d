#include "redirect/scorer.hpp"

#include <algorithm>
#include <cmath>

#include "redirect/error.hpp"
#include "redirect/text.hpp"

namespace redirect {

LogProbResult sequence_logprob(const Scorer& scorer, const ScoreRequest& request) {
  if (normalize_text(request.reply.text).empty())
    throw ScoringError("reply text is empty");
  LogProbResult result = scorer.score(request);
  if (result.token_count == 0) throw ScoringError("scorer reported zero reply tokens");
  if (!std::isfinite(result.total_logprob))
    throw ScoringError("scorer reported a non-finite log-probability");
  return result;
}

double reply_probability(const LogProbResult& result) {
  const double p = std::exp(result.total_logprob / static_cast<double>(result.token_count));
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace redirect
