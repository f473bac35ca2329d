#include "support.hpp"

#include <algorithm>

#include "redirect/text.hpp"

namespace redirect::testing {

LogProbResult EchoScorer::score(const ScoreRequest& request) const {
  const auto reply = tokenize(request.reply.text, Punctuation::drop);
  std::vector<std::string> last;
  if (!request.context.empty())
    last = tokenize(request.context.back().text, Punctuation::drop);
  double total = 0.0;
  for (const auto& w : reply)
    total += std::find(last.begin(), last.end(), w) != last.end() ? -0.5 : -3.0;
  return {total, std::max<std::size_t>(reply.size(), 1)};
}

}  // namespace redirect::testing
